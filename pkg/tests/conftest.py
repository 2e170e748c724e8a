import pytest

from linksim.harness import limit_blas_threads


@pytest.fixture(scope="session", autouse=True)
def _single_threaded_blas():
    # frame-level parallelism owns the cores; threaded BLAS is pathological
    # under this sandbox's scheduler
    limit_blas_threads()
