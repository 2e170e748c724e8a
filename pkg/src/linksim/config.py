"""Scenario configuration: versioned JSON schema with paper-setup defaults.

An empty override reproduces the reference setup: 72x14 grid at 2.6 GHz /
15 kHz / 5.2 us CP, 64-QAM, the 1944-bit rate-2/3 code, TDL-A evaluation
channels at low speed with 70-140 ns delay spread.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .channel import OfdmDims, RadioParams
from .grid import DEFAULT_INTERLEAVER_SEED, DEFAULT_PILOT_SEED
from .rxchain import RECEIVER_KINDS

CONFIG_VERSION = 1

SPEED_RANGES = {
    "low": (0.0, 5.1),
    "medium": (13.6, 18.8),
    "high": (27.4, 32.5),
    "training": (0.0, 32.5),
}

TRAINING_DELAY_SPREADS = (10e-9, 1000e-9)
EVAL_DELAY_SPREADS = (70e-9, 140e-9)

PILOT_SCHEME_NAMES = ("1P", "2P", "none")


@dataclass(frozen=True)
class SnrSweep:
    kind: str            # "eb_db" or "sigma2_db"
    values: tuple

    def __post_init__(self):
        if self.kind not in ("eb_db", "sigma2_db"):
            raise ValueError(f"unknown sweep kind {self.kind!r}")
        if not self.values:
            raise ValueError("sweep needs at least one point")


@dataclass(frozen=True)
class RxCovarianceSpec:
    """Receiver-side covariance: empirical by default, true-R for oracles."""

    kind: str = "estimate"      # "estimate" | "file" | "true"
    path: str | None = None
    samples: int = 50_000
    speed_range: tuple = SPEED_RANGES["training"]
    delay_spread_range: tuple = TRAINING_DELAY_SPREADS
    pdp_names: tuple = ("TDL-B", "TDL-C")
    seed: int = 0xC0B

    def __post_init__(self):
        if self.kind not in ("estimate", "file", "true"):
            raise ValueError(f"unknown covariance source {self.kind!r}")
        if self.kind == "file" and not self.path:
            raise ValueError("covariance kind 'file' needs a path")


@dataclass(frozen=True)
class ScenarioConfig:
    n_s: int = 72
    n_t: int = 14
    f_c: float = 2.6e9
    delta_f: float = 15e3
    cp_duration: float = 5.2e-6
    modulation_bits: int = 6
    pilot_scheme: str = "1P"            # "1P" | "2P" | "none+gs:<csv>" | "none+sip:<csv>"
    receiver: str = "non_iterative"
    pdp_names: tuple = ("TDL-A",)
    speed_range: tuple = SPEED_RANGES["low"]
    delay_spread_range: tuple = EVAL_DELAY_SPREADS
    sweep: SnrSweep = field(default_factory=lambda: SnrSweep("eb_db", (5.0, 8.0, 11.0, 14.0, 17.0)))
    frames_per_point: int = 1000
    min_errors: int | None = None       # early stop once reached (chunk granularity)
    master_seed: int = 1
    code: str = "wifi1944"              # "wifi1944" | "toy"
    bp_iterations: int = 40
    iedd_outer_iterations: int = 4
    iedd_bp_iterations: int = 10
    pilot_seed: int = DEFAULT_PILOT_SEED
    interleaver_seed: int = DEFAULT_INTERLEAVER_SEED
    rx_covariance: RxCovarianceSpec = field(default_factory=RxCovarianceSpec)

    def __post_init__(self):
        if self.receiver not in RECEIVER_KINDS:
            raise ValueError(f"unknown receiver {self.receiver!r}")
        scheme, _ = self.parse_scheme()
        if scheme in ("gs", "sip") and self.receiver != "perfect_csi":
            raise ValueError(
                f"pilotless scheme {self.pilot_scheme!r} has no classical estimator; "
                "use receiver 'perfect_csi' or evaluate external LLRs via eval-llrs")
        if scheme == "sip":
            raise ValueError(
                "SIP frames are evaluated through eval-llrs with an external "
                "receiver; in-process receivers support QAM and GS schemes")
        if self.code not in ("wifi1944", "toy"):
            raise ValueError(f"unknown code {self.code!r}")
        if not self.speed_range[0] <= self.speed_range[1]:
            raise ValueError("speed range must be ordered")
        if not 0 <= self.delay_spread_range[0] <= self.delay_spread_range[1]:
            raise ValueError("delay spread range must be ordered and non-negative")
        if self.frames_per_point < 1:
            raise ValueError("frames_per_point must be >= 1")

    def parse_scheme(self) -> tuple[str, str | None]:
        """Split the pilot scheme into (kind, artifact path).

        kind is "1P", "2P", "none", "gs", or "sip"; path is the artifact CSV
        for the learned schemes.
        """
        if self.pilot_scheme in PILOT_SCHEME_NAMES:
            return self.pilot_scheme, None
        if self.pilot_scheme.startswith("none+gs:"):
            return "gs", self.pilot_scheme.split(":", 1)[1]
        if self.pilot_scheme.startswith("none+sip:"):
            return "sip", self.pilot_scheme.split(":", 1)[1]
        raise ValueError(f"unknown pilot scheme {self.pilot_scheme!r}")

    @property
    def dims(self) -> OfdmDims:
        return OfdmDims(self.n_s, self.n_t)

    @property
    def radio(self) -> RadioParams:
        return RadioParams.from_numerology(self.f_c, self.delta_f, self.cp_duration)

    def sigma2_for_point(self, value: float, rho: float, rate: float) -> float:
        """Convert one sweep value to a linear noise variance.

        Eb-targets use the average channel energy (E sum|H|^2 = n), so the
        target is exact in expectation; frames are binned by this target.
        """
        if self.sweep.kind == "sigma2_db":
            return 10.0 ** (value / 10.0)
        eb_lin = 10.0 ** (value / 10.0)
        return 1.0 / (rho * self.modulation_bits * rate * eb_lin)

    def to_json(self) -> dict:
        return {
            "version": CONFIG_VERSION,
            "dims": {"n_s": self.n_s, "n_t": self.n_t},
            "radio": {"f_c": self.f_c, "delta_f": self.delta_f,
                      "cp_duration": self.cp_duration},
            "modulation_bits": self.modulation_bits,
            "pilot_scheme": self.pilot_scheme,
            "receiver": self.receiver,
            "pdp_names": list(self.pdp_names),
            "speed_range_mps": list(self.speed_range),
            "delay_spread_range_s": list(self.delay_spread_range),
            "sweep": {"kind": self.sweep.kind, "values": list(self.sweep.values)},
            "frames_per_point": self.frames_per_point,
            "min_errors": self.min_errors,
            "master_seed": self.master_seed,
            "code": self.code,
            "bp_iterations": self.bp_iterations,
            "iedd_outer_iterations": self.iedd_outer_iterations,
            "iedd_bp_iterations": self.iedd_bp_iterations,
            "pilot_seed": self.pilot_seed,
            "interleaver_seed": self.interleaver_seed,
            "rx_covariance": {
                "kind": self.rx_covariance.kind,
                "path": self.rx_covariance.path,
                "samples": self.rx_covariance.samples,
                "speed_range_mps": list(self.rx_covariance.speed_range),
                "delay_spread_range_s": list(self.rx_covariance.delay_spread_range),
                "pdp_names": list(self.rx_covariance.pdp_names),
                "seed": self.rx_covariance.seed,
            },
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ScenarioConfig":
        if obj.get("version", CONFIG_VERSION) != CONFIG_VERSION:
            raise ValueError(f"unsupported config version {obj.get('version')!r}")
        kwargs = {}
        if "dims" in obj:
            kwargs["n_s"] = obj["dims"]["n_s"]
            kwargs["n_t"] = obj["dims"]["n_t"]
        radio = obj.get("radio", {})
        for src, dst in (("f_c", "f_c"), ("delta_f", "delta_f"),
                         ("cp_duration", "cp_duration")):
            if src in radio:
                kwargs[dst] = radio[src]
        direct = ("modulation_bits", "pilot_scheme", "receiver", "frames_per_point",
                  "min_errors", "master_seed", "code", "bp_iterations",
                  "iedd_outer_iterations", "iedd_bp_iterations", "pilot_seed",
                  "interleaver_seed")
        for key in direct:
            if key in obj:
                kwargs[key] = obj[key]
        if "pdp_names" in obj:
            kwargs["pdp_names"] = tuple(obj["pdp_names"])
        if "speed_range_mps" in obj:
            kwargs["speed_range"] = tuple(obj["speed_range_mps"])
        if "delay_spread_range_s" in obj:
            kwargs["delay_spread_range"] = tuple(obj["delay_spread_range_s"])
        if "sweep" in obj:
            kwargs["sweep"] = SnrSweep(obj["sweep"]["kind"], tuple(obj["sweep"]["values"]))
        if "rx_covariance" in obj:
            cov = obj["rx_covariance"]
            kwargs["rx_covariance"] = RxCovarianceSpec(
                kind=cov.get("kind", "estimate"),
                path=cov.get("path"),
                samples=cov.get("samples", 50_000),
                speed_range=tuple(cov.get("speed_range_mps", SPEED_RANGES["training"])),
                delay_spread_range=tuple(cov.get("delay_spread_range_s",
                                                 TRAINING_DELAY_SPREADS)),
                pdp_names=tuple(cov.get("pdp_names", ("TDL-B", "TDL-C"))),
                seed=cov.get("seed", 0xC0B),
            )
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1)
