"""Training sidecar for the OFDM link simulator.

Self-contained: talks to the simulator core only through its file formats
(tensor files, pattern/plan JSON, constellation and allocation CSVs) and its
command-line interface.
"""

__version__ = "0.1.0"
