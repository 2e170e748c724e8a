"""Link-level OFDM simulator over correlated time/frequency-selective fading."""

__version__ = "0.1.0"
