"""Frame-wise autoregressive synthesis of vocoder feature streams."""

__version__ = "0.1.0"
