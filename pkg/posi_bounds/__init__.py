"""PoSI constants, RIP constants and the bounds that connect them."""

__version__ = "1.0.0"
