"""Heat kernel bounds for jump processes with boundary-degenerate kernels."""
__version__ = "0.1.0"
