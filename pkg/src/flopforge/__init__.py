"""Rotation-kernel FLOPS benchmarking, fisheye preprocessing and power accounting."""

__version__ = "0.1.0"
