"""Degradation-robust voxel radiance fields with supersampled guidance."""

__version__ = "0.1.0"
