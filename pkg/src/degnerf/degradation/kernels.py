"""Blur kernel families: Gaussian, generalized Gaussian, plateau, and sinc."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from ..scene_io import ValidationError

BLUR_FAMILIES = (
    "iso",
    "aniso",
    "generalized_iso",
    "generalized_aniso",
    "plateau_iso",
    "plateau_aniso",
)
FAMILIES = BLUR_FAMILIES + ("sinc",)
KERNEL_SIZES = (7, 9, 11, 13, 15, 17, 19, 21)


@dataclass(frozen=True)
class KernelSpec:
    family: str
    size: int
    sigma_x: float = 1.0
    sigma_y: float = 1.0
    rotation: float = 0.0
    beta: float = 1.0
    cutoff: float = 0.0  # radians per pixel, sinc only

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown kernel family {self.family!r}")
        if self.size % 2 != 1 or self.size < 1:
            raise ValidationError(f"kernel size must be odd, got {self.size}")
        if self.family == "sinc":
            if self.cutoff <= 0:
                raise ValidationError("sinc cutoff must be positive")
            return
        if self.sigma_x <= 0 or self.sigma_y <= 0:
            raise ValidationError(f"sigma must be positive, got {self.sigma_x}, {self.sigma_y}")
        if self.beta <= 0:
            raise ValidationError("shape exponent must be positive")


def offsets(size: int) -> tuple[np.ndarray, np.ndarray]:
    r = np.arange(size) - size // 2
    yy, xx = np.meshgrid(r, r, indexing="ij")
    return xx.astype(np.float64), yy.astype(np.float64)


def mahalanobis_sq(spec: KernelSpec) -> np.ndarray:
    """x^T Sigma^-1 x over the kernel support, Sigma = R diag(sx^2, sy^2) R^T."""
    xx, yy = offsets(spec.size)
    c, s = math.cos(spec.rotation), math.sin(spec.rotation)
    # coordinates in the kernel's principal frame
    a = c * xx + s * yy
    b = -s * xx + c * yy
    return (a / spec.sigma_x) ** 2 + (b / spec.sigma_y) ** 2


def sinc_kernel(size: int, cutoff: float) -> np.ndarray:
    """Circular ideal low-pass: cutoff * J1(cutoff r) / (2 pi r), unnormalized."""
    xx, yy = offsets(size)
    r = np.hypot(xx, yy)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = cutoff * special.j1(cutoff * r) / (2.0 * np.pi * r)
    k[size // 2, size // 2] = cutoff**2 / (4.0 * np.pi)
    return k


def build_kernel(spec: KernelSpec) -> np.ndarray:
    spec.validate()
    if spec.family == "sinc":
        k = sinc_kernel(spec.size, spec.cutoff)
    else:
        m = mahalanobis_sq(spec)
        if spec.family in ("iso", "aniso"):
            k = np.exp(-0.5 * m)
        elif spec.family.startswith("generalized"):
            k = np.exp(-0.5 * m**spec.beta)
        else:
            k = 1.0 / (1.0 + m**spec.beta)
    return k / k.sum()
