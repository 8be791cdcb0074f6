"""Image-level degradation operators: filtering, sharpening, resampling, noise."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..scene_io import ValidationError, check_image
from .kernels import KernelSpec, build_kernel

RESIZE_MODES = ("area", "bilinear", "bicubic")
BICUBIC_A = -0.75

USM_SIGMA = 1.5
USM_RADIUS = 7
USM_WEIGHT = 0.5
USM_THRESHOLD = 10.0 / 255.0


def filter2d(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Correlate every channel with ``kernel`` (reflected borders), clamp to [0, 1]."""
    img = check_image(img)
    out = ndimage.correlate(img, kernel[:, :, None], mode="reflect")
    return np.clip(out, 0.0, 1.0)


def usm_sharpen(img: np.ndarray, weight=USM_WEIGHT, threshold=USM_THRESHOLD,
                sigma=USM_SIGMA, radius=USM_RADIUS) -> np.ndarray:
    img = check_image(img)
    blur_k = build_kernel(KernelSpec("iso", 2 * radius + 1, sigma, sigma))
    blurred = ndimage.correlate(img, blur_k[:, :, None], mode="reflect")
    residual = img - blurred
    mask = np.abs(residual) > threshold
    return np.where(mask, np.clip(img + weight * residual, 0.0, 1.0), img)


# ---------------------------------------------------------------- resampling


def _cubic(x: np.ndarray, a: float = BICUBIC_A) -> np.ndarray:
    x = np.abs(x)
    return np.where(
        x <= 1,
        (a + 2) * x**3 - (a + 3) * x**2 + 1,
        np.where(x < 2, a * x**3 - 5 * a * x**2 + 8 * a * x - 4 * a, 0.0),
    )


def resample_matrix(n_in: int, n_out: int, mode: str) -> np.ndarray:
    """(n_out, n_in) weights with half-pixel-center alignment; rows sum to one."""
    scale = n_out / n_in
    w = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    if mode == "area":
        # exact overlap of each output cell with the input cells
        lo = rows / scale
        hi = (rows + 1) / scale
        for o in range(n_out):
            first, last = int(math.floor(lo[o])), int(math.ceil(hi[o]))
            for i in range(first, min(last, n_in)):
                w[o, i] = min(hi[o], i + 1) - max(lo[o], i)
    elif mode == "bilinear":
        src = np.clip((rows + 0.5) / scale - 0.5, 0.0, n_in - 1)
        i0 = np.floor(src).astype(int)
        i1 = np.minimum(i0 + 1, n_in - 1)
        f = src - i0
        np.add.at(w, (rows, i0), 1.0 - f)
        np.add.at(w, (rows, i1), f)
    elif mode == "bicubic":
        src = (rows + 0.5) / scale - 0.5
        base = np.floor(src).astype(int)
        for t in range(-1, 3):
            idx = np.clip(base + t, 0, n_in - 1)
            np.add.at(w, (rows, idx), _cubic(src - (base + t)))
    else:
        raise ValidationError(f"unknown resize mode {mode!r}")
    return w / w.sum(axis=1, keepdims=True)


def resize_to(img: np.ndarray, size: tuple[int, int], mode: str) -> np.ndarray:
    """Resample to ``size = (width, height)``; output clamped to [0, 1]."""
    img = check_image(img)
    w_out, h_out = int(size[0]), int(size[1])
    if w_out < 1 or h_out < 1:
        raise ValidationError(f"bad output size {size}")
    if mode not in RESIZE_MODES:
        raise ValidationError(f"unknown resize mode {mode!r}")
    h, w = img.shape[:2]
    if (w_out, h_out) == (w, h):
        return img.copy()
    ry = resample_matrix(h, h_out, mode)
    rx = resample_matrix(w, w_out, mode)
    out = np.einsum("oh,hwc->owc", ry, img)
    out = np.einsum("pw,owc->opc", rx, out)
    return np.clip(out, 0.0, 1.0)


def scaled_size(width: int, height: int, scale: float) -> tuple[int, int]:
    if scale <= 0:
        raise ValidationError(f"scale must be positive, got {scale}")
    return (max(1, math.floor(width * scale + 0.5)), max(1, math.floor(height * scale + 0.5)))


def resize(img: np.ndarray, scale: float, mode: str) -> np.ndarray:
    h, w = np.shape(img)[:2]
    return resize_to(img, scaled_size(w, h, scale), mode)


# ---------------------------------------------------------------- noise


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian: ``strength`` is sigma.  Poisson: ``strength`` scales the
    shot-noise residual of an 8-bit photon count model."""

    kind: str = "gaussian"
    gray: bool = False
    strength: float = 0.0


def add_noise(img: np.ndarray, spec: NoiseSpec, rng: np.random.Generator) -> np.ndarray:
    img = check_image(img)
    h, w = img.shape[:2]
    if spec.kind == "gaussian":
        shape = (h, w, 1) if spec.gray else (h, w, 3)
        noise = rng.normal(0.0, 1.0, shape) * spec.strength
    elif spec.kind == "poisson":
        base = img.mean(axis=2, keepdims=True) if spec.gray else img
        base = np.clip(base, 0.0, 1.0)
        noise = (rng.poisson(base * 255.0) / 255.0 - base) * spec.strength
    else:
        raise ValidationError(f"unknown noise kind {spec.kind!r}")
    return np.clip(img + noise, 0.0, 1.0)
