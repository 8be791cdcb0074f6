"""Supersampled pixel supervision with Gaussian-weighted sub-pixel rays.

Each supervised pixel is rendered as a weighted blend of ``s * s`` rays cast
through a stratified sub-pixel grid.  Weights are a bivariate normal density
centered on the pixel center, evaluated at the grid offsets and renormalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field.grid import VoxelField
from .field.render import DEFAULT_SAMPLES, backward_rays, render_rays
from .scene_io import CameraView, ValidationError, camera_rays

DEFAULT_S = 2
DEFAULT_SIGMA = 0.3  # pixels; covariance diag(0.09, 0.09)


@dataclass(frozen=True)
class PseudoPixelPattern:
    s: int
    offsets: np.ndarray  # (s*s, 2) as (dx, dy)
    weights: np.ndarray  # (s*s,)
    covariance: np.ndarray  # (2, 2), pixel^2

    @property
    def size(self) -> int:
        return self.s * self.s

    def normalized_weights(self) -> np.ndarray:
        return self.weights / self.weights.sum()


def isotropic_cov(sigma: float) -> np.ndarray:
    return np.eye(2) * float(sigma) ** 2


def make_pattern(s: int = DEFAULT_S, cov=None) -> PseudoPixelPattern:
    if s < 1:
        raise ValidationError(f"pattern side must be >= 1, got {s}")
    cov = isotropic_cov(DEFAULT_SIGMA) if cov is None else np.asarray(cov, dtype=np.float64)
    if cov.shape != (2, 2) or not np.allclose(cov, cov.T):
        raise ValidationError("covariance must be a symmetric 2x2 matrix")
    eig = np.linalg.eigvalsh(cov)
    if eig[0] <= 1e-12 * max(1.0, eig[1]):
        raise ValidationError(f"covariance is not positive definite (eigenvalues {eig})")
    ax = (np.arange(s) + 0.5) / s - 0.5
    dy, dx = np.meshgrid(ax, ax, indexing="ij")
    offsets = np.stack([dx.ravel(), dy.ravel()], axis=1)
    inv = np.linalg.inv(cov)
    m = np.einsum("ni,ij,nj->n", offsets, inv, offsets)
    w = np.exp(-0.5 * (m - m.min()))
    return PseudoPixelPattern(int(s), offsets, w / w.sum(), cov)


def subpixel_rays(view: CameraView, ii, jj, pattern: PseudoPixelPattern):
    """Rays for every (pixel, offset) pair: arrays shaped (M * p, 3), pixel-major."""
    ii = np.asarray(ii, dtype=np.float64).reshape(-1, 1)
    jj = np.asarray(jj, dtype=np.float64).reshape(-1, 1)
    u = ii + 0.5 + pattern.offsets[None, :, 0]
    v = jj + 0.5 + pattern.offsets[None, :, 1]
    return camera_rays(view, u.ravel(), v.ravel())


def blend(sub_rgb: np.ndarray, pattern: PseudoPixelPattern) -> np.ndarray:
    """Weighted sum over each pixel's sub-ray colors; ``sub_rgb`` is (M * p, 3)."""
    sub = sub_rgb.reshape(-1, pattern.size, 3)
    return np.einsum("mpc,p->mc", sub, pattern.normalized_weights())


def render_pixels_supersampled(field: VoxelField, view: CameraView, ii, jj,
                               pattern: PseudoPixelPattern, n_samples=DEFAULT_SAMPLES,
                               bg=(0.0, 0.0, 0.0), jitter=None) -> np.ndarray:
    o, d = subpixel_rays(view, ii, jj, pattern)
    rgb, _ = render_rays(field, o, d, view.near, view.far, n_samples, jitter=jitter, bg=bg)
    return blend(rgb, pattern)


def render_pixel_supersampled(field, view, pixel, pattern, n_samples=DEFAULT_SAMPLES,
                              bg=(0.0, 0.0, 0.0)) -> np.ndarray:
    i, j = pixel
    return render_pixels_supersampled(field, view, [i], [j], pattern, n_samples, bg)[0]


def guided_loss(pred, target, mode: str = "l2") -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValidationError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    if mode == "l2":
        return float(np.mean(diff**2))
    if mode == "l1":
        return float(np.mean(np.abs(diff)))
    raise ValidationError(f"unknown loss mode {mode!r}")


def loss_grad(pred, target, mode: str = "l2") -> np.ndarray:
    """dL/d(pred) for ``guided_loss``."""
    diff = np.asarray(pred) - np.asarray(target)
    if mode == "l2":
        return 2.0 * diff / diff.size
    if mode == "l1":
        return np.sign(diff) / diff.size
    raise ValidationError(f"unknown loss mode {mode!r}")


def spread_grad(grad_pixel: np.ndarray, pattern: PseudoPixelPattern) -> np.ndarray:
    """dL/d(sub-ray rgb) = w_k * dL/d(pixel rgb), flattened pixel-major."""
    w = pattern.normalized_weights()
    return (grad_pixel[:, None, :] * w[None, :, None]).reshape(-1, 3)


def backward_supersampled(field: VoxelField, view: CameraView, ii, jj, pattern, targets,
                          mode="l2", n_samples=DEFAULT_SAMPLES, bg=(0.0, 0.0, 0.0),
                          jitter=None, out=None):
    """Loss and raw-grid gradient for a batch of supersampled pixels of one view."""
    o, d = subpixel_rays(view, ii, jj, pattern)
    rgb, _ = render_rays(field, o, d, view.near, view.far, n_samples, jitter=jitter, bg=bg)
    pred = blend(rgb, pattern)
    targets = np.asarray(targets, dtype=np.float64).reshape(pred.shape)
    g = spread_grad(loss_grad(pred, targets, mode), pattern)
    grad = backward_rays(field, o, d, view.near, view.far, g, n_samples, jitter=jitter, bg=bg,
                         out=out)
    return guided_loss(pred, targets, mode), grad
