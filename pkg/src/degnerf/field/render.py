"""Ray sampling, volume compositing, and the reconstruction loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..scene_io import CameraView, Ray, ValidationError, camera_rays, check_image
from .grid import VoxelField, query_field
from .kernels import backward_rays_kernel, render_rays_kernel

DEFAULT_SAMPLES = 128
_NO_JITTER = np.zeros((0, 1))


@dataclass
class RaySampleSet:
    positions: np.ndarray  # (K, 3)
    deltas: np.ndarray  # (K,)
    ray: Ray


def sample_ray(ray: Ray, n_samples: int, rng: np.random.Generator | None = None) -> RaySampleSet:
    """Stratified samples over [near, far]; segment midpoints when ``rng`` is None."""
    if n_samples < 1:
        raise ValidationError("need at least one sample per ray")
    step = (ray.far - ray.near) / n_samples
    u = np.full(n_samples, 0.5) if rng is None else rng.random(n_samples)
    t = ray.near + (np.arange(n_samples) + u) * step
    positions = ray.origin[None, :] + t[:, None] * ray.direction[None, :]
    return RaySampleSet(positions, np.full(n_samples, step), ray)


def render_ray(field: VoxelField, samples: RaySampleSet, bg=(0.0, 0.0, 0.0)):
    """Composite one ray sample by sample; returns (rgb, final transmittance)."""
    rgb = np.zeros(3)
    trans = 1.0
    for x, delta in zip(samples.positions, samples.deltas):
        sigma, c = query_field(field, x, samples.ray.direction)
        alpha = 1.0 - np.exp(-sigma * delta)
        rgb += trans * alpha * c
        trans *= np.exp(-sigma * delta)
    return rgb + trans * np.asarray(bg, dtype=np.float64), trans


def _ray_arrays(origins, dirs, near, far):
    origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
    n = origins.shape[0]
    near = np.ascontiguousarray(np.broadcast_to(np.asarray(near, dtype=np.float64), (n,)))
    far = np.ascontiguousarray(np.broadcast_to(np.asarray(far, dtype=np.float64), (n,)))
    return origins, dirs, near, far


def _jitter(jitter, n, n_samples):
    if jitter is None:
        return _NO_JITTER
    jitter = np.ascontiguousarray(jitter, dtype=np.float64)
    if jitter.shape != (n, n_samples):
        raise ValidationError(f"jitter must have shape {(n, n_samples)}")
    return jitter


def render_rays(field: VoxelField, origins, dirs, near, far, n_samples=DEFAULT_SAMPLES,
                jitter=None, bg=(0.0, 0.0, 0.0), t_stop=0.0):
    """Batched compiled renderer; returns (rgb (N, 3), final transmittance (N,)).

    ``t_stop > 0`` ends a ray early once its transmittance falls below it; the
    result is then approximate, so training leaves it at 0.
    """
    origins, dirs, near, far = _ray_arrays(origins, dirs, near, far)
    n = origins.shape[0]
    rgb = np.empty((n, 3))
    trans = np.empty(n)
    render_rays_kernel(field.grid, field.bbox, origins, dirs, near, far,
                       int(n_samples), _jitter(jitter, n, n_samples),
                       np.asarray(bg, dtype=np.float64), rgb, trans, float(t_stop))
    return rgb, trans


def backward_rays(field: VoxelField, origins, dirs, near, far, grad_rgb, n_samples=DEFAULT_SAMPLES,
                  jitter=None, bg=(0.0, 0.0, 0.0), out=None):
    """Gradient of a loss over the packed raw grid, given dL/d(rgb) per ray.

    Returns an array shaped like ``field.grid``; ``[..., 0]`` is the density
    part and ``[..., 1:]`` the color part.  Accumulates into ``out`` when given.
    """
    origins, dirs, near, far = _ray_arrays(origins, dirs, near, far)
    n = origins.shape[0]
    if out is None:
        out = np.zeros_like(field.grid)
    grad_rgb = np.ascontiguousarray(grad_rgb, dtype=np.float64).reshape(n, 3)
    backward_rays_kernel(field.grid, field.bbox, origins, dirs, near, far,
                         int(n_samples), _jitter(jitter, n, n_samples),
                         np.asarray(bg, dtype=np.float64), grad_rgb, out)
    return out


def reconstruction_loss(rendered, target) -> float:
    """Mean squared error over all pixels and channels."""
    rendered = np.asarray(rendered, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if rendered.shape != target.shape:
        raise ValidationError(f"shape mismatch {rendered.shape} vs {target.shape}")
    return float(np.mean((rendered - target) ** 2))


def pixel_grid(view: CameraView, width: int, height: int):
    jj, ii = np.mgrid[0:height, 0:width]
    return ii.ravel() + 0.5, jj.ravel() + 0.5


def render_view(field: VoxelField, view: CameraView, width: int, height: int,
                n_samples=DEFAULT_SAMPLES, bg=(0.0, 0.0, 0.0)) -> np.ndarray:
    u, v = pixel_grid(view, width, height)
    o, d = camera_rays(view, u, v)
    rgb, _ = render_rays(field, o, d, view.near, view.far, n_samples, bg=bg)
    return check_image(np.clip(rgb, 0.0, 1.0).reshape(height, width, 3))
