"""Procedural toy scene: textured primitives in a dense hand-built voxel field.

Ground-truth views come from the library's own renderer.  Each pixel
averages a 3x3 box of sub-pixel rays, standing in for a camera that
integrates over its pixel footprint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .field.grid import VoxelField, logit
from .field.render import render_rays
from .scene_io import CameraView, SceneSet, camera_rays, save_scene

SOLID_RAW = 150.0  # opaque within about two ray samples
EMPTY_RAW = -12.0


@dataclass
class ToyConfig:
    field_resolution: int = 128
    width: int = 128
    height: int = 128
    n_train: int = 16
    n_test: int = 4
    radius: float = 3.2
    camera_angle_x: float = 0.8
    n_samples: int = 256
    aa: int = 3  # box supersampling per axis for ground truth
    elevation: tuple[float, float] = (0.25, 0.85)  # radians


def _checker(a, b, period):
    return (np.floor(a / period) + np.floor(b / period)) % 2


def toy_field(resolution: int = 128) -> VoxelField:
    """Floor slab, striped sphere, checkered box, ringed pillar; z is up."""
    bbox = np.array([[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]])
    n = resolution
    c = (np.arange(n) + 0.5) / n * 2.0 - 1.0
    x, y, z = np.meshgrid(c, c, c, indexing="ij")
    occ = np.zeros(x.shape, dtype=bool)
    rgb = np.zeros(x.shape + (3,))

    floor = (np.abs(x) < 0.9) & (np.abs(y) < 0.9) & (z > -0.9) & (z < -0.75)
    chk = _checker(x, y, 0.225)[..., None]
    rgb = np.where(floor[..., None], chk * [0.85, 0.8, 0.7] + (1 - chk) * [0.2, 0.25, 0.3], rgb)
    occ |= floor

    sphere = (x + 0.35) ** 2 + (y + 0.3) ** 2 + (z + 0.3) ** 2 < 0.42**2
    stripe = (np.floor((z + 0.3) / 0.07) % 2)[..., None]
    rgb = np.where(sphere[..., None], stripe * [0.9, 0.15, 0.1] + (1 - stripe) * [0.95, 0.85, 0.2], rgb)
    occ |= sphere

    box = (np.abs(x - 0.4) < 0.28) & (np.abs(y - 0.3) < 0.28) & (np.abs(z + 0.47) < 0.28)
    bchk = ((np.floor(x / 0.09) + np.floor(y / 0.09) + np.floor(z / 0.09)) % 2)[..., None]
    rgb = np.where(box[..., None], bchk * [0.1, 0.3, 0.85] + (1 - bchk) * [0.9, 0.9, 0.95], rgb)
    occ |= box

    pillar = ((x - 0.35) ** 2 + (y + 0.45) ** 2 < 0.13**2) & (z > -0.75) & (z < 0.45)
    ring = (np.floor(z / 0.1) % 2)[..., None]
    rgb = np.where(pillar[..., None], ring * [0.15, 0.7, 0.25] + (1 - ring) * [0.05, 0.05, 0.05], rgb)
    occ |= pillar

    density = np.where(occ, SOLID_RAW, EMPTY_RAW)
    color = logit(np.clip(rgb, 0.02, 0.98))
    return VoxelField.from_raw(density, color, bbox)


def look_at(eye, target=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera-to-world matrix with the camera looking down its -z axis."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd /= np.linalg.norm(fwd)
    zc = -fwd
    xc = np.cross(up, zc)
    xc /= np.linalg.norm(xc)
    yc = np.cross(zc, xc)
    m = np.eye(4)
    m[:3, 0], m[:3, 1], m[:3, 2], m[:3, 3] = xc, yc, zc, eye
    return m


def toy_views(cfg: ToyConfig) -> list[CameraView]:
    """Spiral of cameras around the scene; elevation sweeps the given range."""
    n = cfg.n_train + cfg.n_test
    f = 0.5 * cfg.width / math.tan(0.5 * cfg.camera_angle_x)
    near, far = cfg.radius - math.sqrt(3.0), cfg.radius + math.sqrt(3.0)
    golden = math.pi * (3.0 - math.sqrt(5.0))
    lo, hi = cfg.elevation
    views = []
    for k in range(n):
        az = k * golden
        el = lo + (hi - lo) * (k + 0.5) / n
        eye = cfg.radius * np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az),
                                     math.sin(el)])
        views.append(CameraView(f, f, cfg.width / 2, cfg.height / 2, look_at(eye), near=near,
                                far=far))
    return views


def split_indices(cfg: ToyConfig) -> tuple[list[int], list[int]]:
    """Test views are spread evenly through the spiral."""
    n = cfg.n_train + cfg.n_test
    test = [int(round((t + 0.5) * n / cfg.n_test)) % n for t in range(cfg.n_test)] if cfg.n_test else []
    train = [k for k in range(n) if k not in test]
    return train, test


def render_gt(field: VoxelField, view: CameraView, cfg: ToyConfig, chunk: int = 16384) -> np.ndarray:
    a = cfg.aa
    off = (np.arange(a) + 0.5) / a
    jj, ii = np.meshgrid(np.arange(cfg.height), np.arange(cfg.width), indexing="ij")
    shape = (cfg.height, cfg.width, a, a)
    u = np.broadcast_to(ii[..., None, None] + off[None, None, None, :], shape).ravel()
    v = np.broadcast_to(jj[..., None, None] + off[None, None, :, None], shape).ravel()
    o, d = camera_rays(view, u, v)
    out = np.empty((len(u), 3))
    for s in range(0, len(u), chunk):
        rgb, _ = render_rays(field, o[s:s + chunk], d[s:s + chunk], view.near, view.far,
                             cfg.n_samples, t_stop=1e-6)
        out[s:s + chunk] = rgb
    img = out.reshape(cfg.height, cfg.width, a * a, 3).mean(axis=2)
    return np.clip(img, 0.0, 1.0)


def make_toy(cfg: ToyConfig | None = None) -> tuple[SceneSet, SceneSet]:
    """Returns (train, test) scenes."""
    cfg = cfg or ToyConfig()
    field = toy_field(cfg.field_resolution)
    views = toy_views(cfg)
    images = [render_gt(field, v, cfg) for v in views]
    train, test = split_indices(cfg)
    full = SceneSet(views, images, field.bbox.copy())
    return full.subset(train), full.subset(test) if test else None


def write_toy(out_dir, cfg: ToyConfig | None = None) -> tuple[Path, Path | None]:
    out_dir = Path(out_dir)
    train, test = make_toy(cfg)
    m_train = save_scene(train, out_dir / "transforms_train.json", image_dir="train")
    m_test = save_scene(test, out_dir / "transforms_test.json", image_dir="test") if test else None
    return m_train, m_test


# ---------------------------------------------------------------- textures


def textures(size: int = 64) -> list[np.ndarray]:
    """Five deterministic textured test images."""
    t = (np.arange(size) + 0.5) / size
    y, x = np.meshgrid(t, t, indexing="ij")
    out = []
    chk = _checker(x, y, 1 / 8)
    out.append(np.stack([chk * 0.8 + 0.1, 0.5 + 0.3 * np.sin(6 * x), 1 - chk * 0.7], -1))
    out.append(np.stack([0.5 + 0.5 * np.sin(2 * np.pi * 7 * x + 3 * y)] * 3, -1)
               * [1.0, 0.8, 0.6])
    r = np.hypot(x - 0.5, y - 0.4)
    out.append(np.stack([0.5 + 0.45 * np.cos(60 * r), 0.3 + 0.6 * y, 0.5 + 0.4 * np.sin(40 * r)], -1))
    rng = np.random.default_rng(1234)
    coarse = rng.random((size // 4, size // 4, 3))
    noise = np.repeat(np.repeat(coarse, 4, 0), 4, 1)
    out.append(0.6 * noise + 0.4 * rng.random((size, size, 3)))
    out.append(np.stack([x, y, 0.5 + 0.5 * np.sin(2 * np.pi * 5 * x * y)], -1))
    return [np.clip(im, 0.0, 1.0) for im in out]
