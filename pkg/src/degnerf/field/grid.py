"""Dense voxel radiance field: a density grid and an RGB grid over a box."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..scene_io import ValidationError

MAGIC = b"VXRF"
VERSION = 1

INIT_DENSITY = 0.1
INIT_COLOR = 0.5


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 20.0, x, np.log1p(np.exp(np.minimum(x, 20.0))))


def softplus_inv(y):
    return np.log(np.expm1(y))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def logit(p):
    return np.log(p / (1.0 - p))


@dataclass
class VoxelField:
    """Packed raw (pre-activation) grid; values live at voxel centers.

    ``grid[..., 0]`` is raw density and ``grid[..., 1:]`` raw RGB.  Density is
    ``softplus(raw)`` and color ``logistic(raw)``, applied after interpolation.
    """

    grid: np.ndarray  # (Nx, Ny, Nz, 4)
    bbox: np.ndarray  # (2, 3)

    def __post_init__(self):
        self.grid = np.ascontiguousarray(self.grid, dtype=np.float64)
        self.bbox = np.ascontiguousarray(self.bbox, dtype=np.float64).reshape(2, 3)
        if self.grid.ndim != 4 or self.grid.shape[3] != 4:
            raise ValidationError(f"grid must be (Nx, Ny, Nz, 4), got {self.grid.shape}")
        if np.any(self.bbox[1] <= self.bbox[0]):
            raise ValidationError(f"degenerate bbox {self.bbox.tolist()}")

    @classmethod
    def from_raw(cls, density_raw, color_raw, bbox):
        density_raw = np.asarray(density_raw, dtype=np.float64)
        color_raw = np.asarray(color_raw, dtype=np.float64)
        if color_raw.shape != density_raw.shape + (3,):
            raise ValidationError("color_raw must be density_raw.shape + (3,)")
        return cls(np.concatenate([density_raw[..., None], color_raw], axis=-1), bbox)

    @classmethod
    def create(cls, resolution, bbox, density=INIT_DENSITY, color=INIT_COLOR):
        res = tuple(int(n) for n in resolution)
        if len(res) != 3 or min(res) < 1:
            raise ValidationError(f"bad resolution {resolution}")
        grid = np.empty(res + (4,))
        grid[..., 0] = softplus_inv(density)
        grid[..., 1:] = logit(color)
        return cls(grid, bbox)

    @property
    def density_raw(self) -> np.ndarray:
        return self.grid[..., 0]

    @property
    def color_raw(self) -> np.ndarray:
        return self.grid[..., 1:]

    @property
    def resolution(self) -> tuple[int, int, int]:
        return self.grid.shape[:3]

    @property
    def voxel_size(self) -> np.ndarray:
        return (self.bbox[1] - self.bbox[0]) / np.array(self.resolution)

    def voxel_center(self, i, j, k) -> np.ndarray:
        return self.bbox[0] + (np.array([i, j, k]) + 0.5) * self.voxel_size

    def copy(self) -> "VoxelField":
        return VoxelField(self.grid.copy(), self.bbox.copy())


def trilinear_stencil(field: VoxelField, x):
    """Corner indices and weights of the trilinear stencil at world point ``x``.

    Returns ``None`` outside the box.  Indices are clamped to the grid, so the
    half-voxel shell next to each face repeats the face voxels.
    """
    x = np.asarray(x, dtype=np.float64)
    lo, hi = field.bbox
    if np.any(x < lo) or np.any(x > hi):
        return None
    res = np.array(field.resolution)
    g = (x - lo) / (hi - lo) * res - 0.5
    base = np.floor(g).astype(int)
    frac = g - base
    corners = []
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                off = np.array([dx, dy, dz])
                idx = tuple(np.clip(base + off, 0, res - 1))
                w = np.prod(np.where(off == 1, frac, 1.0 - frac))
                corners.append((idx, w))
    return corners


def query_field(field: VoxelField, x, d=None):
    """Density and RGB at world point ``x``; the view direction is ignored."""
    corners = trilinear_stencil(field, x)
    if corners is None:
        return 0.0, np.full(3, 0.5)
    raw_s = sum(w * field.density_raw[idx] for idx, w in corners)
    raw_c = sum(w * field.color_raw[idx] for idx, w in corners)
    return float(softplus(raw_s)), sigmoid(raw_c)


# ---------------------------------------------------------------- file format


def save_field(field: VoxelField, path) -> None:
    """Binary layout: magic, u32 version, 3 x u32 resolution, 6 x f64 bbox,
    then density and color as little-endian f32 in C order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<3I", *field.resolution))
        fh.write(struct.pack("<6d", *field.bbox.ravel()))
        fh.write(field.density_raw.astype("<f4").tobytes())
        fh.write(field.color_raw.astype("<f4").tobytes())


def load_field(path) -> VoxelField:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValidationError(f"{path}: not a voxel field file")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise ValidationError(f"{path}: unsupported version {version}")
    res = struct.unpack_from("<3I", data, 8)
    bbox = np.array(struct.unpack_from("<6d", data, 20)).reshape(2, 3)
    off = 68
    n = int(np.prod(res))
    density = np.frombuffer(data, dtype="<f4", count=n, offset=off).reshape(res)
    color = np.frombuffer(data, dtype="<f4", count=3 * n, offset=off + 4 * n).reshape(res + (3,))
    return VoxelField.from_raw(density.astype(np.float64), color.astype(np.float64), bbox)
