"""The per-scene degradation parameter record and its sampler."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from ..rng import stream
from .kernels import BLUR_FAMILIES, KERNEL_SIZES, KernelSpec
from .ops import RESIZE_MODES, NoiseSpec

SIGMA_RANGE = (0.2, 3.0)
BETA_GENERALIZED = (0.5, 4.0)
BETA_PLATEAU = (1.0, 2.0)
SCALE_RANGE = (0.15, 1.5)
JPEG_RANGE = (30, 95)
GAUSSIAN_SIGMA = (1.0 / 255.0, 30.0 / 255.0)
POISSON_SCALE = (0.05, 3.0)
GRAY_NOISE_PROB = 0.4
GAUSSIAN_NOISE_PROB = 0.5
SINC_CUTOFF = (math.pi / 3.0, math.pi)
FINAL_ORDERS = ("resize_sinc_jpeg", "jpeg_resize_sinc")


@dataclass(frozen=True)
class StageParams:
    blur: KernelSpec
    resize_scale: float
    resize_mode: str
    noise: NoiseSpec
    jpeg_quality: int


@dataclass(frozen=True)
class DegradationParams:
    seed: int
    kernel_size: int
    stage1: StageParams
    stage2: StageParams
    final_order: str
    final_sinc: KernelSpec
    final_resize_mode: str
    final_jpeg_quality: int
    target_width: int
    target_height: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "DegradationParams":
        def stage(s):
            return StageParams(KernelSpec(**s["blur"]), s["resize_scale"], s["resize_mode"],
                               NoiseSpec(**s["noise"]), s["jpeg_quality"])

        return cls(
            d["seed"], d["kernel_size"], stage(d["stage1"]), stage(d["stage2"]), d["final_order"],
            KernelSpec(**d["final_sinc"]), d["final_resize_mode"], d["final_jpeg_quality"],
            d["target_width"], d["target_height"],
        )

    @classmethod
    def from_json(cls, text: str) -> "DegradationParams":
        return cls.from_dict(json.loads(text))


def _blur(rng: np.random.Generator, size: int) -> KernelSpec:
    family = BLUR_FAMILIES[rng.integers(len(BLUR_FAMILIES))]
    sx = float(rng.uniform(*SIGMA_RANGE))
    if family.endswith("aniso"):
        sy = float(rng.uniform(*SIGMA_RANGE))
        rot = float(rng.uniform(-math.pi, math.pi))
    else:
        sy, rot = sx, 0.0
    if family.startswith("generalized"):
        beta = float(rng.uniform(*BETA_GENERALIZED))
    elif family.startswith("plateau"):
        beta = float(rng.uniform(*BETA_PLATEAU))
    else:
        beta = 1.0
    return KernelSpec(family, size, sx, sy, rot, beta)


def _noise(rng: np.random.Generator) -> NoiseSpec:
    if rng.random() < GAUSSIAN_NOISE_PROB:
        kind, strength = "gaussian", float(rng.uniform(*GAUSSIAN_SIGMA))
    else:
        kind, strength = "poisson", float(rng.uniform(*POISSON_SCALE))
    gray = bool(rng.random() < GRAY_NOISE_PROB)
    return NoiseSpec(kind, gray, strength)


def _stage(rng: np.random.Generator, size: int) -> StageParams:
    blur = _blur(rng, size)
    scale = float(rng.uniform(*SCALE_RANGE))
    mode = RESIZE_MODES[rng.integers(len(RESIZE_MODES))]
    noise = _noise(rng)
    quality = int(rng.integers(JPEG_RANGE[0], JPEG_RANGE[1] + 1))
    return StageParams(blur, scale, mode, noise, quality)


def sample_params(seed: int, target_resolution: tuple[int, int]) -> DegradationParams:
    """Draw one parameter set; deterministic in ``seed``."""
    rng = stream(seed, "theta")
    size = int(KERNEL_SIZES[rng.integers(len(KERNEL_SIZES))])
    stage1 = _stage(rng, size)
    stage2 = _stage(rng, size)
    order = FINAL_ORDERS[rng.integers(2)]
    sinc = KernelSpec("sinc", size, cutoff=float(rng.uniform(*SINC_CUTOFF)))
    mode = RESIZE_MODES[rng.integers(len(RESIZE_MODES))]
    quality = int(rng.integers(JPEG_RANGE[0], JPEG_RANGE[1] + 1))
    w, h = target_resolution
    return DegradationParams(int(seed), size, stage1, stage2, order, sinc, mode, quality,
                             int(w), int(h))
