"""PSNR / SSIM and held-out evaluation of a trained field."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .field.grid import VoxelField
from .field.render import DEFAULT_SAMPLES, render_view
from .scene_io import SceneSet, ValidationError

SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


def _same_shape(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio for unit peak; ``inf`` for identical inputs."""
    a, b = _same_shape(a, b)
    sq = ((a - b) ** 2).ravel()
    # offset by the first term so a uniform difference gives its square exactly
    mse = float(sq[0] + np.mean(sq - sq[0]))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def gaussian_window(size: int = SSIM_WIN, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable correlation over the first two axes, valid windows only."""
    rows = sliding_window_view(x, g.size, axis=0) @ g
    return sliding_window_view(rows, g.size, axis=1) @ g


def ssim(a, b) -> float:
    """Single-scale SSIM, per channel over valid windows, averaged."""
    a, b = _same_shape(a, b)
    if a.ndim == 2:
        a = a[..., None]
        b = b[..., None]
    if min(a.shape[:2]) < SSIM_WIN:
        raise ValidationError(f"SSIM needs images of at least {SSIM_WIN}x{SSIM_WIN}")
    g = gaussian_window()
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a**2
    var_b = _filter_valid(b * b, g) - mu_b**2
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a**2 + mu_b**2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float(np.mean(num / den))


@dataclass
class EvalReport:
    psnr: list[float]
    ssim: list[float]
    rays_used: int = 0
    train_seconds: float = 0.0
    lpips: list | None = None  # perceptual metric not computed
    mean_psnr: float = field(init=False)
    mean_ssim: float = field(init=False)

    def __post_init__(self):
        self.mean_psnr = float(np.mean(self.psnr))
        self.mean_ssim = float(np.mean(self.ssim))

    def to_dict(self) -> dict:
        d = asdict(self)
        inf = [not math.isfinite(p) for p in self.psnr]
        d["psnr"] = [None if f else p for p, f in zip(self.psnr, inf)]
        d["psnr_infinite"] = inf
        if not math.isfinite(self.mean_psnr):
            d["mean_psnr"] = None
        d["mean_psnr_infinite"] = not math.isfinite(self.mean_psnr)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        vals = [math.inf if p is None else p for p in d["psnr"]]
        return cls(vals, d["ssim"], d.get("rays_used", 0), d.get("train_seconds", 0.0),
                   d.get("lpips"))

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def evaluate(field_: VoxelField, holdout, n_samples=DEFAULT_SAMPLES, bg=(0.0, 0.0, 0.0),
             rays_used=0, train_seconds=0.0, out=None) -> EvalReport:
    """Render every held-out view and score it; ``holdout`` is a SceneSet or
    a sequence of (view, image) pairs."""
    if isinstance(holdout, SceneSet):
        pairs = list(zip(holdout.views, holdout.images))
    else:
        pairs = list(holdout or [])
    if not pairs:
        raise ValidationError("holdout has no views")
    p, s = [], []
    for view, img in pairs:
        pred = render_view(field_, view, img.shape[1], img.shape[0], n_samples, bg)
        p.append(psnr(pred, img))
        s.append(ssim(pred, img))
    report = EvalReport(p, s, rays_used, train_seconds)
    if out is not None:
        report.save(out)
    return report
