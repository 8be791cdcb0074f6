"""Coarse-to-fine optimization of a voxel field against posed images.

Coarse epochs supervise one center ray per pixel.  Fine epochs either keep
single rays or, with guidance, render each pixel from a sub-pixel ray
pattern; with a quadtree config the fine-stage pixel set is planned per epoch.
Everything runs serially in a fixed order, so a fixed seed reproduces a run
bit for bit.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import quadtree as qt
from ..guidance import DEFAULT_S, DEFAULT_SIGMA, PseudoPixelPattern, isotropic_cov, make_pattern
from ..scene_io import SceneSet, ValidationError
from .grid import VoxelField
from .render import DEFAULT_SAMPLES, backward_rays, render_rays


@dataclass
class TrainConfig:
    resolution: tuple[int, int, int] = (64, 64, 64)
    lr_density: float = 0.1
    lr_color: float = 0.1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-15
    final_lr_factor: float = 0.1
    batch_rays: int = 8192
    coarse_epochs: int = 1
    fine_epochs: int = 3
    n_samples: int = DEFAULT_SAMPLES
    stratified: bool = True
    bg: tuple[float, float, float] = (0.0, 0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        self.resolution = tuple(int(n) for n in self.resolution)
        self.bg = tuple(float(c) for c in self.bg)
        counts = [self.batch_rays, self.n_samples, *self.resolution]
        if min(counts) < 1 or self.coarse_epochs < 0 or self.fine_epochs < 0:
            raise ValidationError("counts must be positive")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValidationError("Adam betas must lie in (0, 1)")

    @property
    def epochs(self) -> int:
        return self.coarse_epochs + self.fine_epochs


@dataclass
class GuidanceConfig:
    s: int = DEFAULT_S
    sigma: float = DEFAULT_SIGMA
    cov: list | None = None
    loss: str = "l2"
    start_epoch: int | None = None  # defaults to the first fine epoch

    def pattern(self) -> PseudoPixelPattern:
        cov = isotropic_cov(self.sigma) if self.cov is None else np.asarray(self.cov)
        return make_pattern(self.s, cov)


@dataclass
class QuadtreeConfig:
    mu: float = 1.0
    alpha: float = qt.ALPHA
    s_sample: float = qt.S_SAMPLE
    s_divide: float = qt.S_DIVIDE
    min_area: int = qt.MIN_AREA


@dataclass
class TrainLog:
    entries: list[dict] = field(default_factory=list)

    @property
    def rays_used(self) -> int:
        return sum(e["rays_used"] for e in self.entries)

    @property
    def seconds(self) -> float:
        return sum(e["seconds"] for e in self.entries)

    @property
    def iterations(self) -> int:
        return sum(e["iterations"] for e in self.entries)

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for e in self.entries:
                fh.write(json.dumps(e) + "\n")


class Adam:
    def __init__(self, shape, lr, beta1=0.9, beta2=0.999, eps=1e-15):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.lr = np.asarray(lr, dtype=np.float64)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0

    def step(self, param: np.ndarray, grad: np.ndarray, scale: float = 1.0) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        self.m *= b1
        self.m += (1.0 - b1) * grad
        self.v *= b2
        self.v += (1.0 - b2) * grad * grad
        lr_t = self.lr * scale * math.sqrt(1.0 - b2**self.t) / (1.0 - b1**self.t)
        param -= lr_t * self.m / (np.sqrt(self.v) + self.eps)


def cosine_factor(progress: float, final: float) -> float:
    """Learning-rate multiplier: 1 at progress 0, ``final`` at progress 1."""
    progress = min(max(progress, 0.0), 1.0)
    return final + (1.0 - final) * 0.5 * (1.0 + math.cos(math.pi * progress))


class _Cameras:
    """Stacked camera parameters so rays for mixed-view batches are one call."""

    def __init__(self, scene: SceneSet):
        views = scene.views
        self.rot = np.stack([v.cam_to_world[:3, :3] for v in views])
        self.center = np.stack([v.center for v in views])
        self.k = np.array([[v.fx, v.fy, v.cx, v.cy] for v in views])
        self.near = np.array([v.near for v in views])
        self.far = np.array([v.far for v in views])

    def rays(self, vid, u, v):
        k = self.k[vid]
        local = np.stack([(u - k[:, 2]) / k[:, 0], -(v - k[:, 3]) / k[:, 1], -np.ones_like(u)], 1)
        d = np.einsum("nij,nj->ni", self.rot[vid], local)
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return self.center[vid], d, self.near[vid], self.far[vid]


def _batches(pixels: np.ndarray, batch: int, rng: np.random.Generator, steps: int | None = None):
    """Shuffle and cut into batches.

    By default batches hold ``batch`` pixels and the last one takes the rest.
    With ``steps`` the pixels are split into that many near-equal batches
    instead.  Either way each pixel is used exactly once.
    """
    n = len(pixels)
    order = rng.permutation(n)
    if steps is not None:
        return [pixels[c] for c in np.array_split(order, min(steps, n)) if len(c)]
    return [pixels[order[b:b + batch]] for b in range(0, n, batch)]


def all_pixels(n_views: int, width: int, height: int) -> np.ndarray:
    v, j, i = np.meshgrid(np.arange(n_views), np.arange(height), np.arange(width), indexing="ij")
    return np.stack([v.ravel(), i.ravel(), j.ravel()], axis=1)


def train(scene: SceneSet, cfg: TrainConfig | None = None, guidance: GuidanceConfig | None = None,
          sampler: QuadtreeConfig | None = None, init: VoxelField | None = None,
          log_path=None, callback=None):
    """Fit a voxel field to ``scene``; returns ``(field, TrainLog, trees)``.

    ``sampler`` plans fine-stage pixels with quadtrees.  Without guidance
    the planned pixels are trained with single rays.
    """
    cfg = cfg or TrainConfig()
    field_ = init.copy() if init is not None else VoxelField.create(cfg.resolution, scene.bbox)
    rng = np.random.default_rng(cfg.seed)
    cams = _Cameras(scene)
    h, w = scene.height, scene.width
    targets = np.stack(scene.images)  # (V, H, W, 3)
    pixels_full = all_pixels(len(scene), w, h)

    single = make_pattern(1)
    pattern = guidance.pattern() if guidance else single
    loss_mode = guidance.loss if guidance else "l2"
    fine_start = cfg.coarse_epochs
    if guidance and guidance.start_epoch is not None:
        fine_start = max(fine_start, guidance.start_epoch)

    trees, gmaps, probs = None, None, None
    if sampler is not None:
        trees = [qt.init_tree(w, h, sampler.min_area) for _ in scene.views]
        gmaps = [qt.importance_map(img) for img in scene.images]
        probs = [qt.leaf_probabilities(t, img, g) for t, img, g in zip(trees, scene.images, gmaps)]
        index_maps = [qt.leaf_index_map(t) for t in trees]

    lr = np.array([cfg.lr_density] + [cfg.lr_color] * 3)
    adam = Adam(field_.grid.shape, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    grad = np.zeros_like(field_.grid)
    bg = np.array(cfg.bg)
    log = TrainLog()
    K = cfg.n_samples

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        fine = epoch >= cfg.coarse_epochs
        pat = pattern if epoch >= fine_start else single
        mode = loss_mode if pat is pattern else "l2"
        if fine and trees is not None:
            plan = qt.plan_epoch(trees, scene.images, sampler.mu, sampler.alpha, sampler.s_sample,
                                 rng, pat.size, probs=probs)
            pixels = plan.all_pixels()
            # a planned epoch keeps the optimizer step count of a full one
            steps = math.ceil(len(pixels_full) / cfg.batch_rays)
        else:
            pixels, steps = pixels_full, None
        batches = _batches(pixels, cfg.batch_rays, rng, steps)
        p = pat.size
        wts = pat.normalized_weights()
        loss_sum, rays = 0.0, 0
        for b, batch in enumerate(batches):
            vid = np.repeat(batch[:, 0], p)
            u = (batch[:, 1:2] + 0.5 + pat.offsets[None, :, 0]).ravel()
            v = (batch[:, 2:3] + 0.5 + pat.offsets[None, :, 1]).ravel()
            o, d, near, far = cams.rays(vid, u, v)
            jitter = rng.random((len(vid), K)) if cfg.stratified else None
            rgb, _ = render_rays(field_, o, d, near, far, K, jitter, bg)
            pred = np.einsum("mpc,p->mc", rgb.reshape(-1, p, 3), wts)
            tgt = targets[batch[:, 0], batch[:, 2], batch[:, 1]]
            diff = pred - tgt
            if mode == "l1":
                per_pixel = np.abs(diff).mean(axis=1)
                g_pix = np.sign(diff) / diff.size
            else:
                per_pixel = (diff**2).mean(axis=1)
                g_pix = 2.0 * diff / diff.size
            g_rays = (g_pix[:, None, :] * wts[None, :, None]).reshape(-1, 3)
            grad.fill(0.0)
            backward_rays(field_, o, d, near, far, g_rays, K, jitter, bg, out=grad)
            scale = cosine_factor((epoch + b / len(batches)) / max(cfg.epochs, 1),
                                  cfg.final_lr_factor)
            adam.step(field_.grid, grad, scale)
            loss_sum += float(per_pixel.mean())
            rays += len(vid)
            if trees is not None:
                for view in np.unique(batch[:, 0]):
                    sel = batch[:, 0] == view
                    qt.record_losses(trees[view], batch[sel, 1], batch[sel, 2], per_pixel[sel],
                                     index_maps[view])
        split = 0
        if trees is not None:
            for view, tree in enumerate(trees):
                if fine:
                    split += len(qt.subdivide_pass(tree, sampler.s_divide, sampler.min_area))
                    probs[view] = qt.leaf_probabilities(tree, scene.images[view], gmaps[view])
                    index_maps[view] = qt.leaf_index_map(tree)
                else:
                    qt.reset_losses(tree)
        entry = {
            "epoch": epoch,
            "stage": "fine" if fine else "coarse",
            "supersampled": pat.size > 1,
            "loss": loss_sum / len(batches),
            "pixels": int(len(pixels)),
            "iterations": len(batches),
            "rays_used": int(rays),
            "seconds": time.perf_counter() - t0,
        }
        if trees is not None:
            entry["leaves"] = sum(len(t.leaves()) for t in trees)
            entry["splits"] = split
        log.entries.append(entry)
        if callback is not None:
            callback(epoch, field_, entry)
    if log_path is not None:
        save_log(log, log_path)
    return field_, log, trees


def config_dict(cfg) -> dict:
    d = asdict(cfg)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def save_log(log: TrainLog, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    log.write_jsonl(path)
