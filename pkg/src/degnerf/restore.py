"""Pose-based reference-view selection and pluggable restoration strategies."""

from __future__ import annotations

import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .scene_io import SceneSet, ValidationError, load_image, save_image

DISTANCE_WEIGHT = 0.5
DEFAULT_K = 3


@dataclass(frozen=True)
class ViewSelection:
    target_index: int
    reference_indices: tuple[int, ...]
    scores: tuple[float, ...]


def scene_diameter(centers: np.ndarray) -> float:
    """Largest pairwise distance between camera centers."""
    diff = centers[:, None, :] - centers[None, :, :]
    return float(np.sqrt((diff**2).sum(-1)).max())


def pair_score(fwd_a, fwd_b, center_a, center_b, diameter, weight=DISTANCE_WEIGHT) -> float:
    cos = float(np.dot(fwd_a, fwd_b) / (np.linalg.norm(fwd_a) * np.linalg.norm(fwd_b)))
    dist = float(np.linalg.norm(np.asarray(center_a) - np.asarray(center_b)))
    return cos - weight * (dist / diameter if diameter > 0 else 0.0)


def select_views(scene: SceneSet, target: int, k: int = DEFAULT_K,
                 weight: float = DISTANCE_WEIGHT) -> ViewSelection:
    """Top-``k`` views by pose similarity to ``target``; ties go to the lower index."""
    n = len(scene)
    if not 0 <= target < n:
        raise ValidationError(f"target {target} out of range for {n} views")
    if not 0 <= k < n:
        raise ValidationError(f"need 0 <= k < {n}, got {k}")
    centers = np.stack([v.center for v in scene.views])
    diam = scene_diameter(centers)
    tv = scene.views[target]
    cands = []
    for b, vb in enumerate(scene.views):
        if b == target:
            continue
        s = pair_score(tv.forward, vb.forward, tv.center, vb.center, diam, weight)
        # rounding keeps symmetric configurations tied despite float noise
        cands.append((-round(s, 12), b))
    cands.sort()
    top = cands[:k]
    return ViewSelection(target, tuple(b for _, b in top), tuple(-s for s, _ in top))


# ---------------------------------------------------------------- restorers

Restorer = Callable[[np.ndarray, list], np.ndarray]


def identity_restorer(target: np.ndarray, references: list) -> np.ndarray:
    return target


def exec_restorer(program: str) -> Restorer:
    """Shell out to ``program out.png target.png ref1.png ...`` and read out.png."""

    def run(target, references):
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            paths = [tmp / "target.png"]
            save_image(target, paths[0])
            for n, ref in enumerate(references):
                paths.append(tmp / f"ref{n}.png")
                save_image(ref, paths[-1])
            out = tmp / "out.png"
            subprocess.run([program, str(out), *map(str, paths)], check=True)
            return load_image(out)

    return run


_REGISTRY: dict[str, Restorer] = {"identity": identity_restorer}


def register_restorer(name: str, fn: Restorer) -> None:
    _REGISTRY[name] = fn


def get_restorer(name: str) -> Restorer:
    if name.startswith("exec:"):
        program = name[len("exec:"):]
        if not program:
            raise ValidationError("exec strategy needs a program path")
        return exec_restorer(program)
    if name not in _REGISTRY:
        raise ValidationError(f"unknown restoration strategy {name!r}")
    return _REGISTRY[name]


def restore_scene(scene: SceneSet, restorer: str | Restorer = "identity",
                  k: int = DEFAULT_K) -> SceneSet:
    fn = get_restorer(restorer) if isinstance(restorer, str) else restorer
    k = min(k, len(scene) - 1)
    out = []
    for idx, img in enumerate(scene.images):
        sel = select_views(scene, idx, k)
        refs = [scene.images[r] for r in sel.reference_indices]
        res = np.asarray(fn(img, refs), dtype=np.float64)
        if res.shape != img.shape:
            raise ValidationError(f"restorer changed image shape {img.shape} -> {res.shape}")
        out.append(np.clip(res, 0.0, 1.0) if fn is not identity_restorer else res)
    return scene.with_images(out)
