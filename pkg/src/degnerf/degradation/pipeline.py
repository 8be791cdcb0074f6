"""Apply one sampled parameter set to every view of a scene."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..rng import stream
from ..scene_io import SceneSet, ValidationError, check_image, save_image, save_scene
from .jpeg import jpeg_roundtrip
from .kernels import build_kernel
from .ops import add_noise, filter2d, resize_to, scaled_size, usm_sharpen
from .params import DegradationParams, sample_params


def degrade_image(img: np.ndarray, theta: DegradationParams, rng: np.random.Generator,
                  trace: list | None = None) -> np.ndarray:
    """Sharpen, run both stages, then the final resize/sinc/JPEG block.

    Stage resize scales are relative to the input size.  Only the noise draws
    come from ``rng``; everything else is fixed by ``theta``.  When ``trace``
    is a list, each operation appends a dict describing what it realized.
    """
    img = check_image(img)
    h, w = img.shape[:2]

    def log(**info):
        if trace is not None:
            trace.append(info)

    out = usm_sharpen(img)
    for name, st in (("stage1", theta.stage1), ("stage2", theta.stage2)):
        kernel = build_kernel(st.blur)
        out = filter2d(out, kernel)
        log(stage=name, op="blur", kernel=kernel)
        size = scaled_size(w, h, st.resize_scale)
        out = resize_to(out, size, st.resize_mode)
        log(stage=name, op="resize", size=size, mode=st.resize_mode)
        before = out
        out = add_noise(out, st.noise, rng)
        log(stage=name, op="noise", spec=st.noise, residual=out - before)
        out = jpeg_roundtrip(out, st.jpeg_quality)
        log(stage=name, op="jpeg", quality=st.jpeg_quality)

    target = (theta.target_width, theta.target_height)
    sinc = build_kernel(theta.final_sinc)

    def final_resize(x):
        log(stage="final", op="resize", size=target, mode=theta.final_resize_mode)
        return resize_to(x, target, theta.final_resize_mode)

    def final_sinc(x):
        log(stage="final", op="sinc", kernel=sinc)
        return filter2d(x, sinc)

    def final_jpeg(x):
        log(stage="final", op="jpeg", quality=theta.final_jpeg_quality)
        return jpeg_roundtrip(x, theta.final_jpeg_quality)

    if theta.final_order == "resize_sinc_jpeg":
        out = final_jpeg(final_sinc(final_resize(out)))
    elif theta.final_order == "jpeg_resize_sinc":
        out = final_sinc(final_resize(final_jpeg(out)))
    else:
        raise ValidationError(f"unknown final order {theta.final_order!r}")
    return out


def degrade_scene(scene: SceneSet, seed: int, target: tuple[int, int] | None = None,
                  traces: list | None = None) -> tuple[SceneSet, DegradationParams]:
    """Degrade all views with one parameter set and per-view noise streams.

    A ``target`` size other than the input size rescales the intrinsics so
    the poses still describe the new pixels.
    """
    target = target or (scene.width, scene.height)
    theta = sample_params(seed, target)
    images = []
    for idx, img in enumerate(scene.images):
        trace = [] if traces is not None else None
        images.append(degrade_image(img, theta, stream(seed, "noise", idx), trace))
        if traces is not None:
            traces.append(trace)
    sx, sy = target[0] / scene.width, target[1] / scene.height
    views = list(scene.views)
    if (sx, sy) != (1.0, 1.0):
        views = [replace(v, fx=v.fx * sx, fy=v.fy * sy, cx=v.cx * sx, cy=v.cy * sy) for v in views]
    return SceneSet(views, images, scene.bbox.copy()), theta


def write_degraded(scene: SceneSet, theta: DegradationParams, out_dir) -> Path:
    out_dir = Path(out_dir)
    manifest = save_scene(scene, out_dir / "transforms.json")
    (out_dir / "theta.json").write_text(theta.to_json())
    return manifest


@dataclass
class Triplet:
    i: int
    j: int
    k: int
    degraded: tuple[np.ndarray, np.ndarray, np.ndarray]
    clean: np.ndarray


def synth_restoration_triplets(clip: SceneSet, seed: int, count: int, out_dir=None):
    """Training tuples (degraded i, j, k, clean i) with pairwise distinct frames."""
    n = len(clip)
    if n < 3:
        raise ValidationError(f"need at least 3 frames, got {n}")
    degraded, theta = degrade_scene(clip, seed)
    rng = stream(seed, "triplets")
    triplets = []
    for _ in range(int(count)):
        i, j, k = (int(x) for x in rng.choice(n, size=3, replace=False))
        triplets.append(Triplet(i, j, k, (degraded.images[i], degraded.images[j],
                                          degraded.images[k]), clip.images[i]))
    if out_dir is not None:
        write_triplets(triplets, degraded, clip, theta, out_dir)
    return triplets


def write_triplets(triplets, degraded: SceneSet, clip: SceneSet, theta, out_dir) -> Path:
    """Frames are written once; the JSON-lines manifest references them by path."""
    out_dir = Path(out_dir)
    for idx, (d, c) in enumerate(zip(degraded.images, clip.images)):
        save_image(d, out_dir / "degraded" / f"{idx:04d}.png")
        save_image(c, out_dir / "clean" / f"{idx:04d}.png")
    (out_dir / "theta.json").write_text(theta.to_json())
    manifest = out_dir / "triplets.jsonl"
    with open(manifest, "w") as fh:
        for t in triplets:
            fh.write(json.dumps({
                "i": t.i, "j": t.j, "k": t.k,
                "degraded_i": f"degraded/{t.i:04d}.png",
                "degraded_j": f"degraded/{t.j:04d}.png",
                "degraded_k": f"degraded/{t.k:04d}.png",
                "clean": f"clean/{t.i:04d}.png",
            }) + "\n")
    return manifest


def with_target(theta: DegradationParams, width: int, height: int) -> DegradationParams:
    return replace(theta, target_width=int(width), target_height=int(height))
