"""Images, cameras and Blender-style scene manifests.

Images are plain ``(H, W, 3)`` float64 arrays with channels in [0, 1].
Pixel ``(i, j)`` is column ``i``, row ``j`` and covers ``[i, i+1) x [j, j+1)``,
so its center sits at ``(i + 0.5, j + 0.5)``.  Cameras follow the OpenGL /
Blender convention: the camera looks down its local -z axis with +y up.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import cv2
import numpy as np

DEFAULT_NEAR = 0.1
DEFAULT_FAR = 6.0
DEFAULT_BBOX = ((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0))


class ValidationError(ValueError):
    """Input violates a documented contract."""


# ---------------------------------------------------------------- images


def check_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValidationError(f"expected an (H, W, 3) image, got shape {img.shape}")
    return img


def load_image(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"image not found: {path}")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ValidationError(f"could not decode image: {path}")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise ValidationError(f"unsupported bit depth {raw.dtype} in {path}")
    if raw.ndim != 3 or raw.shape[2] != 3:
        raise ValidationError(f"expected an RGB image in {path}, got shape {raw.shape}")
    return raw[:, :, ::-1].astype(np.float64) / scale


def quantize(img: np.ndarray, bits: int = 8) -> np.ndarray:
    """Round-half-up quantization to unsigned integers."""
    if bits not in (8, 16):
        raise ValidationError(f"unsupported bit depth: {bits}")
    top = (1 << bits) - 1
    q = np.floor(np.clip(img, 0.0, 1.0) * top + 0.5)
    return q.astype(np.uint8 if bits == 8 else np.uint16)


def save_image(img: np.ndarray, path, bits: int = 8) -> None:
    img = check_image(img)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    q = quantize(img, bits)
    if path.suffix.lower() == ".ppm":
        if bits != 8:
            raise ValidationError("PPM dumps are 8-bit only")
        write_ppm(q, path)
        return
    if not cv2.imwrite(str(path), np.ascontiguousarray(q[:, :, ::-1])):
        raise OSError(f"failed to write {path}")


def write_ppm(q: np.ndarray, path) -> None:
    h, w = q.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(q, dtype=np.uint8).tobytes())


# ---------------------------------------------------------------- cameras


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    near: float
    far: float


@dataclass(frozen=True)
class CameraView:
    fx: float
    fy: float
    cx: float
    cy: float
    cam_to_world: np.ndarray
    image_path: str = ""
    near: float = DEFAULT_NEAR
    far: float = DEFAULT_FAR

    def __post_init__(self):
        c2w = np.asarray(self.cam_to_world, dtype=np.float64)
        if c2w.shape == (3, 4):
            c2w = np.vstack([c2w, [0.0, 0.0, 0.0, 1.0]])
        if c2w.shape != (4, 4):
            raise ValidationError(f"cam_to_world must be 4x4, got {c2w.shape}")
        if not np.all(np.isfinite(c2w)) or abs(np.linalg.det(c2w)) < 1e-12:
            raise ValidationError("cam_to_world is not invertible")
        rot = c2w[:3, :3]
        if np.max(np.abs(rot.T @ rot - np.eye(3))) > 1e-5:
            raise ValidationError("rotation block of cam_to_world is not orthonormal")
        if not 0 < self.near < self.far:
            raise ValidationError(f"need 0 < near < far, got {self.near}, {self.far}")
        c2w.setflags(write=False)
        object.__setattr__(self, "cam_to_world", c2w)

    @property
    def center(self) -> np.ndarray:
        return self.cam_to_world[:3, 3]

    @property
    def forward(self) -> np.ndarray:
        return -self.cam_to_world[:3, 2]


def camera_dirs(view: CameraView, u, v) -> np.ndarray:
    """Unnormalized world-space directions through sub-pixel positions (u, v)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    local = np.stack(
        [(u - view.cx) / view.fx, -(v - view.cy) / view.fy, -np.ones_like(u)], axis=-1
    )
    return local @ view.cam_to_world[:3, :3].T


def camera_rays(view: CameraView, u, v) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``camera_ray``: returns (origins, unit directions)."""
    d = camera_dirs(view, u, v)
    d = d / np.linalg.norm(d, axis=-1, keepdims=True)
    o = np.broadcast_to(view.center, d.shape).copy()
    return o, d


def camera_ray(view: CameraView, u: float, v: float) -> Ray:
    o, d = camera_rays(view, u, v)
    return Ray(o, d, view.near, view.far)


# ---------------------------------------------------------------- scenes


@dataclass
class SceneSet:
    views: list[CameraView]
    images: list[np.ndarray]
    bbox: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_BBOX))

    def __post_init__(self):
        self.bbox = np.asarray(self.bbox, dtype=np.float64).reshape(2, 3)
        if len(self.views) < 1 or len(self.views) != len(self.images):
            raise ValidationError(
                f"need |views| = |images| >= 1, got {len(self.views)} / {len(self.images)}"
            )
        self.images = [check_image(im) for im in self.images]
        shapes = {im.shape for im in self.images}
        if len(shapes) != 1:
            raise ValidationError(f"images differ in size: {sorted(shapes)}")
        if np.any(self.bbox[1] <= self.bbox[0]):
            raise ValidationError(f"degenerate bbox {self.bbox.tolist()}")

    def __len__(self):
        return len(self.views)

    @property
    def height(self) -> int:
        return self.images[0].shape[0]

    @property
    def width(self) -> int:
        return self.images[0].shape[1]

    def with_images(self, images) -> "SceneSet":
        return SceneSet(list(self.views), list(images), self.bbox.copy())

    def subset(self, indices) -> "SceneSet":
        return SceneSet(
            [self.views[i] for i in indices], [self.images[i] for i in indices], self.bbox.copy()
        )


def _resolve_image(base: Path, file_path: str) -> Path:
    p = base / file_path
    if p.suffix == "" and not p.exists():
        p = p.with_suffix(".png")
    return p


def load_scene(manifest_path) -> SceneSet:
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise FileNotFoundError(f"scene manifest not found: {manifest_path}")
    meta = json.loads(manifest_path.read_text())
    try:
        angle = float(meta["camera_angle_x"])
        frames = meta["frames"]
    except KeyError as exc:
        raise ValidationError(f"{manifest_path}: missing field {exc}") from None
    if not frames:
        raise ValidationError(f"{manifest_path}: no frames")
    base = manifest_path.parent
    images, views = [], []
    for frame in frames:
        path = _resolve_image(base, frame["file_path"])
        img = load_image(path)
        h, w = img.shape[:2]
        focal = 0.5 * w / math.tan(0.5 * angle)
        views.append(
            CameraView(
                fx=focal,
                fy=focal,
                cx=w / 2.0,
                cy=h / 2.0,
                cam_to_world=np.array(frame["transform_matrix"], dtype=np.float64),
                image_path=str(path),
                near=float(frame.get("near", DEFAULT_NEAR)),
                far=float(frame.get("far", DEFAULT_FAR)),
            )
        )
        images.append(img)
    bbox = np.array(meta.get("aabb", DEFAULT_BBOX), dtype=np.float64)
    return SceneSet(views, images, bbox)


def save_scene(scene: SceneSet, manifest_path, image_dir: str = "images", bits: int = 8) -> Path:
    """Write images and a manifest that ``load_scene`` reads back."""
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    root.mkdir(parents=True, exist_ok=True)
    frames = []
    for idx, (view, img) in enumerate(zip(scene.views, scene.images)):
        rel = f"{image_dir}/{idx:04d}.png"
        save_image(img, root / rel, bits=bits)
        frames.append(
            {
                "file_path": rel,
                "transform_matrix": view.cam_to_world.tolist(),
                "near": view.near,
                "far": view.far,
            }
        )
    fx = scene.views[0].fx
    meta = {
        "camera_angle_x": 2.0 * math.atan(0.5 * scene.width / fx),
        "aabb": scene.bbox.tolist(),
        "frames": frames,
    }
    manifest_path.write_text(json.dumps(meta, indent=2))
    return manifest_path


def relocate(view: CameraView, image_path) -> CameraView:
    return replace(view, image_path=os.fspath(image_path))
