"""Per-view quadtrees that plan which pixels get supersampled each epoch.

Leaves carry the loss of pixels trained in the current epoch.  Before an
epoch, every leaf receives a pixel budget (reduced where the previous epoch's
mean loss says the region is already learned) and fills it by importance
sampling against a per-pixel probability derived from local color variance.
After the epoch, the deepest leaves with high mean loss are split in four.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .scene_io import ValidationError

ALPHA = 0.1
S_DIVIDE = 0.02
S_SAMPLE = 0.01
MIN_AREA = 625
UNIFORM_FRACTION = 0.2
OVERLAY_COLOR = (1.0, 0.0, 0.0)


@dataclass
class QuadNode:
    rect: tuple[int, int, int, int]  # (x0, y0, x1, y1), half-open
    depth: int = 0
    children: list["QuadNode"] = field(default_factory=list)
    loss_sum: float = 0.0
    loss_count: int = 0
    prev_mean: float | None = None  # mean loss of the last completed epoch

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def width(self) -> int:
        return self.rect[2] - self.rect[0]

    @property
    def height(self) -> int:
        return self.rect[3] - self.rect[1]

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def mean_loss(self) -> float | None:
        return self.loss_sum / self.loss_count if self.loss_count else None

    def leaves(self) -> list["QuadNode"]:
        if self.is_leaf:
            return [self]
        out = []
        for child in self.children:
            out.extend(child.leaves())
        return out

    def split(self) -> None:
        """Top-left, bottom-left, top-right, bottom-right at floor midpoints."""
        x0, y0, x1, y1 = self.rect
        xm = x0 + (x1 - x0) // 2
        ym = y0 + (y1 - y0) // 2
        rects = [(x0, y0, xm, ym), (x0, ym, xm, y1), (xm, y0, x1, ym), (xm, ym, x1, y1)]
        self.children = [QuadNode(r, self.depth + 1) for r in rects]

    def can_split(self, min_area: int) -> bool:
        return self.area > min_area and self.width >= 2 and self.height >= 2

    def find_leaf(self, i: int, j: int) -> "QuadNode":
        node = self
        while node.children:
            for child in node.children:
                x0, y0, x1, y1 = child.rect
                if x0 <= i < x1 and y0 <= j < y1:
                    node = child
                    break
        return node

    def to_dict(self) -> dict:
        d = {"rect": list(self.rect), "depth": self.depth, "loss_sum": self.loss_sum,
             "loss_count": self.loss_count, "prev_mean": self.prev_mean}
        if self.children:
            d["children"] = [c.to_dict() for c in self.children]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "QuadNode":
        node = cls(tuple(d["rect"]), d["depth"], [], d["loss_sum"], d["loss_count"],
                   d.get("prev_mean"))
        node.children = [cls.from_dict(c) for c in d.get("children", [])]
        return node


def init_tree(width: int, height: int, min_area: int = MIN_AREA, levels: int = 2) -> QuadNode:
    if width < 4 or height < 4:
        raise ValidationError(f"image too small for a quadtree: {width}x{height}")
    root = QuadNode((0, 0, int(width), int(height)))
    for _ in range(levels):
        for leaf in root.leaves():
            if leaf.can_split(min_area):
                leaf.split()
    return root


def leaf_index_map(tree: QuadNode) -> tuple[np.ndarray, list[QuadNode]]:
    """(H, W) map of leaf indices plus the leaf list it indexes."""
    x0, y0, x1, y1 = tree.rect
    out = np.full((y1 - y0, x1 - x0), -1, dtype=np.int64)
    leaves = tree.leaves()
    for n, leaf in enumerate(leaves):
        a0, b0, a1, b1 = leaf.rect
        out[b0 - y0:b1 - y0, a0 - x0:a1 - x0] = n
    return out, leaves


# ---------------------------------------------------------------- importance


def importance_map(img: np.ndarray) -> np.ndarray:
    """Per-pixel std of luminance over the 3x3 neighborhood (edge-clamped)."""
    lum = np.asarray(img, dtype=np.float64).mean(axis=2)
    pad = np.pad(lum, 1, mode="edge")
    h, w = lum.shape
    stack = np.stack([pad[dy:dy + h, dx:dx + w] for dy in range(3) for dx in range(3)])
    stack = stack - lum  # centered on the pixel so flat neighborhoods give exactly 0
    return np.sqrt(np.mean((stack - stack.mean(axis=0)) ** 2, axis=0))


def pixel_importance(img: np.ndarray, i: int, j: int) -> float:
    h, w = img.shape[:2]
    if not (0 <= i < w and 0 <= j < h):
        raise ValidationError(f"pixel ({i}, {j}) out of bounds")
    lum = np.asarray(img, dtype=np.float64).mean(axis=2)
    vals = [lum[min(max(j + dy, 0), h - 1), min(max(i + dx, 0), w - 1)]
            for dy in (-1, 0, 1) for dx in (-1, 0, 1)]
    vals = np.array(vals) - lum[j, i]
    return float(np.sqrt(np.mean((vals - vals.mean()) ** 2)))


def leaf_probabilities(tree: QuadNode, img: np.ndarray, g: np.ndarray | None = None) -> np.ndarray:
    """Importance divided by its maximum within each leaf; flat leaves get 1."""
    g = importance_map(img) if g is None else g
    if g.shape != (tree.height, tree.width):
        raise ValidationError(f"tree covers {tree.width}x{tree.height}, image is {g.shape[::-1]}")
    prob = np.ones_like(g)
    for leaf in tree.leaves():
        x0, y0, x1, y1 = leaf.rect
        block = g[y0:y1, x0:x1]
        peak = block.max()
        if peak > 0:
            prob[y0:y1, x0:x1] = block / peak
    return prob


# ---------------------------------------------------------------- losses


def record_loss(tree: QuadNode, i: int, j: int, loss: float) -> None:
    leaf = tree.find_leaf(i, j)
    leaf.loss_sum += float(loss)
    leaf.loss_count += 1


def record_losses(tree: QuadNode, ii, jj, losses, index_map=None) -> None:
    """Vectorized ``record_loss``; ``index_map`` from ``leaf_index_map`` if cached."""
    if index_map is None:
        index_map = leaf_index_map(tree)
    lmap, leaves = index_map
    ids = lmap[np.asarray(jj), np.asarray(ii)]
    sums = np.bincount(ids, weights=np.asarray(losses, dtype=np.float64), minlength=len(leaves))
    counts = np.bincount(ids, minlength=len(leaves))
    for leaf, s, c in zip(leaves, sums, counts):
        if c:
            leaf.loss_sum += float(s)
            leaf.loss_count += int(c)


def reset_losses(tree: QuadNode) -> None:
    """Move each leaf's running mean into ``prev_mean`` and clear the accumulators."""
    for leaf in tree.leaves():
        leaf.prev_mean = leaf.mean_loss
        leaf.loss_sum = 0.0
        leaf.loss_count = 0


def subdivide_pass(tree: QuadNode, s_divide: float = S_DIVIDE, min_area: int = MIN_AREA):
    """Split deepest leaves whose mean loss exceeds ``s_divide``; returns split rects.

    Accumulators are reset afterwards.  Leaves that split start with no loss
    history; the others keep their mean as ``prev_mean`` for the next plan.
    """
    leaves = tree.leaves()
    deepest = max(leaf.depth for leaf in leaves)
    split = []
    for leaf in leaves:
        mean = leaf.mean_loss
        if (leaf.depth == deepest and mean is not None and mean > s_divide
                and leaf.can_split(min_area)):
            split.append(leaf.rect)
            leaf.split()
            leaf.loss_sum = 0.0
            leaf.loss_count = 0
    reset_losses(tree)
    return split


# ---------------------------------------------------------------- planning


@dataclass
class EpochPlan:
    pixels: np.ndarray  # (n, 3) int rows of (view, i, j)
    uniform_pixels: np.ndarray  # (u, 3)
    rays_budgeted: int

    def all_pixels(self) -> np.ndarray:
        return np.concatenate([self.pixels, self.uniform_pixels], axis=0)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def leaf_budget(leaf: QuadNode, mu: float, alpha: float, s_sample: float,
                prev_mean: float | None) -> int:
    density = mu
    if prev_mean is not None and prev_mean < s_sample:
        density = alpha * mu
    return min(round_half_up(density * leaf.area), leaf.area)


def weighted_sample(prob: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` distinct indices, each next draw proportional to ``prob``.

    Same law as rejection sampling with uniform proposals accepted with
    probability ``prob`` (without replacement), computed with exponential
    race keys instead of a loop.
    """
    nz = np.flatnonzero(prob > 0)
    n = min(n, nz.size)
    if n <= 0:
        return np.empty(0, dtype=np.int64)
    keys = rng.exponential(size=nz.size) / prob[nz]
    order = np.argpartition(keys, n - 1)[:n] if n < nz.size else np.arange(nz.size)
    order = order[np.argsort(keys[order], kind="stable")]
    return nz[order]


def plan_epoch(trees, images, mu: float = 1.0, alpha: float = ALPHA, s_sample: float = S_SAMPLE,
               rng: np.random.Generator | None = None, pattern_size: int = 4,
               prev_losses=None, probs=None) -> EpochPlan:
    """Pick supersampled pixels for one epoch across all views.

    ``prev_losses`` optionally maps view index -> {leaf rect: mean loss};
    by default each leaf's ``prev_mean`` is used.  ``probs`` caches the
    per-view probability maps (recomputed from ``images`` when absent).
    """
    if mu <= 0 or not 0 < alpha <= 1:
        raise ValidationError(f"need mu > 0 and 0 < alpha <= 1, got {mu}, {alpha}")
    rng = np.random.default_rng(0) if rng is None else rng
    picked = []
    for v, (tree, img) in enumerate(zip(trees, images)):
        prob = probs[v] if probs is not None else leaf_probabilities(tree, img)
        for leaf in tree.leaves():
            prev = leaf.prev_mean
            if prev_losses is not None:
                prev = prev_losses.get(v, {}).get(tuple(leaf.rect))
            n = leaf_budget(leaf, mu, alpha, s_sample, prev)
            if n == 0:
                continue
            x0, y0, x1, y1 = leaf.rect
            flat = weighted_sample(prob[y0:y1, x0:x1].ravel(), n, rng)
            jj, ii = np.divmod(flat, x1 - x0)
            picked.append(np.stack([np.full(flat.size, v), ii + x0, jj + y0], axis=1))
    pixels = np.concatenate(picked) if picked else np.empty((0, 3), dtype=np.int64)
    n_uniform = round_half_up(len(pixels) * UNIFORM_FRACTION / (1.0 - UNIFORM_FRACTION))
    h, w = images[0].shape[:2]
    total = len(images) * h * w
    flat = rng.choice(total, size=min(n_uniform, total), replace=False)
    v, rest = np.divmod(flat, h * w)
    jj, ii = np.divmod(rest, w)
    uniform = np.stack([v, ii, jj], axis=1)
    rays = (len(pixels) + len(uniform)) * pattern_size
    return EpochPlan(pixels.astype(np.int64), uniform.astype(np.int64), int(rays))


# ---------------------------------------------------------------- output


def render_tree_overlay(tree: QuadNode, img: np.ndarray, color=OVERLAY_COLOR) -> np.ndarray:
    """Copy of ``img`` with interior leaf boundaries painted in ``color``."""
    out = np.array(img, dtype=np.float64, copy=True)
    rx0, ry0, _, _ = tree.rect
    for leaf in tree.leaves():
        x0, y0, x1, y1 = leaf.rect
        if x0 > rx0:
            out[y0 - ry0:y1 - ry0, x0 - rx0] = color
        if y0 > ry0:
            out[y0 - ry0, x0 - rx0:x1 - rx0] = color
    return out


def save_trees(trees, path) -> None:
    with open(path, "w") as fh:
        json.dump({"trees": [t.to_dict() for t in trees]}, fh)


def load_trees(path) -> list[QuadNode]:
    with open(path) as fh:
        return [QuadNode.from_dict(d) for d in json.load(fh)["trees"]]
