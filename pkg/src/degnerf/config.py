"""Run configuration: JSON file merged over defaults, command-line flags on top."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .field.train import GuidanceConfig, QuadtreeConfig, TrainConfig
from .restore import DEFAULT_K
from .scene_io import ValidationError

# Where each default comes from; written next to the values in dumped configs.
SOURCES = {
    "train.adam_beta1": "published training recipe",
    "train.adam_beta2": "published training recipe",
    "train.final_lr_factor": "published training recipe (decay to one tenth)",
    "train.batch_rays": "published training recipe",
    "train.n_samples": "two samples per voxel diagonal at 64^3",
    "guidance.s": "artifact default, left open by the method",
    "guidance.sigma": "artifact default, left open by the method",
    "quadtree.alpha": "published quadtree settings",
    "quadtree.s_divide": "published quadtree settings",
    "quadtree.min_area": "published quadtree settings",
    "quadtree.s_sample": "artifact default, half of s_divide",
    "restore.k": "matches the three-frame restoration tuples",
}


@dataclass
class RestoreConfig:
    strategy: str = "identity"
    k: int = DEFAULT_K


@dataclass
class RunConfig:
    scene: str = "toy"
    test_scene: str | None = None
    out: str = "out"
    seed: int = 0
    degrade: bool = True
    target_width: int | None = None
    target_height: int | None = None
    restore: RestoreConfig = field(default_factory=RestoreConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    guidance_enabled: bool = True
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    quadtree_enabled: bool = True
    quadtree: QuadtreeConfig = field(default_factory=QuadtreeConfig)
    eval_samples: int | None = None  # defaults to train.n_samples
    toy: dict = field(default_factory=dict)  # ToyConfig overrides for scene "toy"
    deterministic: bool = False

    def validate(self) -> None:
        if self.quadtree_enabled and not self.guidance_enabled:
            raise ValidationError("quadtree planning requires guidance (--guidance on)")
        if self.restore.k < 0:
            raise ValidationError("restore.k must be non-negative")

    def to_dict(self, comments: bool = True) -> dict:
        d = asdict(self)
        if comments:
            d["_sources"] = dict(SOURCES)
        return d


_NESTED = {"restore": RestoreConfig, "train": TrainConfig, "guidance": GuidanceConfig,
           "quadtree": QuadtreeConfig}


def _merge(dc_type, base, data: dict, where: str):
    known = {f.name for f in fields(dc_type)}
    values = asdict(base)
    for key, val in data.items():
        if key.startswith("_"):
            continue
        if key not in known:
            raise ValidationError(f"unknown config key {where}{key}")
        values[key] = val
    return dc_type(**values)


def from_dict(data: dict, base: RunConfig | None = None) -> RunConfig:
    base = base or RunConfig()
    top = {}
    nested = {}
    for key, val in data.items():
        if key in _NESTED:
            if not isinstance(val, dict):
                raise ValidationError(f"config key {key} must be an object")
            nested[key] = _merge(_NESTED[key], getattr(base, key), val, f"{key}.")
        else:
            top[key] = val
    cfg = _merge(RunConfig, base, top, "")
    for key, typ in _NESTED.items():
        setattr(cfg, key, nested.get(key, typ(**asdict(getattr(base, key)))))
    return cfg


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the JSON file at ``path``, then ``overrides`` (dotted keys allowed)."""
    cfg = RunConfig()
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"config not found: {p}")
        cfg = from_dict(json.loads(p.read_text()), cfg)
    if overrides:
        tree: dict = {}
        for key, val in overrides.items():
            if val is None:
                continue
            head, _, tail = key.partition(".")
            if tail:
                tree.setdefault(head, {})[tail] = val
            else:
                tree[head] = val
        cfg = from_dict(tree, cfg)
    return cfg


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2))
