"""Shared helpers for the experiment scripts: toy scene caching and scoring."""

from __future__ import annotations

from pathlib import Path

from degnerf.field.train import TrainConfig
from degnerf.metrics import evaluate
from degnerf.scene_io import load_scene
from degnerf.toy import ToyConfig, write_toy


def toy_scene(cache: str | Path):
    """Train and test SceneSets of the default toy scene, generated once into ``cache``."""
    cache = Path(cache)
    train_m = cache / "transforms_train.json"
    test_m = cache / "transforms_test.json"
    if not train_m.exists():
        print(f"generating toy scene into {cache} (about a minute)")
        write_toy(cache, ToyConfig())
    return load_scene(train_m), load_scene(test_m)


def train_config(args, seed: int) -> TrainConfig:
    return TrainConfig(coarse_epochs=args.coarse, fine_epochs=args.fine, n_samples=args.samples,
                       batch_rays=args.batch, seed=seed)


def add_train_args(ap) -> None:
    ap.add_argument("--toy-cache", default="out/toy_cache")
    ap.add_argument("--seeds", default="0,1,2", help="comma-separated seeds")
    ap.add_argument("--coarse", type=int, default=1)
    ap.add_argument("--fine", type=int, default=2)
    ap.add_argument("--samples", type=int, default=128)
    ap.add_argument("--batch", type=int, default=8192)


def seeds(args) -> list[int]:
    return [int(s) for s in args.seeds.split(",") if s]


def score(field_, test, n_samples) -> float:
    return evaluate(field_, test, n_samples).mean_psnr
