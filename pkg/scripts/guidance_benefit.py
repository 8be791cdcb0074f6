"""Single-ray versus supersampled fine stage on the degraded toy scene.

Scores are on the clean test views.  ``--target`` trains on views degraded to
a smaller size (intrinsics rescaled), where each training pixel covers more
of the scene.

    python3 scripts/guidance_benefit.py --seeds 0,1,2 --s 2 --sigma 0.3
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from _common import add_train_args, score, seeds, toy_scene, train_config
from degnerf.degradation.pipeline import degrade_scene
from degnerf.field.train import GuidanceConfig, train


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    add_train_args(ap)
    ap.add_argument("--s", type=int, default=2)
    ap.add_argument("--sigma", type=float, default=0.3)
    ap.add_argument("--target", type=int, default=None, help="square training size")
    ap.add_argument("--clean", action="store_true", help="skip the degradation")
    args = ap.parse_args()
    train_set, test_set = toy_scene(args.toy_cache)
    deltas = []
    for seed in seeds(args):
        scene = train_set
        if not args.clean:
            target = (args.target, args.target) if args.target else None
            scene, _ = degrade_scene(train_set, seed, target)
        cfg = train_config(args, seed)
        out = {}
        for name, g in (("single", None), ("guided", GuidanceConfig(s=args.s, sigma=args.sigma))):
            t0 = time.perf_counter()
            f, _, _ = train(scene, cfg, g)
            out[name] = score(f, test_set, cfg.n_samples)
            print(f"seed {seed} {name:6s} PSNR {out[name]:.3f} {time.perf_counter() - t0:.0f}s",
                  flush=True)
        deltas.append(out["guided"] - out["single"])
        print(f"seed {seed} delta {deltas[-1]:+.3f} dB", flush=True)
    print(f"mean delta {np.mean(deltas):+.3f} dB over {len(deltas)} seeds")


if __name__ == "__main__":
    main()
