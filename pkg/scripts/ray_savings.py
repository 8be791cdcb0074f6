"""Fine-stage rays and test PSNR: quadtree-planned versus full supersampling.

    python3 scripts/ray_savings.py --seeds 0,1,2 --mu 1.0
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from _common import add_train_args, score, seeds, toy_scene, train_config
from degnerf.field.train import GuidanceConfig, QuadtreeConfig, train


def fine_rays(log) -> int:
    return sum(e["rays_used"] for e in log.entries if e["stage"] == "fine")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    add_train_args(ap)
    ap.add_argument("--mu", type=float, default=1.0)
    ap.add_argument("--alpha", type=float, default=0.1)
    ap.add_argument("--json", help="write the rows here")
    args = ap.parse_args()
    train_set, test_set = toy_scene(args.toy_cache)
    rows = []
    for seed in seeds(args):
        cfg = train_config(args, seed)
        for name, sampler in (("full", None), ("quadtree", QuadtreeConfig(mu=args.mu,
                                                                          alpha=args.alpha))):
            t0 = time.perf_counter()
            f, log, _ = train(train_set, cfg, GuidanceConfig(), sampler)
            row = {"seed": seed, "run": name, "fine_rays": fine_rays(log),
                   "psnr": score(f, test_set, cfg.n_samples),
                   "seconds": time.perf_counter() - t0}
            rows.append(row)
            print(f"seed {seed} {name:8s} rays {row['fine_rays']:>9d} "
                  f"PSNR {row['psnr']:.3f} {row['seconds']:.0f}s", flush=True)
    full = [r for r in rows if r["run"] == "full"]
    quad = [r for r in rows if r["run"] == "quadtree"]
    ratio = np.mean([q["fine_rays"] / f["fine_rays"] for q, f in zip(quad, full)])
    gap = np.mean([r["psnr"] for r in quad]) - np.mean([r["psnr"] for r in full])
    print(f"quadtree uses {100 * ratio:.1f}% of the fine rays, PSNR gap {gap:+.3f} dB")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
