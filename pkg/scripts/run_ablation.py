"""Guidance x quadtree grid on the toy scene through the command-line pipeline.

    python3 scripts/run_ablation.py --out out/ablation --seed 0
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from degnerf import cli


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out/ablation")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--config", help="JSON run configuration")
    args = ap.parse_args()
    argv = ["ablate", "--scene", "toy", "--seed", str(args.seed), "--out", args.out]
    if args.config:
        argv += ["--config", args.config]
    code = cli.main(argv)
    if code:
        return code
    table = json.loads((Path(args.out) / "ablation.json").read_text())
    print(f"{'guidance':>8} {'quadtree':>8} {'PSNR':>7} {'SSIM':>6} {'rays':>10} {'sec':>6}")
    for r in table["rows"]:
        print(f"{r['guidance']!s:>8} {r['quadtree']!s:>8} {r['psnr']:7.3f} {r['ssim']:6.4f} "
              f"{r['rays']:>10d} {r['seconds']:6.0f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
