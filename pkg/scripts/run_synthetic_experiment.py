#!/usr/bin/env python3
"""Desk-scale experiment: tone dataset -> log-mel features -> 3-fold CV.

Everything runs through the CLI, so this doubles as a smoke test of the
whole pipeline. No external assets needed; finishes in a few minutes.

    python scripts/run_synthetic_experiment.py --workdir runs/synthetic
"""

import argparse
import sys
from pathlib import Path

from genreprobe.cli import main as genreprobe


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", default="runs/synthetic")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--max-epochs", type=int, default=200)
    args = ap.parse_args()

    work = Path(args.workdir)
    data = work / "data"
    features = work / "features"
    out = work / "eval"

    steps = [
        ["synth", "--out", str(data), "--seed", str(args.seed)],
        ["extract", "--manifest", str(data / "manifest.csv"),
         "--backend", "logmel", "--features", str(features)],
        ["evaluate", "--manifest", str(data / "manifest.csv"),
         "--features", str(features), "--model-id", "logmel64",
         "--layers", "0", "--out", str(out),
         "--folds-seed", str(args.seed), "--seed", str(args.seed),
         "--max-epochs", str(args.max_epochs)],
    ]
    for step in steps:
        print(f"+ genreprobe {' '.join(step)}", file=sys.stderr)
        code = genreprobe(step)
        if code != 0:
            return code
    print(f"\nreports in {out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
