#!/usr/bin/env python3
"""Full-corpus layer sweep: GTzan + an exported encoder, the way the paper
ran it (3-fold CV, segment and aggregated accuracy per layer).

Needs external assets: the GTzan directory (one subdirectory per genre) and
an ONNX encoder export that emits all hidden states (see the export tool
under export_tool/). Extraction dominates runtime; features are cached under
--features, so reruns and further sweeps are cheap.

    python scripts/gtzan_layer_sweep.py --gtzan ~/data/gtzan \
        --model wavlm-large.onnx --layers 6,12,18,24 --out runs/wavlm
"""

import argparse
import sys
from pathlib import Path

from genreprobe.cli import main as genreprobe


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--gtzan", required=True, help="GTzan root directory")
    ap.add_argument("--model", required=True, help="ONNX encoder export")
    ap.add_argument("--layers", default="6,12,18,24",
                    help="layers to sweep, or 'all'")
    ap.add_argument("--features", default="features")
    ap.add_argument("--out", default="runs/gtzan")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    model_id = Path(args.model).stem
    steps = [
        ["extract", "--dataset", args.gtzan, "--backend", "model",
         "--model", args.model, "--layers", args.layers,
         "--features", args.features, "--jobs", str(args.jobs)],
        ["evaluate", "--dataset", args.gtzan, "--features", args.features,
         "--model-id", model_id, "--layers", args.layers,
         "--out", args.out, "--folds-seed", str(args.seed),
         "--seed", str(args.seed)],
    ]
    for step in steps:
        print(f"+ genreprobe {' '.join(step)}", file=sys.stderr)
        code = genreprobe(step)
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
