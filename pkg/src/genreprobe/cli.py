"""Command-line entry point: extract, evaluate, predict, synth.

Diagnostics go to stderr, data to stdout; exit code 0 means no errors.
Every command resolves its settings as CLI flags > config file > defaults
(a config file is key=value lines, applied as if its entries were typed
before the actual flags) and writes the resolved values next to its
outputs. The environment variable GENREPROBE_CACHE supplies the default
feature root.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import aggregation, encoders, evaluation, feature_store, mlp_head
from .audio_io import decode_wav, resample
from .dataset import (
    GTZAN_GENRES,
    DatasetManifest,
    make_folds,
    read_manifest_csv,
    scan_dataset,
    write_manifest_csv,
)
from .errors import GenreProbeError, InputError
from .framing import SAMPLE_RATE_HZ
from .synthetic import SyntheticSpec, generate


def _feature_root_default() -> str:
    return os.environ.get("GENREPROBE_CACHE", "features")


def _parse_layers(text: str, layer_count: int | None = None) -> list[int]:
    if text == "all":
        if layer_count is None:
            raise InputError("--layers all needs a model or existing cache")
        return list(range(layer_count + 1))
    try:
        layers = sorted({int(part) for part in text.split(",") if part != ""})
    except ValueError:
        raise InputError(f"cannot parse layer list {text!r}") from None
    if not layers:
        raise InputError("empty layer list")
    return layers


def _parse_genres(text: str | None) -> tuple[str, ...] | None:
    if text is None or text == "auto":
        return None
    return tuple(g for g in text.split(",") if g)


def _load_manifest(args) -> DatasetManifest:
    genres = _parse_genres(args.genres)
    if args.manifest:
        manifest, _ = read_manifest_csv(args.manifest, genres=genres)
        return manifest
    if args.dataset:
        root = Path(args.dataset)
        if genres is None and args.genres == "auto":
            genres = tuple(sorted(p.name for p in root.iterdir() if p.is_dir()))
        return scan_dataset(root, genres=genres, strict=args.strict_genres)
    raise InputError("need --dataset or --manifest")


def _write_resolved_config(args, path: Path) -> None:
    skip = {"func", "config"}
    lines = []
    for key in sorted(vars(args)):
        if key in skip:
            continue
        value = getattr(args, key)
        lines.append(f"{key}={'' if value is None else value}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _load_config_tokens(path: str) -> list[str]:
    tokens: list[str] = []
    for raw_line in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"config line without '=': {raw_line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        flag = "--" + key.replace("_", "-")
        if value.lower() in ("true", "false"):
            tokens.append(flag if value.lower() == "true" else
                          flag.replace("--", "--no-", 1))
        else:
            tokens.extend([flag, value])
    return tokens


# ---------------------------------------------------------------- extract

def _extract_one(entry, args, model_id: str, layers: list[int],
                 handle) -> tuple[int, int]:
    """Returns (cached, extracted) file counts for one clip."""
    missing = [k for k in layers
               if not feature_store.feature_path(args.features, model_id, k,
                                                 entry.clip_id).is_file()]
    cached = len(layers) - len(missing)
    if not missing:
        return cached, 0

    clip = resample(decode_wav(entry.path, clip_id=entry.clip_id),
                    SAMPLE_RATE_HZ)
    if args.backend == "logmel":
        matrices = [encoders.reference_logmel(clip, n_mels=args.n_mels)]
    else:
        matrices = encoders.extract_layers(handle, clip, missing)
    for matrix in matrices:
        feature_store.write_features(
            matrix,
            feature_store.feature_path(args.features, model_id,
                                       matrix.layer_index, entry.clip_id),
        )
    return cached, len(matrices)


def cmd_extract(args) -> int:
    manifest = _load_manifest(args)
    handle = None
    if args.backend == "model":
        if not args.model:
            raise InputError("--backend model needs --model FILE")
        handle = encoders.load_encoder(args.model)
        model_id = handle.model_id
        layers = _parse_layers(args.layers, handle.layer_count)
    elif args.backend == "logmel":
        model_id = f"logmel{args.n_mels}"
        layers = [0]
    elif args.backend == "precomputed":
        if not args.model_id:
            raise InputError("--backend precomputed needs --model-id")
        model_id = args.model_id
        layers = _parse_layers(args.layers)
        missing = [
            entry.clip_id for entry in manifest.entries for k in layers
            if not feature_store.feature_path(args.features, model_id, k,
                                              entry.clip_id).is_file()
        ]
        if missing:
            raise InputError(
                f"precomputed features missing for {len(missing)} clip/layer "
                f"pairs, first: {missing[0]!r}"
            )
        print(f"{len(manifest.entries) * len(layers)} cached, 0 extracted")
        return 0
    else:
        raise InputError(f"unknown backend {args.backend!r}")

    cached = extracted = 0
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_extract_one, e, args, model_id, layers,
                                   handle) for e in manifest.entries]
            for entry, fut in zip(manifest.entries, futures):
                c, x = fut.result()
                cached += c
                extracted += x
                print(f"  {entry.clip_id}: {c} cached, {x} extracted",
                      file=sys.stderr)
    else:
        for entry in manifest.entries:
            c, x = _extract_one(entry, args, model_id, layers, handle)
            cached += c
            extracted += x
            print(f"  {entry.clip_id}: {c} cached, {x} extracted",
                  file=sys.stderr)

    _write_resolved_config(
        args, Path(args.features) / f"extract_{model_id}.config.txt")
    print(f"{cached} cached, {extracted} extracted")
    return 0


# --------------------------------------------------------------- evaluate

def _discover_layers(root: Path, model_id: str) -> list[int]:
    model_dir = root / model_id
    if not model_dir.is_dir():
        raise InputError(f"no cached features under {model_dir}")
    layers = sorted(
        int(p.name[5:]) for p in model_dir.iterdir()
        if p.is_dir() and p.name.startswith("layer") and p.name[5:].isdigit()
    )
    if not layers:
        raise InputError(f"no layer directories under {model_dir}")
    return layers


def cmd_evaluate(args) -> int:
    manifest = _load_manifest(args)
    assignment = make_folds(manifest, args.folds_seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    root = Path(args.features)
    if args.layers == "all":
        layers = _discover_layers(root, args.model_id)
    else:
        layers = _parse_layers(args.layers)
    sources = [feature_store.StoreFeatureSource(root, args.model_id, k)
               for k in layers]

    config = mlp_head.TrainConfig(
        learning_rate=args.learning_rate, batch_size=args.batch_size,
        max_epochs=args.max_epochs, dropout_rate=args.dropout_rate,
        patience=args.patience, seed=args.seed,
        standardize=not args.no_standardize,
    )

    reports, best = evaluation.layer_sweep(
        sources, manifest, assignment, config,
        train_two_sets=args.train_two_sets)

    write_manifest_csv(manifest, out / "folds.csv", assignment)
    markdown = evaluation.render_report(reports, "markdown")
    if len(reports) > 1:
        markdown += "\nBest layer per metric: " + ", ".join(
            f"{metric}={layer}" for metric, layer in sorted(best.items())
        ) + "\n"
    (out / "report.md").write_text(markdown, encoding="utf-8")
    (out / "report.csv").write_text(evaluation.render_report(reports, "csv"),
                                    encoding="utf-8")
    for report in reports:
        for fold_result in report.fold_results:
            mlp_head.save_head(
                fold_result.head,
                out / f"head_layer{report.layer_index}_fold{fold_result.fold}.gph",
            )
            for rule, matrix in fold_result.confusion.items():
                name = (f"confusion_layer{report.layer_index}"
                        f"_fold{fold_result.fold}_{rule.value}.csv")
                (out / name).write_text(
                    evaluation.render_confusion_csv(matrix, manifest.genres),
                    encoding="utf-8",
                )
    _write_resolved_config(args, out / "evaluate.config.txt")

    for line in markdown.splitlines():
        print(line)
    return 0


# ---------------------------------------------------------------- predict

def _genre_names(args, n_classes: int) -> tuple[str, ...]:
    explicit = _parse_genres(args.genres)
    if explicit is not None:
        if len(explicit) != n_classes:
            raise InputError(
                f"--genres lists {len(explicit)} names, head has {n_classes} "
                "classes"
            )
        return explicit
    if n_classes == len(GTZAN_GENRES):
        return GTZAN_GENRES
    return tuple(f"class{i}" for i in range(n_classes))


def cmd_predict(args) -> int:
    head = mlp_head.load_head(args.head)
    genres = _genre_names(args, head.class_count)
    rule = aggregation.AggregationRule(args.rule)

    clip = resample(decode_wav(args.audio), SAMPLE_RATE_HZ)
    if args.backend == "model":
        if not args.model:
            raise InputError("--backend model needs --model FILE")
        handle = encoders.load_encoder(args.model)
        (matrix,) = encoders.extract_layers(handle, clip, [args.layer])
    else:
        matrix = encoders.reference_logmel(clip, n_mels=args.n_mels)
    if matrix.dim != head.input_dim:
        raise InputError(
            f"features are {matrix.dim}-dimensional but the head expects "
            f"{head.input_dim}"
        )

    probs = mlp_head.predict_segments(head, matrix)

    def line_for(block: np.ndarray) -> str:
        pred = aggregation.aggregate(block, rule)
        scores = " ".join(f"{genres[i]}:{pred.scores[i]:.6f}"
                          for i in range(len(genres)))
        return f"{genres[pred.predicted]}\t{scores}"

    if args.stream:
        for end in range(args.every, len(probs) + 1, args.every):
            start = 0 if args.window is None else max(0, end - args.window)
            print(f"segment {end}\t{line_for(probs[start:end])}")
    else:
        print(line_for(probs))
    return 0


# ------------------------------------------------------------------ synth

def cmd_synth(args) -> int:
    spec = SyntheticSpec(
        n_classes=args.classes, clips_per_class=args.clips_per_class,
        clip_seconds=args.seconds, snr_db=args.snr_db, seed=args.seed,
    )
    manifest = generate(spec, args.out)
    _write_resolved_config(args, Path(args.out) / "synth.config.txt")
    print(f"{len(manifest.entries)} clips in {len(manifest.genres)} classes "
          f"under {args.out}")
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="genreprobe",
        description="Segment-level genre probing of frozen audio encoders",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="key=value file, lowest precedence")
        p.add_argument("--dataset", help="dataset root (genre subdirectories)")
        p.add_argument("--manifest", help="manifest.csv instead of a root")
        p.add_argument("--genres",
                       help="comma-separated label order, or 'auto'")
        p.add_argument("--strict-genres", action=argparse.BooleanOptionalAction,
                       default=False, help="error on unknown genre directories")

    p = sub.add_parser("extract", help="populate the feature cache")
    add_common(p)
    p.add_argument("--backend", default="logmel",
                   choices=["logmel", "model", "precomputed"])
    p.add_argument("--model", help="exported ONNX encoder")
    p.add_argument("--model-id", help="cache key for --backend precomputed")
    p.add_argument("--layers", default="all", help="e.g. 5,11 or 'all'")
    p.add_argument("--n-mels", type=int, default=64)
    p.add_argument("--features", default=_feature_root_default(),
                   help="feature cache root")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("evaluate", help="3-fold cross-validation and reports")
    add_common(p)
    p.add_argument("--features", default=_feature_root_default())
    p.add_argument("--model-id", default="logmel64")
    p.add_argument("--layers", default="all")
    p.add_argument("--out", default="runs/latest")
    p.add_argument("--folds-seed", type=int, default=0)
    p.add_argument("--seed", type=int, default=0, help="training seed")
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=1500)
    p.add_argument("--max-epochs", type=int, default=200)
    p.add_argument("--dropout-rate", type=float, default=0.4)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--no-standardize", action=argparse.BooleanOptionalAction,
                   default=False)
    p.add_argument("--train-two-sets", action=argparse.BooleanOptionalAction,
                   default=False,
                   help="train on two sets with a held-out 10% val slice")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="classify one audio file")
    p.add_argument("--config")
    p.add_argument("--audio", required=True)
    p.add_argument("--head", required=True, help="trained .gph file")
    p.add_argument("--rule", default="sum",
                   choices=[r.value for r in aggregation.ALL_RULES])
    p.add_argument("--backend", default="logmel", choices=["logmel", "model"])
    p.add_argument("--model")
    p.add_argument("--layer", type=int, default=0)
    p.add_argument("--n-mels", type=int, default=64)
    p.add_argument("--genres")
    p.add_argument("--stream", action=argparse.BooleanOptionalAction,
                   default=False, help="rolling predictions")
    p.add_argument("--every", type=int, default=50,
                   help="segments between rolling predictions")
    p.add_argument("--window", type=int,
                   help="sliding window size in segments; default cumulative")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("synth", help="generate the synthetic tone dataset")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--clips-per-class", type=int, default=30)
    p.add_argument("--seconds", type=float, default=3.0)
    p.add_argument("--snr-db", type=float, default=20.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    return parser


def _splice_config(argv: list[str]) -> list[str]:
    """Expand --config FILE into its flags, ahead of the explicit ones."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise InputError("--config needs a file path")
    tokens = _load_config_tokens(argv[i + 1])
    head, tail = argv[:i], argv[i + 2 :]
    # keep the subcommand first
    return head[:1] + tokens + head[1:] + tail


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _splice_config(argv)
        args = build_parser().parse_args(argv)
        return args.func(args)
    except GenreProbeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
