"""The full protocol: per-fold training, accuracies, sweeps, report tables.

Fold f trains a fresh head (seed = config.seed + f) on the fold's train
segments, early-stops on its validation segments, then scores the held-out
test clips two ways: segment accuracy (micro-averaged over all test
segments) and clip accuracy under each aggregation rule. Cross-validation
reports mean and sample (n-1) standard deviation over the three folds, in
percent, plus a per-fold, per-rule confusion matrix of clip decisions.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Protocol, Sequence

import numpy as np

from .aggregation import ALL_RULES, AggregationRule, aggregate
from .dataset import DatasetManifest, FoldAssignment, two_set_split
from .encoders import FeatureMatrix
from .errors import InputError
from .mlp_head import TrainConfig, TrainedHead, TrainingLog, predict_segments, train_head


class FeatureSource(Protocol):
    model_id: str
    layer_index: int

    def load(self, clip_id: str) -> FeatureMatrix: ...


@dataclass
class FoldResult:
    fold: int
    segment_accuracy: float
    clip_accuracy: dict[AggregationRule, float]
    confusion: dict[AggregationRule, np.ndarray]
    n_test_clips: int
    n_test_segments: int
    head: TrainedHead
    train_log: TrainingLog


@dataclass
class EvaluationReport:
    model_id: str
    layer_index: int
    fold_results: tuple[FoldResult, ...]

    def segment_stats(self) -> tuple[float, float]:
        return _mean_std([f.segment_accuracy for f in self.fold_results])

    def clip_stats(self, rule: AggregationRule) -> tuple[float, float]:
        return _mean_std([f.clip_accuracy[rule] for f in self.fold_results])


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return float(arr.mean()), std


def _stack_segments(source: FeatureSource, manifest: DatasetManifest,
                    clip_ids: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    blocks, labels = [], []
    for cid in clip_ids:
        matrix = source.load(cid)
        if matrix.frames == 0:
            continue
        blocks.append(matrix.values)
        labels.append(np.full(matrix.frames,
                              manifest.label_index(manifest.entry(cid).genre),
                              dtype=np.int64))
    if not blocks:
        raise InputError("no segments found for the requested clips")
    return np.concatenate(blocks, axis=0), np.concatenate(labels)


@dataclass
class TestScores:
    segment_accuracy: float
    clip_accuracy: dict[AggregationRule, float]
    confusion: dict[AggregationRule, np.ndarray]
    n_test_clips: int
    n_test_segments: int


def score_test_clips(head: TrainedHead, source: FeatureSource,
                     manifest: DatasetManifest,
                     test_ids: Sequence[str]) -> TestScores:
    """Segment and per-rule clip accuracy of one head on held-out clips."""
    if not test_ids:
        raise InputError("empty test set")
    n_classes = len(manifest.genres)
    correct_segments = 0
    total_segments = 0
    clip_correct = {rule: 0 for rule in ALL_RULES}
    confusion = {rule: np.zeros((n_classes, n_classes), dtype=np.int64)
                 for rule in ALL_RULES}
    for cid in test_ids:
        label = manifest.label_index(manifest.entry(cid).genre)
        probs = predict_segments(head, source.load(cid))
        if len(probs) == 0:
            continue
        correct_segments += int((probs.argmax(axis=1) == label).sum())
        total_segments += len(probs)
        for rule in ALL_RULES:
            decision = aggregate(probs, rule, clip_id=cid).predicted
            confusion[rule][label, decision] += 1
            if decision == label:
                clip_correct[rule] += 1
    n_test = len(test_ids)
    return TestScores(
        segment_accuracy=100.0 * correct_segments / max(total_segments, 1),
        clip_accuracy={r: 100.0 * clip_correct[r] / n_test for r in ALL_RULES},
        confusion=confusion,
        n_test_clips=n_test,
        n_test_segments=total_segments,
    )


def evaluate_fold(source: FeatureSource, manifest: DatasetManifest,
                  assignment: FoldAssignment, fold: int, config: TrainConfig,
                  train_two_sets: bool = False) -> FoldResult:
    """Train on this fold's train role, early-stop on val, score on test."""
    if train_two_sets:
        train_ids, val_ids, test_ids = two_set_split(assignment, fold)
    else:
        train_ids, val_ids, test_ids = assignment.role_sets(fold)
    if not test_ids:
        raise InputError(f"fold {fold} has an empty test set")

    x_train, y_train = _stack_segments(source, manifest, train_ids)
    x_val, y_val = _stack_segments(source, manifest, val_ids)
    fold_config = replace(config, seed=config.seed + fold)
    head, log = train_head(x_train, y_train, x_val, y_val, fold_config,
                           n_classes=len(manifest.genres))

    scores = score_test_clips(head, source, manifest, test_ids)
    return FoldResult(
        fold=fold,
        segment_accuracy=scores.segment_accuracy,
        clip_accuracy=scores.clip_accuracy,
        confusion=scores.confusion,
        n_test_clips=scores.n_test_clips,
        n_test_segments=scores.n_test_segments,
        head=head,
        train_log=log,
    )


def cross_validate(source: FeatureSource, manifest: DatasetManifest,
                   assignment: FoldAssignment, config: TrainConfig,
                   train_two_sets: bool = False) -> EvaluationReport:
    results = tuple(
        evaluate_fold(source, manifest, assignment, fold, config,
                      train_two_sets)
        for fold in range(3)
    )
    return EvaluationReport(model_id=source.model_id,
                            layer_index=source.layer_index,
                            fold_results=results)


def layer_sweep(sources: Sequence[FeatureSource], manifest: DatasetManifest,
                assignment: FoldAssignment, config: TrainConfig,
                train_two_sets: bool = False,
                ) -> tuple[list[EvaluationReport], dict[str, int]]:
    """One report per layer source, plus the best layer for each metric."""
    if not sources:
        raise InputError("layer sweep needs at least one layer")
    reports = [cross_validate(src, manifest, assignment, config,
                              train_two_sets) for src in sources]
    best = best_layers(reports)
    return reports, best


def best_layers(reports: Sequence[EvaluationReport]) -> dict[str, int]:
    best: dict[str, int] = {}
    seg_means = [r.segment_stats()[0] for r in reports]
    best["segments"] = reports[int(np.argmax(seg_means))].layer_index
    for rule in ALL_RULES:
        means = [r.clip_stats(rule)[0] for r in reports]
        best[rule.value] = reports[int(np.argmax(means))].layer_index
    return best


def _cell(mean: float, std: float) -> str:
    return f"{mean:.3f}±{std:.3f}"


def render_report(reports: Sequence[EvaluationReport],
                  fmt: str = "markdown") -> str:
    """Deterministic result table; accuracies in percent, 3 decimals."""
    if not reports:
        raise InputError("nothing to render")
    if fmt == "markdown":
        lines = [
            "| Model | Layer | Segments | " +
            " | ".join(f"Aggregation({r.value})" for r in ALL_RULES) + " |",
            "|---|---|---|" + "---|" * len(ALL_RULES),
        ]
        for rep in reports:
            seg = _cell(*rep.segment_stats())
            cells = [_cell(*rep.clip_stats(rule)) for rule in ALL_RULES]
            lines.append(
                f"| {rep.model_id} | {rep.layer_index} | {seg} | " +
                " | ".join(cells) + " |"
            )
        n_folds = len(reports[0].fold_results)
        lines.append("")
        lines.append(
            f"Mean and sample (n-1) standard deviation over {n_folds} folds, "
            "in percent. Segment accuracy is micro-averaged over all test "
            "segments."
        )
        return "\n".join(lines) + "\n"
    if fmt == "csv":
        lines = ["model,layer,rule,segment_mean,segment_std,clip_mean,clip_std"]
        for rep in reports:
            seg_mean, seg_std = rep.segment_stats()
            for rule in ALL_RULES:
                clip_mean, clip_std = rep.clip_stats(rule)
                lines.append(
                    f"{rep.model_id},{rep.layer_index},{rule.value},"
                    f"{seg_mean:.3f},{seg_std:.3f},"
                    f"{clip_mean:.3f},{clip_std:.3f}"
                )
        return "\n".join(lines) + "\n"
    raise InputError(f"unknown report format {fmt!r}")


def render_confusion_csv(matrix: np.ndarray, genres: Sequence[str]) -> str:
    """One clip-decision confusion matrix; rows are true genres."""
    lines = ["true\\predicted," + ",".join(genres)]
    for i, genre in enumerate(genres):
        lines.append(genre + "," + ",".join(str(int(v)) for v in matrix[i]))
    return "\n".join(lines) + "\n"
