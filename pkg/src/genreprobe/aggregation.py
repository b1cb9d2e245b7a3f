"""Late fusion of per-segment class distributions into one clip decision.

Four rules:

* MAJORITY: each segment votes for its argmax class.
* SUM: average the segment probabilities.
* PRODUCT: multiply them; computed in the log domain with a 1e-12 floor so a
  30 s clip (1499 segments) cannot underflow. The argmax matches the naive
  product whenever the naive product is computable.
* WEIGHTED: like MAJORITY, but each vote weighs max(p), the segment's
  confidence.

Vote ties (MAJORITY and WEIGHTED) break toward the class with the larger
probability mass summed over all segments, then the lowest index. SUM and
PRODUCT scores tie essentially never; argmax takes the lowest index if they
do.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InputError

PRODUCT_FLOOR = 1e-12


class AggregationRule(Enum):
    MAJORITY = "majority"
    SUM = "sum"
    PRODUCT = "product"
    WEIGHTED = "weighted"


ALL_RULES = tuple(AggregationRule)


@dataclass(frozen=True)
class ClipPrediction:
    clip_id: str
    rule: AggregationRule
    scores: np.ndarray
    predicted: int


def _vote_argmax(votes: np.ndarray, prob_mass: np.ndarray) -> int:
    top = votes.max()
    tied = np.flatnonzero(votes == top)
    if len(tied) == 1:
        return int(tied[0])
    return int(tied[np.argmax(prob_mass[tied])])  # argmax keeps lowest on ties


def aggregate(predictions: np.ndarray, rule: AggregationRule,
              clip_id: str = "") -> ClipPrediction:
    """Fuse an (S, C) block of segment simplexes into one clip prediction."""
    try:
        probs = np.asarray(predictions, dtype=np.float64)
    except (ValueError, TypeError) as exc:
        raise InputError(f"segment distributions have mismatched lengths: "
                         f"{exc}") from exc
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise InputError(f"need a non-empty (segments, classes) array, "
                         f"got shape {probs.shape}")
    if not np.all(np.isfinite(probs)):
        raise InputError("non-finite segment probabilities")

    if rule is AggregationRule.SUM:
        scores = probs.mean(axis=0)
        predicted = int(np.argmax(scores))
    elif rule is AggregationRule.PRODUCT:
        scores = np.log(probs + PRODUCT_FLOOR).mean(axis=0)
        predicted = int(np.argmax(scores))
    elif rule is AggregationRule.MAJORITY:
        votes = np.bincount(probs.argmax(axis=1),
                            minlength=probs.shape[1]).astype(np.float64)
        scores = votes
        predicted = _vote_argmax(votes, probs.sum(axis=0))
    elif rule is AggregationRule.WEIGHTED:
        seg_votes = probs.argmax(axis=1)
        weights = probs.max(axis=1)
        scores = np.zeros(probs.shape[1])
        np.add.at(scores, seg_votes, weights)
        predicted = _vote_argmax(scores, probs.sum(axis=0))
    else:
        raise InputError(f"unknown aggregation rule {rule!r}")

    return ClipPrediction(clip_id=clip_id, rule=rule, scores=scores,
                          predicted=predicted)


def aggregate_all(predictions: np.ndarray,
                  clip_id: str = "") -> dict[AggregationRule, ClipPrediction]:
    return {rule: aggregate(predictions, rule, clip_id) for rule in ALL_RULES}
