"""Double-fault diversity and the two-classifier agreement rule.

A pair accepts a label only when both members predict it. Pairs are picked
from the ``n`` most accurate pool members as the one with the smallest
double-fault rate, i.e. the lowest chance of both being wrong on a sample.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import List, Optional

import numpy as np

from forefront.errors import DatasetIOError, InvalidArgument, InvalidState
from forefront.learners.pool import ClassifierPool, TrainedClassifier
from forefront.reject import REJECT, Decision


def double_fault(preds_a, preds_b, truth) -> float:
    """Fraction of samples both prediction vectors get wrong."""
    a = np.asarray(preds_a)
    b = np.asarray(preds_b)
    t = np.asarray(truth)
    if not (a.shape == b.shape == t.shape) or a.ndim != 1:
        raise InvalidArgument("prediction and truth vectors must have equal length")
    if t.size == 0:
        raise InvalidArgument("double fault needs at least one sample")
    return float(np.count_nonzero((a != t) & (b != t)) / t.size)


def select_top_n(pool: ClassifierPool, n: int) -> ClassifierPool:
    """The ``n`` most accurate members, best first; ties favour lower grid index."""
    if n < 2:
        raise InvalidArgument(f"n must be >= 2, got {n}")
    if len(pool) < n:
        raise InvalidArgument(f"pool of {len(pool)} cannot supply {n} members")
    ranked = sorted(pool.members, key=lambda m: (-m.accuracy, m.grid_index))
    return ClassifierPool(members=ranked[:n], grid=pool.grid, truth=pool.truth)


@dataclass(frozen=True, eq=False)
class DiversityMatrix:
    values: np.ndarray
    ids: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape[0] != len(self.ids):
            raise InvalidArgument("diversity matrix must be square with one id per row")
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def to_csv(self, path) -> Path:
        path = Path(path)
        try:
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["id", *self.ids])
                for i, row in zip(self.ids, self.values):
                    w.writerow([i, *(f"{v:.9g}" for v in row)])
        except OSError as exc:
            raise DatasetIOError(f"cannot write diversity matrix to {path}: {exc}") from exc
        return path


def diversity_matrix(pool: ClassifierPool, truth=None) -> DiversityMatrix:
    """Pairwise double-fault rates over the members' out-of-fold predictions.

    The diagonal holds each member's own error rate.
    """
    truth = pool.truth if truth is None else np.asarray(truth)
    if truth is None:
        raise InvalidArgument("truth labels are required")
    preds = []
    for m in pool:
        if m.oof_predictions is None or len(m.oof_predictions) != len(truth):
            raise InvalidState(f"member {m.name} lacks out-of-fold predictions for this sample set")
        preds.append(np.asarray(m.oof_predictions) != truth)
    wrong = np.vstack(preds).astype(np.int64)
    values = (wrong @ wrong.T) / truth.shape[0]
    return DiversityMatrix(values=values, ids=tuple(m.grid_index for m in pool))


@dataclass(frozen=True, eq=False)
class ClassifierPair:
    first: TrainedClassifier
    second: TrainedClassifier
    df: float
    stage: Optional[int] = None

    def __post_init__(self):
        if self.first is self.second:
            raise InvalidArgument("a pair needs two distinct classifiers")

    def stronger(self) -> TrainedClassifier:
        """The member with higher out-of-fold accuracy; ties go to ``first``."""
        return self.second if self.second.accuracy > self.first.accuracy else self.first

    def predictions(self, X):
        return self.first.predict(X), self.second.predict(X)


def select_pair(m: DiversityMatrix, pool: ClassifierPool, stage: Optional[int] = None) -> ClassifierPair:
    """Off-diagonal pair with the smallest double fault.

    Ties: higher mean accuracy first, then lexicographically smaller
    ``(grid_index, grid_index)``. The pair is returned in grid-index order.
    """
    if m.size < 2:
        raise InvalidArgument("pair selection needs at least 2 classifiers")
    by_id = {c.grid_index: c for c in pool}
    if set(by_id) != set(m.ids):
        raise InvalidArgument("diversity matrix and pool describe different classifiers")
    best = None
    for i, j in combinations(range(m.size), 2):
        a, b = sorted((m.ids[i], m.ids[j]))
        mean_acc = 0.5 * (by_id[a].accuracy + by_id[b].accuracy)
        key = (m.values[i, j], -mean_acc, a, b)
        if best is None or key < best[0]:
            best = (key, a, b)
    (df, _, _, _), a, b = best
    return ClassifierPair(first=by_id[a], second=by_id[b], df=float(df), stage=stage)


def agreement_decide(pair: ClassifierPair, x) -> Decision:
    """Accept the common label when both members predict it, otherwise reject."""
    a, b = pair.predictions(np.asarray(x, dtype=float))
    return Decision.accept(a) if a == b else REJECT


def agreement_batch(pair: ClassifierPair, X) -> List[Decision]:
    a, b = pair.predictions(np.atleast_2d(np.asarray(X, dtype=float)))
    return [Decision.accept(p) if p == q else REJECT for p, q in zip(a, b)]
