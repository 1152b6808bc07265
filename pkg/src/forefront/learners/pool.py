"""Grid-trained classifier pools with out-of-fold predictions."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from forefront.errors import InvalidArgument
from forefront.folds import stratified_assign
from forefront.learners.svm import (
    OvoLayout,
    SvmModel,
    SvmParams,
    _validate_training,
    _vote,
    sq_dists,
)
from forefront.learners import smo

log = logging.getLogger(__name__)


def default_grid(
    log2_min: int = -5,
    log2_max: int = 5,
    step: int = 1,
    tol: float = 1e-3,
    max_passes: int = 10,
) -> List[SvmParams]:
    """C-major list of ``(C, gamma)`` powers of two; 121 points by default."""
    if step < 1 or log2_max < log2_min:
        raise InvalidArgument("grid needs log2_min <= log2_max and step >= 1")
    exps = range(log2_min, log2_max + 1, step)
    return [
        SvmParams(C=2.0 ** c, gamma=2.0 ** g, tol=tol, max_passes=max_passes)
        for c in exps
        for g in exps
    ]


@dataclass(eq=False)
class TrainedClassifier:
    """A deployable model plus its out-of-fold record on the training set.

    ``grid_index`` is the member's position in the grid and serves as its
    stable id for every tie rule.
    """

    model: object
    params: Optional[SvmParams]
    grid_index: int
    oof_predictions: np.ndarray
    accuracy: float

    def predict(self, X):
        return self.model.predict(X)

    @property
    def name(self) -> str:
        if self.params is None:
            return f"#{self.grid_index}"
        return f"#{self.grid_index}({self.params.label()})"


@dataclass(eq=False)
class ClassifierPool:
    members: List[TrainedClassifier]
    grid: List[SvmParams] = field(default_factory=list)
    truth: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.members:
            raise InvalidArgument("a classifier pool cannot be empty")

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __getitem__(self, i) -> TrainedClassifier:
        return self.members[i]

    def best(self) -> TrainedClassifier:
        """Most accurate member; ties go to the lower grid index."""
        return min(self.members, key=lambda m: (-m.accuracy, m.grid_index))


def train_grid(
    features,
    labels,
    grid: Sequence[SvmParams],
    oof_folds: int = 5,
    folds: Optional[np.ndarray] = None,
    seed: int = 0,
) -> ClassifierPool:
    """Fit every grid point with ``oof_folds``-fold out-of-fold predictions, then refit.

    ``folds`` fixes the internal fold of each sample; by default a stratified
    assignment seeded with ``seed`` is used. Each gamma's Gram matrix is
    computed once and shared by all C values, folds and one-vs-one machines.
    The refit models reference ``features`` rather than copying support vectors.
    """
    grid = list(grid)
    if not grid:
        raise InvalidArgument("grid must not be empty")
    if int(oof_folds) < 2:
        raise InvalidArgument("oof_folds must be >= 2")
    X, y, classes = _validate_training(features, labels)
    class_index = np.searchsorted(classes, y)
    n_classes = classes.shape[0]
    if folds is None:
        folds = stratified_assign(y, oof_folds, seed)
    else:
        folds = np.asarray(folds, dtype=np.int64)
        if folds.shape[0] != X.shape[0]:
            raise InvalidArgument("one fold index per sample required")
    n_folds = int(folds.max()) + 1
    for f in range(n_folds):
        missing = np.setdiff1d(np.arange(n_classes), class_index[folds != f])
        if missing.size:
            raise InvalidArgument(f"class {classes[missing[0]]!r} absent from a training fold")

    all_pos = np.arange(X.shape[0])
    full_layout = OvoLayout.build(all_pos, class_index, n_classes)
    fold_parts = []
    for f in range(n_folds):
        train = np.flatnonzero(folds != f)
        test = np.flatnonzero(folds == f)
        fold_parts.append((test, OvoLayout.build(train, class_index[train], n_classes)))

    D = sq_dists(X, X)
    members: List[Optional[TrainedClassifier]] = [None] * len(grid)
    gamma = K = None
    for gi in sorted(range(len(grid)), key=lambda i: (grid[i].gamma, i)):
        params = grid[gi]
        if params.gamma != gamma:
            gamma = params.gamma
            K = np.exp(-gamma * D)
        oof = np.empty(X.shape[0], dtype=np.int64)
        for test, layout in fold_parts:
            coef, bias = layout.solve(K, params)
            dec = smo.decision_many(
                np.ascontiguousarray(K[test]), layout.flat_idx, coef, layout.offsets, bias
            )
            oof[test] = _vote(dec, layout.pairs, n_classes)
        coef, bias = full_layout.solve(K, params)
        model = SvmModel(
            classes=classes, params=params, vectors=X, pairs=full_layout.pairs,
            sv_index=full_layout.flat_idx, dual_coef=coef, offsets=full_layout.offsets,
            bias=bias,
        )
        oof_labels = classes[oof]
        acc = float(np.mean(oof_labels == y))
        members[gi] = TrainedClassifier(model, params, gi, oof_labels, acc)
        log.debug("grid %d %s oof accuracy %.4f", gi, params.label(), acc)
    return ClassifierPool(members=members, grid=grid, truth=y.copy())
