"""Seeded stratified fold assignment shared by model selection and evaluation."""

from __future__ import annotations

import numpy as np

from forefront.errors import InvalidArgument


def stratified_assign(labels, k: int, seed: int = 0, class_names=None) -> np.ndarray:
    """Fold index per sample such that each class is spread evenly over ``k`` folds.

    Members of a class are shuffled with a generator keyed on ``(seed, class)``
    and dealt round-robin, starting at a fold offset that rotates from class to
    class so fold sizes also stay within one of each other where possible.
    """
    labels = np.asarray(labels)
    k = int(k)
    if k < 2:
        raise InvalidArgument(f"need at least 2 folds, got {k}")
    folds = np.empty(labels.shape[0], dtype=np.int64)
    start = 0
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        if members.shape[0] < k:
            name = class_names[int(c)] if class_names is not None else c.item()
            raise InvalidArgument(
                f"class {name!r} has {members.shape[0]} samples, fewer than {k} folds"
            )
        rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, int(c) & 0xFFFFFFFF])
        order = members[rng.permutation(members.shape[0])]
        folds[order] = (start + np.arange(order.shape[0])) % k
        start = (start + order.shape[0]) % k
    return folds
