"""Euclidean k-nearest-neighbour baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from forefront.errors import InvalidArgument


@dataclass(frozen=True, eq=False)
class KnnModel:
    vectors: np.ndarray
    labels: np.ndarray
    k_neighbors: int = 1

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.dim:
            raise InvalidArgument(f"feature dim {X.shape[1]} != model dim {self.dim}")
        d = (X * X).sum(1)[:, None] + (self.vectors ** 2).sum(1)[None, :] - 2 * X @ self.vectors.T
        # stable sort: equal distances keep training order
        nearest = np.argsort(d, axis=1, kind="stable")[:, : self.k_neighbors]
        classes = np.unique(self.labels)
        out = np.empty(X.shape[0], dtype=self.labels.dtype)
        for q, rows in enumerate(nearest):
            counts = np.array([(self.labels[rows] == c).sum() for c in classes])
            out[q] = classes[np.argmax(counts)]  # ties -> lowest class id
        return out[0] if single else out


def train_knn(features, labels, k_neighbors: int = 1) -> KnnModel:
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidArgument("kNN needs a non-empty (n, dim) training set")
    if X.shape[0] != y.shape[0]:
        raise InvalidArgument("one label per training row required")
    if not 1 <= k_neighbors <= X.shape[0]:
        raise InvalidArgument(f"k_neighbors must be in [1, {X.shape[0]}]")
    return KnnModel(vectors=X, labels=y, k_neighbors=int(k_neighbors))


def predict_knn(model: KnnModel, x):
    return model.predict(x)
