"""One-vs-one RBF support vector machines trained with :mod:`forefront.learners.smo`.

The kernel is ``exp(-gamma * ||x - z||^2 / dim)``: squared distances are
averaged over feature dimensions, so one gamma grid is meaningful for prefixes
of any length (400 to 2400 dimensions at the default stages).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from forefront.errors import DataFormatError, DatasetIOError, InvalidArgument
from forefront.learners import smo

MODEL_FORMAT = "forefront-svm"
MODEL_VERSION = 1


@dataclass(frozen=True)
class SvmParams:
    C: float = 1.0
    gamma: float = 1.0
    tol: float = 1e-3
    max_passes: int = 10

    def __post_init__(self):
        if not self.C > 0:
            raise InvalidArgument(f"C must be positive, got {self.C}")
        if not self.gamma > 0:
            raise InvalidArgument(f"gamma must be positive, got {self.gamma}")
        if not self.tol > 0:
            raise InvalidArgument(f"tol must be positive, got {self.tol}")
        if int(self.max_passes) < 1:
            raise InvalidArgument("max_passes must be >= 1")

    def iteration_cap(self, n: int) -> int:
        """SMO pair updates allowed for an ``n``-sample machine."""
        return int(self.max_passes) * max(int(n), 100) * 100

    def label(self) -> str:
        return f"C=2^{np.log2(self.C):g},gamma=2^{np.log2(self.gamma):g}"


def sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances divided by the feature dimension."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    d = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * (A @ B.T)
    np.maximum(d, 0.0, out=d)
    return d / A.shape[1]


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    return np.exp(-gamma * sq_dists(A, B))


@dataclass(frozen=True, eq=False)
class SvmModel:
    """Trained one-vs-one machine set.

    Machine ``p`` separates ``classes[pairs[p, 0]]`` (positive side) from
    ``classes[pairs[p, 1]]``; its support vectors are
    ``vectors[sv_index[offsets[p]:offsets[p+1]]]`` with signed coefficients
    ``dual_coef`` (``alpha * y``) and intercept ``bias[p]``. ``vectors`` may be a
    shared training matrix holding non-support rows as well.
    """

    classes: np.ndarray
    params: SvmParams
    vectors: np.ndarray
    pairs: np.ndarray
    sv_index: np.ndarray
    dual_coef: np.ndarray
    offsets: np.ndarray
    bias: np.ndarray

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def n_classes(self) -> int:
        return self.classes.shape[0]

    def machine(self, p: int):
        lo, hi = self.offsets[p], self.offsets[p + 1]
        return self.sv_index[lo:hi], self.dual_coef[lo:hi], float(self.bias[p])

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.dim:
            raise InvalidArgument(f"feature dim {X.shape[1]} != model dim {self.dim}")
        return X, single

    def decision_values(self, X) -> np.ndarray:
        """Per-machine decision values, shape ``(n, n_machines)``."""
        X, _ = self._check(X)
        used = np.unique(self.sv_index)
        remap = np.zeros(self.vectors.shape[0], dtype=np.int64)
        remap[used] = np.arange(used.shape[0])
        K = rbf_kernel(X, self.vectors[used], self.params.gamma)
        return smo.decision_many(K, remap[self.sv_index], self.dual_coef, self.offsets, self.bias)

    def class_scores(self, X) -> np.ndarray:
        return _scores(self.decision_values(X), self.pairs, self.n_classes)

    def predict(self, X) -> np.ndarray:
        X, single = self._check(X)
        out = self.classes[_vote(self.decision_values(X), self.pairs, self.n_classes)]
        return out[0] if single else out

    def predict_posteriors(self, X) -> np.ndarray:
        X, single = self._check(X)
        post = softmax(self.class_scores(X))
        return post[0] if single else post

    def compact(self) -> "SvmModel":
        """Copy holding only rows of ``vectors`` that are support vectors."""
        keep = self.dual_coef != 0
        counts = np.add.reduceat(keep.astype(np.int64), self.offsets[:-1]) if keep.size else []
        offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        idx = self.sv_index[keep]
        used, inverse = np.unique(idx, return_inverse=True)
        return SvmModel(
            classes=self.classes.copy(),
            params=self.params,
            vectors=self.vectors[used].copy(),
            pairs=self.pairs.copy(),
            sv_index=inverse.astype(np.int64).reshape(-1),
            dual_coef=self.dual_coef[keep].copy(),
            offsets=offsets,
            bias=self.bias.copy(),
        )


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _scores(dec: np.ndarray, pairs: np.ndarray, n_classes: int) -> np.ndarray:
    scores = np.zeros((dec.shape[0], n_classes))
    for p, (a, b) in enumerate(pairs):
        scores[:, a] += dec[:, p]
        scores[:, b] -= dec[:, p]
    return scores


def _vote(dec: np.ndarray, pairs: np.ndarray, n_classes: int) -> np.ndarray:
    """Winning class indices: most votes, then highest summed score, then lowest index.

    A machine with decision value exactly 0 votes for its lower class.
    """
    votes = np.zeros((dec.shape[0], n_classes), dtype=np.int64)
    for p, (a, b) in enumerate(pairs):
        pos = dec[:, p] >= 0
        votes[:, a] += pos
        votes[:, b] += ~pos
    scores = _scores(dec, pairs, n_classes)
    tied = votes == votes.max(axis=1, keepdims=True)
    return np.argmax(np.where(tied, scores, -np.inf), axis=1)


def _validate_training(features, labels):
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise InvalidArgument("features must be (n, dim) with one label per row")
    if not np.all(np.isfinite(X)):
        raise InvalidArgument("features contain non-finite values")
    classes = np.unique(y)
    if classes.shape[0] < 2:
        raise InvalidArgument(f"need at least 2 classes, got {classes.tolist()}")
    return X, y, classes


@dataclass
class OvoLayout:
    """Sample positions of every one-vs-one subproblem, flattened."""

    pairs: np.ndarray
    flat_idx: np.ndarray
    flat_y: np.ndarray
    offsets: np.ndarray

    @classmethod
    def build(cls, positions: np.ndarray, class_index: np.ndarray, n_classes: int) -> "OvoLayout":
        """``positions[i]`` is sample i's row in the Gram matrix; ``class_index[i]`` its class."""
        pairs, idx_parts, y_parts = [], [], []
        members = [positions[class_index == c] for c in range(n_classes)]
        for a in range(n_classes):
            for b in range(a + 1, n_classes):
                pairs.append((a, b))
                idx_parts.append(np.concatenate([members[a], members[b]]))
                y_parts.append(np.concatenate([np.ones(len(members[a])), -np.ones(len(members[b]))]))
        sizes = [len(p) for p in idx_parts]
        return cls(
            pairs=np.asarray(pairs, dtype=np.int64).reshape(-1, 2),
            flat_idx=np.concatenate(idx_parts).astype(np.int64),
            flat_y=np.concatenate(y_parts),
            offsets=np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64),
        )

    def solve(self, K: np.ndarray, params: SvmParams):
        biggest = int(np.diff(self.offsets).max())
        alpha, bias, _ = smo.solve_many(
            K, self.flat_idx, self.flat_y, self.offsets,
            float(params.C), float(params.tol), params.iteration_cap(biggest),
        )
        return alpha * self.flat_y, bias


def train_svm(features, labels, params: SvmParams = SvmParams()) -> SvmModel:
    """Fit one-vs-one RBF machines on ``features`` (rows) and integer ``labels``."""
    X, y, classes = _validate_training(features, labels)
    class_index = np.searchsorted(classes, y)
    layout = OvoLayout.build(np.arange(X.shape[0]), class_index, classes.shape[0])
    K = rbf_kernel(X, X, params.gamma)
    coef, bias = layout.solve(K, params)
    return SvmModel(
        classes=classes, params=params, vectors=X, pairs=layout.pairs,
        sv_index=layout.flat_idx, dual_coef=coef, offsets=layout.offsets, bias=bias,
    ).compact()


def predict(model, x):
    """Label for one feature vector (or an array of labels for a row stack)."""
    return model.predict(x)


def predict_posteriors(model: SvmModel, x) -> np.ndarray:
    """Softmax over per-class sums of signed one-vs-one decision values."""
    return model.predict_posteriors(x)


def model_arrays(model: SvmModel, prefix: str = "") -> dict:
    m = model.compact()
    return {
        f"{prefix}classes": m.classes,
        f"{prefix}params": np.array([m.params.C, m.params.gamma, m.params.tol, m.params.max_passes]),
        f"{prefix}vectors": m.vectors,
        f"{prefix}pairs": m.pairs,
        f"{prefix}sv_index": m.sv_index,
        f"{prefix}dual_coef": m.dual_coef,
        f"{prefix}offsets": m.offsets,
        f"{prefix}bias": m.bias,
    }


def model_from_arrays(arrays, prefix: str = "") -> SvmModel:
    try:
        C, gamma, tol, passes = arrays[f"{prefix}params"]
        return SvmModel(
            classes=arrays[f"{prefix}classes"],
            params=SvmParams(C=float(C), gamma=float(gamma), tol=float(tol), max_passes=int(passes)),
            vectors=arrays[f"{prefix}vectors"],
            pairs=arrays[f"{prefix}pairs"],
            sv_index=arrays[f"{prefix}sv_index"],
            dual_coef=arrays[f"{prefix}dual_coef"],
            offsets=arrays[f"{prefix}offsets"],
            bias=arrays[f"{prefix}bias"],
        )
    except KeyError as exc:
        raise DataFormatError(f"model file lacks array {exc}") from None


def save_model(model: SvmModel, path) -> Path:
    """Write a compacted model as ``.npz`` with a JSON header array."""
    path = Path(path)
    header = json.dumps({"format": MODEL_FORMAT, "version": MODEL_VERSION})
    try:
        with open(path, "wb") as fh:
            np.savez(fh, header=np.array(header), **model_arrays(model))
    except OSError as exc:
        raise DatasetIOError(f"cannot write model to {path}: {exc}") from exc
    return path


def load_model(path) -> SvmModel:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as data:
            check_header(data, MODEL_FORMAT, MODEL_VERSION)
            return model_from_arrays({k: data[k] for k in data.files})
    except OSError as exc:
        raise DatasetIOError(f"cannot read model {path}: {exc}") from exc


def check_header(data, fmt: str, version: int, header: Optional[dict] = None) -> dict:
    if header is None:
        if "header" not in data:
            raise DataFormatError("file has no header")
        header = json.loads(str(data["header"]))
    if header.get("format") != fmt:
        raise DataFormatError(f"expected format {fmt!r}, found {header.get('format')!r}")
    if header.get("version") != version:
        raise DataFormatError(f"unsupported {fmt} version {header.get('version')}")
    return header
