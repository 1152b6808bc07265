"""Posterior-based reject rules and the risk/accuracy bookkeeping around them.

Error costs 1, a reject costs ``d`` and a correct answer costs 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from forefront.errors import InvalidArgument, NoCoverageError

_SUM_TOL = 1e-9


@dataclass(frozen=True)
class Decision:
    """Either ``Accept(label)`` (``label`` set) or ``Reject`` (``label is None``)."""

    label: Optional[int] = None

    @property
    def accepted(self) -> bool:
        return self.label is not None

    @classmethod
    def accept(cls, label: int) -> "Decision":
        return cls(int(label))

    def __str__(self) -> str:
        return f"ACCEPT({self.label})" if self.accepted else "REJECT"


REJECT = Decision()


@dataclass(frozen=True)
class RejectParams:
    tau: float = 0.5
    d: float = 0.1

    def __post_init__(self):
        if not 0 <= self.tau < 1:
            raise InvalidArgument(f"tau must lie in [0, 1), got {self.tau}")
        _check_cost(self.d)


@dataclass(frozen=True)
class OutcomeCounts:
    n_correct: int = 0
    n_error: int = 0
    n_rejected: int = 0

    def __post_init__(self):
        if min(self.n_correct, self.n_error, self.n_rejected) < 0:
            raise InvalidArgument("outcome counts must be non-negative")

    @property
    def total(self) -> int:
        return self.n_correct + self.n_error + self.n_rejected

    @property
    def accepted(self) -> int:
        return self.n_correct + self.n_error

    @classmethod
    def tally(cls, decisions, truth) -> "OutcomeCounts":
        correct = error = rejected = 0
        for dec, y in zip(decisions, truth):
            if not dec.accepted:
                rejected += 1
            elif dec.label == y:
                correct += 1
            else:
                error += 1
        return cls(correct, error, rejected)


def _check_posteriors(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise InvalidArgument("posteriors must be a non-empty vector")
    if np.any(p < 0) or abs(p.sum() - 1.0) > _SUM_TOL:
        raise InvalidArgument("posteriors must be non-negative and sum to 1")
    return p


def _check_cost(d: float) -> None:
    if not 0 <= d <= 0.5:
        raise InvalidArgument(f"reject cost d must lie in [0, 1/2], got {d}")


def bayes_decide(p) -> int:
    """Index of the largest posterior; ties go to the lowest class id."""
    return int(np.argmax(_check_posteriors(p)))


def chow_decide(p, tau: float) -> Decision:
    """Accept the Bayes label when its posterior strictly exceeds ``tau``."""
    p = _check_posteriors(p)
    i = int(np.argmax(p))
    return Decision.accept(i) if p[i] > tau else REJECT


def cost_decide(p, d: float, literal: bool = False) -> Decision:
    """Minimum-risk rule for reject cost ``d``: accept iff ``max(p) >= 1 - d``.

    ``literal=True`` switches to the alternative reading that accepts whenever
    ``max(p) > d``; it is kept only for comparison and never rejects when
    ``d < 1 / n_classes``.
    """
    _check_cost(d)
    p = _check_posteriors(p)
    i = int(np.argmax(p))
    ok = p[i] > d if literal else p[i] >= 1.0 - d
    return Decision.accept(i) if ok else REJECT


def conditional_accuracy(c: OutcomeCounts) -> float:
    """Accuracy over accepted samples, ``n_correct / (n_correct + n_error)``."""
    if c.accepted == 0:
        raise NoCoverageError("no coverage: every sample was rejected")
    return c.n_correct / c.accepted


def empirical_risk(c: OutcomeCounts, d: float) -> float:
    if c.total == 0:
        raise InvalidArgument("empirical risk needs at least one sample")
    return (c.n_error + d * c.n_rejected) / c.total


def pointwise_risk_binary(f: float, d: float) -> float:
    """Conditional risk ``min(f, 1 - f, d)`` of the optimal binary rule at posterior ``f``."""
    if not 0 <= f <= 1:
        raise InvalidArgument(f"posterior must lie in [0, 1], got {f}")
    _check_cost(d)
    return min(f, 1.0 - f, d)
