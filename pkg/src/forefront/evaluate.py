"""Cross-validated comparison of posterior-threshold and agreement reject options.

For every outer fold and stage time the grid pool is trained once; from it
come the plain best SVM (``svm``), the posterior-threshold baselines
(``cwro``, ``cwro_tau*``: the best SVM's label, kept only when its top
posterior clears the threshold), the stage's agreement pair (``forefront``) and the
cascade truncated after that stage (``forefront_cascade``). Table rows are
means over folds; pooled counts are kept alongside.
"""

from __future__ import annotations

import csv
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from forefront.cascade import (
    DecisionTrace,
    Preprocess,
    StagePlan,
    classify_stream,
    prepare,
    train_forefront,
    write_traces,
)
from forefront.datagen import Dataset
from forefront.errors import DatasetIOError, InvalidArgument, NoDecisionError, PrefixUnavailable
from forefront.folds import stratified_assign
from forefront.learners.pool import default_grid
from forefront.learners.svm import SvmParams
from forefront.reject import REJECT, Decision, OutcomeCounts, chow_decide, empirical_risk
from forefront.signal import extract_prefix_features

log = logging.getLogger(__name__)

REPORT_HEADER = ["method", "stage_s", "cond_accuracy", "coverage", "forced_frac",
                 "mean_earliness_s", "emp_risk"]
COUNTS_HEADER = ["method", "stage_s", "fold", "n_test", "n_correct", "n_error", "n_rejected",
                 "n_forced", "n_forced_correct", "full_accuracy", "mean_earliness_accepted_s"]


@dataclass(frozen=True, eq=False)
class FoldPlan:
    k_folds: int
    assignments: np.ndarray
    seed: int = 0

    def __post_init__(self):
        a = np.asarray(self.assignments, dtype=np.int64)
        if self.k_folds < 1 or a.size == 0 or a.min() < 0 or a.max() >= self.k_folds:
            raise InvalidArgument("fold assignments must lie in [0, k_folds)")
        object.__setattr__(self, "assignments", a)

    def split(self, f: int) -> Tuple[np.ndarray, np.ndarray]:
        """(train, test) indices; a one-fold plan trains and tests on everything."""
        if self.k_folds == 1:
            idx = np.arange(self.assignments.size)
            return idx, idx
        return np.flatnonzero(self.assignments != f), np.flatnonzero(self.assignments == f)

    @classmethod
    def resubstitution(cls, n: int) -> "FoldPlan":
        return cls(1, np.zeros(n, dtype=np.int64))


def stratified_kfold(dataset: Dataset, k: int, seed: int = 0) -> FoldPlan:
    """Seeded stratified partition; raises InvalidArgument naming an undersized class."""
    labels = dataset.labels
    return FoldPlan(int(k), stratified_assign(labels, k, seed, dataset.class_names or None), seed)


@dataclass(frozen=True)
class EvalConfig:
    grid: Tuple[SvmParams, ...] = field(default_factory=lambda: tuple(default_grid()))
    n: int = 5
    oof_folds: int = 5
    tau: float = 0.5
    tau_sweep: Tuple[float, ...] = (0.3, 0.5, 0.7, 0.9)
    d: float = 0.1
    prep: Preprocess = field(default_factory=Preprocess)
    fallback: str = "forced"
    seed: int = 0


@dataclass(frozen=True)
class Outcome:
    """One method's final answer for one test sample at one stage."""

    sample: int
    fold: int
    method: str
    stage_s: float
    truth: int
    label: Optional[int]
    accepted: bool
    forced: bool
    earliness_s: float


@dataclass
class ReportRow:
    method: str
    stage_s: float
    cond_accuracy: float
    coverage: float
    forced_frac: float
    mean_earliness_s: float
    emp_risk: float

    def cells(self) -> List[str]:
        return [self.method, f"{self.stage_s:g}"] + [
            _fmt(v) for v in (self.cond_accuracy, self.coverage, self.forced_frac,
                              self.mean_earliness_s, self.emp_risk)
        ]


def _fmt(v: float) -> str:
    return "nan" if np.isnan(v) else f"{v:.6f}"


@dataclass
class FoldStats:
    method: str
    stage_s: float
    fold: int
    n_test: int
    n_correct: int
    n_error: int
    n_rejected: int
    n_forced: int
    n_forced_correct: int
    earliness: float
    earliness_accepted: float

    @property
    def counts(self) -> OutcomeCounts:
        """Outcomes with forced answers counted as rejections."""
        return OutcomeCounts(self.n_correct, self.n_error, self.n_rejected + self.n_forced)

    @property
    def cond_accuracy(self) -> float:
        acc = self.n_correct + self.n_error
        return self.n_correct / acc if acc else float("nan")

    @property
    def full_accuracy(self) -> float:
        return (self.n_correct + self.n_forced_correct) / self.n_test


@dataclass
class StageReport:
    rows: List[ReportRow]
    fold_stats: List[FoldStats]
    outcomes: List[Outcome]
    traces: Dict[int, DecisionTrace]
    plan: StagePlan
    d: float
    # (fold, stage_s) -> (sample ids, first member votes, second member votes)
    pair_votes: Dict[Tuple[int, float], Tuple[np.ndarray, np.ndarray, np.ndarray]] = field(default_factory=dict)

    def row(self, method: str, stage_s: float) -> ReportRow:
        for r in self.rows:
            if r.method == method and r.stage_s == stage_s:
                return r
        raise KeyError((method, stage_s))

    def methods(self) -> List[str]:
        return list(dict.fromkeys(r.method for r in self.rows))

    def write_csv(self, path) -> Path:
        return _write_rows(path, REPORT_HEADER, [r.cells() for r in self.rows])

    def write_counts_csv(self, path) -> Path:
        rows = [
            [s.method, f"{s.stage_s:g}", s.fold, s.n_test, s.n_correct, s.n_error, s.n_rejected,
             s.n_forced, s.n_forced_correct, _fmt(s.full_accuracy), _fmt(s.earliness_accepted)]
            for s in self.fold_stats
        ]
        return _write_rows(path, COUNTS_HEADER, rows)

    def write_traces_csv(self, path) -> Path:
        return write_traces([(str(i), t) for i, t in sorted(self.traces.items())], path)


def _write_rows(path, header, rows) -> Path:
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise DatasetIOError(f"cannot write {path}: {exc}") from exc
    return path


def _cwro_name(tau: float) -> str:
    return f"cwro_tau{tau:g}"


def method_names(cfg: EvalConfig) -> List[str]:
    sweep = [_cwro_name(t) for t in cfg.tau_sweep if t != cfg.tau]
    return ["svm", "cwro", *sweep, "forefront", "forefront_cascade"]


def _fold_outcomes(dataset, prepared, train, test, fold, plan, cfg, votes=None) -> Tuple[List[Outcome], Dict[int, DecisionTrace]]:
    train_set = dataset.subset(train)
    model, fits = train_forefront(
        train_set, plan, cfg.grid, cfg.n, cfg.oof_folds, cfg.prep, cfg.fallback,
        seed=cfg.seed, return_fits=True,
    )
    truth = dataset.labels
    out: List[Outcome] = []
    taus = [("cwro", cfg.tau)] + [(_cwro_name(t), t) for t in cfg.tau_sweep if t != cfg.tau]

    def add(i, method, t, label, accepted, forced=False, earliness=None):
        out.append(Outcome(int(i), fold, method, t, int(truth[i]), label, accepted, forced,
                           t if earliness is None else earliness))

    for fit in fits:
        t = fit.time_s
        rows, vecs = [], []
        for i in test:
            series, onset = prepared[i]
            try:
                if onset is None:
                    raise PrefixUnavailable("no onset")
                vecs.append(extract_prefix_features(series, onset, fit.k, fit.stats))
                rows.append(i)
            except PrefixUnavailable:
                for m in ("svm", *(name for name, _ in taus), "forefront"):
                    add(i, m, t, None, False)
        if not rows:
            continue
        X = np.vstack(vecs)
        best = fit.pool.best()
        plain = best.predict(X)
        post = best.model.predict_posteriors(X)
        a, b = fit.pair.predictions(X)
        if votes is not None:
            votes[(fold, t)] = (np.asarray(rows), a, b)
        for r, i in enumerate(rows):
            add(i, "svm", t, int(plain[r]), True)
            for name, tau in taus:
                # posteriors only gate the answer; the label stays the SVM's own vote
                dec = chow_decide(post[r], tau)
                add(i, name, t, int(plain[r]) if dec.accepted else None, dec.accepted)
            agree = a[r] == b[r]
            add(i, "forefront", t, int(a[r]) if agree else None, bool(agree))

    traces = {}
    for i in test:
        series, onset = prepared[i]
        for s in range(len(plan)):
            t = plan.stage_times_s[s]
            try:
                if onset is None:
                    raise NoDecisionError("no onset")
                tr = classify_stream(model.truncated(s + 1), series, onset)
            except NoDecisionError:
                add(i, "forefront_cascade", t, None, False)
                if s == len(plan) - 1:
                    traces[int(i)] = DecisionTrace([], None, None, False, onset)
                continue
            add(i, "forefront_cascade", t, tr.label, tr.accepted, tr.forced, tr.earliness_s())
            if s == len(plan) - 1:
                traces[int(i)] = tr
    return out, traces


def _fold_stats(outcomes: Sequence[Outcome]) -> List[FoldStats]:
    groups = defaultdict(list)
    for o in outcomes:
        groups[(o.method, o.stage_s, o.fold)].append(o)
    stats = []
    for (method, stage_s, fold), items in groups.items():
        acc = [o for o in items if o.accepted]
        forced = [o for o in items if o.forced]
        stats.append(FoldStats(
            method=method, stage_s=stage_s, fold=fold, n_test=len(items),
            n_correct=sum(o.label == o.truth for o in acc),
            n_error=sum(o.label != o.truth for o in acc),
            n_rejected=sum(not o.accepted and not o.forced for o in items),
            n_forced=len(forced),
            n_forced_correct=sum(o.label == o.truth for o in forced),
            earliness=float(np.mean([o.earliness_s for o in items])),
            earliness_accepted=float(np.mean([o.earliness_s for o in acc])) if acc else float("nan"),
        ))
    return stats


def aggregate(fold_stats: Sequence[FoldStats], methods: Sequence[str], plan: StagePlan, d: float) -> List[ReportRow]:
    """Mean over folds of each per-fold statistic; folds without coverage are
    skipped for conditional accuracy."""
    rows = []
    for method in methods:
        for t in plan.stage_times_s:
            fs = sorted((s for s in fold_stats if s.method == method and s.stage_s == t),
                        key=lambda s: s.fold)
            if not fs:
                continue
            cond = [s.cond_accuracy for s in fs if not np.isnan(s.cond_accuracy)]
            rows.append(ReportRow(
                method=method,
                stage_s=t,
                cond_accuracy=float(np.mean(cond)) if cond else float("nan"),
                coverage=float(np.mean([(s.n_correct + s.n_error) / s.n_test for s in fs])),
                forced_frac=float(np.mean([s.n_forced / s.n_test for s in fs])),
                mean_earliness_s=float(np.mean([s.earliness for s in fs])),
                emp_risk=float(np.mean([empirical_risk(s.counts, d) for s in fs])),
            ))
    return rows


def evaluate_methods(
    dataset: Dataset,
    plan: StagePlan,
    folds: FoldPlan,
    cfg: EvalConfig = EvalConfig(),
) -> StageReport:
    """Train on all-but-one fold, test the held-out fold at every stage, aggregate."""
    dataset.validate()
    if folds.assignments.size != len(dataset):
        raise InvalidArgument("fold plan and dataset sizes differ")
    prepared = [prepare(item, cfg.prep) for item in dataset.items]
    outcomes: List[Outcome] = []
    traces: Dict[int, DecisionTrace] = {}
    votes: Dict[Tuple[int, float], Tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
    for f in range(folds.k_folds):
        train, test = folds.split(f)
        log.info("fold %d/%d: %d train, %d test", f + 1, folds.k_folds, train.size, test.size)
        try:
            o, tr = _fold_outcomes(dataset, prepared, train, test, f, plan, cfg, votes)
        except InvalidArgument as exc:
            raise InvalidArgument(f"fold {f}: {exc}") from exc
        outcomes.extend(o)
        traces.update(tr)
    fold_stats = sorted(_fold_stats(outcomes), key=lambda s: (s.method, s.stage_s, s.fold))
    rows = aggregate(fold_stats, method_names(cfg), plan, cfg.d)
    return StageReport(rows, fold_stats, outcomes, traces, plan, cfg.d, votes)


def location_accuracy_surface(dataset: Dataset, method: str, report: StageReport) -> List[dict]:
    """Accuracy per (location, stage) for one method, pooled over folds.

    For reject methods the accuracy is over accepted samples (NaN when none
    were accepted). Locations with no evaluated sample are omitted and logged.
    """
    locs = [s.location for s in dataset.items]
    if any(l is None for l in locs):
        raise InvalidArgument("every dataset item needs a location id")
    if method not in report.methods():
        raise InvalidArgument(f"unknown method {method!r}")
    table = defaultdict(lambda: [0, 0])
    for o in report.outcomes:
        if o.method != method or not o.accepted:
            continue
        cell = table[(locs[o.sample], o.stage_s)]
        cell[0] += o.label == o.truth
        cell[1] += 1
    seen = {locs[o.sample] for o in report.outcomes if o.method == method}
    missing = sorted(set(locs) - seen)
    if missing:
        log.info("locations without test samples omitted: %s", missing)
    rows = []
    for loc in sorted(seen):
        for t in report.plan.stage_times_s:
            correct, n = table.get((loc, t), (0, 0))
            rows.append({"location": loc, "stage_s": t, "accuracy": correct / n if n else float("nan"), "n": n})
    return rows


def write_location_csv(rows: Sequence[dict], path) -> Path:
    return _write_rows(path, ["location", "stage_s", "accuracy", "n"],
                       [[r["location"], f"{r['stage_s']:g}", _fmt(r["accuracy"]), r["n"]] for r in rows])
