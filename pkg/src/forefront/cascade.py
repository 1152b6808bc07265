"""Staged agreement cascade over growing signal prefixes.

Training fits, for every stage time, a grid pool on the prefix features, keeps
the ``n`` most accurate members and stores their least double-faulting pair.
At test time the stages are visited in order and the first agreement fixes
the label; if no stage agrees the fallback policy decides.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from forefront.datagen import Dataset
from forefront.ensemble import (
    ClassifierPair,
    DiversityMatrix,
    agreement_decide,
    diversity_matrix,
    select_pair,
    select_top_n,
)
from forefront.errors import (
    DatasetIOError,
    DataFormatError,
    EmptySeriesError,
    InvalidArgument,
    NoDecisionError,
    PrefixUnavailable,
)
from forefront.learners.pool import ClassifierPool, TrainedClassifier, default_grid, train_grid
from forefront.learners.svm import SvmParams, check_header, model_arrays, model_from_arrays
from forefront.reject import REJECT, Decision
from forefront.signal import (
    NormStats,
    OnsetConfig,
    RawSeries,
    Series,
    detect_onset,
    downsample,
    extract_prefix_features,
    fit_norm_stats,
)

log = logging.getLogger(__name__)

BUNDLE_FORMAT = "forefront-cascade"
BUNDLE_VERSION = 1
FALLBACKS = ("forced", "reject")
TRACE_HEADER = ["sample_id", "stage_time_s", "decision", "label", "forced"]


@dataclass(frozen=True)
class StagePlan:
    stage_times_s: Tuple[float, ...] = (5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    effective_rate_hz: float = 10.0

    def __post_init__(self):
        times = tuple(float(t) for t in self.stage_times_s)
        object.__setattr__(self, "stage_times_s", times)
        if not times:
            raise InvalidArgument("a stage plan needs at least one stage")
        if times[0] <= 0 or any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidArgument("stage times must be positive and strictly increasing")
        if self.effective_rate_hz <= 0:
            raise InvalidArgument("effective_rate_hz must be positive")
        if min(self.ks) < 1:
            raise InvalidArgument("every stage must span at least one sample")

    @property
    def ks(self) -> List[int]:
        return [int(round(t * self.effective_rate_hz)) for t in self.stage_times_s]

    def __len__(self) -> int:
        return len(self.stage_times_s)

    def truncated(self, n_stages: int) -> "StagePlan":
        return StagePlan(self.stage_times_s[:n_stages], self.effective_rate_hz)


@dataclass(frozen=True)
class Preprocess:
    """How raw recordings become aligned, downsampled series."""

    downsample: int = 10
    onset: OnsetConfig = field(default_factory=OnsetConfig)


def prepare(series: RawSeries, prep: Preprocess = Preprocess()) -> Tuple[Series, Optional[int]]:
    """Downsample a raw recording (``Series`` inputs are taken as already done)
    and locate its onset; the onset is None if none was detected or the series
    is too short to look for one."""
    if not isinstance(series, Series):
        series = downsample(series, prep.downsample)
    try:
        onset = detect_onset(series, prep.onset)
    except InvalidArgument:
        onset = None
    return series, onset


@dataclass(frozen=True, eq=False)
class StageModel:
    time_s: float
    k: int
    stats: NormStats
    pair: ClassifierPair

    def features(self, series: RawSeries, onset: int) -> np.ndarray:
        return extract_prefix_features(series, onset, self.k, self.stats)


@dataclass(frozen=True, eq=False)
class ForefrontModel:
    stages: Tuple[StageModel, ...]
    plan: StagePlan
    classes: Tuple[int, ...]
    n_channels: int
    prep: Preprocess = Preprocess()
    fallback: str = "forced"
    class_names: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.fallback not in FALLBACKS:
            raise InvalidArgument(f"fallback must be one of {FALLBACKS}, got {self.fallback!r}")
        if len(self.stages) != len(self.plan):
            raise InvalidArgument("one stage model per plan stage required")
        for st in self.stages:
            if st.stats.dim != self.n_channels * st.k:
                raise InvalidArgument(f"stage {st.time_s}s feature dim mismatch")

    def truncated(self, n_stages: int) -> "ForefrontModel":
        return ForefrontModel(
            stages=self.stages[:n_stages], plan=self.plan.truncated(n_stages),
            classes=self.classes, n_channels=self.n_channels, prep=self.prep,
            fallback=self.fallback, class_names=self.class_names,
        )

    def with_fallback(self, fallback: str) -> "ForefrontModel":
        return ForefrontModel(self.stages, self.plan, self.classes, self.n_channels, self.prep, fallback,
                              self.class_names)

    def label_name(self, label: Optional[int]) -> str:
        if label is None:
            return "-"
        if 0 <= label < len(self.class_names):
            return self.class_names[label]
        return str(label)


@dataclass
class DecisionTrace:
    """Per-stage decisions for one series.

    ``decided_at_s`` is the accepting stage's time, or None when the cascade
    ran out of stages (then ``forced`` tells whether a fallback label was
    emitted).
    """

    steps: List[Tuple[float, Decision]]
    label: Optional[int]
    decided_at_s: Optional[float]
    forced: bool
    onset: Optional[int] = None

    @property
    def accepted(self) -> bool:
        return self.decided_at_s is not None

    @property
    def n_rejects(self) -> int:
        return sum(not d.accepted for _, d in self.steps)

    def earliness_s(self) -> float:
        """Decision time, counting an exhausted cascade at its last visited stage."""
        if self.decided_at_s is not None:
            return self.decided_at_s
        return self.steps[-1][0]


@dataclass(eq=False)
class StageFit:
    """Everything learned at one stage; eval reuses the pool for its baseline."""

    time_s: float
    k: int
    stats: NormStats
    pool: ClassifierPool
    top: ClassifierPool
    diversity: DiversityMatrix
    pair: ClassifierPair

    def stage_model(self) -> StageModel:
        return StageModel(self.time_s, self.k, self.stats, self.pair)


def raw_features(prepared: Sequence[Tuple[Series, int]], k: int) -> np.ndarray:
    return np.vstack([extract_prefix_features(s, onset, k) for s, onset in prepared])


def fit_stage(
    prepared: Sequence[Tuple[Series, int]],
    labels: np.ndarray,
    time_s: float,
    k: int,
    grid: Sequence[SvmParams],
    n: int,
    oof_folds: int,
    seed: int = 0,
    stage: Optional[int] = None,
) -> StageFit:
    raw = raw_features(prepared, k)
    stats = fit_norm_stats(raw)
    X = stats.apply(raw)
    pool = train_grid(X, labels, grid, oof_folds=oof_folds, seed=seed)
    top = select_top_n(pool, n)
    dm = diversity_matrix(top, labels)
    pair = select_pair(dm, top, stage=stage)
    log.info(
        "stage %g s (k=%d): pair %s + %s, DF=%.4f, OOF acc %.4f / %.4f",
        time_s, k, pair.first.name, pair.second.name, pair.df,
        pair.first.accuracy, pair.second.accuracy,
    )
    return StageFit(time_s, k, stats, pool, top, dm, pair)


def usable_for_training(dataset: Dataset, plan: StagePlan, prep: Preprocess):
    """Prepared ``(series, onset)`` and labels of items long enough for the last stage."""
    kept, labels, dropped = [], [], 0
    k_last = plan.ks[-1]
    for item in dataset.items:
        try:
            s, onset = prepare(item, prep)
        except EmptySeriesError:
            dropped += 1
            continue
        if onset is None or onset + k_last > len(s):
            dropped += 1
            continue
        kept.append((s, onset))
        labels.append(item.label)
    if dropped:
        log.warning("excluded %d of %d series (no onset or too short for the last stage)",
                    dropped, len(dataset))
    return kept, np.asarray(labels, dtype=np.int64), dropped


def train_forefront(
    dataset: Dataset,
    plan: StagePlan = StagePlan(),
    grid: Optional[Sequence[SvmParams]] = None,
    n: int = 5,
    oof_folds: int = 5,
    prep: Preprocess = Preprocess(),
    fallback: str = "forced",
    seed: int = 0,
    return_fits: bool = False,
):
    """Fit one agreement pair per stage of ``plan``.

    Items without a detectable onset or too short for the last stage are left
    out (logged); if nothing remains, InvalidArgument is raised.
    """
    grid = default_grid() if grid is None else list(grid)
    prepared, labels, _ = usable_for_training(dataset, plan, prep)
    if not prepared:
        raise InvalidArgument("no series is long enough for the final stage")
    if np.unique(labels).size < 2:
        raise InvalidArgument("training needs at least 2 classes")
    fits = [
        fit_stage(prepared, labels, t, k, grid, n, oof_folds, seed=seed, stage=i)
        for i, (t, k) in enumerate(zip(plan.stage_times_s, plan.ks))
    ]
    model = ForefrontModel(
        stages=tuple(f.stage_model() for f in fits),
        plan=plan,
        classes=tuple(int(c) for c in np.unique(labels)),
        n_channels=prepared[0][0].n_channels,
        prep=prep,
        fallback=fallback,
        class_names=tuple(dataset.class_names),
    )
    return (model, fits) if return_fits else model


def classify_stream(model: ForefrontModel, series: RawSeries, onset: Optional[int] = None) -> DecisionTrace:
    """Replay a series through the cascade, stage by stage.

    Stages whose prefix is not yet available are skipped. Raises
    NoDecisionError when no onset is found or the first prefix is unavailable.
    """
    if onset is None:
        series, onset = prepare(series, model.prep)
        if onset is None:
            raise NoDecisionError("no onset detected in series")
    elif not isinstance(series, Series):
        series = downsample(series, model.prep.downsample)
    if series.n_channels != model.n_channels:
        raise InvalidArgument(f"series has {series.n_channels} channels, model expects {model.n_channels}")
    steps: List[Tuple[float, Decision]] = []
    last = None
    for st in model.stages:
        try:
            x = st.features(series, onset)
        except PrefixUnavailable:
            if last is None:
                raise NoDecisionError(
                    f"series too short for the first stage ({st.time_s:g} s after onset)"
                ) from None
            continue
        last = st
        decision = agreement_decide(st.pair, x)
        steps.append((st.time_s, decision))
        if decision.accepted:
            return DecisionTrace(steps, decision.label, st.time_s, False, onset)
    if model.fallback == "forced":
        x = last.features(series, onset)
        label = int(last.pair.stronger().predict(x))
        return DecisionTrace(steps, label, None, True, onset)
    return DecisionTrace(steps, None, None, False, onset)


def cascade_cost(trace: DecisionTrace, truth: int, d: Union[float, Sequence[float]]) -> float:
    """``d`` per reject plus 1 if an emitted label is wrong.

    ``d`` may be a per-stage sequence aligned with the trace steps.
    """
    if np.ndim(d) == 0:
        cost = float(d) * trace.n_rejects
    else:
        d = list(d)
        cost = sum(d[i] for i, (_, dec) in enumerate(trace.steps) if not dec.accepted)
    if trace.label is not None and trace.label != truth:
        cost += 1.0
    return cost


def write_traces(traces: Sequence[Tuple[str, DecisionTrace]], path) -> Path:
    """CSV with one row per visited stage; a forced fallback adds a final row and
    a series that reached no stage gets a single ``none`` row."""
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_HEADER)
            for sid, tr in traces:
                if not tr.steps and not tr.forced:
                    w.writerow([sid, "", "none", "", 0])
                for t, dec in tr.steps:
                    w.writerow([sid, f"{t:g}", "accept" if dec.accepted else "reject",
                                "" if dec.label is None else dec.label, 0])
                if tr.forced:
                    w.writerow([sid, f"{tr.earliness_s():g}", "forced", tr.label, 1])
    except OSError as exc:
        raise DatasetIOError(f"cannot write traces to {path}: {exc}") from exc
    return path


def _member_meta(m: TrainedClassifier) -> dict:
    return {"grid_index": m.grid_index, "accuracy": m.accuracy}


def save_bundle(model: ForefrontModel, path) -> Path:
    """Write every stage (stats + both pair members) to one ``.npz`` file."""
    path = Path(path)
    header = {
        "format": BUNDLE_FORMAT,
        "version": BUNDLE_VERSION,
        "stage_times_s": list(model.plan.stage_times_s),
        "effective_rate_hz": model.plan.effective_rate_hz,
        "classes": list(model.classes),
        "n_channels": model.n_channels,
        "fallback": model.fallback,
        "class_names": list(model.class_names),
        "downsample": model.prep.downsample,
        "onset": {"window": model.prep.onset.window, "factor": model.prep.onset.factor,
                  "baseline_len": model.prep.onset.baseline_len},
        "stages": [
            {"k": st.k, "df": st.pair.df, "first": _member_meta(st.pair.first),
             "second": _member_meta(st.pair.second)}
            for st in model.stages
        ],
    }
    arrays = {"header": np.array(json.dumps(header))}
    for i, st in enumerate(model.stages):
        arrays[f"s{i}_mean"] = st.stats.mean
        arrays[f"s{i}_std"] = st.stats.std
        arrays.update(model_arrays(st.pair.first.model, f"s{i}_a_"))
        arrays.update(model_arrays(st.pair.second.model, f"s{i}_b_"))
    try:
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)
    except OSError as exc:
        raise DatasetIOError(f"cannot write model bundle {path}: {exc}") from exc
    return path


def load_bundle(path) -> ForefrontModel:
    path = Path(path)
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise DatasetIOError(f"cannot read model bundle {path}: {exc}") from exc
    with data:
        if "header" not in data.files:
            raise DataFormatError(f"{path}: not a model bundle")
        header = check_header(data, BUNDLE_FORMAT, BUNDLE_VERSION, json.loads(str(data["header"])))
        arrays = {k: data[k] for k in data.files}
    plan = StagePlan(tuple(header["stage_times_s"]), header["effective_rate_hz"])
    prep = Preprocess(header["downsample"], OnsetConfig(**header["onset"]))
    stages = []
    for i, (t, meta) in enumerate(zip(plan.stage_times_s, header["stages"])):
        members = []
        for tag, key in (("a", "first"), ("b", "second")):
            mdl = model_from_arrays(arrays, f"s{i}_{tag}_")
            info = meta[key]
            members.append(TrainedClassifier(mdl, mdl.params, info["grid_index"], None, info["accuracy"]))
        pair = ClassifierPair(members[0], members[1], meta["df"], stage=i)
        stats = NormStats(arrays[f"s{i}_mean"], arrays[f"s{i}_std"])
        stages.append(StageModel(t, meta["k"], stats, pair))
    return ForefrontModel(
        stages=tuple(stages), plan=plan, classes=tuple(header["classes"]),
        n_channels=header["n_channels"], prep=prep, fallback=header["fallback"],
        class_names=tuple(header.get("class_names", ())),
    )
