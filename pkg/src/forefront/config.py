"""Run configuration: one YAML file, every key optional, unknown keys rejected.

Layout (defaults shown)::

    seed: 0                   # generator, fold assignment and pool folds
    gen:                      # any GenConfig field
      n_classes: 10
      n_locations: 45
      duration_s: 180.0
      noise_amp: 0.04
    stages:
      times_s: [5, 10, 15, 20, 25, 30]
      effective_rate_hz: 10.0
    preprocess:
      downsample: 10
      onset_window: 20
      onset_factor: 5.0
      onset_baseline_len: 50
    grid:
      log2_min: -5
      log2_max: 5
      step: 1
      tol: 0.001
      max_passes: 10
    ensemble:
      n: 5
      oof_folds: 5
    reject:
      tau: 0.5
      tau_sweep: [0.3, 0.5, 0.7, 0.9]
      d: 0.1
    cascade:
      fallback: forced        # or "reject"
    eval:
      k_folds: 10
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

import yaml

from forefront.cascade import FALLBACKS, Preprocess, StagePlan
from forefront.datagen import GenConfig
from forefront.errors import DatasetIOError, ForefrontError
from forefront.evaluate import EvalConfig
from forefront.learners.pool import default_grid
from forefront.signal import OnsetConfig


class ConfigError(ForefrontError, ValueError):
    """Malformed or unknown configuration entry."""


@dataclass(frozen=True)
class StagesSection:
    times_s: Tuple[float, ...] = (5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    effective_rate_hz: float = 10.0


@dataclass(frozen=True)
class PreprocessSection:
    downsample: int = 10
    onset_window: int = 20
    onset_factor: float = 5.0
    onset_baseline_len: int = 50


@dataclass(frozen=True)
class GridSection:
    log2_min: int = -5
    log2_max: int = 5
    step: int = 1
    tol: float = 1e-3
    max_passes: int = 10


@dataclass(frozen=True)
class EnsembleSection:
    n: int = 5
    oof_folds: int = 5


@dataclass(frozen=True)
class RejectSection:
    tau: float = 0.5
    tau_sweep: Tuple[float, ...] = (0.3, 0.5, 0.7, 0.9)
    d: float = 0.1


@dataclass(frozen=True)
class CascadeSection:
    fallback: str = "forced"


@dataclass(frozen=True)
class EvalSection:
    k_folds: int = 10


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    gen: Dict[str, Any] = field(default_factory=dict)
    stages: StagesSection = StagesSection()
    preprocess: PreprocessSection = PreprocessSection()
    grid: GridSection = GridSection()
    ensemble: EnsembleSection = EnsembleSection()
    reject: RejectSection = RejectSection()
    cascade: CascadeSection = CascadeSection()
    eval: EvalSection = EvalSection()

    def gen_config(self) -> GenConfig:
        return _build(GenConfig, {**self.gen, "seed": self.seed}, "gen")

    def plan(self) -> StagePlan:
        return _build(StagePlan, {"stage_times_s": self.stages.times_s,
                                  "effective_rate_hz": self.stages.effective_rate_hz}, "stages")

    def prep(self) -> Preprocess:
        p = self.preprocess
        onset = _build(OnsetConfig, {"window": p.onset_window, "factor": p.onset_factor,
                                     "baseline_len": p.onset_baseline_len}, "preprocess")
        return Preprocess(downsample=p.downsample, onset=onset)

    def svm_grid(self):
        g = self.grid
        return _call(default_grid, "grid", g.log2_min, g.log2_max, g.step, g.tol, g.max_passes)

    def eval_config(self) -> EvalConfig:
        return EvalConfig(
            grid=tuple(self.svm_grid()), n=self.ensemble.n, oof_folds=self.ensemble.oof_folds,
            tau=self.reject.tau, tau_sweep=self.reject.tau_sweep, d=self.reject.d,
            prep=self.prep(), fallback=self.cascade.fallback, seed=self.seed,
        )

    def validate(self) -> "RunConfig":
        """Build every derived object once so bad values fail before any work."""
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed: must be an unsigned 64-bit integer")
        self.gen_config()
        self.plan()
        self.prep()
        self.svm_grid()
        if self.ensemble.n < 2:
            raise ConfigError("ensemble.n: must be >= 2")
        if self.ensemble.oof_folds < 2:
            raise ConfigError("ensemble.oof_folds: must be >= 2")
        if not 0 <= self.reject.tau < 1:
            raise ConfigError("reject.tau: must lie in [0, 1)")
        if any(not 0 <= t < 1 for t in self.reject.tau_sweep):
            raise ConfigError("reject.tau_sweep: values must lie in [0, 1)")
        if not 0 <= self.reject.d <= 0.5:
            raise ConfigError("reject.d: must lie in [0, 0.5]")
        if self.cascade.fallback not in FALLBACKS:
            raise ConfigError(f"cascade.fallback: must be one of {FALLBACKS}")
        if self.eval.k_folds < 1:
            raise ConfigError("eval.k_folds: must be >= 1")
        return self


_SECTIONS = {f.name: f.type for f in fields(RunConfig)}
_SECTION_TYPES = {
    "stages": StagesSection, "preprocess": PreprocessSection, "grid": GridSection,
    "ensemble": EnsembleSection, "reject": RejectSection, "cascade": CascadeSection,
    "eval": EvalSection,
}
_GEN_KEYS = {f.name for f in fields(GenConfig)} - {"seed"}


def _build(cls, kwargs, where):
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _call(fn, where, *args):
    try:
        return fn(*args)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _coerce(value, default, key):
    """Match the default's type; lists become tuples."""
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key}: expected a list")
        return tuple(_coerce(v, default[0] if default else 0.0, key) for v in value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string")
        return value
    return value


def _section(cls, raw, name):
    if not isinstance(raw, Mapping):
        raise ConfigError(f"{name}: expected a mapping")
    defaults = cls()
    known = {f.name for f in fields(cls)}
    values = {}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"unknown config key {name}.{key}")
        values[key] = _coerce(value, getattr(defaults, key), f"{name}.{key}")
    return dataclasses.replace(defaults, **values)


def _gen_section(raw):
    if not isinstance(raw, Mapping):
        raise ConfigError("gen: expected a mapping")
    defaults = GenConfig()
    out = {}
    for key, value in raw.items():
        if key not in _GEN_KEYS:
            raise ConfigError(f"unknown config key gen.{key}")
        out[key] = _coerce(value, getattr(defaults, key), f"gen.{key}")
    return out


def parse_config(raw: Optional[Mapping]) -> RunConfig:
    raw = {} if raw is None else raw
    if not isinstance(raw, Mapping):
        raise ConfigError("config root must be a mapping")
    values: Dict[str, Any] = {}
    for key, value in raw.items():
        if key not in _SECTIONS:
            raise ConfigError(f"unknown config key {key}")
        if key == "seed":
            values["seed"] = _coerce(value, 0, "seed")
        elif key == "gen":
            values["gen"] = _gen_section(value)
        else:
            values[key] = _section(_SECTION_TYPES[key], value, key)
    return RunConfig(**values).validate()


def load_config(path=None, seed: Optional[int] = None) -> RunConfig:
    """Read and validate a YAML config; ``seed`` (a command-line flag) wins over the file."""
    raw = None
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise DatasetIOError(f"cannot read config {path}: {exc}") from exc
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    cfg = parse_config(raw)
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed).validate()
    return cfg


def config_to_dict(cfg: RunConfig) -> dict:
    """Plain-data view, suitable for ``yaml.safe_dump``."""
    out = dataclasses.asdict(cfg)
    for name, section in out.items():
        if isinstance(section, dict):
            out[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in section.items()}
    return out
