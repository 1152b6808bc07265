"""Synthetic gas-plume recordings and CSV ingestion of real ones.

Each synthetic response is a per-channel saturating exponential that starts
when the plume reaches the sensor module, scaled down with location index
(further from the source), on top of a random sensor baseline and AR(1)
noise standing in for turbulence.

On-disk layout written by :func:`write_csv_dataset`::

    manifest.csv          # '#' header lines, then relative_path,label,location
    series_00000.csv      # t,ch0,...,ch{n-1}
"""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
from scipy.signal import lfilter

from forefront.errors import DataFormatError, DatasetIOError, InvalidArgument
from forefront.signal import RawSeries

log = logging.getLogger(__name__)

GAS_NAMES = (
    "carbon_monoxide",
    "ammonia",
    "methane",
    "acetaldehyde",
    "benzene",
    "butanol",
    "ethylene",
    "methanol",
    "toluene",
    "acetone",
)

MANIFEST_NAME = "manifest.csv"
MANIFEST_MAGIC = "# forefront-manifest v1"


def class_names_for(n_classes: int) -> List[str]:
    names = list(GAS_NAMES[:n_classes])
    names += [f"gas_{i}" for i in range(len(names), n_classes)]
    return names


@dataclass(frozen=True)
class GenConfig:
    n_classes: int = 10
    n_channels: int = 8
    n_locations: int = 45
    series_per_class_location: int = 1
    duration_s: float = 180.0
    rate_hz: float = 100.0
    noise_ar: float = 0.95
    noise_amp: float = 0.04
    seed: int = 0
    # plume release time and per-location transport delay
    release_s: float = 6.0
    delay_per_location_s: float = 0.05
    arrival_jitter_s: float = 2.0
    # class signatures: a shared base pattern drawn from these ranges, then
    # perturbed per class by up to +/- class_spread (relative)
    amp_range: tuple = (1.0, 3.0)
    tau_range_s: tuple = (1.0, 4.0)
    t0_range_s: tuple = (0.0, 1.5)
    class_spread: float = 0.05
    # amplitude multiplier at the farthest location (nearest is 1)
    min_locscale: float = 0.25
    baseline_range: tuple = (1.0, 3.0)

    def __post_init__(self):
        if self.n_classes < 2:
            raise InvalidArgument("n_classes must be >= 2")
        if self.n_channels < 1 or self.n_locations < 1 or self.series_per_class_location < 1:
            raise InvalidArgument("channel, location and per-cell counts must be >= 1")
        if self.rate_hz <= 0 or self.duration_s <= 0:
            raise InvalidArgument("rate_hz and duration_s must be positive")
        if self.duration_s * self.rate_hz < 600:
            raise InvalidArgument("duration_s * rate_hz must be >= 600 samples")
        if not 0 <= self.noise_ar < 1:
            raise InvalidArgument("noise_ar must lie in [0, 1)")
        if self.noise_amp < 0:
            raise InvalidArgument("noise_amp must be non-negative")
        if not 0 <= self.class_spread < 1:
            raise InvalidArgument("class_spread must lie in [0, 1)")
        if not 0 < self.min_locscale <= 1:
            raise InvalidArgument("min_locscale must lie in (0, 1]")
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidArgument("seed must be an unsigned 64-bit integer")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.rate_hz))


@dataclass(frozen=True, eq=False)
class ClassSignature:
    """Per (class, channel) response shape."""

    amplitude: np.ndarray  # (n_classes, n_channels)
    tau_s: np.ndarray
    t0_s: np.ndarray

    def __post_init__(self):
        if np.any(self.amplitude < 0) or np.any(self.tau_s <= 0):
            raise InvalidArgument("amplitudes must be >= 0 and time constants > 0")


@dataclass(eq=False)
class Dataset:
    items: List[RawSeries]
    class_names: List[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.items)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.items], dtype=np.int64)

    @property
    def locations(self) -> np.ndarray:
        return np.array([-1 if s.location is None else s.location for s in self.items])

    @property
    def n_channels(self) -> int:
        return self.items[0].n_channels

    def validate(self) -> "Dataset":
        if not self.items:
            raise InvalidArgument("dataset is empty")
        n_ch = self.items[0].n_channels
        for i, s in enumerate(self.items):
            if s.label is None:
                raise InvalidArgument(f"item {i} is unlabeled")
            if s.n_channels != n_ch:
                raise InvalidArgument(f"item {i} has {s.n_channels} channels, expected {n_ch}")
            if self.class_names and not 0 <= s.label < len(self.class_names):
                raise InvalidArgument(f"item {i} label {s.label} outside class list")
        if np.unique(self.labels).size < 2:
            raise InvalidArgument("dataset must contain at least 2 classes")
        return self

    def subset(self, index) -> "Dataset":
        return Dataset([self.items[i] for i in index], list(self.class_names))


def class_signatures(cfg: GenConfig) -> ClassSignature:
    rng = np.random.default_rng([cfg.seed, 0x5161])
    shape = (cfg.n_classes, cfg.n_channels)
    base_amp = rng.uniform(*cfg.amp_range, size=cfg.n_channels)
    base_tau = rng.uniform(*cfg.tau_range_s, size=cfg.n_channels)
    spread = cfg.class_spread
    return ClassSignature(
        amplitude=base_amp * (1 + spread * rng.uniform(-1, 1, size=shape)),
        tau_s=base_tau * (1 + spread * rng.uniform(-1, 1, size=shape)),
        t0_s=rng.uniform(*cfg.t0_range_s, size=shape),
    )


def locscale(location: int, cfg: GenConfig) -> float:
    if cfg.n_locations == 1:
        return 1.0
    return 1.0 - (1.0 - cfg.min_locscale) * location / (cfg.n_locations - 1)


def _one_series(cfg: GenConfig, sig: ClassSignature, c: int, loc: int, rep: int) -> RawSeries:
    # each (class, location, repetition) cell owns its own stream
    rng = np.random.default_rng([cfg.seed, c, loc, rep])
    t = np.arange(cfg.n_samples) / cfg.rate_hz
    arrival = cfg.release_s + cfg.delay_per_location_s * loc + rng.uniform(0, cfg.arrival_jitter_s)
    baseline = rng.uniform(*cfg.baseline_range, size=(cfg.n_channels, 1))
    start = arrival + sig.t0_s[c][:, None]
    lag = np.clip(t[None, :] - start, 0.0, None)
    rise = sig.amplitude[c][:, None] * -np.expm1(-lag / sig.tau_s[c][:, None])
    data = baseline + locscale(loc, cfg) * rise
    if cfg.noise_amp > 0:
        white = rng.standard_normal((cfg.n_channels, cfg.n_samples))
        gain = cfg.noise_amp * np.sqrt(1.0 - cfg.noise_ar ** 2)
        data = data + lfilter([gain], [1.0, -cfg.noise_ar], white, axis=1)
    return RawSeries(channels=data, sample_rate_hz=cfg.rate_hz, label=c, location=loc)


def generate_dataset(cfg: GenConfig = GenConfig()) -> Dataset:
    """Deterministic dataset of ``n_classes * n_locations * series_per_class_location`` items."""
    sig = class_signatures(cfg)
    items = [
        _one_series(cfg, sig, c, loc, rep)
        for c in range(cfg.n_classes)
        for loc in range(cfg.n_locations)
        for rep in range(cfg.series_per_class_location)
    ]
    return Dataset(items=items, class_names=class_names_for(cfg.n_classes))


def write_csv_dataset(dataset: Dataset, dir_path) -> Path:
    """Write one CSV per series plus ``manifest.csv``; values use 9 significant digits."""
    if len(dataset) == 0:
        raise InvalidArgument("refusing to write an empty dataset")
    dataset.validate()
    out = Path(dir_path)
    names = dataset.class_names or class_names_for(int(dataset.labels.max()) + 1)
    rates = {s.sample_rate_hz for s in dataset.items}
    if len(rates) != 1:
        raise InvalidArgument("all series must share one sample rate")
    rate = rates.pop()
    n_ch = dataset.n_channels
    header = "t," + ",".join(f"ch{i}" for i in range(n_ch))
    try:
        out.mkdir(parents=True, exist_ok=True)
        rows = []
        for i, s in enumerate(dataset.items):
            rel = f"series_{i:05d}.csv"
            t = np.arange(len(s)) / rate
            table = np.column_stack([t, s.channels.T])
            np.savetxt(out / rel, table, fmt="%.9g", delimiter=",", header=header, comments="")
            loc = "" if s.location is None else str(s.location)
            rows.append((rel, names[s.label], loc))
        manifest = out / MANIFEST_NAME
        with open(manifest, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"{MANIFEST_MAGIC}\n")
            fh.write(f"# channels: {n_ch}\n")
            fh.write(f"# rate_hz: {rate!r}\n")
            fh.write(f"# classes: {';'.join(names)}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["relative_path", "label", "location"])
            w.writerows(rows)
    except OSError as exc:
        raise DatasetIOError(f"cannot write dataset to {out}: {exc}") from exc
    return manifest


def _read_manifest(path: Path):
    meta = {}
    records = []
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DatasetIOError(f"cannot read manifest {path}: {exc}") from exc
    body = []
    for line in lines:
        if line.startswith("#"):
            key, sep, value = line[1:].partition(":")
            if sep:
                meta[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    reader = csv.reader(body)
    head = next(reader, None)
    if head != ["relative_path", "label", "location"]:
        raise DataFormatError(f"{path}: manifest header must be relative_path,label,location")
    for lineno, row in enumerate(reader, start=2):
        if len(row) != 3:
            raise DataFormatError(f"{path}: manifest record {lineno} has {len(row)} fields")
        records.append(row)
    return meta, records


def _parse_series_csv(path: Path, n_channels: int) -> np.ndarray:
    expected = n_channels + 1
    try:
        with open(path, encoding="utf-8") as fh:
            head = fh.readline().strip().split(",")
            if len(head) != expected:
                raise DataFormatError(
                    f"{path}: header has {len(head)} columns, manifest declares {n_channels} channels + time"
                )
            text = fh.read()
    except FileNotFoundError:
        raise DatasetIOError(f"series file not found: {path}") from None
    except OSError as exc:
        raise DatasetIOError(f"cannot read {path}: {exc}") from exc
    try:
        table = np.loadtxt(text.splitlines(), delimiter=",", ndmin=2)
    except ValueError:
        table = None
    if table is None or table.shape[1] != expected:
        for rowno, line in enumerate(text.splitlines(), start=2):
            fields = line.split(",")
            if len(fields) != expected:
                raise DataFormatError(
                    f"{path}: row {rowno} has {len(fields)} columns, expected {expected}"
                )
            try:
                [float(v) for v in fields]
            except ValueError:
                raise DataFormatError(f"{path}: row {rowno} holds a non-numeric value") from None
        raise DataFormatError(f"{path}: unreadable table")
    if table.shape[0] == 0:
        raise DataFormatError(f"{path}: no samples")
    return table


def load_series_csv(path, n_channels: Optional[int] = None, rate_hz: Optional[float] = None) -> RawSeries:
    """Read one series CSV; the rate is inferred from the time column unless given."""
    path = Path(path)
    if n_channels is None:
        try:
            with open(path, encoding="utf-8") as fh:
                n_channels = len(fh.readline().strip().split(",")) - 1
        except OSError as exc:
            raise DatasetIOError(f"cannot read {path}: {exc}") from exc
    table = _parse_series_csv(path, n_channels)
    if rate_hz is None:
        if table.shape[0] < 2:
            raise DataFormatError(f"{path}: cannot infer sample rate from one row")
        rate_hz = 1.0 / float(np.median(np.diff(table[:, 0])))
    return RawSeries(channels=table[:, 1:].T.copy(), sample_rate_hz=float(rate_hz))


def load_csv_dataset(manifest_path) -> Dataset:
    manifest_path = Path(manifest_path)
    meta, records = _read_manifest(manifest_path)
    if not records:
        raise InvalidArgument(f"{manifest_path}: manifest lists no series (empty dataset)")
    try:
        n_ch = int(meta["channels"])
        rate = float(meta["rate_hz"])
        names = [n for n in meta["classes"].split(";") if n]
    except (KeyError, ValueError) as exc:
        raise DataFormatError(f"{manifest_path}: bad or missing header field {exc}") from None
    lookup = {n: i for i, n in enumerate(names)}
    base = manifest_path.parent
    items = []
    for lineno, (rel, label, loc) in enumerate(records, start=2):
        if label not in lookup:
            raise DataFormatError(f"{manifest_path}: record {lineno} has unknown label {label!r}")
        try:
            location = int(loc) if loc.strip() else None
        except ValueError:
            raise DataFormatError(f"{manifest_path}: record {lineno} has bad location {loc!r}") from None
        table = _parse_series_csv(base / rel, n_ch)
        items.append(
            RawSeries(channels=table[:, 1:].T.copy(), sample_rate_hz=rate, label=lookup[label], location=location)
        )
    return Dataset(items=items, class_names=names)


def config_dict(cfg: GenConfig) -> dict:
    return asdict(cfg)
