"""``forefront`` command line: gen, train, eval, stream, report.

Exit codes: 0 ok, 2 config, 3 io, 4 training, 5 data.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import yaml

from forefront.cascade import classify_stream, load_bundle, save_bundle, train_forefront
from forefront.config import ConfigError, RunConfig, config_to_dict, load_config
from forefront.datagen import generate_dataset, load_csv_dataset, load_series_csv, write_csv_dataset
from forefront.errors import (
    DataFormatError,
    DatasetIOError,
    EmptySeriesError,
    ForefrontError,
    InvalidArgument,
    NoDecisionError,
)
from forefront.evaluate import (
    REPORT_HEADER,
    evaluate_methods,
    location_accuracy_surface,
    stratified_kfold,
    write_location_csv,
)

log = logging.getLogger("forefront")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_TRAIN = 4
EXIT_DATA = 5


class CliFailure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _out_dir(args, default: str) -> Path:
    out = Path(args.out or default)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliFailure(EXIT_IO, f"cannot create output directory {out}: {exc}")
    return out


def _load_dataset(manifest):
    try:
        return load_csv_dataset(manifest)
    except DatasetIOError as exc:
        raise CliFailure(EXIT_IO, str(exc))
    except (DataFormatError, InvalidArgument) as exc:
        raise CliFailure(EXIT_DATA, str(exc))


def cmd_gen(cfg: RunConfig, out_dir: Path) -> Path:
    gen = cfg.gen_config()
    ds = generate_dataset(gen)
    try:
        manifest = write_csv_dataset(ds, out_dir)
    except DatasetIOError as exc:
        raise CliFailure(EXIT_IO, str(exc))
    counts = np.bincount(ds.labels, minlength=gen.n_classes)
    print(f"generated {len(ds)} series: {gen.n_classes} classes x {gen.n_locations} locations "
          f"x {gen.series_per_class_location}, {gen.n_channels} channels, "
          f"{gen.duration_s:g} s at {gen.rate_hz:g} Hz, seed {gen.seed}")
    for name, n in zip(ds.class_names, counts):
        print(f"  {name}: {n}")
    print(f"manifest: {manifest}")
    return manifest


def cmd_train(cfg: RunConfig, manifest, model_out: Path) -> Path:
    ds = _load_dataset(manifest)
    try:
        model = train_forefront(
            ds, cfg.plan(), cfg.svm_grid(), cfg.ensemble.n, cfg.ensemble.oof_folds,
            cfg.prep(), cfg.cascade.fallback, seed=cfg.seed,
        )
    except (InvalidArgument, ForefrontError) as exc:
        raise CliFailure(EXIT_TRAIN, f"training failed: {exc}")
    for st in model.stages:
        p = st.pair
        print(f"stage {st.time_s:g}s k={st.k}: {p.first.name} + {p.second.name} DF={p.df:.4f}")
    try:
        path = save_bundle(model, model_out)
    except DatasetIOError as exc:
        raise CliFailure(EXIT_IO, str(exc))
    print(f"model: {path}")
    return path


def cmd_eval(cfg: RunConfig, manifest, out_dir: Path) -> List[Path]:
    ds = _load_dataset(manifest)
    try:
        folds = stratified_kfold(ds, cfg.eval.k_folds, cfg.seed)
    except InvalidArgument as exc:
        raise CliFailure(EXIT_CONFIG, f"eval.k_folds: {exc}")
    try:
        report = evaluate_methods(ds, cfg.plan(), folds, cfg.eval_config())
    except (InvalidArgument, ForefrontError) as exc:
        raise CliFailure(EXIT_TRAIN, f"evaluation failed: {exc}")
    try:
        paths = [
            report.write_csv(out_dir / "report.csv"),
            report.write_counts_csv(out_dir / "counts.csv"),
            report.write_traces_csv(out_dir / "traces.csv"),
        ]
        if all(s.location is not None for s in ds.items):
            rows = location_accuracy_surface(ds, "forefront", report)
            paths.append(write_location_csv(rows, out_dir / "locations_forefront.csv"))
            rows = location_accuracy_surface(ds, "svm", report)
            paths.append(write_location_csv(rows, out_dir / "locations_svm.csv"))
        with open(out_dir / "config.yaml", "w", encoding="utf-8") as fh:
            yaml.safe_dump(config_to_dict(cfg), fh, sort_keys=True)
    except (DatasetIOError, OSError) as exc:
        raise CliFailure(EXIT_IO, str(exc))
    print_report(out_dir / "report.csv")
    return paths


def cmd_stream(cfg: RunConfig, model_path, series_csv, fallback: Optional[str] = None) -> int:
    try:
        model = load_bundle(model_path)
    except DatasetIOError as exc:
        raise CliFailure(EXIT_IO, str(exc))
    except DataFormatError as exc:
        raise CliFailure(EXIT_DATA, str(exc))
    if fallback:
        model = model.with_fallback(fallback)
    try:
        series = load_series_csv(series_csv, n_channels=model.n_channels)
    except DatasetIOError as exc:
        raise CliFailure(EXIT_IO, str(exc))
    except DataFormatError as exc:
        raise CliFailure(EXIT_DATA, str(exc))
    try:
        trace = classify_stream(model, series)
    except (NoDecisionError, EmptySeriesError, InvalidArgument) as exc:
        raise CliFailure(EXIT_DATA, str(exc))
    for t, dec in trace.steps:
        verdict = f"ACCEPT {model.label_name(dec.label)}" if dec.accepted else "REJECT"
        print(f"stage {t:g}s: {verdict}")
    if trace.accepted:
        print(f"label={model.label_name(trace.label)} decided_at={trace.decided_at_s:g}s")
    elif trace.forced:
        print(f"label={model.label_name(trace.label)} FORCED at={trace.earliness_s():g}s")
    else:
        print("REJECT")
    return EXIT_OK


def print_report(path) -> None:
    """Aligned table of conditional accuracy, plus the stage-wise comparison."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise CliFailure(EXIT_IO, f"cannot read report {path}: {exc}")
    if not rows or list(rows[0].keys()) != REPORT_HEADER:
        raise CliFailure(EXIT_DATA, f"{path}: not a report CSV")
    stages = list(dict.fromkeys(r["stage_s"] for r in rows))
    methods = list(dict.fromkeys(r["method"] for r in rows))
    cell = {(r["method"], r["stage_s"]): r for r in rows}
    width = max(len(m) for m in methods) + 2
    print("cond_accuracy / coverage".ljust(width) + "".join(f"{s + 's':>16}" for s in stages))
    for m in methods:
        line = m.ljust(width)
        for s in stages:
            r = cell.get((m, s))
            line += f"{'':>16}" if r is None else f"{float(r['cond_accuracy']):>8.4f}/{float(r['coverage']):<7.3f}"
        print(line)
    if "forefront" in methods and "cwro" in methods:
        wins = sum(
            float(cell[("forefront", s)]["cond_accuracy"]) >= float(cell[("cwro", s)]["cond_accuracy"])
            for s in stages if ("forefront", s) in cell and ("cwro", s) in cell
        )
        print(f"forefront >= cwro at {wins} of {len(stages)} stages")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = argparse.ArgumentParser(prog="forefront", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("gen", parents=[common], help="write a synthetic dataset")
    tr = sub.add_parser("train", parents=[common], help="train the staged cascade")
    tr.add_argument("manifest")
    tr.add_argument("--model-out", help="bundle path (default <out>/model.npz)")
    ev = sub.add_parser("eval", parents=[common], help="cross-validated comparison report")
    ev.add_argument("manifest")
    st = sub.add_parser("stream", parents=[common], help="replay one series through a model")
    st.add_argument("model")
    st.add_argument("series")
    st.add_argument("--fallback", choices=["forced", "reject"], help="override the model's policy")
    rp = sub.add_parser("report", parents=[common], help="print a report CSV as a table")
    rp.add_argument("report_csv")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr,
    )
    try:
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise CliFailure(EXIT_CONFIG, "--seed must be an unsigned 64-bit integer")
        try:
            cfg = load_config(args.config, args.seed)
        except ConfigError as exc:
            raise CliFailure(EXIT_CONFIG, f"config error: {exc}")
        except DatasetIOError as exc:
            raise CliFailure(EXIT_IO, str(exc))
        if args.command == "gen":
            cmd_gen(cfg, _out_dir(args, "data"))
        elif args.command == "train":
            out = Path(args.model_out) if args.model_out else _out_dir(args, "run") / "model.npz"
            cmd_train(cfg, args.manifest, out)
        elif args.command == "eval":
            cmd_eval(cfg, args.manifest, _out_dir(args, "run"))
        elif args.command == "stream":
            cmd_stream(cfg, args.model, args.series, args.fallback)
        elif args.command == "report":
            print_report(args.report_csv)
    except CliFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
