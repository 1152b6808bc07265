import csv
import shutil
from pathlib import Path

import numpy as np
import pytest

from forefront.cascade import ForefrontModel, StageModel, StagePlan, load_bundle, prepare, save_bundle
from forefront.cli import main
from forefront.config import ConfigError, RunConfig, load_config, parse_config
from forefront.datagen import load_csv_dataset
from forefront.ensemble import ClassifierPair
from forefront.evaluate import REPORT_HEADER
from forefront.learners import SvmParams, TrainedClassifier, train_svm
from forefront.signal import extract_prefix_features

GOLDEN = Path(__file__).parent / "golden"
SMALL = GOLDEN / "small.yaml"


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["gen", "--config", str(SMALL), "--out", str(root / "data")]) == 0
    assert main(["train", "--config", str(SMALL), "--out", str(root / "run"),
                 str(root / "data" / "manifest.csv")]) == 0
    return root


def test_config_defaults():
    cfg = load_config()
    assert cfg.gen_config().n_classes == 10
    assert cfg.plan().ks == [50, 100, 150, 200, 250, 300]
    assert len(cfg.svm_grid()) == 121
    assert cfg.eval.k_folds == 10 and cfg.reject.tau == 0.5 and cfg.reject.d == 0.1


def test_config_unknown_keys():
    with pytest.raises(ConfigError, match="bogus"):
        parse_config({"bogus": 1})
    with pytest.raises(ConfigError, match="reject.tauu"):
        parse_config({"reject": {"tauu": 0.5}})
    with pytest.raises(ConfigError, match="gen.colour"):
        parse_config({"gen": {"colour": 1}})


def test_config_bad_values():
    with pytest.raises(ConfigError):
        parse_config({"reject": {"d": 0.7}})
    with pytest.raises(ConfigError):
        parse_config({"stages": {"times_s": [10, 5]}})
    with pytest.raises(ConfigError):
        parse_config({"gen": {"n_classes": 1}})
    with pytest.raises(ConfigError):
        parse_config({"ensemble": {"n": "five"}})


def test_seed_flag_wins(tmp_path):
    assert load_config(SMALL).seed == 3
    assert load_config(SMALL, seed=11).gen_config().seed == 11


def test_gen_summary(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("gen:\n  duration_s: 6\n  n_locations: 2\n")
    assert main(["gen", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 0
    out = capsys.readouterr().out
    assert "10 classes" in out and "manifest:" in out
    assert len(load_csv_dataset(tmp_path / "d" / "manifest.csv").class_names) == 10


def test_bad_key_exit_2(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("gen:\n  wobble: 3\n")
    assert main(["gen", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "wobble" in capsys.readouterr().err


def test_unwritable_dir_exit_3(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["gen", "--config", str(SMALL), "--out", str(blocker / "sub")]) == 3


def test_missing_config_exit_3(tmp_path):
    assert main(["gen", "--config", str(tmp_path / "nope.yaml")]) == 3


def test_usage_error_exit_2():
    assert main(["frobnicate"]) == 2


def test_train_logs_stages_and_round_trips(workspace, capsys):
    model = load_bundle(workspace / "run" / "model.npz")
    assert len(model.stages) == 2
    ds = load_csv_dataset(workspace / "data" / "manifest.csv")
    again = workspace / "again.npz"
    assert main(["train", "--config", str(SMALL), "--model-out", str(again),
                 str(workspace / "data" / "manifest.csv")]) == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l.startswith("stage ")]
    assert len(lines) == 2 and all("DF=" in l for l in lines)
    other = load_bundle(again)
    for item in ds.items:
        s, onset = prepare(item, model.prep)
        if onset is None:
            continue
        for a, b in zip(model.stages, other.stages):
            x = a.features(s, onset)
            assert a.pair.first.predict(x) == b.pair.first.predict(x)
            assert a.pair.second.predict(x) == b.pair.second.predict(x)


def test_default_plan_logs_six_stages(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("seed: 1\ngen: {n_classes: 2, n_locations: 6, duration_s: 45}\n"
                   "grid: {log2_min: -1, log2_max: 1, step: 2}\nensemble: {n: 2, oof_folds: 3}\n")
    assert main(["gen", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 0
    capsys.readouterr()
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "r"),
                 str(tmp_path / "d" / "manifest.csv")]) == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l.startswith("stage ")]
    assert [l.split()[1] for l in lines] == ["5s", "10s", "15s", "20s", "25s", "30s"]


def test_one_class_training_exit_4(workspace, tmp_path):
    data = tmp_path / "one"
    shutil.copytree(workspace / "data", data)
    manifest = data / "manifest.csv"
    lines = manifest.read_text().splitlines()
    keep = [l for l in lines if l.startswith("#") or l.startswith("relative_path") or ",carbon_monoxide," in l]
    manifest.write_text("\n".join(keep) + "\n")
    assert main(["train", "--config", str(SMALL), "--out", str(tmp_path / "r"), str(manifest)]) == 4


def test_eval_matches_golden_and_is_deterministic(workspace, tmp_path):
    manifest = str(workspace / "data" / "manifest.csv")
    for run in ("a", "b"):
        assert main(["eval", "--config", str(SMALL), "--out", str(tmp_path / run), manifest]) == 0
    for name in ("report.csv", "counts.csv", "traces.csv", "locations_forefront.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert (tmp_path / "a" / "report.csv").read_bytes() == (GOLDEN / "small_report.csv").read_bytes()
    with open(tmp_path / "a" / "report.csv", newline="") as fh:
        assert next(csv.reader(fh)) == REPORT_HEADER


def test_eval_too_many_folds_exit_2(workspace, tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(SMALL.read_text().replace("k_folds: 3", "k_folds: 10"))
    assert main(["eval", "--config", str(cfg), "--out", str(tmp_path / "r"),
                 str(workspace / "data" / "manifest.csv")]) == 2
    assert "fewer than" in capsys.readouterr().err


def test_report_command(capsys):
    assert main(["report", str(GOLDEN / "small_report.csv")]) == 0
    out = capsys.readouterr().out
    assert "forefront" in out and "stages" in out


def _series_file(workspace, index=0):
    return workspace / "data" / f"series_{index:05d}.csv"


def _first_stage_agreeing(workspace):
    model = load_bundle(workspace / "run" / "model.npz")
    ds = load_csv_dataset(workspace / "data" / "manifest.csv")
    st = model.stages[0]
    for i, item in enumerate(ds.items):
        s, onset = prepare(item, model.prep)
        if onset is None:
            continue
        x = st.features(s, onset)
        if st.pair.first.predict(x) == st.pair.second.predict(x):
            return i
    pytest.fail("no sample agrees at the first stage")


def test_stream_decides_at_first_stage(workspace, capsys):
    i = _first_stage_agreeing(workspace)
    assert main(["stream", str(workspace / "run" / "model.npz"), str(_series_file(workspace, i))]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 2
    assert lines[0].startswith("stage 5s: ACCEPT")
    assert lines[1].endswith("decided_at=5s")


def _never_agreeing_bundle(workspace, path):
    """Second member trained on shifted labels, so the pair always disagrees."""
    model = load_bundle(workspace / "run" / "model.npz")
    ds = load_csv_dataset(workspace / "data" / "manifest.csv")
    prepared = [(prepare(item, model.prep), item.label) for item in ds.items]
    prepared = [(s, o, y) for (s, o), y in prepared if o is not None and o + model.stages[-1].k <= len(s)]
    stages = []
    for st in model.stages:
        X = np.vstack([extract_prefix_features(s, o, st.k, st.stats) for s, o, _ in prepared])
        y = np.array([lab for _, _, lab in prepared])
        good = train_svm(X, y, SvmParams(C=32.0, gamma=0.125))
        bad = train_svm(X, (y + 1) % 3, SvmParams(C=32.0, gamma=0.125))
        pair = ClassifierPair(TrainedClassifier(good, good.params, 0, None, 0.9),
                              TrainedClassifier(bad, bad.params, 1, None, 0.1), 0.0)
        stages.append(StageModel(st.time_s, st.k, st.stats, pair))
    fake = ForefrontModel(tuple(stages), model.plan, model.classes, model.n_channels, model.prep,
                          "forced", model.class_names)
    return save_bundle(fake, path)


def test_stream_forced_and_reject(workspace, tmp_path, capsys):
    bundle = _never_agreeing_bundle(workspace, tmp_path / "bad.npz")
    series = str(_series_file(workspace, 0))
    assert main(["stream", str(bundle), series]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert all(l.endswith("REJECT") for l in lines[:-1])
    assert "FORCED" in lines[-1]
    assert main(["stream", "--fallback", "reject", str(bundle), series]) == 0
    assert capsys.readouterr().out.splitlines()[-1] == "REJECT"


def test_stream_short_series_exit_5(workspace, tmp_path):
    src = _series_file(workspace, 0).read_text().splitlines()
    short = tmp_path / "short.csv"
    short.write_text("\n".join(src[:500]) + "\n")
    assert main(["stream", str(workspace / "run" / "model.npz"), str(short)]) == 5
