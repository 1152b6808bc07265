import numpy as np
import pytest
from scipy.stats import spearmanr

from forefront.cascade import StagePlan, train_forefront
from forefront.datagen import Dataset, GenConfig, generate_dataset
from forefront.errors import InvalidArgument
from forefront.evaluate import (
    REPORT_HEADER,
    EvalConfig,
    FoldPlan,
    evaluate_methods,
    location_accuracy_surface,
    stratified_kfold,
    write_location_csv,
)
from forefront.learners import default_grid
from forefront.reject import OutcomeCounts, empirical_risk
from forefront.signal import RawSeries

CFG = EvalConfig(grid=tuple(default_grid(-3, 3, 2)), oof_folds=3)
PLAN = StagePlan((5.0, 10.0, 15.0))


@pytest.fixture(scope="module")
def noisy():
    return generate_dataset(GenConfig(n_classes=4, duration_s=40.0, noise_amp=0.04, seed=2))


@pytest.fixture(scope="module")
def report(noisy):
    return evaluate_methods(noisy, PLAN, stratified_kfold(noisy, 3, 0), CFG)


def labelled(counts):
    items = [RawSeries(np.zeros((1, 2)), 1.0, label=c, location=0)
             for c, n in enumerate(counts) for _ in range(n)]
    return Dataset(items, [f"g{i}" for i in range(len(counts))])


def test_kfold_one_per_class_per_fold():
    ds = labelled([10] * 10)
    plan = stratified_kfold(ds, 10, seed=3)
    for f in range(10):
        _, test = plan.split(f)
        assert sorted(ds.labels[test].tolist()) == list(range(10))


def test_kfold_deterministic_and_partition():
    ds = labelled([13, 7, 22])
    a = stratified_kfold(ds, 5, seed=9)
    b = stratified_kfold(ds, 5, seed=9)
    np.testing.assert_array_equal(a.assignments, b.assignments)
    seen = np.concatenate([a.split(f)[1] for f in range(5)])
    assert sorted(seen.tolist()) == list(range(len(ds)))
    for c, n in enumerate([13, 7, 22]):
        per_fold = np.bincount(a.assignments[ds.labels == c], minlength=5)
        assert np.all(np.abs(per_fold - n / 5) <= 1)


def test_kfold_small_class_named():
    ds = labelled([10, 5])
    with pytest.raises(InvalidArgument, match="g1"):
        stratified_kfold(ds, 10)


def test_resubstitution_plan():
    plan = FoldPlan.resubstitution(4)
    train, test = plan.split(0)
    assert train.tolist() == test.tolist() == [0, 1, 2, 3]


def test_report_header(report, tmp_path):
    lines = report.write_csv(tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == ",".join(REPORT_HEADER)
    assert len(lines) == 1 + len(report.rows)
    assert report.methods() == ["svm", "cwro", "cwro_tau0.3", "cwro_tau0.7", "cwro_tau0.9",
                                "forefront", "forefront_cascade"]


def test_report_algebra(noisy, report):
    n = len(noisy)
    for method in report.methods():
        for t in PLAN.stage_times_s:
            outs = [o for o in report.outcomes if o.method == method and o.stage_s == t]
            assert sorted(o.sample for o in outs) == list(range(n))
            per_fold = []
            for f in range(3):
                fo = [o for o in outs if o.fold == f]
                acc = [o for o in fo if o.accepted]
                correct = sum(o.label == o.truth for o in acc)
                forced = sum(o.forced for o in fo)
                rejected = len(fo) - len(acc) - forced
                assert correct + (len(acc) - correct) + rejected + forced == len(fo)
                per_fold.append((correct, len(acc), forced, len(fo)))
            row = report.row(method, t)
            cond = [c / a for c, a, _, _ in per_fold if a]
            assert row.cond_accuracy == pytest.approx(np.mean(cond), abs=1e-12)
            assert row.coverage == pytest.approx(np.mean([a / m for _, a, _, m in per_fold]), abs=1e-12)
            assert row.forced_frac == pytest.approx(np.mean([g / m for _, _, g, m in per_fold]), abs=1e-12)
            risk = [empirical_risk(OutcomeCounts(c, a - c, m - a), CFG.d) for c, a, _, m in per_fold]
            assert row.emp_risk == pytest.approx(np.mean(risk), abs=1e-12)
            for v in (row.cond_accuracy, row.coverage, row.forced_frac, row.emp_risk):
                assert 0.0 <= v <= 1.0


def test_cascade_outcomes_match_traces(report):
    last = PLAN.stage_times_s[-1]
    for o in report.outcomes:
        if o.method == "forefront_cascade" and o.stage_s == last:
            tr = report.traces[o.sample]
            assert (o.label, o.accepted, o.forced) == (tr.label, tr.accepted, tr.forced)


def test_plain_svm_has_full_coverage(report):
    for t in PLAN.stage_times_s:
        svm = [o for o in report.outcomes if o.method == "svm" and o.stage_s == t]
        failed = sum(not o.accepted for o in svm)
        # only samples without a usable prefix can be unanswered
        assert report.row("svm", t).coverage == pytest.approx(1 - failed / len(svm), abs=0.05)


def test_accepted_error_bound(noisy, report):
    truth = noisy.labels
    for (fold, t), (rows, a, b) in report.pair_votes.items():
        both_wrong = np.count_nonzero((a != truth[rows]) & (b != truth[rows]))
        wrong_accepted = sum(
            o.accepted and o.label != o.truth for o in report.outcomes
            if o.method == "forefront" and o.fold == fold and o.stage_s == t
        )
        assert wrong_accepted <= both_wrong


def test_location_surface_trend(noisy, report):
    rows = location_accuracy_surface(noisy, "svm", report)
    at5 = [r for r in rows if r["stage_s"] == 5.0]
    assert len(at5) == 45
    rho = spearmanr([r["location"] for r in at5], [r["accuracy"] for r in at5]).statistic
    assert rho <= 0


def test_location_surface_single_location_and_csv(tmp_path):
    ds = generate_dataset(GenConfig(n_classes=2, n_locations=1, series_per_class_location=6,
                                    duration_s=40.0, seed=1))
    rep = evaluate_methods(ds, StagePlan((5.0,)), stratified_kfold(ds, 3, 0), CFG)
    rows = location_accuracy_surface(ds, "forefront", rep)
    assert [r["location"] for r in rows] == [0]
    text = write_location_csv(rows, tmp_path / "loc.csv").read_text().splitlines()
    assert text[0] == "location,stage_s,accuracy,n" and len(text) == 2


def test_location_surface_omits_untested(noisy, report):
    tagged = Dataset(noisy.items + [RawSeries(np.zeros((8, 10)), 100.0, label=0, location=99)],
                     noisy.class_names)
    rows = location_accuracy_surface(tagged, "svm", report)
    assert 99 not in {r["location"] for r in rows}


def test_location_surface_needs_locations(report):
    ds = labelled([2, 2])
    ds.items[0] = RawSeries(np.zeros((1, 2)), 1.0, label=0)
    with pytest.raises(InvalidArgument):
        location_accuracy_surface(ds, "svm", report)


def test_resubstitution_beats_pair_oof():
    ds = generate_dataset(GenConfig(n_classes=3, n_locations=20, duration_s=40.0, seed=6))
    plan = StagePlan((5.0, 10.0))
    rep = evaluate_methods(ds, plan, FoldPlan.resubstitution(len(ds)), CFG)
    _, fits = train_forefront(ds, plan, CFG.grid, CFG.n, CFG.oof_folds, seed=CFG.seed, return_fits=True)
    for fit in fits:
        pair_oof = max(fit.pair.first.accuracy, fit.pair.second.accuracy)
        assert rep.row("forefront", fit.time_s).cond_accuracy >= pair_oof


def test_byte_identical_reports(tmp_path):
    ds = generate_dataset(GenConfig(n_classes=3, n_locations=6, duration_s=40.0, seed=3))
    paths = []
    for run in ("a", "b"):
        rep = evaluate_methods(ds, StagePlan((5.0, 10.0)), stratified_kfold(ds, 3, 1), CFG)
        paths.append((rep.write_csv(tmp_path / f"{run}.csv"),
                      rep.write_counts_csv(tmp_path / f"{run}_counts.csv"),
                      rep.write_traces_csv(tmp_path / f"{run}_traces.csv")))
    for x, y in zip(*paths):
        assert x.read_bytes() == y.read_bytes()


def test_fold_plan_size_mismatch(noisy):
    with pytest.raises(InvalidArgument):
        evaluate_methods(noisy, PLAN, FoldPlan(2, np.zeros(3, dtype=int)), CFG)
