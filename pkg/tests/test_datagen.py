import numpy as np
import pytest

from forefront.datagen import (
    GAS_NAMES,
    MANIFEST_NAME,
    Dataset,
    GenConfig,
    class_signatures,
    generate_dataset,
    load_csv_dataset,
    load_series_csv,
    locscale,
    write_csv_dataset,
)
from forefront.cascade import Preprocess, prepare
from forefront.errors import DataFormatError, DatasetIOError, InvalidArgument
from forefront.signal import RawSeries, extract_prefix_features

SMALL = GenConfig(n_classes=3, n_channels=2, n_locations=4, duration_s=8.0, rate_hz=100.0, seed=5)


def test_determinism():
    a = generate_dataset(GenConfig(n_locations=3, duration_s=10.0, seed=7))
    b = generate_dataset(GenConfig(n_locations=3, duration_s=10.0, seed=7))
    assert len(a) == len(b)
    for x, y in zip(a.items, b.items):
        assert x.channels.tobytes() == y.channels.tobytes()
        assert (x.label, x.location) == (y.label, y.location)


def test_serialized_bytes_identical(tmp_path):
    for sub in ("a", "b"):
        write_csv_dataset(generate_dataset(SMALL), tmp_path / sub)
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_different_seeds_differ():
    a = generate_dataset(SMALL)
    b = generate_dataset(GenConfig(**{**SMALL.__dict__, "seed": 6}))
    assert not np.array_equal(a.items[0].channels, b.items[0].channels)


def test_default_counts():
    cfg = GenConfig(duration_s=6.0)
    ds = generate_dataset(cfg)
    assert len(ds) == 450
    counts = np.bincount(ds.labels)
    assert counts.tolist() == [cfg.series_per_class_location * cfg.n_locations] * 10
    assert ds.class_names == list(GAS_NAMES)
    assert ds.n_channels == 8
    assert all(len(s) == 600 for s in ds.items)
    assert sorted(set(ds.locations.tolist())) == list(range(45))


def test_repetitions_multiply_counts():
    ds = generate_dataset(GenConfig(n_classes=2, n_locations=3, series_per_class_location=4, duration_s=6.0))
    assert np.bincount(ds.labels).tolist() == [12, 12]


def test_config_invariants():
    with pytest.raises(InvalidArgument):
        GenConfig(n_classes=1)
    with pytest.raises(InvalidArgument):
        GenConfig(n_channels=0)
    with pytest.raises(InvalidArgument):
        GenConfig(duration_s=5.0, rate_hz=100.0)
    with pytest.raises(InvalidArgument):
        GenConfig(noise_ar=1.0)
    with pytest.raises(InvalidArgument):
        GenConfig(seed=-1)


def test_signature_invariants():
    sig = class_signatures(GenConfig())
    assert sig.amplitude.shape == (10, 8)
    assert np.all(sig.amplitude >= 0) and np.all(sig.tau_s > 0)


def test_locscale_decreasing():
    cfg = GenConfig()
    scales = [locscale(i, cfg) for i in range(cfg.n_locations)]
    assert scales[0] == 1.0
    assert scales[-1] == pytest.approx(cfg.min_locscale)
    assert all(a > b for a, b in zip(scales, scales[1:]))


def test_noiseless_series_follow_closed_form():
    cfg = GenConfig(n_classes=2, n_channels=2, n_locations=2, duration_s=10.0, noise_amp=0.0,
                    arrival_jitter_s=0.0, seed=3)
    ds = generate_dataset(cfg)
    sig = class_signatures(cfg)
    t = np.arange(cfg.n_samples) / cfg.rate_hz
    for s in ds.items:
        c, loc = s.label, s.location
        start = cfg.release_s + cfg.delay_per_location_s * loc + sig.t0_s[c]
        for ch in range(2):
            rise = np.where(t >= start[ch], 1 - np.exp(-(t - start[ch]) / sig.tau_s[c, ch]), 0.0)
            expected = sig.amplitude[c, ch] * locscale(loc, cfg) * rise
            got = s.channels[ch] - s.channels[ch, 0]
            np.testing.assert_allclose(got, expected, atol=1e-12)


@pytest.mark.parametrize("n_classes,seed", [(2, 11), (10, 0)])
def test_noiseless_nearest_centroid_separates(n_classes, seed):
    # onset-aligned, baseline-removed and scaled to unit length: location attenuation
    # is a pure gain, so only the class shape is left
    cfg = GenConfig(n_classes=n_classes, n_locations=45, duration_s=60.0, noise_amp=0.0, seed=seed)
    ds = generate_dataset(cfg)
    prepared = [prepare(s, Preprocess()) for s in ds.items]
    X = np.stack([extract_prefix_features(s, onset, 300) for s, onset in prepared])
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    y = ds.labels
    cent = np.stack([X[y == c].mean(axis=0) for c in range(n_classes)])
    pred = np.argmin(((X[:, None, :] - cent[None]) ** 2).sum(axis=2), axis=1)
    assert np.mean(pred == y) == 1.0


def test_noiseless_distinct_vectors_pairwise():
    cfg = GenConfig(n_classes=4, n_channels=2, n_locations=3, duration_s=10.0, noise_amp=0.0, seed=2)
    ds = generate_dataset(cfg)
    X = [s.channels.ravel() for s in ds.items]
    for i in range(len(X)):
        for j in range(i + 1, len(X)):
            if ds.labels[i] != ds.labels[j]:
                assert not np.array_equal(X[i], X[j])


def test_csv_round_trip(tmp_path):
    ds = generate_dataset(SMALL)
    manifest = write_csv_dataset(ds, tmp_path / "out")
    back = load_csv_dataset(manifest)
    assert back.class_names == ds.class_names
    np.testing.assert_array_equal(back.labels, ds.labels)
    np.testing.assert_array_equal(back.locations, ds.locations)
    for a, b in zip(ds.items, back.items):
        assert b.channels.shape == a.channels.shape
        assert b.sample_rate_hz == a.sample_rate_hz
        np.testing.assert_allclose(b.channels, a.channels, rtol=1e-6, atol=1e-6)


def test_manifest_lists_ten_classes(tmp_path):
    ds = generate_dataset(GenConfig(n_locations=1, duration_s=6.0))
    text = write_csv_dataset(ds, tmp_path).read_text()
    classes = next(l for l in text.splitlines() if l.startswith("# classes:"))
    assert classes.split(":", 1)[1].strip().split(";") == list(GAS_NAMES)


def test_three_file_manifest(tmp_path):
    items = [RawSeries(np.random.default_rng(i).normal(size=(2, 20)), 10.0, label=i % 2, location=i)
             for i in range(3)]
    manifest = write_csv_dataset(Dataset(items, ["a", "b"]), tmp_path)
    assert len(load_csv_dataset(manifest)) == 3


def test_empty_dataset_write_fails(tmp_path):
    with pytest.raises(InvalidArgument):
        write_csv_dataset(Dataset([], []), tmp_path)


def test_empty_manifest(tmp_path):
    p = tmp_path / MANIFEST_NAME
    p.write_text("# channels: 2\n# rate_hz: 10\n# classes: a;b\nrelative_path,label,location\n")
    with pytest.raises(InvalidArgument, match="empty"):
        load_csv_dataset(p)


def _write_small(tmp_path):
    items = [RawSeries(np.ones((2, 5)) * i, 10.0, label=i % 2, location=0) for i in range(2)]
    return write_csv_dataset(Dataset(items, ["a", "b"]), tmp_path)


def test_missing_file_named(tmp_path):
    manifest = _write_small(tmp_path)
    (tmp_path / "series_00001.csv").unlink()
    with pytest.raises(DatasetIOError, match="series_00001.csv"):
        load_csv_dataset(manifest)


def test_extra_column_reports_row(tmp_path):
    manifest = _write_small(tmp_path)
    f = tmp_path / "series_00000.csv"
    lines = f.read_text().splitlines()
    lines[3] += ",9"
    f.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataFormatError, match="row 4"):
        load_csv_dataset(manifest)


def test_header_with_nine_columns_for_eight_channels(tmp_path):
    items = [RawSeries(np.ones((8, 5)) * i, 10.0, label=i, location=0) for i in range(2)]
    manifest = write_csv_dataset(Dataset(items, ["a", "b"]), tmp_path)
    f = tmp_path / "series_00000.csv"
    lines = f.read_text().splitlines()
    lines = [lines[0] + ",ch8"] + [l + ",0" for l in lines[1:]]
    f.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataFormatError):
        load_csv_dataset(manifest)


def test_unknown_label(tmp_path):
    manifest = _write_small(tmp_path)
    manifest.write_text(manifest.read_text().replace("series_00001.csv,b", "series_00001.csv,zz"))
    with pytest.raises(DataFormatError, match="zz"):
        load_csv_dataset(manifest)


def test_unwritable_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(DatasetIOError):
        write_csv_dataset(generate_dataset(SMALL), blocker / "sub")


def test_load_single_series_infers_rate(tmp_path):
    manifest = _write_small(tmp_path)
    s = load_series_csv(manifest.parent / "series_00001.csv")
    assert s.sample_rate_hz == pytest.approx(10.0)
    assert s.channels.shape == (2, 5)
