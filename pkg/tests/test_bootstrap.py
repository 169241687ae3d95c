import json

import numpy as np
import pytest

from peaqlab.dataset import ContentType, FeatureRecord, ScoreRecord, join_features
from peaqlab.errors import DegenerateSplit, InputError, TooFewRows
from peaqlab.evalharness import BootstrapConfig, BootstrapReport, aes, bootstrap_run, pearson, spearman
from peaqlab.evalharness.bootstrap import make_split, train_size
from peaqlab.regression import MarsConfig, mars_fit, mars_predict


def tiny_dataset(values, features=None, n_conditions=1):
    scores, feats = [], []
    for k, v in enumerate(values):
        item, cond = f"i{k // n_conditions:02d}", f"c{k % n_conditions:02d}"
        scores.append(ScoreRecord(item, cond, ContentType.MUSIC, float(v), 4.0))
        f = {"f": float(k)} if features is None else {"f": float(features[k])}
        feats.append(FeatureRecord(item, cond, f))
    return join_features(scores, feats)


def test_train_size_rounding():
    assert train_size(324, 0.8) == 259
    assert train_size(5, 0.5) == 3  # half rounds up
    assert train_size(10, 0.8) == 8


def test_every_split_is_259_65_and_disjoint(synth_ds):
    cfg = BootstrapConfig(iterations=2000, seed=11)
    y = synth_ds.scores
    for i in range(cfg.iterations):
        s = make_split(324, y, cfg, i)
        assert s.train.shape[0] == 259 and s.test.shape[0] == 65
        assert np.intersect1d(s.train, s.test).size == 0
        assert np.union1d(s.train, s.test).size == 324


def test_config_validation():
    with pytest.raises(InputError):
        BootstrapConfig(train_fraction=1.0)
    with pytest.raises(InputError):
        BootstrapConfig(iterations=0)


def test_deterministic_and_thread_independent(synth_ds):
    cfg = BootstrapConfig(iterations=40, seed=5, features=("RmsNoiseLoudAsym_A", "AvgLinDist_A"), keep_raw=True)
    a = bootstrap_run(synth_ds, cfg, workers=1)
    b = bootstrap_run(synth_ds, cfg, workers=1)
    c = bootstrap_run(synth_ds, cfg, workers=3)
    dump = lambda r: json.dumps(r.to_dict(), sort_keys=True)
    assert dump(a) == dump(b) == dump(c)


def test_single_iteration_manual_oracle(synth_ds):
    cfg = BootstrapConfig(iterations=1, seed=42, features=("informative",))
    report = bootstrap_run(synth_ds, cfg)
    X, y, ci = synth_ds.matrix(["informative"]), synth_ds.scores, synth_ds.ci95
    split = make_split(len(synth_ds), y, cfg, 0)
    model = mars_fit(X[split.train], y[split.train], MarsConfig(), ["informative"])
    pred = mars_predict(model, X[split.test])
    assert report.means["R_p"] == pearson(pred, y[split.test])
    assert report.means["R_s"] == spearman(pred, y[split.test])
    assert report.means["AES"] == aes(pred, y[split.test], ci[split.test])
    assert report.n_train == 259 and report.n_test == 65


def test_rank_order_sanity(synth_ds):
    inf = bootstrap_run(synth_ds, BootstrapConfig(iterations=200, seed=1, features=("informative",)))
    noise = bootstrap_run(synth_ds, BootstrapConfig(iterations=200, seed=1, features=("noise",)))
    assert inf.means["R_p"] - inf.ci95["R_p"] > noise.means["R_p"] + noise.ci95["R_p"]
    assert inf.means["AES"] + inf.ci95["AES"] < noise.means["AES"] - noise.ci95["AES"]
    for r in (inf, noise):
        assert all(v >= 0 for v in r.ci95.values())
        assert -1 <= r.means["R_p"] <= 1 and r.means["AES"] >= 0


def test_degenerate_splits_are_redrawn():
    values = [50.0] * 18 + [20.0, 80.0]
    ds = tiny_dataset(values)
    report = bootstrap_run(ds, BootstrapConfig(iterations=30, seed=0, train_fraction=0.9))
    assert report.degenerate_resamples > 0
    assert report.iterations == 30


def test_hopeless_split_raises():
    values = [50.0] * 19 + [20.0]
    ds = tiny_dataset(values)
    # a one-row test block is always constant
    with pytest.raises(DegenerateSplit):
        bootstrap_run(ds, BootstrapConfig(iterations=1, train_fraction=0.95))


def test_constant_predictions_are_counted(rng):
    ds = tiny_dataset(rng.uniform(10, 90, 40), features=np.zeros(40))
    report = bootstrap_run(ds, BootstrapConfig(iterations=10, seed=0))
    assert report.constant_predictions == 10
    assert report.means["R_p"] == 0.0 and report.means["R_s"] == 0.0


def test_too_few_rows(rng):
    with pytest.raises(TooFewRows):
        bootstrap_run(tiny_dataset(rng.uniform(0, 100, 9)), BootstrapConfig(iterations=2))


def test_resample_train_mode(synth_ds):
    cfg = BootstrapConfig(iterations=5, seed=3, resample_train=True)
    for i in range(5):
        s = make_split(324, synth_ds.scores, cfg, i)
        assert s.train.shape[0] == 259
        assert np.unique(s.train).size < 259
        assert np.intersect1d(s.train, s.test).size == 0


def test_split_by_item(synth_ds):
    cfg = BootstrapConfig(iterations=5, seed=3, split_by_item=True)
    items = synth_ds.item_ids
    for i in range(5):
        s = make_split(324, synth_ds.scores, cfg, i, items)
        assert not set(items[s.train]) & set(items[s.test])
        assert len(set(items[s.train])) == train_size(27, 0.8)


def test_content_selection(synth_ds):
    r = bootstrap_run(synth_ds, BootstrapConfig(iterations=3, content="speech", features=("informative",)))
    assert r.n_rows == 108 and r.n_train == 86 and r.n_test == 22


def test_report_round_trip_and_predictions(synth_ds):
    cfg = BootstrapConfig(iterations=20, seed=9, features=("informative",), keep_raw=True, keep_predictions=True)
    r = bootstrap_run(synth_ds, cfg)
    back = BootstrapReport.from_dict(json.loads(json.dumps(r.to_dict())))
    assert back.to_dict() == r.to_dict()
    assert len(r.raw["R_p"]) == 20
    assert sum(p["test_count"] for p in r.predictions) == 20 * 65
    tested = [p for p in r.predictions if p["test_count"]]
    assert all(p["mean_prediction"] is not None for p in tested)
