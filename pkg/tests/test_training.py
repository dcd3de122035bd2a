import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.metrics import f1_score

from topogat import autodiff as ad
from topogat.models import ModelSpec, count_parameters, model_forward
from topogat.training import (
    STREAMS,
    RunResult,
    TrainConfig,
    aggregate,
    evaluate,
    export_embeddings,
    prepare_dataset,
    run_benchmark,
    run_single,
    split_dataset,
    train_model,
    weighted_f1_score,
)
from topogat.tudataset import Dataset, batch_graphs

from conftest import random_graph


def toy_dataset(n=24, seed=0, classes=2):
    rng = np.random.default_rng(seed)
    graphs = [random_graph(rng, int(rng.integers(3, 9)), 3, label=i % classes) for i in range(n)]
    return Dataset("TOY", graphs, classes, 3, {c: c for c in range(classes)})


class TestSplit:
    def test_mutag_sizes(self):
        train, test = split_dataset(188, 0.8, np.random.default_rng(100))
        assert (len(train), len(test)) == (150, 38)

    def test_seeded(self):
        a = split_dataset(50, 0.8, ad.rng_streams(101, STREAMS)["split"])
        b = split_dataset(50, 0.8, ad.rng_streams(101, STREAMS)["split"])
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    @given(st.integers(2, 500), st.floats(0.05, 0.95), st.integers(0, 2**32 - 1))
    def test_partition(self, n, frac, seed):
        train, test = split_dataset(n, frac, np.random.default_rng(seed))
        assert len(np.intersect1d(train, test)) == 0
        np.testing.assert_array_equal(np.sort(np.concatenate([train, test])), np.arange(n))
        assert len(train) >= 1 and len(test) >= 1

    def test_too_small(self):
        with pytest.raises(ValueError):
            split_dataset(1, 0.8, np.random.default_rng(0))


class TestMetrics:
    def test_perfect(self):
        y = np.array([0, 1, 2, 1])
        assert weighted_f1_score(y, y) == 1.0

    def test_all_one_class(self):
        y_true, y_pred = [0, 0, 1, 1], [0, 0, 0, 0]
        # class 0: P = 1/2, R = 1, F1 = 2/3; class 1: F1 = 0; weights 1/2 each
        assert weighted_f1_score(y_true, y_pred) == pytest.approx(1 / 3, abs=1e-15)

    @given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=60))
    def test_matches_sklearn(self, pairs):
        y_true, y_pred = map(np.array, zip(*pairs))
        expected = f1_score(y_true, y_pred, average="weighted", labels=np.unique(y_true), zero_division=0)
        got = weighted_f1_score(y_true, y_pred)
        assert got == pytest.approx(expected, abs=1e-12)
        assert 0.0 <= got <= 1.0
        assert (got == 1.0) == bool(np.all(y_true == y_pred))


class TestTraining:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(train_fraction=1.0)
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)

    def test_overfits_single_graph(self):
        ds = toy_dataset(n=1, classes=3)
        ds = Dataset("ONE", ds.graphs, 3, 3)
        spec = ModelSpec("simple_gat", 3, 3)
        params, history = train_model(spec, ds, [0], TrainConfig(), seed=100)
        assert len(history) == 50
        with ad.Tape():
            final = float(ad.nll_loss(model_forward(params, batch_graphs(ds.graphs, [0])), ds.labels()[:1]).data)
        assert final < math.log(3)

    def test_deterministic(self):
        ds = toy_dataset()
        spec = ModelSpec("light_topo_gat", 5, 2)
        data = prepare_dataset(ds, spec)
        cfg = TrainConfig(epochs=3)
        a, ha = train_model(spec, data, np.arange(16), cfg, seed=7)
        b, hb = train_model(spec, data, np.arange(16), cfg, seed=7)
        assert ha == hb
        for name in a.tensors:
            np.testing.assert_array_equal(a[name].data, b[name].data)

    def test_history_length_partial_batch(self):
        ds = toy_dataset(n=40)
        _, history = train_model(ModelSpec("gcn", 3, 2), ds, np.arange(33), TrainConfig(epochs=2), seed=1)
        assert len(history) == 2 * math.ceil(33 / 32)

    def test_mutag_step_count(self, mutag):
        train, _ = split_dataset(len(mutag), 0.8, np.random.default_rng(0))
        _, history = train_model(ModelSpec("graphsage", 7, 2), mutag, train, TrainConfig(), seed=100)
        assert len(history) == 250

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_loss_aborts(self):
        from topogat.training import NumericalError

        ds = toy_dataset()
        bad = Dataset("BAD", [g.with_features(np.full_like(g.features, np.inf)) for g in ds.graphs], 2, 3)
        with pytest.raises(NumericalError):
            train_model(ModelSpec("gcn", 3, 2), bad, np.arange(8), TrainConfig(epochs=1), seed=0)

    def test_empty_train_set(self):
        with pytest.raises(ValueError):
            train_model(ModelSpec("gcn", 3, 2), toy_dataset(), [], TrainConfig(), seed=0)


class TestEvaluate:
    def test_batching_invariance(self):
        ds = toy_dataset(n=30, classes=3)
        params, _ = train_model(ModelSpec("simple_gat", 3, 3), ds, np.arange(20), TrainConfig(epochs=5), seed=3)
        test = np.arange(20, 30)
        whole = evaluate(params, ds, test)
        single = evaluate(params, ds, test, batch_size=1)
        assert whole == single
        assert all(0.0 <= m <= 1.0 for m in whole)

    def test_empty(self):
        ds = toy_dataset()
        params, _ = train_model(ModelSpec("gcn", 3, 2), ds, np.arange(4), TrainConfig(epochs=1), seed=0)
        with pytest.raises(ValueError):
            evaluate(params, ds, [])


class TestBenchmark:
    def test_shape_and_fairness(self):
        ds = toy_dataset(n=20)
        cfg = TrainConfig(epochs=2, seeds=(100, 101))
        variants = ["gcn", "simple_gat", "light_topo_gat_no_topo", "light_topo_gat"]
        results, aggs = run_benchmark(ds, variants, cfg)
        assert [(r.variant, r.seed) for r in results] == [(v, s) for v in variants for s in (100, 101)]
        assert [a.variant for a in aggs] == variants
        by = {(r.variant, r.seed): r for r in results}
        for s in (100, 101):
            assert by["simple_gat", s].record() == {**by["light_topo_gat_no_topo", s].record(),
                                                    "variant": "simple_gat"}

    def test_parallel_matches_serial(self):
        ds = toy_dataset(n=16)
        cfg = TrainConfig(epochs=1, seeds=(1, 2))
        serial, _ = run_benchmark(ds, ["gcn", "graphsage"], cfg, jobs=1)
        parallel, _ = run_benchmark(ds, ["gcn", "graphsage"], cfg, jobs=2)
        assert [r.record() for r in serial] == [r.record() for r in parallel]

    def test_aggregate_std_modes(self):
        rs = [RunResult("D", "gcn", s, acc, acc, 10, 0.1) for s, acc in enumerate([0.5, 0.7])]
        (pop,) = aggregate(rs)
        (smp,) = aggregate(rs, sample_std=True)
        assert pop.acc_mean == pytest.approx(0.6)
        assert pop.acc_std == pytest.approx(0.1)
        assert smp.acc_std == pytest.approx(0.1 * math.sqrt(2))

    def test_run_single_record(self):
        ds = toy_dataset()
        result, params = run_single(ds, "light_topo_gat", 5, TrainConfig(epochs=1))
        assert result.params == count_parameters(params)
        assert "seconds" not in result.record()
        assert set(result.record(timing=True)) >= {"dataset", "variant", "seed", "accuracy", "weighted_f1",
                                                   "params", "seconds"}


class TestExport:
    def test_rows_and_width(self):
        ds = toy_dataset(n=10)
        _, params = run_single(ds, "light_topo_gat", 1, TrainConfig(epochs=1))
        rows = export_embeddings(params, ds, batch_size=4)
        assert [r[0] for r in rows] == list(range(10))
        assert [r[1] for r in rows] == [g.label for g in ds.graphs]
        assert all(r[2].shape == (64,) for r in rows)
        again = export_embeddings(params, ds)
        for a, b in zip(rows, again):
            np.testing.assert_allclose(a[2], b[2], rtol=0, atol=1e-12)


def test_normalize_topo_option(mutag, tmp_path):
    from topogat.models import load_checkpoint, save_checkpoint

    raw = prepare_dataset(mutag, ModelSpec.for_dataset("light_topo_gat", 7, 2))
    scaled = prepare_dataset(mutag, ModelSpec.for_dataset("light_topo_gat", 7, 2, normalize_topo=True))
    assert max(g.features[:, 7].max() for g in raw.graphs) > 1
    for g, orig in zip(scaled.graphs, mutag.graphs):
        assert g.features[:, 7:].min() >= 0 and g.features[:, 7:].max() <= 1
        np.testing.assert_array_equal(g.features[:, :7], orig.features)
    _, params = run_single(mutag, "light_topo_gat", 100, TrainConfig(epochs=1, normalize_topo=True))
    save_checkpoint(params, tmp_path / "m.npz")
    assert load_checkpoint(tmp_path / "m.npz").spec.normalize_topo
