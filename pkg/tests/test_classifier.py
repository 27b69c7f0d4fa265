import math

import numpy as np
import pytest

from intentgraph.classifier import (
    MlpModel,
    PredictionMatrix,
    TrainConfig,
    decide,
    forward,
    load_model,
    loss_and_grads,
    predict,
    propagate_residuals,
    save_model,
    smooth_labels,
    smoothed_targets,
    train_mlp,
)
from intentgraph.corpus import DataError
from intentgraph.graph import Node, WeightedGraph

from conftest import make_dataset, make_embeddings


def random_model(rng, dim, hidden, k, mode="multiclass"):
    return MlpModel(
        w1=rng.normal(size=(dim, hidden)),
        b1=rng.normal(size=hidden),
        w2=rng.normal(size=(hidden, k)),
        b2=rng.normal(size=k),
        mode=mode,
    )


def numeric_grads(model, x, targets, eps=1e-6):
    """Central finite differences over every parameter entry."""
    grads = {}
    for name in ("w1", "b1", "w2", "b2"):
        arr = getattr(model, name)
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            old = arr[idx]
            arr[idx] = old + eps
            lp, _ = loss_and_grads(model, x, targets)
            arr[idx] = old - eps
            lm, _ = loss_and_grads(model, x, targets)
            arr[idx] = old
            g[idx] = (lp - lm) / (2 * eps)
            it.iternext()
        grads[name] = g
    return grads


class TestGradients:
    @pytest.mark.parametrize("mode", ["multiclass", "multilabel"])
    def test_matches_finite_differences(self, mode):
        rng = np.random.default_rng(0)
        for seed in range(3):
            rng = np.random.default_rng(seed)
            model = random_model(rng, dim=4, hidden=5, k=3, mode=mode)
            x = rng.normal(size=(6, 4))
            if mode == "multiclass":
                targets = rng.dirichlet(np.ones(3), size=6)
            else:
                targets = rng.uniform(0.0, 1.0, size=(6, 3))
            _, analytic = loss_and_grads(model, x, targets)
            numeric = numeric_grads(model, x, targets)
            for name in analytic:
                denom = max(np.max(np.abs(numeric[name])), 1e-8)
                rel = np.max(np.abs(analytic[name] - numeric[name])) / denom
                assert rel < 1e-4, f"{name} rel error {rel}"

    def test_uniform_prediction_loss_is_log_k(self):
        k = 4
        model = MlpModel(
            w1=np.zeros((3, 2)),
            b1=np.zeros(2),
            w2=np.zeros((2, k)),
            b2=np.zeros(k),
            mode="multiclass",
        )
        x = np.ones((5, 3))
        targets = np.eye(k)[[0, 1, 2, 3, 0]]
        loss, _ = loss_and_grads(model, x, targets)
        assert loss == pytest.approx(math.log(k), abs=1e-9)


class TestSmoothedTargets:
    def test_multiclass_rows(self):
        ds = make_dataset(
            [("a", "x", ["l0"], "train"), ("b", "x", ["l1"], "train")]
        )
        t = smoothed_targets(ds, ["a", "b"], "multiclass", eps=0.1)
        assert t[0] == pytest.approx([1 - 0.1 + 0.05, 0.05])
        assert t.sum(axis=1) == pytest.approx([1.0, 1.0])

    def test_multilabel_rows(self):
        ds = make_dataset([("a", "x", ["l0", "l1"], "train"), ("b", "x", ["l0"], "train")], k=3)
        t = smoothed_targets(ds, ["a"], "multilabel", eps=0.2)
        assert t[0] == pytest.approx([0.8 + 0.1, 0.9, 0.1])

    def test_multilabel_in_multiclass_mode_errors(self):
        ds = make_dataset([("a", "x", ["l0", "l1"], "train")])
        with pytest.raises(DataError):
            smoothed_targets(ds, ["a"], "multiclass", eps=0.1)


def separable_fixture(n_per=8, dim=4):
    records = []
    vectors = {}
    rng = np.random.default_rng(1)
    for c in range(2):
        center = np.zeros(dim)
        center[c] = 5.0
        for i in range(n_per):
            utt_id = f"c{c}i{i}"
            split = "train" if i < n_per - 2 else "test"
            records.append((utt_id, f"text {c} {i}", [f"lab{c}"], split))
            vectors[utt_id] = center + rng.normal(scale=0.3, size=dim)
    return make_dataset(records), make_embeddings(vectors)


class TestTrainPredict:
    def test_learns_separable_problem(self):
        ds, feats = separable_fixture()
        cfg = TrainConfig(epochs=150, hidden_size=16, learning_rate=0.05, rng_seed=0)
        model = train_mlp(feats, ds, cfg)
        preds = predict(model, feats, [u.id for u in ds.utterances])
        decided = decide(preds)
        for u in ds.utterances:
            assert decided[u.id] == set(u.labels)

    def test_deterministic_in_seed(self):
        ds, feats = separable_fixture()
        cfg = TrainConfig(epochs=5, hidden_size=8, rng_seed=11)
        m1 = train_mlp(feats, ds, cfg)
        m2 = train_mlp(feats, ds, cfg)
        assert np.array_equal(m1.w1, m2.w1)
        assert np.array_equal(m1.w2, m2.w2)

    def test_empty_train_errors(self):
        ds = make_dataset([("a", "x", ["l"], "test")])
        feats = make_embeddings({"a": [1.0, 0.0]})
        with pytest.raises(DataError):
            train_mlp(feats, ds, TrainConfig(epochs=1))

    def test_prediction_rows_are_distributions(self):
        ds, feats = separable_fixture()
        model = train_mlp(feats, ds, TrainConfig(epochs=3, hidden_size=8))
        preds = predict(model, feats, [u.id for u in ds.utterances])
        for row in preds.rows.values():
            assert row.sum() == pytest.approx(1.0)
            assert np.all(row >= 0)


class TestDecide:
    def test_multiclass_argmax(self):
        pm = PredictionMatrix(rows={"a": np.array([0.2, 0.7, 0.1])}, mode="multiclass")
        assert decide(pm) == {"a": {1}}

    def test_multilabel_threshold(self):
        pm = PredictionMatrix(rows={"a": np.array([0.8, 0.6, 0.1])}, mode="multilabel")
        assert decide(pm, threshold=0.5) == {"a": {0, 1}}

    def test_multilabel_empty_falls_back_to_argmax(self):
        pm = PredictionMatrix(rows={"a": np.array([0.3, 0.4, 0.1])}, mode="multilabel")
        assert decide(pm, threshold=0.5) == {"a": {1}}

    def test_bad_threshold(self):
        pm = PredictionMatrix(rows={"a": np.array([0.5])}, mode="multilabel")
        with pytest.raises(ValueError):
            decide(pm, threshold=1.5)


def homophilous_graph(ids_a, ids_b, strong=1.0, weak=0.02):
    ids = list(ids_a) + list(ids_b)
    nodes = [Node(node_id=i, member_ids=frozenset({m})) for i, m in enumerate(ids)]
    pos = {m: i for i, m in enumerate(ids)}
    adj = {i: {} for i in range(len(ids))}

    def link(u, v, w):
        adj[pos[u]][pos[v]] = w
        adj[pos[v]][pos[u]] = w

    for group in (ids_a, ids_b):
        for i, u in enumerate(group):
            for v in group[i + 1 :]:
                link(u, v, strong)
    link(ids_a[-1], ids_b[0], weak)
    return WeightedGraph(nodes=nodes, adj=adj, kind="blended_G_pred")


class TestPostProcessing:
    def fixture(self):
        ids_a = [f"a{i}" for i in range(4)]
        ids_b = [f"b{i}" for i in range(4)]
        records = [(i, "x", ["la"], "train" if n < 3 else "test") for n, i in enumerate(ids_a)]
        records += [(i, "x", ["lb"], "train" if n < 3 else "test") for n, i in enumerate(ids_b)]
        ds = make_dataset(records)
        g = homophilous_graph(ids_a, ids_b)
        seeds = set(ids_a[:3] + ids_b[:3])
        return ds, g, seeds, ids_a, ids_b

    def test_residuals_fix_biased_base(self):
        ds, g, seeds, ids_a, ids_b = self.fixture()
        # base systematically under-scores the true label within each block
        rows = {}
        for i in ids_a:
            rows[i] = np.array([0.45, 0.55])
        for i in ids_b:
            rows[i] = np.array([0.55, 0.45])
        base = PredictionMatrix(rows=rows, mode="multiclass")
        corrected = propagate_residuals(g, base, ds, seeds)
        assert corrected.rows[ids_a[-1]][0] > base.rows[ids_a[-1]][0]
        assert corrected.rows[ids_b[-1]][1] > base.rows[ids_b[-1]][1]
        for row in corrected.rows.values():
            assert row.sum() == pytest.approx(1.0)

    def test_smoothing_pulls_outlier_toward_block(self):
        ds, g, seeds, ids_a, ids_b = self.fixture()
        rows = {i: np.array([0.9, 0.1]) for i in ids_a}
        rows |= {i: np.array([0.1, 0.9]) for i in ids_b}
        rows[ids_a[-1]] = np.array([0.2, 0.8])  # outlier against its block
        corrected = PredictionMatrix(rows=rows, mode="multiclass")
        smoothed = smooth_labels(g, corrected, ds, seeds)
        assert smoothed.rows[ids_a[-1]][0] > corrected.rows[ids_a[-1]][0]

    def test_smoothing_preserves_valid_rows(self):
        ds, g, seeds, ids_a, ids_b = self.fixture()
        rows = {i: np.array([0.5, 0.5]) for i in ids_a + ids_b}
        smoothed = smooth_labels(g, PredictionMatrix(rows=rows, mode="multiclass"), ds, seeds)
        for row in smoothed.rows.values():
            assert row.sum() == pytest.approx(1.0)
            assert np.all(row >= 0)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        model = random_model(rng, dim=3, hidden=5, k=2, mode="multilabel")
        path = tmp_path / "m.bin"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.mode == "multilabel"
        for name in ("w1", "b1", "w2", "b2"):
            assert np.array_equal(getattr(model, name), getattr(loaded, name))

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "m.bin"
        path.write_bytes(b"garbage content")
        with pytest.raises(DataError):
            load_model(path)

    def test_truncated_rejected(self, tmp_path):
        rng = np.random.default_rng(5)
        model = random_model(rng, dim=3, hidden=4, k=2)
        path = tmp_path / "m.bin"
        save_model(model, path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) - 16])
        with pytest.raises(DataError):
            load_model(path)

    def test_predictions_survive_round_trip(self, tmp_path):
        ds, feats = separable_fixture()
        model = train_mlp(feats, ds, TrainConfig(epochs=3, hidden_size=8))
        path = tmp_path / "m.bin"
        save_model(model, path)
        loaded = load_model(path)
        ids = [u.id for u in ds.utterances]
        p1 = predict(model, feats, ids)
        p2 = predict(loaded, feats, ids)
        for i in ids:
            assert np.array_equal(p1.rows[i], p2.rows[i])


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(label_smoothing_eps=1.0)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
