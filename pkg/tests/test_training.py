import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sentifuse import models as M
from sentifuse import synthetic
from sentifuse.errors import ConfigError, ContractError
from sentifuse.training import (
    Examples,
    TrainConfig,
    evaluate,
    metrics_from_predictions,
    principal_components,
    project_2d,
    train,
)


def test_metrics_example():
    true = [0] * 100 + [1] * 100
    pred = [0] * 84 + [1] * 16 + [0] * 23 + [1] * 77
    m = metrics_from_predictions(true, pred, ("negative", "positive"))
    assert m.confusion == [[84, 16], [23, 77]]
    assert m.per_class == {"negative": 0.84, "positive": 0.77}
    assert m.accuracy == pytest.approx(0.805, abs=1e-12)
    assert set(m.to_json()) == {"accuracy", "per_class", "confusion"}


def test_metrics_single_class_present():
    m = metrics_from_predictions([1, 1, 1], [1, 0, 1], ("negative", "positive"))
    assert m.per_class == {"positive": pytest.approx(2 / 3)}
    assert m.accuracy == pytest.approx(2 / 3)


def test_metrics_empty():
    with pytest.raises(ContractError):
        metrics_from_predictions([], [], ("negative", "positive"))


@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=60))
def test_metrics_confusion_consistent(pairs):
    true, pred = zip(*pairs)
    m = metrics_from_predictions(true, pred, ("negative", "neutral", "positive"))
    assert sum(map(sum, m.confusion)) == len(pairs)
    assert m.accuracy == sum(t == p for t, p in pairs) / len(pairs)


def _small_model(seed=0):
    spec = M.ModelSpec("image_features", 8, M.Head("softmax", 2), (M.Dense(6), M.Dropout(0.2)))
    return M.build(spec, seed)


def test_training_is_deterministic():
    data = synthetic.separable_features(40, 8, seed=1)
    runs = []
    for _ in range(2):
        res = train(_small_model(), data, TrainConfig(epochs=5, batch_size=8, lr=0.05, seed=4), val=data)
        runs.append(res)
    for k in runs[0].model.params:
        assert runs[0].model.params[k].tobytes() == runs[1].model.params[k].tobytes()
    assert runs[0].history == runs[1].history


def test_training_seed_matters():
    data = synthetic.separable_features(40, 8, seed=1)
    a = train(_small_model(), data, TrainConfig(epochs=2, batch_size=8, seed=1)).model
    b = train(_small_model(), data, TrainConfig(epochs=2, batch_size=8, seed=2)).model
    assert a.params["head.W"].tobytes() != b.params["head.W"].tobytes()


def test_history_and_best_epoch():
    data = synthetic.separable_features(40, 8, seed=2)
    res = train(_small_model(), data, TrainConfig(epochs=4, batch_size=8, lr=0.05), val=data)
    assert [h["epoch"] for h in res.history] == [1, 2, 3, 4]
    assert all({"train_loss", "train_accuracy", "val_accuracy"} <= set(h) for h in res.history)
    best = max(h["val_accuracy"] for h in res.history)
    assert res.history[res.best_epoch - 1]["val_accuracy"] == best
    assert evaluate(res.best_model(), data).accuracy == best


def test_head_loss_pairing():
    data = synthetic.separable_features(10, 8)
    with pytest.raises(ConfigError):
        train(_small_model(), data, TrainConfig(loss="cosine"))
    emb = M.build_embedding_head(_small_model())
    with pytest.raises(ConfigError):
        train(emb, data, TrainConfig(loss="xent"), label_table=synthetic.label_embeddings())
    with pytest.raises(ConfigError):
        train(emb, data, TrainConfig(loss="cosine"))


def test_class_mismatch():
    data = synthetic.separable_features(10, 8)
    data = Examples(data.inputs, data.labels, ("neg", "pos"))
    with pytest.raises(ConfigError):
        train(_small_model(), data, TrainConfig(epochs=1))


def test_config_dict_roundtrip():
    cfg = TrainConfig(epochs=3, optimizer="rmsprop", lr=0.01)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"epochz": 3})


def test_embedding_training_predicts_labels():
    data = synthetic.separable_features(40, 8, seed=3)
    emb = M.build_embedding_head(_small_model(), proj_dim=10)
    res = train(emb, data, TrainConfig(epochs=30, batch_size=8, lr=0.05, loss="cosine"),
                label_table=synthetic.label_embeddings(dim=10))
    assert evaluate(res.model, data).accuracy >= 0.9


# projection

def test_project_low_rank_exact():
    rng = np.random.default_rng(0)
    coords = rng.normal(size=(30, 2)) * [5.0, 1.0]
    basis, _ = np.linalg.qr(rng.normal(size=(50, 2)))
    x = coords @ basis.T + rng.normal(size=50)
    rows = project_2d(list(x), [("f", "positive")] * 30)
    assert len(rows) == 30 and rows[0][2:] == ("f", "positive")
    xy = np.array([r[:2] for r in rows])
    d_in = np.linalg.norm(x[:, None] - x[None], axis=-1)
    d_out = np.linalg.norm(xy[:, None] - xy[None], axis=-1)
    np.testing.assert_allclose(d_out, d_in, atol=1e-6)


def test_project_rotation_invariant():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(25, 6)) * np.arange(6, 0, -1)
    q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
    meta = [("f", "l")] * 25
    a = np.array([r[:2] for r in project_2d(list(x), meta)])
    b = np.array([r[:2] for r in project_2d(list(x @ q.T), meta)])
    np.testing.assert_allclose(np.abs(a), np.abs(b), atol=1e-6)


def test_principal_components_orthonormal():
    x = np.random.default_rng(2).normal(size=(40, 5)) * [4, 3, 2, 1, 0.5]
    comps = principal_components(x, 3)
    np.testing.assert_allclose(comps @ comps.T, np.eye(3), atol=1e-6)


def test_project_rank_deficient_warns():
    x = np.outer(np.arange(5.0), np.ones(4))
    with pytest.warns(RuntimeWarning, match="rank deficient"):
        rows = project_2d(list(x), [("f", "l")] * 5)
    assert all(r[1] == 0.0 for r in rows)


def test_project_identical_vectors():
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always")
        rows = project_2d([np.ones(3)] * 4, [("f", "l")] * 4)
    assert all(r[:2] == (0.0, 0.0) for r in rows)


def test_project_errors():
    with pytest.raises(ContractError):
        project_2d([np.ones(3)], [("f", "l")])
    with pytest.raises(ContractError):
        project_2d([np.ones(3), np.zeros(3)], [("f", "l")])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 20))
def test_project_row_count(seed, n):
    x = np.random.default_rng(seed).normal(size=(n, 7))
    assert len(project_2d(list(x), [("f", "l")] * n)) == n
