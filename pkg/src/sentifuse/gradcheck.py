"""Finite-difference checks over every differentiable building block."""
from __future__ import annotations

from typing import Callable, Dict, List, Tuple

import numpy as np

from . import autodiff as ad
from . import layers as L
from . import objectives as O
from .autodiff import GradReport, finite_diff_check


def _u(rng, *shape):
    return rng.uniform(-1.0, 1.0, size=shape)


def _readout(rng, out):
    # a random linear functional, so every output entry influences the loss
    w = _u(rng, *out.shape)
    return ad.sum_(ad.mul(out, w))


def case_dense(rng):
    x = _u(rng, 3, 4)
    params = {"W": _u(rng, 5, 4), "b": _u(rng, 5)}
    w = _u(rng, 3, 5)
    return (lambda p: ad.sum_(ad.mul(L.dense_forward(L.DenseParams(p["W"], p["b"], "relu"), x), w))), params


def case_dense_softmax(rng):
    x = _u(rng, 2, 4)
    params = {"W": _u(rng, 3, 4), "b": _u(rng, 3)}
    w = _u(rng, 2, 3)
    return (lambda p: ad.sum_(ad.mul(L.dense_forward(L.DenseParams(p["W"], p["b"], "softmax"), x), w))), params


def case_dropout(rng):
    seed = int(rng.integers(1 << 31))
    params = {"x": _u(rng, 3, 6)}
    w = _u(rng, 3, 6)

    def fn(p):
        # same mask on every call; eval mode is the identity and is covered too
        y = L.dropout_apply(p["x"], 0.3, "train", np.random.default_rng(seed))
        z = L.dropout_apply(y, 0.5, "eval", np.random.default_rng(seed))
        return ad.sum_(ad.mul(z, w))

    return fn, params


def case_gl1(rng):
    params = {"theta": _u(rng, 5), "x": _u(rng, 2, 5)}
    w = _u(rng, 2, 5)
    return (lambda p: ad.sum_(ad.mul(L.gate_forward(L.GateParams("GL1", p["theta"]), p["x"]), w))), params


def case_gl2(rng):
    params = {"theta": _u(rng, 5), "x": _u(rng, 2, 5)}
    w = _u(rng, 2, 5)
    return (lambda p: ad.sum_(ad.mul(L.gate_forward(L.GateParams("GL2", p["theta"]), p["x"]), w))), params


def case_embedding(rng):
    params = {"table": _u(rng, 6, 3)}
    params["table"][0] = 0.0
    ids = np.array([[0, 2, 2, 5], [1, 3, 0, 2]])
    ws = [_u(rng, 2, 3) for _ in range(ids.shape[1])]

    def fn(p):
        rows = L.embedding_lookup(L.EmbeddingParams(p["table"]), ids)
        return sum((ad.sum_(ad.mul(r, w)) for r, w in zip(rows, ws)), ad.Tensor(0.0))

    return fn, params


def _lstm_params(rng, n_in, H, prefix=""):
    p = {}
    for g in L.LSTM_GATES:
        p[f"{prefix}W_{g}"] = _u(rng, H, n_in)
        p[f"{prefix}U_{g}"] = _u(rng, H, H)
        p[f"{prefix}b_{g}"] = _u(rng, H)
    return p


def _cell(p, prefix=""):
    return L.LstmParams(
        W={g: p[f"{prefix}W_{g}"] for g in L.LSTM_GATES},
        U={g: p[f"{prefix}U_{g}"] for g in L.LSTM_GATES},
        b={g: p[f"{prefix}b_{g}"] for g in L.LSTM_GATES},
    )


def case_lstm_step(rng):
    params = _lstm_params(rng, 3, 4)
    params.update(x=_u(rng, 2, 3), h=_u(rng, 2, 4), c=_u(rng, 2, 4))
    wh, wc = _u(rng, 2, 4), _u(rng, 2, 4)

    def fn(p):
        h, c = L.lstm_step(_cell(p), p["x"], p["h"], p["c"])
        return ad.add(ad.sum_(ad.mul(h, wh)), ad.sum_(ad.mul(c, wc)))

    return fn, params


def case_bilstm(rng):
    params = {**_lstm_params(rng, 2, 3, "f."), **_lstm_params(rng, 2, 3, "b.")}
    seq = [_u(rng, 2, 2) for _ in range(4)]
    w = _u(rng, 2, 6)
    return (lambda p: ad.sum_(ad.mul(L.bilstm_encode(_cell(p, "f."), _cell(p, "b."), seq), w))), params


def case_xent(rng):
    params = {"z": _u(rng, 3, 4)}
    target = np.eye(4)[rng.integers(0, 4, size=3)]
    return (lambda p: O.categorical_cross_entropy(ad.softmax(p["z"]), target)), params


def case_cosine(rng):
    params = {"pred": _u(rng, 3, 5)}
    target = _u(rng, 3, 5)
    return (lambda p: O.cosine_proximity(p["pred"], target)), params


def case_hinge(rng):
    target = _u(rng, 3, 5)
    pred = _u(rng, 3, 5)
    # keep every margin clear of the kink at t*p = 1
    margin = 1.0 - pred * target
    pred = np.where(np.abs(margin) < 0.05, pred + 0.2 * np.sign(target), pred)
    return (lambda p: O.hinge(p["pred"], target)), {"pred": pred}


def case_mse(rng):
    target = _u(rng, 3, 5)
    return (lambda p: O.mse(p["pred"], target)), {"pred": _u(rng, 3, 5)}


def case_matmul(rng):
    params = {"a": _u(rng, 3, 4), "b": _u(rng, 4, 2)}
    w = _u(rng, 3, 2)
    return (lambda p: ad.sum_(ad.mul(ad.matmul(p["a"], p["b"]), w))), params


CASES: Dict[str, Callable] = {
    "matmul": case_matmul,
    "dense": case_dense,
    "dense_softmax": case_dense_softmax,
    "dropout": case_dropout,
    "gl1": case_gl1,
    "gl2": case_gl2,
    "embedding": case_embedding,
    "lstm_step": case_lstm_step,
    "bilstm": case_bilstm,
    "cross_entropy": case_xent,
    "cosine_proximity": case_cosine,
    "hinge": case_hinge,
    "mse": case_mse,
}


def run_suite(seeds: int = 20, h: float = 1e-5, tol: float = 1e-4,
              cases=None) -> List[Tuple[str, int, GradReport]]:
    results = []
    for name in cases or CASES:
        for seed in range(seeds):
            fn, params = CASES[name](np.random.default_rng([seed, 17]))
            results.append((name, seed, finite_diff_check(fn, params, h=h, tol=tol)))
    return results
