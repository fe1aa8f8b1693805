"""Losses and optimizers.

Losses take a prediction tensor and a plain target array. A 2-D input is
treated as a batch and the loss is averaged over rows.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractError, DegenerateVectorError, DimensionError

LOSS_KINDS = ("categorical_cross_entropy", "cosine_proximity", "mse", "hinge")
LOSS_ALIASES = {
    "xent": "categorical_cross_entropy",
    "cosine": "cosine_proximity",
    "mse": "mse",
    "hinge": "hinge",
}
PROB_FLOOR = 1e-12


def _same_shape(name, pred, target):
    if pred.shape != np.shape(target):
        raise DimensionError(f"{name}: prediction {pred.shape} vs target {np.shape(target)}")


def categorical_cross_entropy(pred, target) -> Tensor:
    pred = ad.as_tensor(pred)
    target = np.asarray(target, dtype=np.float64)
    _same_shape("categorical_cross_entropy", pred, target)
    if not (np.all((target == 0.0) | (target == 1.0)) and np.all(target.sum(axis=-1) == 1.0)):
        raise ContractError("categorical_cross_entropy: target is not one-hot")
    if np.any(np.abs(pred.value.sum(axis=-1) - 1.0) > 1e-9):
        raise ContractError("categorical_cross_entropy: prediction is not a probability vector")
    logp = ad.log(ad.clip(pred, PROB_FLOOR, 1.0))
    per_row = ad.neg(ad.sum_(ad.mul(logp, target), axis=-1))
    return ad.mean(per_row)


def cosine_proximity(pred, target) -> Tensor:
    """Negative cosine similarity, averaged over rows."""
    pred = ad.as_tensor(pred)
    target = np.asarray(target, dtype=np.float64)
    _same_shape("cosine_proximity", pred, target)
    pred_norm2 = (pred.value ** 2).sum(axis=-1)
    if np.any(pred_norm2 == 0.0):
        raise DegenerateVectorError("cosine_proximity: zero-norm prediction")
    target_norm = np.linalg.norm(target, axis=-1, keepdims=pred.ndim > 1)
    if np.any(target_norm == 0.0):
        raise DegenerateVectorError("cosine_proximity: zero-norm target")
    dots = ad.sum_(ad.mul(pred, target / target_norm), axis=-1)
    norms = ad.sqrt(ad.sum_(ad.square(pred), axis=-1))
    cos = ad.clip(ad.div(dots, norms), -1.0, 1.0)
    return ad.neg(ad.mean(cos))


def hinge(pred, target) -> Tensor:
    pred = ad.as_tensor(pred)
    target = np.asarray(target, dtype=np.float64)
    _same_shape("hinge", pred, target)
    return ad.mean(ad.relu(ad.sub(1.0, ad.mul(pred, target))))


def mse(pred, target) -> Tensor:
    pred = ad.as_tensor(pred)
    target = np.asarray(target, dtype=np.float64)
    _same_shape("mse", pred, target)
    return ad.mean(ad.square(ad.sub(pred, target)))


LOSSES = {
    "categorical_cross_entropy": categorical_cross_entropy,
    "cosine_proximity": cosine_proximity,
    "mse": mse,
    "hinge": hinge,
}


def resolve_loss(name: str) -> str:
    kind = LOSS_ALIASES.get(name, name)
    if kind not in LOSSES:
        raise ConfigError(f"unknown loss {name!r}")
    return kind


def get_loss(name: str):
    return LOSSES[resolve_loss(name)]


# ---------------------------------------------------------------------------
# optimizers


@dataclass
class OptimizerState:
    kind: str = "sgd_momentum"
    lr: float = 0.001
    momentum: float = 0.9
    rho: float = 0.9
    eps: float = 1e-8
    slots: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sgd_momentum", "rmsprop"):
            raise ConfigError(f"unknown optimizer {self.kind!r}")

    def slot(self, name: str, like: np.ndarray) -> np.ndarray:
        if name not in self.slots:
            self.slots[name] = np.zeros_like(like, dtype=np.float64)
        return self.slots[name]


def _check(params, grads):
    for name, g in grads.items():
        if name not in params:
            raise ContractError(f"gradient for unknown parameter {name!r}")
        if np.shape(g) != np.shape(params[name]):
            raise DimensionError(f"{name}: gradient {np.shape(g)} vs parameter {np.shape(params[name])}")


def sgd_momentum_step(state: OptimizerState, params: Dict[str, np.ndarray], grads: Mapping[str, np.ndarray]):
    """Classical momentum: ``v ← μv − lr·g``, ``p ← p + v``. Updates in place."""
    _check(params, grads)
    for name, g in grads.items():
        v = state.slot(name, params[name])
        v *= state.momentum
        v -= state.lr * g
        params[name] += v
    return params, state


def rmsprop_step(state: OptimizerState, params: Dict[str, np.ndarray], grads: Mapping[str, np.ndarray]):
    """``s ← ρs + (1−ρ)g²``, ``p ← p − lr·g/(√s + ε)``. Updates in place."""
    _check(params, grads)
    for name, g in grads.items():
        s = state.slot(name, params[name])
        s *= state.rho
        s += (1.0 - state.rho) * g * g
        params[name] -= state.lr * g / (np.sqrt(s) + state.eps)
    return params, state


def optimizer_step(state: OptimizerState, params, grads):
    if state.kind == "rmsprop":
        return rmsprop_step(state, params, grads)
    return sgd_momentum_step(state, params, grads)


def make_optimizer(name: str, lr: float, momentum: float = 0.9, rho: float = 0.9, eps: float = 1e-8) -> OptimizerState:
    kind = {"sgd": "sgd_momentum", "sgd_momentum": "sgd_momentum", "rmsprop": "rmsprop"}.get(name)
    if kind is None:
        raise ConfigError(f"unknown optimizer {name!r}")
    return OptimizerState(kind=kind, lr=lr, momentum=momentum, rho=rho, eps=eps)
