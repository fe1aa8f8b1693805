"""Layer forward functions and their parameter containers.

Every forward accepts either a single example (1-D input) or a batch
(rows are examples). Parameter fields may hold plain arrays or graph
tensors; arrays are treated as constants.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractError, DimensionError

ACTIVATIONS = ("relu", "linear", "softmax")
GATE_KINDS = ("GL1", "GL2")
# sigmoid(±30) is still strictly inside (0, 1) in float64; sigmoid(±40) is not
GL2_THETA_LIMIT = 30.0
LSTM_GATES = ("i", "f", "o", "g")


@dataclass
class DenseParams:
    W: object  # (out, in)
    b: object  # (out,)
    activation: str = "linear"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if np.shape(_val(self.b)) != (np.shape(_val(self.W))[0],):
            raise DimensionError(
                f"dense: bias shape {np.shape(_val(self.b))} does not match weight {np.shape(_val(self.W))}"
            )


@dataclass
class GateParams:
    kind: str
    theta: object  # (n,)

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ConfigError(f"unknown gate kind {self.kind!r}")


@dataclass
class LstmParams:
    W: Dict[str, object]  # gate -> (H, in)
    U: Dict[str, object]  # gate -> (H, H)
    b: Dict[str, object]  # gate -> (H,)

    @property
    def hidden_size(self) -> int:
        return np.shape(_val(self.U["i"]))[0]

    @property
    def input_size(self) -> int:
        return np.shape(_val(self.W["i"]))[1]


@dataclass
class EmbeddingParams:
    table: object  # (V, d); row 0 is padding

    @property
    def vocab_size(self) -> int:
        return np.shape(_val(self.table))[0]


def _val(x):
    return x.value if isinstance(x, Tensor) else np.asarray(x)


# ---------------------------------------------------------------------------
# initialisers


def init_dense(rng: np.random.Generator, n_in: int, n_out: int, activation: str = "linear") -> DenseParams:
    limit = np.sqrt(6.0 / (n_in + n_out))
    W = rng.uniform(-limit, limit, size=(n_out, n_in))
    return DenseParams(W=W, b=np.zeros(n_out), activation=activation)


def init_gate(kind: str, n: int) -> GateParams:
    # GL1 starts as identity, GL2 at sigmoid(0) = 0.5
    theta = np.ones(n) if kind == "GL1" else np.zeros(n)
    return GateParams(kind=kind, theta=theta)


def init_lstm(rng: np.random.Generator, n_in: int, hidden: int, scale: float = 0.08) -> LstmParams:
    W = {k: rng.uniform(-scale, scale, size=(hidden, n_in)) for k in LSTM_GATES}
    U = {k: rng.uniform(-scale, scale, size=(hidden, hidden)) for k in LSTM_GATES}
    b = {k: (np.ones(hidden) if k == "f" else np.zeros(hidden)) for k in LSTM_GATES}
    return LstmParams(W=W, U=U, b=b)


def init_embedding(rng: np.random.Generator, vocab_size: int, dim: int, scale: float = 0.05) -> EmbeddingParams:
    table = rng.uniform(-scale, scale, size=(vocab_size, dim))
    table[0] = 0.0
    return EmbeddingParams(table=table)


# ---------------------------------------------------------------------------
# forward passes


def _apply_activation(z: Tensor, activation: str) -> Tensor:
    if activation == "relu":
        return ad.relu(z)
    if activation == "softmax":
        return ad.softmax(z, axis=-1)
    return z


def dense_forward(p: DenseParams, x) -> Tensor:
    x = ad.as_tensor(x)
    n_in = np.shape(_val(p.W))[1]
    if x.shape[-1] != n_in:
        raise DimensionError(f"dense: input width {x.shape[-1]} but layer expects {n_in}")
    return _apply_activation(ad.add(ad.linear(x, p.W), p.b), p.activation)


def dropout_apply(x, rate: float, mode: str, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: scale survivors at train time, identity at eval."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ConfigError(f"dropout mode must be 'train' or 'eval', got {mode!r}")
    x = ad.as_tensor(x)
    if mode == "eval" or rate == 0.0:
        return x
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return ad.mul(x, mask)


def effective_gate(p: GateParams) -> np.ndarray:
    theta = np.asarray(_val(p.theta), dtype=np.float64)
    if p.kind == "GL1":
        return theta.copy()
    return ad._sigmoid(np.clip(theta, -GL2_THETA_LIMIT, GL2_THETA_LIMIT))


def gate_forward(p: GateParams, x) -> Tensor:
    x = ad.as_tensor(x)
    theta = ad.as_tensor(p.theta)
    if theta.shape != (x.shape[-1],):
        raise DimensionError(f"gate: weights of shape {theta.shape} for input {x.shape}")
    if p.kind == "GL1":
        weights = theta
    else:
        weights = ad.sigmoid(ad.clip(theta, -GL2_THETA_LIMIT, GL2_THETA_LIMIT))
    return ad.mul(x, weights)


def lstm_step(p: LstmParams, x_t, h_prev, c_prev) -> Tuple[Tensor, Tensor]:
    x_t, h_prev, c_prev = ad.as_tensor(x_t), ad.as_tensor(h_prev), ad.as_tensor(c_prev)
    H = p.hidden_size
    if x_t.shape[-1] != p.input_size:
        raise DimensionError(f"lstm: input width {x_t.shape[-1]} but cell expects {p.input_size}")
    if h_prev.shape[-1] != H or c_prev.shape != h_prev.shape:
        raise DimensionError(f"lstm: state shapes {h_prev.shape}/{c_prev.shape} for hidden size {H}")

    def pre(k):
        return ad.add(ad.add(ad.linear(x_t, p.W[k]), ad.linear(h_prev, p.U[k])), p.b[k])

    i = ad.sigmoid(pre("i"))
    f = ad.sigmoid(pre("f"))
    o = ad.sigmoid(pre("o"))
    g = ad.tanh(pre("g"))
    c = ad.add(ad.mul(f, c_prev), ad.mul(i, g))
    h = ad.mul(o, ad.tanh(c))
    return h, c


def lstm_encode(p: LstmParams, seq: Sequence) -> Tensor:
    """Run over ``seq`` from zero state; return the last hidden state."""
    first = ad.as_tensor(seq[0])
    state_shape = first.shape[:-1] + (p.hidden_size,)
    h = c = Tensor(np.zeros(state_shape))
    for x_t in seq:
        h, c = lstm_step(p, x_t, h, c)
    return h


def bilstm_encode(fwd: LstmParams, bwd: LstmParams, seq: Sequence) -> Tensor:
    seq = list(seq)
    if not seq:
        raise ContractError("bilstm: empty sequence")
    shapes = {ad.as_tensor(x).shape for x in seq}
    if len(shapes) != 1:
        raise DimensionError(f"bilstm: sequence elements have differing shapes {sorted(shapes)}")
    return ad.concat([lstm_encode(fwd, seq), lstm_encode(bwd, seq[::-1])], axis=-1)


def embedding_lookup(p: EmbeddingParams, ids) -> List[Tensor]:
    """One vector per position; for a (batch, time) id array, one (batch, d) tensor per step."""
    ids = np.asarray(ids, dtype=np.int64)
    V = p.vocab_size
    if ids.size and (ids.min() < 0 or ids.max() >= V):
        bad = ids[(ids < 0) | (ids >= V)].ravel()[0]
        raise IndexError(f"embedding: id {int(bad)} outside vocabulary of size {V}")
    rows = ad.take_rows(p.table, ids, padding_idx=0)
    if ids.ndim == 1:
        return [rows[t] for t in range(ids.shape[0])]
    return [rows[:, t, :] for t in range(ids.shape[1])]
