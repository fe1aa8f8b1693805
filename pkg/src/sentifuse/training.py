"""Training loop, accuracy metrics and 2-D projection of model outputs."""
from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .data import EmbeddingTable, batch_iter
from .errors import ConfigError, ContractError
from .models import Model
from .objectives import get_loss, make_optimizer, optimizer_step, resolve_loss

log = logging.getLogger(__name__)

EMBEDDING_LOSSES = ("cosine_proximity", "hinge", "mse")


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    loss: str = "xent"
    optimizer: str = "sgd"
    lr: float = 0.001
    momentum: float = 0.9
    rho: float = 0.9
    eps: float = 1e-8
    seed: int = 0
    eval_every_epoch: bool = True

    def __post_init__(self):
        if int(self.epochs) < 1:
            raise ConfigError("epochs must be at least 1")
        if int(self.batch_size) < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        resolve_loss(self.loss)
        make_optimizer(self.optimizer, self.lr)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training options {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Examples:
    """Model inputs with integer class indices into ``classes``.

    ``inputs`` is an array with one row per example, or a ``(text, image)``
    pair of such arrays for fusion models.
    """

    inputs: object
    labels: np.ndarray
    classes: Tuple[str, ...]

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.classes = tuple(self.classes)
        if len(self) != len(self.labels):
            raise ContractError("inputs and labels disagree on example count")

    def __len__(self):
        if isinstance(self.inputs, tuple):
            return len(self.inputs[0])
        return len(self.inputs)

    def take(self, idx) -> "Examples":
        idx = np.asarray(idx, dtype=np.int64)
        if isinstance(self.inputs, tuple):
            inputs = tuple(np.asarray(x)[idx] for x in self.inputs)
        else:
            inputs = np.asarray(self.inputs)[idx]
        return Examples(inputs, self.labels[idx], self.classes)


@dataclass
class Metrics:
    accuracy: float
    per_class: Dict[str, float]
    confusion: List[List[int]]
    classes: Tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {"accuracy": self.accuracy, "per_class": self.per_class, "confusion": self.confusion}


def metrics_from_predictions(true: Sequence[int], pred: Sequence[int], classes: Sequence[str]) -> Metrics:
    k = len(classes)
    confusion = np.zeros((k, k), dtype=np.int64)
    true, pred = np.asarray(true, dtype=np.int64), np.asarray(pred, dtype=np.int64)
    if true.shape != pred.shape:
        raise ContractError("true and predicted labels differ in length")
    np.add.at(confusion, (true, pred), 1)
    total = int(confusion.sum())
    if total == 0:
        raise ContractError("cannot compute metrics on an empty dataset")
    per_class = {}
    for i, name in enumerate(classes):
        support = int(confusion[i].sum())
        if support:
            per_class[name] = int(confusion[i, i]) / support
    return Metrics(
        accuracy=int(np.trace(confusion)) / total,
        per_class=per_class,
        confusion=confusion.tolist(),
        classes=tuple(classes),
    )


def _check_pairing(model: Model, loss: str, label_table) -> None:
    if model.head_kind == "softmax" and loss != "categorical_cross_entropy":
        raise ConfigError(f"softmax head must be trained with cross-entropy, not {loss}")
    if model.head_kind == "embedding":
        if loss not in EMBEDDING_LOSSES:
            raise ConfigError(f"embedding head needs cosine, hinge or mse loss, not {loss}")
        if label_table is None:
            raise ConfigError("embedding head needs label embeddings")


def _targets(model: Model, labels: np.ndarray, label_table: Optional[EmbeddingTable]) -> np.ndarray:
    if model.head_kind == "softmax":
        return np.eye(model.spec.head.size)[labels]
    return label_table.matrix(model.classes)[labels]


def predict_indices(model: Model, data: Examples, batch_size: int = 256) -> np.ndarray:
    index = {c: i for i, c in enumerate(data.classes)}
    out = []
    for start in range(0, len(data), batch_size):
        chunk = data.take(np.arange(start, min(start + batch_size, len(data))))
        out.extend(index[c] for c in model.predict(chunk.inputs))
    return np.asarray(out, dtype=np.int64)


def evaluate(model: Model, data: Examples, labels: Optional[EmbeddingTable] = None) -> Metrics:
    """Accuracy, per-class accuracy and confusion counts (rows are true labels)."""
    if len(data) == 0:
        raise ContractError("cannot evaluate on an empty dataset")
    if model.head_kind == "embedding" and labels is not None:
        model = model.copy()
        model.label_embeddings = labels
    return metrics_from_predictions(data.labels, predict_indices(model, data), data.classes)


@dataclass
class TrainResult:
    model: Model
    history: List[dict] = field(default_factory=list)
    best_params: Optional[Dict[str, np.ndarray]] = None
    best_epoch: Optional[int] = None

    def best_model(self) -> Model:
        if self.best_params is None:
            return self.model
        best = self.model.copy()
        best.params = {k: v.copy() for k, v in self.best_params.items()}
        return best


def train(model: Model, data: Examples, cfg: TrainConfig, val: Optional[Examples] = None,
          label_table: Optional[EmbeddingTable] = None) -> TrainResult:
    """Train ``model`` in place; deterministic given (seed, config, data)."""
    if len(data) == 0:
        raise ContractError("training data is empty")
    if tuple(data.classes) != model.classes:
        raise ConfigError(f"data classes {data.classes} differ from model classes {model.classes}")
    loss_kind = resolve_loss(cfg.loss)
    label_table = label_table if label_table is not None else model.label_embeddings
    _check_pairing(model, loss_kind, label_table)
    if model.head_kind == "embedding":
        model.label_embeddings = label_table
    loss_fn = get_loss(loss_kind)
    opt = make_optimizer(cfg.optimizer, cfg.lr, cfg.momentum, cfg.rho, cfg.eps)
    dropout_rng = np.random.default_rng([cfg.seed, 7919])
    targets = _targets(model, data.labels, label_table)
    trainable = model.trainable()

    result = TrainResult(model=model)
    best_acc = -1.0
    for epoch in range(int(cfg.epochs)):
        losses, weights = [], []
        for batch in batch_iter(range(len(data)), int(cfg.batch_size), cfg.seed, epoch):
            chunk = data.take(batch)
            g = ad.Graph()
            out, _ = model.forward(chunk.inputs, train=True, rng=dropout_rng, graph=g)
            loss = loss_fn(out, targets[batch])
            grads = ad.backward(g, loss)
            optimizer_step(opt, model.params, {k: grads[k] for k in trainable})
            losses.append(float(loss.value))
            weights.append(len(batch))
        record = {"epoch": epoch + 1, "train_loss": float(np.average(losses, weights=weights))}
        if cfg.eval_every_epoch or epoch == cfg.epochs - 1:
            record["train_accuracy"] = evaluate(model, data).accuracy
            if val is not None and len(val):
                acc = evaluate(model, val).accuracy
                record["val_accuracy"] = acc
                if acc > best_acc:
                    best_acc = acc
                    result.best_epoch = epoch + 1
                    result.best_params = {k: v.copy() for k, v in model.params.items()}
        log.debug("epoch %d: %s", epoch + 1, record)
        result.history.append(record)
    return result


# ---------------------------------------------------------------------------
# projection


def _top_component(cov: np.ndarray, tol: float, max_iter: int, start: np.ndarray) -> Tuple[np.ndarray, float]:
    v = start / np.linalg.norm(start)
    for _ in range(max_iter):
        w = cov @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return v, 0.0
        w /= norm
        if w @ v < 0:
            w = -w
        done = np.linalg.norm(w - v) < tol
        v = w
        if done:
            break
    return v, float(v @ cov @ v)


def principal_components(x: np.ndarray, k: int = 2, tol: float = 1e-9, max_iter: int = 1000) -> np.ndarray:
    """Top ``k`` principal directions of centered rows, by power iteration with deflation."""
    x = np.asarray(x, dtype=np.float64)
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / max(len(x) - 1, 1)
    scale = np.abs(cov).max(initial=0.0)
    rng = np.random.default_rng(0)
    comps = []
    for i in range(k):
        vec, lam = _top_component(cov, tol, max_iter, rng.standard_normal(cov.shape[0]))
        if scale == 0.0 or lam <= 1e-12 * scale:
            warnings.warn(f"projection is rank deficient; component {i + 1} set to zero", RuntimeWarning)
            comps.append(np.zeros(cov.shape[0]))
            continue
        # fix the sign so the largest-magnitude entry is positive
        vec = vec * np.sign(vec[np.argmax(np.abs(vec))])
        comps.append(vec)
        cov = cov - lam * np.outer(vec, vec)
    return np.stack(comps)


def project_2d(outputs: Sequence, meta: Sequence[Tuple[str, str]]) -> List[Tuple[float, float, str, str]]:
    """Rows ``(x, y, folder, label)`` from the two leading principal components."""
    x = np.stack([np.asarray(o.value if isinstance(o, ad.Tensor) else o, dtype=np.float64) for o in outputs]) \
        if len(outputs) else np.zeros((0, 0))
    if len(x) < 2:
        raise ContractError("projection needs at least two vectors")
    if len(meta) != len(x):
        raise ContractError("one (folder, label) pair is needed per vector")
    comps = principal_components(x, 2)
    coords = (x - x.mean(axis=0)) @ comps.T
    return [(float(a), float(b), str(f), str(l)) for (a, b), (f, l) in zip(coords, meta)]
