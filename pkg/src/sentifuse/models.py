"""Declarative model specs, named presets, builders and checkpoints.

A :class:`ModelSpec` is a plain description of a layer stack. Building it
validates the dimension chain and allocates named parameter arrays; the
resulting :class:`Model` runs the stack through the autodiff layer
functions.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import autodiff as ad
from . import layers as L
from .autodiff import Graph, Tensor
from .data import LABEL_RANK, EmbeddingTable
from .errors import ContractError, ParseError, SpecError
from .text import MAX_LEN

INPUT_KINDS = ("image_features", "token_sequence", "dual")
TEXT_FEATURE_DIM = 600
CHECKPOINT_MAGIC = b"SFCK"
CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# layer descriptions


@dataclass(frozen=True)
class Dense:
    units: int
    activation: str = "relu"


@dataclass(frozen=True)
class Dropout:
    rate: float


@dataclass(frozen=True)
class Embedding:
    dim: int = 200


@dataclass(frozen=True)
class BiLSTM:
    hidden: int = 300


@dataclass(frozen=True)
class Gate:
    kind: str


@dataclass(frozen=True)
class Head:
    kind: str  # "softmax" or "embedding"
    size: int


LayerSpec = Union[Dense, Dropout, Embedding, BiLSTM, Gate]
_LAYER_TYPES = {cls.__name__: cls for cls in (Dense, Dropout, Embedding, BiLSTM, Gate)}


@dataclass(frozen=True)
class ModelSpec:
    """Layer stack description.

    For ``image_features`` ``input_dim`` is the feature width; for
    ``token_sequence`` it is the vocabulary size; for ``dual`` it is the
    text-feature width and the image branch is described separately.
    """

    input_kind: str
    input_dim: int
    head: Head
    layers: Tuple[LayerSpec, ...] = ()
    image_dim: int = 0
    image_layers: Tuple[LayerSpec, ...] = ()
    fused_layers: Tuple[LayerSpec, ...] = ()
    seq_len: int = MAX_LEN
    name: str = ""

    def to_dict(self) -> dict:
        def enc(layers):
            return [{"type": type(l).__name__, **l.__dict__} for l in layers]

        return {
            "input_kind": self.input_kind,
            "input_dim": self.input_dim,
            "head": {"kind": self.head.kind, "size": self.head.size},
            "layers": enc(self.layers),
            "image_dim": self.image_dim,
            "image_layers": enc(self.image_layers),
            "fused_layers": enc(self.fused_layers),
            "seq_len": self.seq_len,
            "name": self.name,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        def dec(items):
            out = []
            for item in items:
                item = dict(item)
                kind = item.pop("type")
                if kind not in _LAYER_TYPES:
                    raise SpecError(f"unknown layer type {kind!r}")
                out.append(_LAYER_TYPES[kind](**item))
            return tuple(out)

        return cls(
            input_kind=d["input_kind"],
            input_dim=d["input_dim"],
            head=Head(**d["head"]),
            layers=dec(d.get("layers", [])),
            image_dim=d.get("image_dim", 0),
            image_layers=dec(d.get("image_layers", [])),
            fused_layers=dec(d.get("fused_layers", [])),
            seq_len=d.get("seq_len", MAX_LEN),
            name=d.get("name", ""),
        )


# ---------------------------------------------------------------------------
# validation: walk the dimension chain and list parameter shapes


def _positive(value, what):
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
        raise SpecError(f"{what} must be a positive integer, got {value!r}")


def _chain(prefix: str, layers, width: int, sequence: bool, shapes: dict, vocab: int = 0) -> int:
    for i, layer in enumerate(layers):
        name = f"{prefix}.{i}"
        if isinstance(layer, Embedding):
            _positive(layer.dim, "embedding dim")
            if not sequence or i != 0 or not vocab:
                raise SpecError(f"{name}: embedding must be the first layer of a token model")
            shapes[f"{name}.table"] = ("embedding", (vocab, layer.dim))
            width = layer.dim
        elif isinstance(layer, BiLSTM):
            _positive(layer.hidden, "lstm hidden size")
            if not sequence or i == 0:
                raise SpecError(f"{name}: BiLSTM needs an embedded token sequence")
            H = layer.hidden
            for direction in ("fwd", "bwd"):
                for g in L.LSTM_GATES:
                    shapes[f"{name}.{direction}.W_{g}"] = ("lstm", (H, width))
                    shapes[f"{name}.{direction}.U_{g}"] = ("lstm", (H, H))
                    shapes[f"{name}.{direction}.b_{g}"] = ("lstm_f" if g == "f" else "zeros", (H,))
            width = 2 * H
            sequence = False
        elif sequence:
            raise SpecError(f"{name}: {type(layer).__name__} cannot act on a token sequence")
        elif isinstance(layer, Dense):
            _positive(layer.units, "dense units")
            if layer.activation not in ("relu", "linear"):
                raise SpecError(f"{name}: body activation must be relu or linear")
            shapes[f"{name}.W"] = ("dense", (layer.units, width))
            shapes[f"{name}.b"] = ("zeros", (layer.units,))
            width = layer.units
        elif isinstance(layer, Dropout):
            if not 0.0 <= layer.rate < 1.0:
                raise SpecError(f"{name}: dropout rate {layer.rate} outside [0, 1)")
        elif isinstance(layer, Gate):
            if layer.kind not in L.GATE_KINDS:
                raise SpecError(f"{name}: unknown gate kind {layer.kind!r}")
            shapes[f"{name}.theta"] = (layer.kind, (width,))
        else:
            raise SpecError(f"{name}: unsupported layer {layer!r}")
    if sequence:
        raise SpecError(f"{prefix}: token sequence never reduced to a vector (missing BiLSTM)")
    return width


def param_shapes(spec: ModelSpec) -> Dict[str, Tuple[str, Tuple[int, ...]]]:
    """Validate ``spec`` and return ``name -> (init kind, shape)`` in order."""
    if spec.input_kind not in INPUT_KINDS:
        raise SpecError(f"unknown input kind {spec.input_kind!r}")
    _positive(spec.input_dim, "input_dim")
    shapes: Dict[str, Tuple[str, Tuple[int, ...]]] = {}
    if spec.input_kind == "dual":
        _positive(spec.image_dim, "image_dim")
        if spec.layers and any(isinstance(l, (Embedding, BiLSTM)) for l in spec.layers):
            raise SpecError("dual models consume text features, not tokens")
        t = _chain("text", spec.layers, spec.input_dim, False, shapes)
        v = _chain("image", spec.image_layers, spec.image_dim, False, shapes)
        width = _chain("fused", spec.fused_layers, t + v, False, shapes)
    else:
        if spec.image_layers or spec.fused_layers:
            raise SpecError("branch layers are only valid for dual models")
        if spec.input_kind == "token_sequence":
            if spec.input_dim < 2:
                raise SpecError("vocabulary needs at least the padding and unknown entries")
            _positive(spec.seq_len, "seq_len")
            if not spec.layers or not isinstance(spec.layers[0], Embedding):
                raise SpecError("token models must start with an embedding layer")
            width = _chain("body", spec.layers, 0, True, shapes, vocab=spec.input_dim)
        else:
            width = _chain("body", spec.layers, spec.input_dim, False, shapes)
    head = spec.head
    if head.kind not in ("softmax", "embedding"):
        raise SpecError(f"unknown head kind {head.kind!r}")
    _positive(head.size, "head size")
    if head.kind == "softmax" and head.size < 2:
        raise SpecError("softmax head needs at least two classes")
    shapes["head.W"] = ("dense", (head.size, width))
    shapes["head.b"] = ("zeros", (head.size,))
    return shapes


def penultimate_width(spec: ModelSpec) -> int:
    return param_shapes(spec)["head.W"][1][1]


def _init(kind: str, shape, rng: np.random.Generator) -> np.ndarray:
    if kind == "dense":
        limit = np.sqrt(6.0 / (shape[0] + shape[1]))
        return rng.uniform(-limit, limit, size=shape)
    if kind == "lstm":
        return rng.uniform(-0.08, 0.08, size=shape)
    if kind == "lstm_f":
        return np.ones(shape)
    if kind == "embedding":
        table = rng.uniform(-0.05, 0.05, size=shape)
        table[0] = 0.0
        return table
    if kind == "GL1":
        return np.ones(shape)
    if kind in ("GL2", "zeros"):
        return np.zeros(shape)
    raise SpecError(f"no initialiser for {kind!r}")


def default_classes(k: int) -> Tuple[str, ...]:
    if k == 2:
        return ("negative", "positive")
    if k == 3:
        return ("negative", "neutral", "positive")
    return tuple(f"class_{i}" for i in range(k))


# ---------------------------------------------------------------------------
# model


@dataclass
class FeatureVector:
    source: str
    values: np.ndarray


class Model:
    """Parameters plus the ModelSpec that says how to use them."""

    def __init__(
        self,
        spec: ModelSpec,
        params: Dict[str, np.ndarray],
        classes: Optional[Sequence[str]] = None,
        frozen: Sequence[str] = (),
        text_encoder: Optional["Model"] = None,
        label_embeddings: Optional[EmbeddingTable] = None,
    ):
        shapes = param_shapes(spec)
        missing = set(shapes) ^ set(params)
        if missing:
            raise SpecError(f"parameter set does not match spec: {sorted(missing)}")
        for name, (_, shape) in shapes.items():
            if np.shape(params[name]) != shape:
                raise SpecError(f"{name}: shape {np.shape(params[name])}, spec wants {shape}")
        self.spec = spec
        self.params = params
        if classes is None:
            classes = default_classes(spec.head.size) if spec.head.kind == "softmax" else default_classes(2)
        self.classes = tuple(classes)
        self.frozen = frozenset(frozen)
        self.text_encoder = text_encoder
        self.label_embeddings = label_embeddings

    @property
    def head_kind(self) -> str:
        return self.spec.head.kind

    def trainable(self) -> List[str]:
        return [k for k in self.params if k not in self.frozen]

    def copy(self) -> "Model":
        return Model(self.spec, {k: v.copy() for k, v in self.params.items()}, self.classes,
                     self.frozen, self.text_encoder, self.label_embeddings)

    # -- forward ---------------------------------------------------------

    def _prepare_text(self, text):
        text = np.asarray(text)
        if self.text_encoder is not None and np.issubdtype(text.dtype, np.integer):
            return self.text_encoder.features(text)
        return text.astype(np.float64)

    def forward(self, inputs, train: bool = False, rng: Optional[np.random.Generator] = None,
                graph: Optional[Graph] = None) -> Tuple[Tensor, Tensor]:
        """Return ``(head output, penultimate activation)``.

        With a ``graph`` the trainable parameters are registered on it; frozen
        parameters and everything else enter as constants.
        """
        if train and rng is None:
            raise ContractError("training-mode forward needs a random generator")
        if graph is not None:
            p = {k: (v if k in self.frozen else graph.param(k, v)) for k, v in self.params.items()}
        else:
            p = self.params
        mode = "train" if train else "eval"
        spec = self.spec
        if spec.input_kind == "dual":
            text, image = inputs
            t = _run("text", spec.layers, ad.as_tensor(self._prepare_text(text)), p, mode, rng)
            v = _run("image", spec.image_layers, ad.as_tensor(np.asarray(image, dtype=np.float64)), p, mode, rng)
            if t.ndim != v.ndim:
                raise ContractError("text and image inputs disagree on batching")
            x = _run("fused", spec.fused_layers, ad.concat([t, v], axis=-1), p, mode, rng)
        elif spec.input_kind == "token_sequence":
            ids = np.asarray(inputs, dtype=np.int64)
            if ids.shape[-1] != spec.seq_len:
                raise ContractError(f"expected sequences of length {spec.seq_len}, got {ids.shape}")
            x = _run("body", spec.layers, ids, p, mode, rng)
        else:
            x = _run("body", spec.layers, ad.as_tensor(np.asarray(inputs, dtype=np.float64)), p, mode, rng)
        activation = "softmax" if spec.head.kind == "softmax" else "linear"
        out = L.dense_forward(L.DenseParams(p["head.W"], p["head.b"], activation), x)
        return out, x

    def output(self, inputs) -> np.ndarray:
        return self.forward(inputs)[0].value

    def features(self, inputs) -> np.ndarray:
        return self.forward(inputs)[1].value

    def predict(self, inputs) -> List[str]:
        """Class names for a batch of inputs."""
        out = np.atleast_2d(self.output(inputs))
        if self.head_kind == "softmax":
            return [self.classes[i] for i in out.argmax(axis=1)]
        if self.label_embeddings is None:
            raise ContractError("embedding-head model has no label embeddings attached")
        return [predict_nearest_label(row, self.label_embeddings, self.classes) for row in out]


def _run(prefix: str, layers, x, p, mode: str, rng) -> Tensor:
    for i, layer in enumerate(layers):
        name = f"{prefix}.{i}"
        if isinstance(layer, Embedding):
            x = L.embedding_lookup(L.EmbeddingParams(p[f"{name}.table"]), x)
        elif isinstance(layer, BiLSTM):
            cells = [
                L.LstmParams(
                    W={g: p[f"{name}.{d}.W_{g}"] for g in L.LSTM_GATES},
                    U={g: p[f"{name}.{d}.U_{g}"] for g in L.LSTM_GATES},
                    b={g: p[f"{name}.{d}.b_{g}"] for g in L.LSTM_GATES},
                )
                for d in ("fwd", "bwd")
            ]
            x = L.bilstm_encode(cells[0], cells[1], x)
        elif isinstance(layer, Dense):
            x = L.dense_forward(L.DenseParams(p[f"{name}.W"], p[f"{name}.b"], layer.activation), x)
        elif isinstance(layer, Dropout):
            x = L.dropout_apply(x, layer.rate, mode, rng)
        elif isinstance(layer, Gate):
            x = L.gate_forward(L.GateParams(layer.kind, p[f"{name}.theta"]), x)
    return x


def build(spec: ModelSpec, seed: int = 0, classes=None, **kwargs) -> Model:
    shapes = param_shapes(spec)
    rng = np.random.default_rng(seed)
    params = {name: _init(kind, shape, rng) for name, (kind, shape) in shapes.items()}
    return Model(spec, params, classes=classes, **kwargs)


# ---------------------------------------------------------------------------
# presets


def _table2_stack():
    return (Dense(2048), Dropout(0.7), Dense(1024), Dropout(0.7), Dense(512), Dropout(0.5))


def preset(name: str, **overrides) -> ModelSpec:
    """Named architectures from the experiment tables.

    ``overrides`` may replace ``input_dim``, ``image_dim``, ``classes`` (head
    size) or ``vocab_size`` for desk-scale runs.
    """
    k = overrides.pop("classes", None)
    vocab = overrides.pop("vocab_size", None)
    if name == "table1_best":
        spec = ModelSpec("image_features", 4096, Head("softmax", 3),
                         (Dense(1024), Dropout(0.5), Dense(512), Dropout(0.5)))
    elif name == "table2_model2":
        spec = ModelSpec("image_features", 4096, Head("softmax", 2), _table2_stack())
    elif name == "table3_embedding":
        spec = ModelSpec("image_features", 4096, Head("embedding", 50), (Dense(512), Dropout(0.2)))
    elif name == "table4_embedding":
        spec = ModelSpec("image_features", 4096, Head("embedding", 50), _table2_stack())
    elif name == "table8_text_bilstm":
        spec = ModelSpec("token_sequence", vocab or 2, Head("softmax", 2), (Embedding(200), BiLSTM(300)))
    elif name == "table8_concat":
        spec = ModelSpec("dual", TEXT_FEATURE_DIM, Head("softmax", 2), image_dim=2048)
    elif name == "table8_best_gated":
        spec = gated_spec(GatedConfig("GL2", "GL2", False, 0.3))
    elif name == "gated_best":
        spec = gated_spec(GatedConfig("GL1", "GL2", True, 0.3))
    else:
        raise SpecError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    if k is not None:
        spec = replace(spec, head=Head(spec.head.kind, k))
    unknown = set(overrides) - {"input_dim", "image_dim"}
    if unknown:
        raise SpecError(f"unsupported preset overrides {sorted(unknown)}")
    spec = replace(spec, name=name, **overrides)
    param_shapes(spec)
    return spec


PRESETS = (
    "table1_best",
    "table2_model2",
    "table3_embedding",
    "table4_embedding",
    "table8_text_bilstm",
    "table8_concat",
    "table8_best_gated",
    "gated_best",
)


# ---------------------------------------------------------------------------
# builders


def build_classical_image(arch: Union[str, ModelSpec] = "table2_model2", seed: int = 0, **overrides) -> Model:
    spec = preset(arch, **overrides) if isinstance(arch, str) else arch
    if spec.input_kind != "image_features":
        raise SpecError("classical image model needs image_features input")
    if spec.head.kind != "softmax" or spec.head.size not in (2, 3):
        raise SpecError("classical image model needs a 2- or 3-way softmax head")
    return build(spec, seed)


def build_embedding_head(base: Model, proj_dim: int = 50, seed: int = 0,
                         label_embeddings: Optional[EmbeddingTable] = None) -> Model:
    """Swap the softmax head for a linear projection, keeping every other parameter."""
    if base.spec.head.kind != "softmax":
        raise SpecError("base model has no softmax head to replace")
    spec = replace(base.spec, head=Head("embedding", proj_dim))
    width = penultimate_width(spec)
    params = {k: v.copy() for k, v in base.params.items() if not k.startswith("head.")}
    rng = np.random.default_rng(seed)
    params["head.W"] = _init("dense", (proj_dim, width), rng)
    params["head.b"] = np.zeros(proj_dim)
    return Model(spec, params, classes=base.classes, frozen=base.frozen,
                 text_encoder=base.text_encoder, label_embeddings=label_embeddings)


def build_text_bilstm(vocab_size: int, k_classes: int = 2, seed: int = 0,
                      embed_dim: int = 200, hidden: int = 300) -> Model:
    spec = ModelSpec("token_sequence", vocab_size, Head("softmax", k_classes),
                     (Embedding(embed_dim), BiLSTM(hidden)), name="text_bilstm")
    return build(spec, seed)


def build_combined_concat(text_dim: int = TEXT_FEATURE_DIM, image_dim: int = 2048, k: int = 2,
                          seed: int = 0, text_encoder: Optional[Model] = None) -> Model:
    """Linear softmax on concatenated text and image features."""
    _check_encoder(text_encoder, text_dim)
    spec = ModelSpec("dual", text_dim, Head("softmax", k), image_dim=image_dim, name="concat")
    return build(spec, seed, text_encoder=text_encoder)


@dataclass(frozen=True)
class GatedConfig:
    text_gate: Optional[str] = "GL1"
    image_gate: Optional[str] = "GL2"
    compress_image: bool = True
    dropout: float = 0.3
    compress_dim: int = TEXT_FEATURE_DIM


def gated_spec(cfg: GatedConfig, text_dim: int = TEXT_FEATURE_DIM, image_dim: int = 2048, k: int = 2) -> ModelSpec:
    for gate in (cfg.text_gate, cfg.image_gate):
        if gate is not None and gate not in L.GATE_KINDS:
            raise SpecError(f"unknown gate kind {gate!r}")
    text_layers = (Gate(cfg.text_gate),) if cfg.text_gate else ()
    image_layers = (Dense(cfg.compress_dim, "relu"),) if cfg.compress_image else ()
    if cfg.image_gate:
        image_layers += (Gate(cfg.image_gate),)
    fused = (Dropout(cfg.dropout),) if cfg.dropout else ()
    spec = ModelSpec("dual", text_dim, Head("softmax", k), layers=text_layers, image_dim=image_dim,
                     image_layers=image_layers, fused_layers=fused, name="gated")
    param_shapes(spec)
    return spec


def build_combined_gated(cfg: GatedConfig = GatedConfig(), text_dim: int = TEXT_FEATURE_DIM,
                         image_dim: int = 2048, k: int = 2, seed: int = 0,
                         text_encoder: Optional[Model] = None) -> Model:
    _check_encoder(text_encoder, text_dim)
    return build(gated_spec(cfg, text_dim, image_dim, k), seed, text_encoder=text_encoder)


def _check_encoder(encoder: Optional[Model], text_dim: int):
    if encoder is not None and penultimate_width(encoder.spec) != text_dim:
        raise SpecError(
            f"text encoder yields {penultimate_width(encoder.spec)}-d features, fusion expects {text_dim}"
        )


def _label_order(label: str):
    return (LABEL_RANK.get(label, len(LABEL_RANK)), label)


def predict_nearest_label(output, labels: EmbeddingTable, allowed: Sequence[str]) -> str:
    """Allowed label whose embedding has the highest cosine similarity to ``output``."""
    best, best_sim = None, -np.inf
    for label in sorted(allowed, key=_label_order):
        if label not in labels:
            raise ContractError(f"label {label!r} has no embedding")
        sim = ad.cosine_similarity(output, labels[label])
        if sim > best_sim:
            best, best_sim = label, sim
    if best is None:
        raise ContractError("no labels to choose from")
    return best


def extract_penultimate(model: Model, inputs) -> FeatureVector:
    depth = len(model.spec.layers) + len(model.spec.image_layers) + len(model.spec.fused_layers)
    if depth == 0 and model.spec.input_kind != "dual":
        raise ContractError("model has no layer below its head")
    source = {"image_features": "image_penultimate", "token_sequence": "text_penultimate"}.get(
        model.spec.input_kind, "fused_penultimate")
    return FeatureVector(source, model.features(inputs))


# ---------------------------------------------------------------------------
# checkpoints


def _manifest(model: Model, prefix: str = ""):
    entries, arrays = [], []
    for name, value in model.params.items():
        entries.append({"name": prefix + name, "shape": list(np.shape(value)), "frozen": name in model.frozen})
        arrays.append(value)
    manifest = {"spec": model.spec.to_dict(), "classes": list(model.classes), "params": entries}
    if model.label_embeddings is not None:
        manifest["label_embeddings"] = {
            "dim": model.label_embeddings.dim,
            "vectors": {k: [float(x) for x in v] for k, v in model.label_embeddings.vectors.items()},
        }
    if model.text_encoder is not None:
        sub, sub_arrays = _manifest(model.text_encoder, "text_encoder/")
        manifest["text_encoder"] = sub
        arrays.extend(sub_arrays)
    return manifest, arrays


def save_checkpoint(path, model: Model, extra: Optional[dict] = None) -> None:
    manifest, arrays = _manifest(model)
    if extra:
        manifest["extra"] = extra
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _restore(manifest: dict, values: Dict[str, np.ndarray], prefix: str = "") -> Model:
    params = {e["name"][len(prefix):]: values[e["name"]] for e in manifest["params"]}
    frozen = [e["name"][len(prefix):] for e in manifest["params"] if e["frozen"]]
    labels = None
    if "label_embeddings" in manifest:
        le = manifest["label_embeddings"]
        labels = EmbeddingTable(le["dim"], {k: np.asarray(v, dtype=np.float64) for k, v in le["vectors"].items()})
    encoder = _restore(manifest["text_encoder"], values, "text_encoder/") if "text_encoder" in manifest else None
    return Model(ModelSpec.from_dict(manifest["spec"]), params, classes=manifest["classes"],
                 frozen=frozen, text_encoder=encoder, label_embeddings=labels)


def _all_entries(manifest: dict):
    yield from manifest["params"]
    if "text_encoder" in manifest:
        yield from _all_entries(manifest["text_encoder"])


def load_checkpoint(path, with_extra: bool = False):
    raw = open(path, "rb").read()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ParseError(f"{path}: not a checkpoint (bad magic)")
    version, size = struct.unpack_from("<II", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise ParseError(f"{path}: unsupported checkpoint version {version}")
    manifest = json.loads(raw[12:12 + size].decode("utf-8"))
    offset = 12 + size
    values = {}
    for entry in _all_entries(manifest):
        count = int(np.prod(entry["shape"], dtype=np.int64))
        chunk = raw[offset:offset + 8 * count]
        if len(chunk) != 8 * count:
            raise ParseError(f"{path}: truncated data for {entry['name']}")
        values[entry["name"]] = np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(entry["shape"])
        offset += 8 * count
    if offset != len(raw):
        raise ParseError(f"{path}: {len(raw) - offset} trailing bytes")
    model = _restore(manifest, values)
    return (model, manifest.get("extra", {})) if with_extra else model
