"""Dataset ingestion, labeling, splitting and batching."""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ContractError, FeatureLookupError, ParseError

LABELS = ("negative", "neutral", "positive")
LABEL_RANK = {name: i for i, name in enumerate(LABELS)}
SCORE_THRESHOLD = 0.035
MIN_WORDS = 10
FEATURE_MAGIC = b"SFV1"


@dataclass(frozen=True)
class Datapoint:
    id: str
    title: str
    description: str
    anp: str
    anp_score: float
    features: np.ndarray = field(repr=False, compare=False)
    label: Optional[str] = None
    tags: Tuple[str, ...] = ()


@dataclass(frozen=True)
class SplitConfig:
    train: float = 0.70
    val: float = 0.20
    test: float = 0.10
    seed: int = 0

    def __post_init__(self):
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise ContractError("split fractions must sum to 1")


@dataclass
class EmbeddingTable:
    dim: int
    vectors: Dict[str, np.ndarray] = field(default_factory=dict)

    def __contains__(self, token):
        return token in self.vectors

    def __len__(self):
        return len(self.vectors)

    def __getitem__(self, token) -> np.ndarray:
        try:
            return self.vectors[token]
        except KeyError:
            raise KeyError(f"token {token!r} not in embedding table") from None

    def matrix(self, tokens: Sequence[str]) -> np.ndarray:
        return np.stack([self[t] for t in tokens])


# ---------------------------------------------------------------------------
# feature file


def feature_index_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".ids")


def write_feature_file(path, ids: Sequence[str], matrix: np.ndarray) -> None:
    """Write float32 feature rows plus the companion id index."""
    matrix = np.asarray(matrix, dtype="<f4")
    if matrix.ndim != 2 or matrix.shape[0] != len(ids):
        raise ContractError("feature matrix must have one row per id")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<II", matrix.shape[0], matrix.shape[1]))
        fh.write(matrix.tobytes())
    feature_index_path(path).write_text("".join(f"{i}\n" for i in ids), encoding="utf-8")


def read_feature_file(path) -> Dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != FEATURE_MAGIC:
        raise ParseError(f"{path}: not a feature file (bad magic)")
    count, dim = struct.unpack_from("<II", raw, 4)
    body = raw[12:]
    if len(body) != count * dim * 4:
        raise ParseError(f"{path}: expected {count}x{dim} floats, found {len(body)} bytes")
    matrix = np.frombuffer(body, dtype="<f4").reshape(count, dim).astype(np.float64)
    ids = feature_index_path(path).read_text(encoding="utf-8").splitlines()
    if len(ids) != count:
        raise ParseError(f"{path}: index lists {len(ids)} ids for {count} records")
    return dict(zip(ids, matrix))


# ---------------------------------------------------------------------------
# loading


_REQUIRED = {"id": str, "title": str, "description": str, "anp": str, "anp_score": (int, float)}


def _parse_record(obj, lineno, features):
    if not isinstance(obj, dict):
        raise ParseError("record is not a JSON object", lineno)
    for key, kind in _REQUIRED.items():
        if key not in obj:
            raise ParseError(f"missing field {key!r}", lineno)
        if not isinstance(obj[key], kind) or isinstance(obj[key], bool):
            raise ParseError(f"field {key!r} has the wrong type", lineno)
    if len(obj["anp"].split()) != 2:
        raise ParseError(f"anp {obj['anp']!r} is not an adjective-noun pair", lineno)
    if ("features" in obj) == ("features_ref" in obj):
        raise ParseError("exactly one of 'features' or 'features_ref' is required", lineno)
    if "features" in obj:
        try:
            vec = np.asarray(obj["features"], dtype=np.float64)
        except (TypeError, ValueError):
            raise ParseError("field 'features' is not a numeric array", lineno) from None
        if vec.ndim != 1 or vec.size == 0:
            raise ParseError("field 'features' is not a flat numeric array", lineno)
    else:
        ref = obj["features_ref"]
        if features is None:
            raise FeatureLookupError(f"line {lineno}: features_ref {ref!r} given but no feature file")
        if ref not in features:
            raise FeatureLookupError(f"line {lineno}: feature id {ref!r} not in feature file")
        vec = features[ref]
    label = obj.get("label")
    if label is not None and label not in LABEL_RANK:
        raise ParseError(f"unknown label {label!r}", lineno)
    return Datapoint(
        id=obj["id"],
        title=obj["title"],
        description=obj["description"],
        anp=obj["anp"],
        anp_score=float(obj["anp_score"]),
        features=vec,
        label=label,
        tags=tuple(obj.get("tags") or ()),
    )


def load_dataset(path, feature_path=None) -> List[Datapoint]:
    """Read a JSON Lines dataset; ``features_ref`` ids resolve via ``feature_path``."""
    features = read_feature_file(feature_path) if feature_path is not None else None
    out = []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", lineno) from None
            dp = _parse_record(obj, lineno, features)
            if dim is None:
                dim = dp.features.shape[0]
            elif dp.features.shape[0] != dim:
                raise ParseError(f"feature dimension {dp.features.shape[0]} differs from {dim}", lineno)
            out.append(dp)
    return out


def datapoint_to_json(dp: Datapoint) -> dict:
    obj = {
        "id": dp.id,
        "title": dp.title,
        "description": dp.description,
        "anp": dp.anp,
        "anp_score": dp.anp_score,
        "features": [float(x) for x in dp.features],
    }
    if dp.label is not None:
        obj["label"] = dp.label
    if dp.tags:
        obj["tags"] = list(dp.tags)
    return obj


# ---------------------------------------------------------------------------
# filtering and labeling


def word_count(dp: Datapoint) -> int:
    return len(dp.title.split()) + len(dp.description.split())


def filter_datapoints(data: Sequence[Datapoint], language_filter=None) -> List[Datapoint]:
    """Keep records whose title and description hold at least ten words.

    ``language_filter`` is an optional predicate for external language and
    spelling checks; none is applied by default.
    """
    kept = [dp for dp in data if word_count(dp) >= MIN_WORDS]
    if language_filter is not None:
        kept = [dp for dp in kept if language_filter(dp)]
    return kept


def label_from_anp_score(score: float) -> str:
    if not math.isfinite(score):
        raise ContractError(f"anp score must be finite, got {score}")
    if score >= SCORE_THRESHOLD:
        return "positive"
    if score <= -SCORE_THRESHOLD:
        return "negative"
    return "neutral"


def label_datapoints(data: Sequence[Datapoint]) -> List[Datapoint]:
    return [replace(dp, label=label_from_anp_score(dp.anp_score)) for dp in data]


def drop_neutral(data: Sequence[Datapoint]) -> List[Datapoint]:
    return [dp for dp in data if dp.label != "neutral"]


def balance_classes(data: Sequence[Datapoint], seed: int = 0) -> List[Datapoint]:
    """Downsample every class to the minority class size, keeping input order."""
    by_label: Dict[str, List[int]] = {}
    for i, dp in enumerate(data):
        if dp.label is None:
            raise ContractError(f"record {dp.id!r} is unlabeled")
        by_label.setdefault(dp.label, []).append(i)
    if not by_label:
        return []
    size = min(len(v) for v in by_label.values())
    rng = np.random.default_rng(seed)
    keep = set()
    for label in sorted(by_label, key=LABEL_RANK.get):
        idx = by_label[label]
        keep.update(idx[j] for j in rng.choice(len(idx), size=size, replace=False))
    return [dp for i, dp in enumerate(data) if i in keep]


# ---------------------------------------------------------------------------
# splitting and batching


def split_sizes(n: int, cfg: SplitConfig = SplitConfig()) -> Tuple[int, int, int]:
    # the epsilon guards products like 0.7 * n landing a hair below an integer
    n_train = int(math.floor(cfg.train * n + 1e-9))
    n_val = int(math.floor(cfg.val * n + 1e-9))
    return n_train, n_val, n - n_train - n_val


def split_dataset(data: Sequence, cfg: SplitConfig = SplitConfig()):
    n = len(data)
    if n < 10:
        raise ContractError(f"need at least 10 records to split, got {n}")
    order = np.random.default_rng(cfg.seed).permutation(n)
    n_train, n_val, _ = split_sizes(n, cfg)
    pick = lambda idx: [data[i] for i in idx]  # noqa: E731
    return (
        pick(order[:n_train]),
        pick(order[n_train:n_train + n_val]),
        pick(order[n_train + n_val:]),
    )


def batch_iter(data: Sequence, batch_size: int = 64, seed: int = 0, epoch: int = 0) -> Iterator[list]:
    """Yield shuffled batches; the order depends only on (seed, epoch)."""
    if batch_size < 1:
        raise ContractError("batch_size must be at least 1")
    order = np.random.default_rng([seed, epoch]).permutation(len(data))
    for start in range(0, len(data), batch_size):
        yield [data[i] for i in order[start:start + batch_size]]


# ---------------------------------------------------------------------------
# word vectors


def load_glove(path, dim: int = 50) -> EmbeddingTable:
    table = EmbeddingTable(dim=dim)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if not line.strip():
                continue
            if len(parts) != dim + 1:
                raise ParseError(f"expected token and {dim} values, found {len(parts) - 1} values", lineno)
            try:
                vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            except ValueError:
                raise ParseError("non-numeric vector component", lineno) from None
            table.vectors[parts[0]] = vec
    return table


def save_glove(path, table: EmbeddingTable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for token, vec in table.vectors.items():
            fh.write(token + " " + " ".join(repr(float(x)) for x in vec) + "\n")
