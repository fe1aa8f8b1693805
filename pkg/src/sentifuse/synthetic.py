"""Constructed desk-scale datasets for experiments and tests."""
from __future__ import annotations

from typing import Tuple

import numpy as np

from .data import EmbeddingTable
from .training import Examples

TWO_CLASSES = ("negative", "positive")


def _unit(rng, d):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def separable_features(n: int = 50, d: int = 64, seed: int = 0, margin: float = 3.0) -> Examples:
    """Two Gaussian classes at ``±margin`` along a random direction, unit noise."""
    rng = np.random.default_rng(seed)
    direction = _unit(rng, d)
    labels = np.arange(n) % 2
    signs = 2.0 * labels - 1.0
    x = signs[:, None] * margin * direction + rng.standard_normal((n, d))
    return Examples(x, labels, TWO_CLASSES)


def dual_modality(n: int = 500, text_dim: int = 16, image_dim: int = 16, text_share: float = 0.7,
                  seed: int = 0, margin: float = 3.0) -> Tuple[Examples, np.ndarray]:
    """Labels decided by text for ``text_share`` of records and by the image for the rest.

    The modality that does not decide a record carries pure noise for it.
    Returns the examples and a boolean mask of text-decided records.
    """
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=n)
    signs = 2.0 * labels - 1.0
    by_text = rng.random(n) < text_share
    t_dir, i_dir = _unit(rng, text_dim), _unit(rng, image_dim)
    text = rng.standard_normal((n, text_dim))
    image = rng.standard_normal((n, image_dim))
    text[by_text] += signs[by_text, None] * margin * t_dir
    image[~by_text] += signs[~by_text, None] * margin * i_dir
    return Examples((text, image), labels, TWO_CLASSES), by_text


def label_embeddings(dim: int = 50, seed: int = 0, similarity: float = 0.5) -> EmbeddingTable:
    """Stand-in word vectors for the three sentiment labels.

    Real pretrained vectors for antonyms are fairly similar, so each pair
    shares a common component giving roughly ``similarity`` cosine.
    """
    rng = np.random.default_rng(seed)
    common = _unit(rng, dim)
    vectors = {}
    for name in ("negative", "neutral", "positive"):
        own = _unit(rng, dim)
        vectors[name] = np.sqrt(similarity) * common + np.sqrt(1.0 - similarity) * own
    return EmbeddingTable(dim, vectors)


def two_clusters(n_per: int = 100, d: int = 50, separation: float = 10.0, seed: int = 0):
    """Two isotropic unit-variance clusters whose centres sit ``separation`` apart."""
    rng = np.random.default_rng(seed)
    direction = _unit(rng, d)
    a = rng.standard_normal((n_per, d)) + 0.5 * separation * direction
    b = rng.standard_normal((n_per, d)) - 0.5 * separation * direction
    return np.vstack([a, b]), np.array([0] * n_per + [1] * n_per)
