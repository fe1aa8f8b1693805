"""Tokenization, frequency-ranked vocabulary and fixed-length encoding."""
from __future__ import annotations

import re
import string
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .errors import ContractError, ParseError

MAX_LEN = 101
PAD, UNK = "<pad>", "<unk>"
PAD_ID, UNK_ID = 0, 1

_PUNCT = set(string.punctuation)
# trailing characters that end a sentence rather than belong to a link
_LINK_TRAIL = set(".,!?;:)]}\"'")
_URL = re.compile(r"[a-z][a-z0-9+.\-]*://|(?:^|[^a-z0-9])www\.")


def _split_edges(token: str, strip: set):
    lead = 0
    while lead < len(token) and token[lead] in strip:
        lead += 1
    trail = len(token)
    while trail > lead and token[trail - 1] in strip:
        trail -= 1
    return list(token[:lead]), token[lead:trail], list(token[trail:])


def _word_tokens(word: str) -> List[str]:
    lead, core, trail = _split_edges(word, _PUNCT)
    if core and (_URL.search(core) or core.startswith("rel=")):
        # a link keeps its inner punctuation; only sentence punctuation detaches
        replacement = "href" if _URL.search(core) else "rel"
        body_end = len(word)
        while body_end > len(lead) and word[body_end - 1] in _LINK_TRAIL:
            body_end -= 1
        return lead + [replacement] + list(word[body_end:])
    return lead + ([core] if core else []) + trail


def tokenize(title: str, description: str) -> List[str]:
    text = f"{title} . {description}".lower()
    tokens = []
    for word in text.split():
        tokens.extend(_word_tokens(word))
    return tokens


@dataclass
class Vocabulary:
    tokens: List[str]

    def __post_init__(self):
        self.index: Dict[str, int] = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ContractError("vocabulary contains duplicate tokens")

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def lookup(self, token: str) -> int:
        return self.index.get(token, UNK_ID)

    def decode(self, ids: Iterable[int]) -> List[str]:
        return [self.tokens[i] for i in ids]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for i, t in enumerate(self.tokens):
                fh.write(f"{t}\t{i}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        tokens = []
        with open(path, encoding="utf-8", newline="\n") as fh:
            for lineno, line in enumerate(fh, start=1):
                token, sep, idx = line.rstrip("\n").rpartition("\t")
                if not sep or not idx.isdigit() or int(idx) != lineno - 1:
                    raise ParseError(f"{path}: expected 'token<TAB>{lineno - 1}'", lineno)
                tokens.append(token)
        return cls(tokens)


def build_vocabulary(corpus: Sequence[Sequence[str]], max_size: Optional[int] = None) -> Vocabulary:
    """Index 2 goes to the most frequent token; ties sort lexicographically."""
    if not corpus:
        raise ContractError("cannot build a vocabulary from an empty corpus")
    counts = Counter(t for doc in corpus for t in doc)
    ranked = sorted(counts, key=lambda t: (-counts[t], t))
    if max_size is not None:
        ranked = ranked[: max(0, max_size - 2)]
    return Vocabulary([PAD, UNK] + ranked)


@dataclass
class EncodedSequence:
    ids: np.ndarray
    true_length: int


def encode_sequence(vocab: Vocabulary, tokens: Sequence[str], max_len: int = MAX_LEN) -> EncodedSequence:
    ids = np.zeros(max_len, dtype=np.int64)
    kept = [vocab.lookup(t) for t in tokens[:max_len]]
    ids[: len(kept)] = kept
    return EncodedSequence(ids=ids, true_length=len(kept))


def decode_sequence(vocab: Vocabulary, seq: EncodedSequence) -> List[str]:
    return vocab.decode(seq.ids[: seq.true_length])
