import json

import numpy as np
import pytest


def make_record(i, score=0.5, words=12, dim=4, **extra):
    desc = " ".join(f"w{j}" for j in range(words - 2))
    rec = {
        "id": f"r{i}",
        "title": "nice day",
        "description": desc,
        "anp": "nice smile",
        "anp_score": score,
        "features": [float(i + j) for j in range(dim)],
    }
    rec.update(extra)
    return rec


def write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
