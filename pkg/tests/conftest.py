import os
from pathlib import Path

import numpy as np
import pytest

from topogat.graph import build_graph
from topogat.tudataset import parse_tu_dataset

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = Path(__file__).resolve().parent / "fixtures"
BUNDLED_DATA = ROOT / "data"


def find_dataset(name: str) -> Path | None:
    """Directory holding ``name``'s TU files: $TOPOGAT_DATA_DIR first, then ./data."""
    roots = [Path(p) for p in (os.environ.get("TOPOGAT_DATA_DIR"),) if p] + [BUNDLED_DATA]
    for root in roots:
        for cand in (root / name, root):
            if (cand / f"{name}_A.txt").is_file():
                return cand
    return None


@pytest.fixture(scope="session")
def mutag():
    path = find_dataset("MUTAG")
    if path is None:
        pytest.fail("MUTAG is bundled under data/MUTAG; the checkout is incomplete")
    return parse_tu_dataset(path, "MUTAG")


@pytest.fixture(scope="session")
def tiny():
    return parse_tu_dataset(FIXTURES / "TINY", "TINY")


def random_graph(rng: np.random.Generator, n: int, d: int, p: float = 0.35, label: int = 0):
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < p]
    return build_graph(pairs, n, rng.normal(size=(n, d)), label)
