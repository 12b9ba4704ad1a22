"""Regenerate the committed embedding-table fixtures under tests/fixtures.

Two tables, both unit-norm rows in taxonomy order:
- fixture_7x512.ppte: seeded random directions in 512 dims (the width a
  text encoder would produce), for realistic-scale plumbing tests.
- tiny_table_7x16.ppte: orthonormal rows (identity block), so cosine
  logits have a known diagonal structure in head tests.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from promptseg.data import SUPERCLASS_NAMES
from promptseg.embeddings import EmbeddingTable, write_embedding_table

FIXTURE_DIR = Path(__file__).resolve().parents[1] / "tests" / "fixtures"


def random_unit_table(dim: int, seed: int) -> EmbeddingTable:
    rng = np.random.default_rng(seed)
    rows = rng.standard_normal((len(SUPERCLASS_NAMES), dim))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return EmbeddingTable(rows=rows.astype(np.float32), names=SUPERCLASS_NAMES,
                          metadata={"source": f"seeded random, seed={seed}",
                                    "dim": dim})


def orthonormal_table(dim: int) -> EmbeddingTable:
    rows = np.zeros((len(SUPERCLASS_NAMES), dim), dtype=np.float32)
    for i in range(len(SUPERCLASS_NAMES)):
        rows[i, i] = 1.0
    return EmbeddingTable(rows=rows, names=SUPERCLASS_NAMES,
                          metadata={"source": "orthonormal basis rows",
                                    "dim": dim})


def main() -> None:
    FIXTURE_DIR.mkdir(parents=True, exist_ok=True)
    write_embedding_table(FIXTURE_DIR / "fixture_7x512.ppte",
                          random_unit_table(512, seed=20250814))
    write_embedding_table(FIXTURE_DIR / "tiny_table_7x16.ppte",
                          orthonormal_table(16))
    print(f"wrote fixtures to {FIXTURE_DIR}")


if __name__ == "__main__":
    main()
