"""Prompt each class name, encode, and write the embedding table."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .encoders import get_encoder
from .ppte import write_table
from .template import PromptTemplate


def export_embeddings(class_names: list[str], template: PromptTemplate,
                      encoder_id: str, out_path: str | Path) -> np.ndarray:
    """Returns the written rows ([len(class_names), width] float32, unit norm)."""
    encoder = get_encoder(encoder_id)
    rows = encoder.encode([template.fill(name) for name in class_names])
    write_table(out_path, rows, list(class_names), {
        "encoder": encoder.name,
        "template": template.pattern,
        "dim": encoder.width,
    })
    return rows
