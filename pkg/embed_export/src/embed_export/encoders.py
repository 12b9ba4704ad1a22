"""Text encoder backends.

`clip:<model>` wraps a pretrained CLIP text tower and needs network access
the first time. `lexicon:v1` is a committed, fully offline stand-in: each
word maps to a set of semantic feature tags, every tag and character
n-gram hashes to a fixed random direction, and a text embeds as the
normalized mean of its word vectors. Crude, but deterministic, and words
with shared tags (vehicle/car) land much closer than unrelated ones
(vehicle/vegetation), which is all downstream cosine heads need.
"""

from __future__ import annotations

import re
import zlib

import numpy as np


class EncoderUnavailableError(RuntimeError):
    """The requested backend cannot run in this environment."""


LEXICON_WIDTH = 256
_NGRAM_WEIGHT = 0.25

# word -> semantic feature tags (v1; frozen, changing it changes output files)
LEXICON = {
    "artificial": ("manmade",),
    "structures": ("manmade", "built", "static"),
    "structure": ("manmade", "built", "static"),
    "building": ("manmade", "built", "static"),
    "wall": ("manmade", "built", "static"),
    "fence": ("manmade", "built", "static"),
    "ground": ("surface", "static", "terrain"),
    "road": ("manmade", "surface", "static", "terrain", "traffic"),
    "street": ("manmade", "surface", "static", "terrain", "traffic"),
    "sidewalk": ("manmade", "surface", "static", "terrain"),
    "asphalt": ("manmade", "surface", "static", "terrain"),
    "natural": ("organic",),
    "terrain": ("surface", "static", "terrain"),
    "soil": ("organic", "surface", "static", "terrain"),
    "gravel": ("surface", "static", "terrain"),
    "obstacle": ("static", "blocking", "object"),
    "barrier": ("manmade", "static", "blocking", "object"),
    "rock": ("static", "blocking", "object", "terrain"),
    "debris": ("static", "blocking", "object"),
    "vehicle": ("manmade", "machine", "mobile", "wheeled", "traffic", "metal"),
    "car": ("manmade", "machine", "mobile", "wheeled", "traffic", "metal"),
    "truck": ("manmade", "machine", "mobile", "wheeled", "traffic", "metal"),
    "bus": ("manmade", "machine", "mobile", "wheeled", "traffic", "metal"),
    "excavator": ("manmade", "machine", "mobile", "wheeled", "metal"),
    "bicycle": ("manmade", "machine", "mobile", "wheeled", "traffic"),
    "vegetation": ("organic", "plant", "growing", "green"),
    "tree": ("organic", "plant", "growing", "green", "tall"),
    "bush": ("organic", "plant", "growing", "green"),
    "grass": ("organic", "plant", "growing", "green"),
    "plant": ("organic", "plant", "growing", "green"),
    "forest": ("organic", "plant", "growing", "green", "tall"),
    "human": ("organic", "animate", "person", "mobile"),
    "person": ("organic", "animate", "person", "mobile"),
    "pedestrian": ("organic", "animate", "person", "mobile", "traffic"),
    "people": ("organic", "animate", "person", "mobile"),
}


def _direction(kind: str, token: str) -> np.ndarray:
    seed = zlib.crc32(f"lexicon:v1/{kind}/{token}".encode())
    v = np.random.default_rng(seed).standard_normal(LEXICON_WIDTH)
    return v / np.linalg.norm(v)


def _word_vector(word: str) -> np.ndarray:
    grams = [f"<{word}>"[i:i + 3] for i in range(len(word))]
    vec = _NGRAM_WEIGHT * np.mean([_direction("ngram", g) for g in grams],
                                  axis=0)
    for tag in LEXICON.get(word, ()):
        vec = vec + _direction("tag", tag)
    return vec


class LexiconEncoder:
    name = "lexicon:v1"
    width = LEXICON_WIDTH

    def encode(self, texts: list[str]) -> np.ndarray:
        rows = np.empty((len(texts), self.width))
        for i, text in enumerate(texts):
            words = re.findall(r"[a-z]+", text.lower())
            if not words:
                raise ValueError(f"nothing to encode in {text!r}")
            rows[i] = np.mean([_word_vector(w) for w in words], axis=0)
        rows /= np.linalg.norm(rows, axis=1, keepdims=True)
        return rows.astype(np.float32)


_CLIP_ALIASES = {
    "ViT-B/16": "openai/clip-vit-base-patch16",
    "ViT-B/32": "openai/clip-vit-base-patch32",
    "ViT-L/14": "openai/clip-vit-large-patch14",
}


class ClipEncoder:
    """Pretrained CLIP text tower via transformers; loads at construction."""

    def __init__(self, model: str):
        self.name = f"clip:{model}"
        hf_id = _CLIP_ALIASES.get(model, model)
        try:
            import torch
            from transformers import CLIPTextModelWithProjection, CLIPTokenizer
        except ImportError as exc:
            raise EncoderUnavailableError(
                f"clip backend needs transformers and torch: {exc}") from exc
        try:
            self._tokenizer = CLIPTokenizer.from_pretrained(hf_id)
            self._model = CLIPTextModelWithProjection.from_pretrained(hf_id)
        except Exception as exc:
            raise EncoderUnavailableError(
                f"could not load {hf_id!r} (offline?): {exc}") from exc
        self._model.eval()
        self._torch = torch
        self.width = int(self._model.config.projection_dim)

    def encode(self, texts: list[str]) -> np.ndarray:
        tokens = self._tokenizer(texts, padding=True, return_tensors="pt")
        with self._torch.no_grad():
            out = self._model(**tokens).text_embeds.double().numpy()
        out /= np.linalg.norm(out, axis=1, keepdims=True)
        return out.astype(np.float32)


def get_encoder(encoder_id: str):
    if encoder_id == "lexicon:v1":
        return LexiconEncoder()
    if encoder_id.startswith("clip:"):
        return ClipEncoder(encoder_id.split(":", 1)[1])
    raise ValueError(f"unknown encoder {encoder_id!r}; "
                     "use lexicon:v1 or clip:<model>")
