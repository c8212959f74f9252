"""Subword encoders.

Every provider emits per-piece vectors with byte spans; token vectors are
pooled downstream by byte-span intersection, so encoder and parser do not
need to agree on tokenization.

The hashed provider is a deterministic offline stand-in: it cuts words
into short wordpiece-like chunks and draws each chunk's vector from a
keyed hash of the chunk surface plus its neighbors, giving different
vectors for the same word in different contexts (like a contextual
encoder, unlike a word-embedding table). The transformers provider wraps
a real bidirectional transformer checkpoint.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ExportError
from .segment import TOKEN_RE, char_to_byte

MAX_PIECE_CHARS = 4


@dataclass
class Encoding:
    starts: list[int]       # byte span per subword piece
    ends: list[int]
    vectors: np.ndarray     # float32 [pieces, dim], after the layer rule


def combine_layers(stack: np.ndarray, rule: str) -> np.ndarray:
    """Reduce a [layers, pieces, dim] stack per the layer-selection rule."""
    if rule == "last":
        return stack[-1]
    if rule == "sum4":
        if stack.shape[0] < 4:
            raise ExportError(
                f"layer rule 'sum4' needs >= 4 layers, encoder has "
                f"{stack.shape[0]}")
        return stack[-4:].sum(axis=0)
    raise ExportError(f"unknown layer rule {rule!r}")


def _piece_spans(text: str) -> list[tuple[str, int, int]]:
    """(surface, char_start, char_end) wordpiece-like chunks."""
    pieces = []
    for m in TOKEN_RE.finditer(text):
        word, base = m.group(), m.start()
        for lo in range(0, len(word), MAX_PIECE_CHARS):
            hi = min(lo + MAX_PIECE_CHARS, len(word))
            pieces.append((word[lo:hi], base + lo, base + hi))
    return pieces


class HashedEncoder:
    id = "hashed"
    deterministic = True
    num_layers = 4

    def __init__(self, dim: int = 256):
        if dim <= 0:
            raise ExportError(f"encoder width must be positive, got {dim}")
        self.dim = dim

    def _vector(self, layer: int, key: str) -> np.ndarray:
        digest = hashlib.blake2b(f"{layer}|{self.dim}|{key}".encode("utf-8"),
                                 digest_size=8).digest()
        seed = int.from_bytes(digest, "little")
        rng = np.random.Generator(np.random.PCG64(seed))
        return rng.standard_normal(self.dim).astype(np.float32)

    def encode(self, text: str, rule: str = "last") -> Encoding:
        pieces = _piece_spans(text)
        b = char_to_byte(text)
        if not pieces:
            return Encoding(starts=[], ends=[],
                            vectors=np.zeros((0, self.dim),
                                             dtype=np.float32))
        surfaces = [p[0] for p in pieces]
        keys = [
            "|".join((surfaces[i - 1] if i > 0 else "^", surfaces[i],
                      surfaces[i + 1] if i + 1 < len(surfaces) else "$"))
            for i in range(len(surfaces))
        ]
        stack = np.stack([
            np.stack([self._vector(layer, key) for key in keys])
            for layer in range(self.num_layers)
        ])
        return Encoding(starts=[b[p[1]] for p in pieces],
                        ends=[b[p[2]] for p in pieces],
                        vectors=combine_layers(stack, rule))


class TransformersEncoder:
    deterministic = True    # CPU eval-mode forward

    def __init__(self, model: str = "bert-large-uncased"):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise ExportError(
                f"transformers encoder requested but unavailable: "
                f"{exc}") from exc
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(model)
            self._model = AutoModel.from_pretrained(
                model, output_hidden_states=True).eval()
        except Exception as exc:
            raise ExportError(f"cannot load encoder {model!r}: "
                              f"{exc}") from exc
        self._torch = torch
        self.id = model
        self.dim = int(self._model.config.hidden_size)

    def encode(self, text: str, rule: str = "last") -> Encoding:
        enc = self._tokenizer(text, return_offsets_mapping=True,
                              return_tensors="pt", truncation=True,
                              max_length=self._tokenizer.model_max_length)
        char_spans = enc.pop("offset_mapping")[0].tolist()
        with self._torch.no_grad():
            out = self._model(**enc)
        # hidden_states[0] is the embedding layer; keep encoder layers only
        stack = self._torch.stack(out.hidden_states[1:])[:, 0].numpy()
        b = char_to_byte(text)
        keep = [i for i, (s, e) in enumerate(char_spans) if e > s]
        return Encoding(
            starts=[b[char_spans[i][0]] for i in keep],
            ends=[b[char_spans[i][1]] for i in keep],
            vectors=combine_layers(stack[:, keep, :],
                                   rule).astype(np.float32))


def make_encoder(spec: str, dim: int = 256):
    """"hashed" or a transformers model identifier/path."""
    if spec == "hashed":
        return HashedEncoder(dim=dim)
    return TransformersEncoder(spec)
