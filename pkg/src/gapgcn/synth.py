"""Synthetic GAP-shaped datasets for smoke tests and gradient checks.

Generates snippets whose text, byte offsets, parse trees, and labels all
satisfy the corpus invariants, with random embeddings standing in for the
frozen encoder output.
"""

from __future__ import annotations

import numpy as np

from .corpus import Dataset, GapExample, TokenizedSnippet

_LABELS = ["nsubj", "dobj", "det", "amod", "prep", "pobj", "advmod"]
_LETTERS = np.array(list("abcdefghijklmnopqrstuvwxyz"))


def _random_word(rng) -> str:
    return "".join(rng.choice(_LETTERS, size=rng.integers(3, 7)))


def make_synthetic_dataset(n: int, embedding_dim: int, seed: int,
                           min_tokens: int = 4, max_tokens: int = 9,
                           max_sentences: int = 2) -> Dataset:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    examples = []
    for i in range(n):
        t = int(rng.integers(min_tokens, max_tokens + 1))
        words = [_random_word(rng) for _ in range(t)]
        text = " ".join(words)
        starts, ends = [], []
        pos = 0
        for w in words:
            starts.append(pos)
            pos += len(w)
            ends.append(pos)
            pos += 1  # the joining space

        if max_sentences > 1 and t >= 6 and rng.random() < 0.5:
            split = int(rng.integers(2, t - 2))
            sent_ids = [0] * split + [1] * (t - split)
        else:
            sent_ids = [0] * t

        heads = []
        sent_start = 0
        for j in range(t):
            if j == 0 or sent_ids[j] != sent_ids[j - 1]:
                sent_start = j
                heads.append(-1)
            else:
                heads.append(int(rng.integers(sent_start, j)))

        mention_toks = rng.choice(t, size=3, replace=False)
        p_tok, a_tok, b_tok = (int(x) for x in mention_toks)
        label = int(rng.integers(0, 3))
        ex = GapExample(
            id=f"synth-{i:04d}",
            text=text,
            pronoun=words[p_tok], pronoun_offset=starts[p_tok],
            a_text=words[a_tok], a_offset=starts[a_tok],
            a_coref=label == 0,
            b_text=words[b_tok], b_offset=starts[b_tok],
            b_coref=label == 1,
        )
        sn = TokenizedSnippet(
            starts=np.asarray(starts, dtype=np.int64),
            ends=np.asarray(ends, dtype=np.int64),
            sent_ids=np.asarray(sent_ids, dtype=np.int64),
            heads=np.asarray(heads, dtype=np.int64),
            dep_labels=[str(rng.choice(_LABELS)) for _ in range(t)],
            embeddings=rng.standard_normal(
                (t, embedding_dim)).astype(np.float32),
        )
        examples.append((ex, sn))
    return Dataset(examples=examples, embedding_dim=embedding_dim)
