"""Regex word tokenization and sentence splitting, tracked in byte offsets."""

from __future__ import annotations

import re
from dataclasses import dataclass

TOKEN_RE = re.compile(r"\w+|[^\w\s]")
# sentence boundary: terminal punctuation, whitespace, then something that
# plausibly opens a sentence
_BOUNDARY_RE = re.compile(r"(?<=[.!?])\s+(?=[\"'(\[]?[A-Z0-9])")


@dataclass
class Segmentation:
    starts: list[int]       # UTF-8 byte offsets, per token
    ends: list[int]
    sent_ids: list[int]
    surfaces: list[str]

    def __len__(self) -> int:
        return len(self.starts)


def char_to_byte(text: str) -> list[int]:
    """Prefix table: byte offset of each character position (len+1 entries)."""
    offs = [0]
    for ch in text:
        offs.append(offs[-1] + len(ch.encode("utf-8")))
    return offs


def sentence_ranges(text: str) -> list[tuple[int, int]]:
    """Character ranges of sentences; the whole text if no boundary found."""
    cuts = [0]
    for m in _BOUNDARY_RE.finditer(text):
        cuts.append(m.end())
    cuts.append(len(text))
    return [(lo, hi) for lo, hi in zip(cuts, cuts[1:]) if text[lo:hi].strip()]


def tokenize(text: str) -> Segmentation:
    """Word/punctuation tokens with byte spans, grouped into sentences."""
    b = char_to_byte(text)
    seg = Segmentation(starts=[], ends=[], sent_ids=[], surfaces=[])
    for sid, (lo, hi) in enumerate(sentence_ranges(text)):
        for m in TOKEN_RE.finditer(text, lo, hi):
            seg.starts.append(b[m.start()])
            seg.ends.append(b[m.end()])
            seg.sent_ids.append(sid)
            seg.surfaces.append(m.group())
    return seg
