"""Dependency-analysis providers.

A provider owns tokenization, sentence segmentation, and head assignment
as one unit so its arcs always refer to its own tokens. The chain provider
is the deterministic offline fallback: inside each sentence every token
attaches to the one before it. The spaCy provider (optional dependency)
supplies a real parse.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ExportError
from .segment import char_to_byte, tokenize


@dataclass
class Analysis:
    """Per-token byte spans, sentence ids, and a head forest.

    Heads are indices into this token list (-1 for a sentence root) and
    never cross a sentence boundary.
    """

    starts: list[int]
    ends: list[int]
    sent_ids: list[int]
    heads: list[int]
    labels: list[str]
    surfaces: list[str]

    def __len__(self) -> int:
        return len(self.starts)


class ChainParser:
    id = "chain"
    version = "1"

    def analyze(self, text: str) -> Analysis:
        seg = tokenize(text)
        heads, labels = [], []
        for i, sid in enumerate(seg.sent_ids):
            if i == 0 or seg.sent_ids[i - 1] != sid:
                heads.append(-1)
                labels.append("root")
            else:
                heads.append(i - 1)
                labels.append("dep")
        return Analysis(starts=seg.starts, ends=seg.ends,
                        sent_ids=seg.sent_ids, heads=heads, labels=labels,
                        surfaces=seg.surfaces)


class SpacyParser:
    def __init__(self, model: str = "en_core_web_sm"):
        try:
            import spacy
        except ImportError as exc:
            raise ExportError(f"spaCy parser requested but unavailable: "
                              f"{exc}") from exc
        self._nlp = spacy.load(model, disable=["ner", "lemmatizer"])
        self.id = f"spacy:{model}"
        self.version = (f"{spacy.__version__}/"
                        f"{self._nlp.meta.get('version', '?')}")

    def analyze(self, text: str) -> Analysis:
        doc = self._nlp(text)
        b = char_to_byte(text)
        keep = [tok for tok in doc if not tok.is_space]
        index = {tok.i: new for new, tok in enumerate(keep)}
        sent_of = {}
        for sid, sent in enumerate(doc.sents):
            for tok in sent:
                sent_of[tok.i] = sid
        out = Analysis(starts=[], ends=[], sent_ids=[], heads=[],
                       labels=[], surfaces=[])
        for tok in keep:
            out.starts.append(b[tok.idx])
            out.ends.append(b[tok.idx + len(tok.text)])
            out.sent_ids.append(sent_of[tok.i])
            head = tok.head
            while head.is_space and head.head is not head:
                head = head.head
            if head is tok or head.i not in index \
                    or sent_of[head.i] != sent_of[tok.i]:
                out.heads.append(-1)
                out.labels.append("root")
            else:
                out.heads.append(index[head.i])
                out.labels.append(tok.dep_)
            out.surfaces.append(tok.text)
        # renumber sentences that spaCy may have skipped (all-space)
        remap = {}
        for sid in out.sent_ids:
            remap.setdefault(sid, len(remap))
        out.sent_ids = [remap[sid] for sid in out.sent_ids]
        return out


def make_parser(spec: str):
    """"chain", "spacy", or "spacy:<model>"."""
    if spec == "chain":
        return ChainParser()
    if spec == "spacy" or spec.startswith("spacy:"):
        _, _, model = spec.partition(":")
        return SpacyParser(model or "en_core_web_sm")
    raise ExportError(f"unknown parser {spec!r}")
