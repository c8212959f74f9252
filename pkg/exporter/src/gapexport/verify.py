"""Post-export audit: does every mention land on at least one token?"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ExportError


@dataclass
class AlignmentReport:
    # example id -> {"pronoun"/"A"/"B" -> token indices}
    maps: dict[str, dict[str, list[int]]] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)
    warning: str | None = None

    @property
    def ok(self) -> bool:
        return not self.failures


def _span_tokens(tokens: list[dict], start: int, length: int) -> list[int]:
    end = start + length
    return [i for i, tok in enumerate(tokens)
            if tok["s"] < end and tok["e"] > start]


def verify_alignment(out_dir: str | Path) -> AlignmentReport:
    """Map every pronoun/A/B span in an exported dataset to its tokens.

    Any mention covering zero tokens is a failure naming the example; an
    empty dataset passes vacuously with a warning.
    """
    jpath = Path(out_dir) / "examples.jsonl"
    if not jpath.is_file():
        raise ExportError(f"missing {jpath}")
    report = AlignmentReport()
    with open(jpath, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ExportError(
                    f"{jpath.name} line {lineno}: bad JSON ({exc})")
            spans = {"pronoun": rec["pronoun_span"], "A": rec["a_span"],
                     "B": rec["b_span"]}
            mapped = {}
            for name, (start, length) in spans.items():
                hits = _span_tokens(rec["tokens"], start, length)
                if not hits:
                    report.failures.append(
                        f"{rec['id']}: {name} span aligns to no token")
                mapped[name] = hits
            report.maps[rec["id"]] = mapped
    if not report.maps:
        report.warning = "dataset is empty; alignment holds vacuously"
    return report
