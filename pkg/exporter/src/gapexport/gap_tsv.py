"""GAP TSV reading with byte-offset normalization.

Published GAP releases index Pronoun/A/B by *character* offset while the
dataset format downstream wants UTF-8 *byte* offsets (the two coincide on
pure-ASCII prefixes). This reader verifies the quoted surface under either
interpretation and always emits byte offsets; rows whose surface matches
neither way are skipped with a diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import ExportError

COLUMNS = (
    "ID", "Text", "Pronoun", "Pronoun-offset", "A", "A-offset", "A-coref",
    "B", "B-offset", "B-coref", "URL",
)


@dataclass
class GapRow:
    id: str
    text: str
    pronoun: str
    pronoun_offset: int         # UTF-8 byte offset after normalization
    a_text: str
    a_offset: int
    a_coref: bool
    b_text: str
    b_offset: int
    b_coref: bool
    url: str


@dataclass
class TsvFile:
    rows: list[GapRow]
    diagnostics: list[str]


def _byte_offset_of(text: str, raw: bytes, offset: int,
                    surface: str) -> int | None:
    """Resolve `offset` to a byte offset, or None if the surface is absent
    under both the byte and the character reading."""
    want = surface.encode("utf-8")
    if raw[offset:offset + len(want)] == want:
        return offset
    if text[offset:offset + len(surface)] == surface:
        return len(text[:offset].encode("utf-8"))
    return None


def _parse_flag(raw: str) -> bool | None:
    val = raw.strip().upper()
    if val not in ("TRUE", "FALSE"):
        return None
    return val == "TRUE"


def read_tsv(path: str | Path) -> TsvFile:
    """Read one GAP TSV file, collecting per-row diagnostics.

    Raises ExportError only for file-level problems (missing file, wrong
    header); anything wrong with an individual row becomes a diagnostic
    and the row is skipped.
    """
    path = Path(path)
    if not path.is_file():
        raise ExportError(f"no such TSV file: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ExportError(f"{path.name}: empty file, missing header row")
    header = tuple(lines[0].rstrip("\r").split("\t"))
    if header != COLUMNS:
        raise ExportError(
            f"{path.name}: unexpected header {header!r}; want {COLUMNS!r}")

    rows: list[GapRow] = []
    diagnostics: list[str] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cols = line.rstrip("\r").split("\t")
        if len(cols) != len(COLUMNS):
            rid = cols[0] if cols else "?"
            diagnostics.append(f"row {rid} (line {lineno}): expected "
                               f"{len(COLUMNS)} columns, got {len(cols)}")
            continue
        rid, text = cols[0], cols[1]
        try:
            raw_offsets = (int(cols[3]), int(cols[5]), int(cols[8]))
        except ValueError as exc:
            diagnostics.append(f"row {rid}: bad offset ({exc})")
            continue
        if min(raw_offsets) < 0:
            diagnostics.append(f"row {rid}: negative offset")
            continue
        a_coref = _parse_flag(cols[6])
        b_coref = _parse_flag(cols[9])
        if a_coref is None or b_coref is None:
            diagnostics.append(f"row {rid}: coref flags must be TRUE/FALSE")
            continue
        if a_coref and b_coref:
            diagnostics.append(f"row {rid}: both coref flags are TRUE")
            continue

        raw = text.encode("utf-8")
        resolved = []
        for name, surface, off in (("Pronoun", cols[2], raw_offsets[0]),
                                   ("A", cols[4], raw_offsets[1]),
                                   ("B", cols[7], raw_offsets[2])):
            b_off = _byte_offset_of(text, raw, off, surface)
            if b_off is None:
                diagnostics.append(
                    f"row {rid}: {name} surface {surface!r} not found at "
                    f"offset {off} (byte or character reading)")
                break
            resolved.append(b_off)
        if len(resolved) != 3:
            continue

        rows.append(GapRow(
            id=rid, text=text,
            pronoun=cols[2], pronoun_offset=resolved[0],
            a_text=cols[4], a_offset=resolved[1], a_coref=a_coref,
            b_text=cols[7], b_offset=resolved[2], b_coref=b_coref,
            url=cols[10]))
    return TsvFile(rows=rows, diagnostics=diagnostics)
