"""GAP corpus ingestion and the exported dataset format.

Two inputs exist on disk:

* GAP TSV files: 11 tab-separated columns with a header row
  (ID, Text, Pronoun, Pronoun-offset, A, A-offset, A-coref, B, B-offset,
  B-coref, URL). All offsets are byte offsets into the UTF-8 encoded text.

* An exported dataset directory holding the token/parse/embedding bundle the
  model trains on:

  - ``examples.jsonl``: one JSON object per line with fields
    {id, text, pronoun_span:[start,len], a_span, b_span, a_coref, b_coref,
    tokens:[{s,e,sent}], heads:[int|-1], dep_labels:[str],
    emb_row_offset:int}. Spans and token offsets are UTF-8 byte offsets;
    -1 in ``heads`` marks a sentence root.
  - ``embeddings.bin``: 16-byte header (magic ``RGCB``, u32 LE version=1,
    u32 LE embedding width, u32 reserved=0) followed by row-major float32 LE
    token rows, concatenated in example order.
  - ``manifest.json`` (optional for loading): provenance record with sha256
    checksums of the two files above; verified when present.

Loading is single-threaded and the resulting Dataset is immutable by
convention, so it may be shared across concurrent readers.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

GAP_COLUMNS = (
    "ID", "Text", "Pronoun", "Pronoun-offset", "A", "A-offset", "A-coref",
    "B", "B-offset", "B-coref", "URL",
)

EMB_MAGIC = b"RGCB"
EMB_VERSION = 1
EMB_HEADER_BYTES = 16


class CorpusError(Exception):
    """Malformed corpus input (structural: bad file, bad header, bad row)."""


class AlignmentError(CorpusError):
    """A mention span does not overlap any token span."""


class Class(Enum):
    A = 0
    B = 1
    NEITHER = 2


@dataclass
class GapExample:
    """One labeled snippet: a pronoun and two candidate antecedent names."""

    id: str
    text: str
    pronoun: str
    pronoun_offset: int
    a_text: str
    a_offset: int
    a_coref: bool
    b_text: str
    b_offset: int
    b_coref: bool
    url: str = ""


@dataclass
class TokenizedSnippet:
    """Parser output plus frozen per-token embeddings for one snippet.

    ``starts``/``ends`` are byte offsets into the example text, ``sent_ids``
    the sentence index per token, ``heads`` the head token index per token
    (-1 for a sentence root, otherwise an index in the same sentence).
    """

    starts: np.ndarray            # int64 [T]
    ends: np.ndarray              # int64 [T]
    sent_ids: np.ndarray          # int64 [T]
    heads: np.ndarray             # int64 [T], -1 = ROOT
    dep_labels: list[str]
    embeddings: np.ndarray        # float32 [T, D]

    @property
    def num_tokens(self) -> int:
        return len(self.starts)

    def token_surface(self, text: str, i: int) -> str:
        raw = text.encode("utf-8")
        return raw[self.starts[i]:self.ends[i]].decode("utf-8")


@dataclass
class Dataset:
    examples: list[tuple[GapExample, TokenizedSnippet]]
    embedding_dim: int

    def __len__(self) -> int:
        return len(self.examples)


@dataclass
class TsvParseResult:
    examples: list[GapExample]
    diagnostics: list[str] = field(default_factory=list)


def _byte_slice(text_bytes: bytes, offset: int, surface: str) -> bool:
    want = surface.encode("utf-8")
    return text_bytes[offset:offset + len(want)] == want


def parse_gap_tsv(data: bytes) -> TsvParseResult:
    """Parse a GAP TSV file.

    Rows that fail validation (wrong column count, unparsable offset/boolean,
    offset/surface mismatch, both coref flags true) are skipped with a
    diagnostic naming the row; the rest load normally.
    """
    text = data.decode("utf-8")
    lines = text.splitlines()
    if not lines:
        raise CorpusError("empty TSV: missing header row")
    header = tuple(lines[0].rstrip("\r").split("\t"))
    if header != GAP_COLUMNS:
        raise CorpusError(
            f"unexpected TSV header {header!r}; want {GAP_COLUMNS!r}")

    examples: list[GapExample] = []
    diagnostics: list[str] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cols = line.rstrip("\r").split("\t")
        if len(cols) != len(GAP_COLUMNS):
            rid = cols[0] if cols else "?"
            diagnostics.append(
                f"row {rid} (line {lineno}): expected {len(GAP_COLUMNS)} "
                f"columns, got {len(cols)}")
            continue
        rid = cols[0]
        try:
            p_off = int(cols[3])
            a_off = int(cols[5])
            b_off = int(cols[8])
        except ValueError as exc:
            diagnostics.append(f"row {rid}: bad offset ({exc})")
            continue
        flags = {}
        bad_flag = False
        for name, raw in (("A-coref", cols[6]), ("B-coref", cols[9])):
            val = raw.strip().upper()
            if val not in ("TRUE", "FALSE"):
                diagnostics.append(f"row {rid}: {name} is {raw!r}, "
                                   "expected TRUE/FALSE")
                bad_flag = True
                break
            flags[name] = val == "TRUE"
        if bad_flag:
            continue
        if flags["A-coref"] and flags["B-coref"]:
            diagnostics.append(f"row {rid}: both A-coref and B-coref are TRUE")
            continue

        snippet = cols[1]
        raw = snippet.encode("utf-8")
        span_ok = True
        for name, surface, off in (("Pronoun", cols[2], p_off),
                                   ("A", cols[4], a_off),
                                   ("B", cols[7], b_off)):
            if off < 0 or not _byte_slice(raw, off, surface):
                diagnostics.append(
                    f"row {rid}: {name} surface {surface!r} does not match "
                    f"text at byte offset {off}")
                span_ok = False
                break
        if not span_ok:
            continue

        examples.append(GapExample(
            id=rid, text=snippet,
            pronoun=cols[2], pronoun_offset=p_off,
            a_text=cols[4], a_offset=a_off, a_coref=flags["A-coref"],
            b_text=cols[7], b_offset=b_off, b_coref=flags["B-coref"],
            url=cols[10],
        ))
    return TsvParseResult(examples, diagnostics)


def gold_class(example: GapExample) -> Class:
    if example.a_coref and example.b_coref:
        raise CorpusError(f"example {example.id}: both coref flags are true")
    if example.a_coref:
        return Class.A
    if example.b_coref:
        return Class.B
    return Class.NEITHER


def align_span(snippet: TokenizedSnippet, char_start: int,
               surface: str) -> tuple[int, int]:
    """Map a mention byte span onto the tokens it intersects.

    Returns the half-open token index range [lo, hi). Intersection, not
    containment: a mention starting mid-token still claims that token.
    """
    span_end = char_start + len(surface.encode("utf-8"))
    hits = np.nonzero((snippet.starts < span_end)
                      & (snippet.ends > char_start))[0]
    if len(hits) == 0:
        raise AlignmentError(
            f"no token overlaps byte span [{char_start}, {span_end}) "
            f"for surface {surface!r}")
    return int(hits[0]), int(hits[-1]) + 1


def _snippet_diagnostics(ex: GapExample, sn: TokenizedSnippet,
                         embedding_dim: int) -> list[str]:
    """All TokenizedSnippet / alignment invariant violations, as messages."""
    out = []
    t = sn.num_tokens
    if not (len(sn.ends) == len(sn.sent_ids) == len(sn.heads)
            == len(sn.dep_labels) == t):
        out.append(f"{ex.id}: token/head/label array lengths disagree")
        return out
    if sn.embeddings.shape != (t, embedding_dim):
        out.append(f"{ex.id}: embeddings shape {sn.embeddings.shape} != "
                   f"({t}, {embedding_dim})")
        return out
    text_len = len(ex.text.encode("utf-8"))
    for i in range(t):
        if not (0 <= sn.starts[i] < sn.ends[i] <= text_len):
            out.append(f"{ex.id}: token {i} span "
                       f"[{sn.starts[i]}, {sn.ends[i]}) out of bounds")
        if i > 0 and sn.sent_ids[i] == sn.sent_ids[i - 1] \
                and sn.starts[i] < sn.ends[i - 1]:
            out.append(f"{ex.id}: token {i} overlaps token {i - 1}")
        h = int(sn.heads[i])
        if h != -1:
            if not (0 <= h < t):
                out.append(f"{ex.id}: head of token {i} out of range ({h})")
            elif sn.sent_ids[h] != sn.sent_ids[i]:
                out.append(f"{ex.id}: head of token {i} crosses sentences")
            elif h == i:
                out.append(f"{ex.id}: token {i} is its own head")
    if out:
        return out
    for name, surface, off in (("pronoun", ex.pronoun, ex.pronoun_offset),
                               ("A", ex.a_text, ex.a_offset),
                               ("B", ex.b_text, ex.b_offset)):
        try:
            align_span(sn, off, surface)
        except AlignmentError as exc:
            out.append(f"{ex.id}: {name} does not align: {exc}")
    return out


def _read_embedding_file(path: Path) -> tuple[int, np.ndarray]:
    """Return (embedding_dim, all rows) from an embeddings.bin file."""
    blob = path.read_bytes()
    if len(blob) < EMB_HEADER_BYTES:
        raise CorpusError(f"{path}: too short for a {EMB_HEADER_BYTES}-byte "
                          "header")
    magic = blob[:4]
    if magic != EMB_MAGIC:
        raise CorpusError(f"{path}: bad magic {magic!r}, want {EMB_MAGIC!r}")
    version, dim, reserved = struct.unpack_from("<III", blob, 4)
    if version != EMB_VERSION:
        raise CorpusError(f"{path}: unsupported version {version}")
    if reserved != 0:
        raise CorpusError(f"{path}: reserved header field is {reserved}")
    if dim <= 0:
        raise CorpusError(f"{path}: nonpositive embedding width {dim}")
    payload = len(blob) - EMB_HEADER_BYTES
    row_bytes = 4 * dim
    if payload % row_bytes != 0:
        whole = payload // row_bytes
        raise CorpusError(
            f"{path}: truncated payload at byte "
            f"{EMB_HEADER_BYTES + payload}: {payload} bytes is not a "
            f"multiple of the {row_bytes}-byte row ({whole} whole rows)")
    rows = np.frombuffer(blob, dtype="<f4", offset=EMB_HEADER_BYTES)
    return dim, rows.reshape(-1, dim)


def _verify_manifest(path: Path) -> None:
    mpath = path / "manifest.json"
    if not mpath.is_file():
        return
    manifest = json.loads(mpath.read_text())
    for fname, want in manifest.get("sha256", {}).items():
        fpath = path / fname
        if not fpath.is_file():
            raise CorpusError(f"manifest names missing file {fname}")
        got = hashlib.sha256(fpath.read_bytes()).hexdigest()
        if got != want:
            raise CorpusError(
                f"checksum failure for {fname}: manifest says {want}, "
                f"file hashes to {got}")


def _iter_records(path: Path):
    jpath = path / "examples.jsonl"
    if not jpath.is_file():
        raise CorpusError(f"missing {jpath}")
    with open(jpath, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(
                    f"{jpath}:{lineno}: bad JSON ({exc})") from exc


def _record_to_example(rec: dict, rows: np.ndarray, dim: int,
                       expect_offset: int) -> tuple[GapExample,
                                                    TokenizedSnippet]:
    text = rec["text"]
    raw = text.encode("utf-8")

    def span_surface(span):
        start, length = span
        return raw[start:start + length].decode("utf-8"), start

    pronoun, p_off = span_surface(rec["pronoun_span"])
    a_text, a_off = span_surface(rec["a_span"])
    b_text, b_off = span_surface(rec["b_span"])
    ex = GapExample(
        id=rec["id"], text=text,
        pronoun=pronoun, pronoun_offset=p_off,
        a_text=a_text, a_offset=a_off, a_coref=bool(rec["a_coref"]),
        b_text=b_text, b_offset=b_off, b_coref=bool(rec["b_coref"]),
    )
    if ex.a_coref and ex.b_coref:
        raise CorpusError(f"{ex.id}: both coref flags are true")
    tokens = rec["tokens"]
    t = len(tokens)
    offset = int(rec["emb_row_offset"])
    if offset != expect_offset:
        raise CorpusError(
            f"{ex.id}: emb_row_offset {offset} leaves a gap or overlap "
            f"(expected {expect_offset})")
    if offset + t > len(rows):
        raise CorpusError(
            f"{ex.id}: embedding rows [{offset}, {offset + t}) exceed the "
            f"{len(rows)} rows in embeddings.bin")
    sn = TokenizedSnippet(
        starts=np.array([tok["s"] for tok in tokens], dtype=np.int64),
        ends=np.array([tok["e"] for tok in tokens], dtype=np.int64),
        sent_ids=np.array([tok["sent"] for tok in tokens], dtype=np.int64),
        heads=np.asarray(rec["heads"], dtype=np.int64),
        dep_labels=[str(x) for x in rec["dep_labels"]],
        embeddings=np.ascontiguousarray(rows[offset:offset + t]),
    )
    return ex, sn


def load_dataset(path: str | Path) -> Dataset:
    """Load an exported dataset directory, checking every invariant.

    Raises CorpusError on the first violation. Use `audit_dataset` to
    collect all diagnostics instead.
    """
    path = Path(path)
    _verify_manifest(path)
    bpath = path / "embeddings.bin"
    if not bpath.is_file():
        raise CorpusError(f"missing {bpath}")
    dim, rows = _read_embedding_file(bpath)
    examples = []
    next_row = 0
    for rec in _iter_records(path):
        ex, sn = _record_to_example(rec, rows, dim, next_row)
        next_row += sn.num_tokens
        diags = _snippet_diagnostics(ex, sn, dim)
        if diags:
            raise CorpusError(diags[0])
        examples.append((ex, sn))
    if next_row != len(rows):
        raise CorpusError(
            f"embeddings.bin holds {len(rows)} rows but examples.jsonl "
            f"accounts for {next_row}")
    return Dataset(examples=examples, embedding_dim=dim)


def audit_dataset(path: str | Path) -> tuple[int, list[str]]:
    """Validate a dataset directory, collecting per-example diagnostics.

    Returns (clean example count, diagnostics). Structural file problems
    (missing files, bad header, checksum failure) still raise CorpusError.
    """
    path = Path(path)
    _verify_manifest(path)
    bpath = path / "embeddings.bin"
    if not bpath.is_file():
        raise CorpusError(f"missing {bpath}")
    dim, rows = _read_embedding_file(bpath)
    n_ok = 0
    diagnostics: list[str] = []
    next_row = 0
    for rec in _iter_records(path):
        try:
            ex, sn = _record_to_example(rec, rows, dim, next_row)
        except (CorpusError, KeyError, TypeError, ValueError) as exc:
            diagnostics.append(f"{rec.get('id', '?')}: {exc}")
            next_row += len(rec.get("tokens", []))
            continue
        next_row += sn.num_tokens
        diags = _snippet_diagnostics(ex, sn, dim)
        if diags:
            diagnostics.extend(diags)
        else:
            n_ok += 1
    if next_row != len(rows):
        diagnostics.append(
            f"embeddings.bin holds {len(rows)} rows but examples.jsonl "
            f"accounts for {next_row}")
    return n_ok, diagnostics


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write a Dataset back out in the on-disk format (with manifest)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    jpath = path / "examples.jsonl"
    bpath = path / "embeddings.bin"
    dim = dataset.embedding_dim

    next_row = 0
    with open(jpath, "w", encoding="utf-8") as jf, open(bpath, "wb") as bf:
        bf.write(EMB_MAGIC)
        bf.write(struct.pack("<III", EMB_VERSION, dim, 0))
        for ex, sn in dataset.examples:
            rec = {
                "id": ex.id,
                "text": ex.text,
                "pronoun_span": [ex.pronoun_offset,
                                 len(ex.pronoun.encode("utf-8"))],
                "a_span": [ex.a_offset, len(ex.a_text.encode("utf-8"))],
                "b_span": [ex.b_offset, len(ex.b_text.encode("utf-8"))],
                "a_coref": ex.a_coref,
                "b_coref": ex.b_coref,
                "tokens": [{"s": int(s), "e": int(e), "sent": int(g)}
                           for s, e, g in zip(sn.starts, sn.ends,
                                              sn.sent_ids)],
                "heads": [int(h) for h in sn.heads],
                "dep_labels": list(sn.dep_labels),
                "emb_row_offset": next_row,
            }
            jf.write(json.dumps(rec, ensure_ascii=False) + "\n")
            emb = np.ascontiguousarray(sn.embeddings, dtype="<f4")
            if emb.shape != (sn.num_tokens, dim):
                raise CorpusError(f"{ex.id}: embeddings shape {emb.shape} "
                                  f"inconsistent with width {dim}")
            bf.write(emb.tobytes())
            next_row += sn.num_tokens

    manifest = {
        "writer": "gapgcn.save_dataset",
        "embedding_dim": dim,
        "example_count": len(dataset.examples),
        "sha256": {
            "examples.jsonl":
                hashlib.sha256(jpath.read_bytes()).hexdigest(),
            "embeddings.bin":
                hashlib.sha256(bpath.read_bytes()).hexdigest(),
        },
    }
    # manifest written last so a crashed export is detectably incomplete
    (path / "manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n")
