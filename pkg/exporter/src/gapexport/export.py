"""One-shot export of GAP TSVs into the resolver's dataset directory format.

Output directory layout (the resolver's loading contract):

  - ``examples.jsonl``: one JSON object per example — text, byte-offset
    mention spans, tokens with byte spans and sentence ids, per-token
    heads/labels, and the example's starting row in the embedding file.
  - ``embeddings.bin``: magic ``RGCB``, u32 version=1, u32 width, u32
    reserved=0, then row-major float32 little-endian token rows
    concatenated in example order.
  - ``manifest.json``: provenance (source hashes, encoder, parser, layer
    rule) plus sha256 checksums of the two files above; written
    atomically and last, so a directory without one is an aborted export.

Examples that any stage rejects (TSV row, parser, encoder, pooling, or
mention alignment) are excluded and listed, never silently dropped.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoders import Encoding, make_encoder
from .errors import ExportError
from .gap_tsv import GapRow, read_tsv
from .parsers import Analysis, make_parser

MAGIC = b"RGCB"
VERSION = 1
_VERSION_STR = "gapexport 0.1.0"


@dataclass
class ExportOptions:
    encoder: str = "hashed"
    parser: str = "chain"
    layer_rule: str = "last"
    dim: int = 256              # hashed-encoder width; real encoders fix it
    limit: int = 0              # 0 = no cap on exported examples


@dataclass
class ExportResult:
    out_dir: Path
    exported: int
    failures: list[str] = field(default_factory=list)
    manifest: dict = field(default_factory=dict)


def intersecting_tokens(analysis: Analysis, start: int,
                        end: int) -> list[int]:
    """Indices of tokens whose byte span overlaps [start, end)."""
    return [i for i in range(len(analysis))
            if analysis.starts[i] < end and analysis.ends[i] > start]


def pool_token_embeddings(analysis: Analysis,
                          encoding: Encoding) -> np.ndarray:
    """Mean the encoder pieces overlapping each token; every token must
    catch at least one piece."""
    dim = encoding.vectors.shape[1]
    out = np.empty((len(analysis), dim), dtype=np.float32)
    for i in range(len(analysis)):
        hits = [p for p in range(len(encoding.starts))
                if encoding.starts[p] < analysis.ends[i]
                and encoding.ends[p] > analysis.starts[i]]
        if not hits:
            raise ExportError(
                f"token {i} ({analysis.surfaces[i]!r}) overlaps no encoder "
                "piece")
        out[i] = encoding.vectors[hits].mean(axis=0)
    return out


def _check_mentions(row: GapRow, analysis: Analysis) -> None:
    for name, surface, off in (("pronoun", row.pronoun, row.pronoun_offset),
                               ("A", row.a_text, row.a_offset),
                               ("B", row.b_text, row.b_offset)):
        end = off + len(surface.encode("utf-8"))
        if not intersecting_tokens(analysis, off, end):
            raise ExportError(f"{name} span [{off}, {end}) aligns to no "
                              "token")


def _record(row: GapRow, analysis: Analysis, emb_row_offset: int) -> dict:
    return {
        "id": row.id,
        "text": row.text,
        "pronoun_span": [row.pronoun_offset,
                         len(row.pronoun.encode("utf-8"))],
        "a_span": [row.a_offset, len(row.a_text.encode("utf-8"))],
        "b_span": [row.b_offset, len(row.b_text.encode("utf-8"))],
        "a_coref": row.a_coref,
        "b_coref": row.b_coref,
        "tokens": [{"s": s, "e": e, "sent": g}
                   for s, e, g in zip(analysis.starts, analysis.ends,
                                      analysis.sent_ids)],
        "heads": list(analysis.heads),
        "dep_labels": list(analysis.labels),
        "emb_row_offset": emb_row_offset,
    }


def _write_manifest_last(out_dir: Path, manifest: dict) -> None:
    fd, tmp = tempfile.mkstemp(dir=out_dir, suffix=".manifest.tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(manifest, indent=2) + "\n")
        os.chmod(tmp, 0o644)  # mkstemp defaults to owner-only
        os.replace(tmp, out_dir / "manifest.json")
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def export(tsv_paths: list[str | Path], out_dir: str | Path,
           options: ExportOptions | None = None, *,
           encoder=None, parser=None) -> ExportResult:
    """Run the full pipeline and write a dataset directory.

    `encoder`/`parser` override the providers named in `options` (used by
    tests to inject fakes).
    """
    options = options or ExportOptions()
    encoder = encoder or make_encoder(options.encoder, dim=options.dim)
    parser = parser or make_parser(options.parser)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows: list[GapRow] = []
    failures: list[str] = []
    sources = {}
    for p in tsv_paths:
        tsv = read_tsv(p)
        rows.extend(tsv.rows)
        failures.extend(tsv.diagnostics)
        sources[Path(p).name] = hashlib.sha256(
            Path(p).read_bytes()).hexdigest()
    if options.limit:
        rows = rows[:options.limit]

    records: list[dict] = []
    blocks: list[np.ndarray] = []
    next_row = 0
    dim = None
    for row in rows:
        try:
            analysis = parser.analyze(row.text)
            if len(analysis) == 0:
                raise ExportError("no tokens")
            encoding = encoder.encode(row.text, options.layer_rule)
            emb = pool_token_embeddings(analysis, encoding)
            _check_mentions(row, analysis)
        except ExportError as exc:
            failures.append(f"{row.id}: {exc}")
            continue
        records.append(_record(row, analysis, next_row))
        blocks.append(emb)
        next_row += len(analysis)
        dim = emb.shape[1]

    if dim is None:
        dim = getattr(encoder, "dim", options.dim)
    jpath = out_dir / "examples.jsonl"
    bpath = out_dir / "embeddings.bin"
    with open(jpath, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    with open(bpath, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, dim, 0))
        for block in blocks:
            fh.write(np.ascontiguousarray(block, dtype="<f4").tobytes())

    manifest = {
        "writer": _VERSION_STR,
        "sources": sources,
        "encoder": {"id": encoder.id, "dim": dim,
                    "deterministic": bool(encoder.deterministic)},
        "parser": {"id": parser.id, "version": parser.version},
        "layer_rule": options.layer_rule,
        "embedding_dim": dim,
        "example_count": len(records),
        "sha256": {
            "examples.jsonl":
                hashlib.sha256(jpath.read_bytes()).hexdigest(),
            "embeddings.bin":
                hashlib.sha256(bpath.read_bytes()).hexdigest(),
        },
    }
    _write_manifest_last(out_dir, manifest)
    return ExportResult(out_dir=out_dir, exported=len(records),
                        failures=failures, manifest=manifest)
