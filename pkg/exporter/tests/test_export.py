"""The export pipeline: file formats, manifest, failure handling."""

import json
import struct

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from gapexport import (Analysis, ChainParser, ExportError, ExportOptions,
                       HashedEncoder, export, pool_token_embeddings)

from tsvfix import CLEAN_ROWS, TWO_SENTENCE_ROW, write_tsv

DIM = 16


def run_export(tmp_path, rows=CLEAN_ROWS, out="out", **opt):
    tsv = write_tsv(tmp_path / "mini.tsv", rows=rows)
    options = ExportOptions(dim=DIM, **opt)
    return export([tsv], tmp_path / out, options)


def read_records(out_dir):
    with open(out_dir / "examples.jsonl", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh]


class TestHappyPath:
    def test_all_clean_rows_exported(self, tmp_path):
        result = run_export(tmp_path)
        assert result.exported == 6 and result.failures == []

    def test_payload_size_formula(self, tmp_path):
        result = run_export(tmp_path)
        total_tokens = sum(len(rec["tokens"])
                           for rec in read_records(result.out_dir))
        size = (result.out_dir / "embeddings.bin").stat().st_size
        assert size == 16 + 4 * DIM * total_tokens

    def test_binary_header_fields(self, tmp_path):
        result = run_export(tmp_path)
        blob = (result.out_dir / "embeddings.bin").read_bytes()
        assert blob[:4] == b"RGCB"
        version, dim, reserved = struct.unpack_from("<III", blob, 4)
        assert (version, dim, reserved) == (1, DIM, 0)

    def test_record_schema_and_contiguous_offsets(self, tmp_path):
        result = run_export(tmp_path)
        next_row = 0
        for rec in read_records(result.out_dir):
            assert list(rec) == ["id", "text", "pronoun_span", "a_span",
                                 "b_span", "a_coref", "b_coref", "tokens",
                                 "heads", "dep_labels", "emb_row_offset"]
            assert rec["emb_row_offset"] == next_row
            assert len(rec["heads"]) == len(rec["tokens"]) \
                == len(rec["dep_labels"])
            next_row += len(rec["tokens"])

    def test_mention_spans_are_byte_lengths(self, tmp_path):
        result = run_export(tmp_path)
        utf8 = read_records(result.out_dir)[5]
        start, length = utf8["a_span"]
        assert (start, length) == (0, 4)    # "Zoë" is four bytes


class TestDeterminism:
    def test_reexport_is_byte_identical(self, tmp_path):
        first = run_export(tmp_path, out="one")
        second = run_export(tmp_path, out="two")
        for name in ("examples.jsonl", "embeddings.bin"):
            assert (first.out_dir / name).read_bytes() \
                == (second.out_dir / name).read_bytes(), name
        # manifests differ only in the directory-independent fields, i.e.
        # not at all here
        assert (first.out_dir / "manifest.json").read_bytes() \
            == (second.out_dir / "manifest.json").read_bytes()


class TestManifest:
    def test_provenance_fields(self, tmp_path):
        result = run_export(tmp_path)
        m = json.loads((result.out_dir / "manifest.json").read_text())
        assert m["encoder"] == {"id": "hashed", "dim": DIM,
                                "deterministic": True}
        assert m["parser"] == {"id": "chain", "version": "1"}
        assert m["layer_rule"] == "last"
        assert m["embedding_dim"] == DIM
        assert m["example_count"] == 6
        assert list(m["sources"]) == ["mini.tsv"]

    def test_checksums_match_files(self, tmp_path):
        import hashlib
        result = run_export(tmp_path)
        m = json.loads((result.out_dir / "manifest.json").read_text())
        for name, want in m["sha256"].items():
            got = hashlib.sha256(
                (result.out_dir / name).read_bytes()).hexdigest()
            assert got == want, name

    def test_manifest_records_result(self, tmp_path):
        result = run_export(tmp_path)
        on_disk = json.loads((result.out_dir / "manifest.json").read_text())
        assert result.manifest == on_disk


class TestSubwordPooling:
    def test_token_equal_to_one_piece_copies_its_vector(self):
        text = "Zoe met Ana."
        enc = HashedEncoder(dim=8).encode(text)
        analysis = ChainParser().analyze(text)
        rows = pool_token_embeddings(analysis, enc)
        # "Zoe" is a single <=4-char piece spanning bytes [0, 3)
        piece = next(i for i, (s, e) in enumerate(zip(enc.starts, enc.ends))
                     if (s, e) == (0, 3))
        assert_array_equal(rows[0], enc.vectors[piece])

    def test_multi_piece_token_is_mean(self):
        text = "extraordinary"
        enc = HashedEncoder(dim=8).encode(text)
        analysis = ChainParser().analyze(text)
        rows = pool_token_embeddings(analysis, enc)
        np.testing.assert_allclose(rows[0], enc.vectors.mean(axis=0),
                                   rtol=1e-6)

    def test_uncovered_token_rejected(self):
        analysis = ChainParser().analyze("Zoe met Ana.")
        enc = HashedEncoder(dim=8).encode("Zoe")  # pieces stop at byte 3
        with pytest.raises(ExportError, match="overlaps no encoder piece"):
            pool_token_embeddings(analysis, enc)


class _TruncatingParser:
    """Fake provider that forgets everything after the first sentence."""

    id = "truncating-fake"
    version = "0"

    def analyze(self, text):
        full = ChainParser().analyze(text)
        keep = [i for i, sid in enumerate(full.sent_ids) if sid == 0]
        return Analysis(
            starts=[full.starts[i] for i in keep],
            ends=[full.ends[i] for i in keep],
            sent_ids=[0] * len(keep),
            heads=full.heads[:len(keep)],
            labels=full.labels[:len(keep)],
            surfaces=[full.surfaces[i] for i in keep])


class _EmptyParser:
    id = "empty-fake"
    version = "0"

    def analyze(self, text):
        return Analysis(starts=[], ends=[], sent_ids=[], heads=[],
                        labels=[], surfaces=[])


class TestFailureHandling:
    def test_tsv_diagnostics_carried_into_failures(self, tmp_path):
        bad = "bad-1\tMaya won.\tshe\t99\tMaya\t0\tTRUE\tZoe\t5\tFALSE\tu"
        result = run_export(tmp_path, rows=[CLEAN_ROWS[0], bad])
        assert result.exported == 1
        assert any("bad-1" in f for f in result.failures)

    def test_unaligned_mention_excluded_and_listed(self, tmp_path):
        tsv = write_tsv(tmp_path / "two.tsv",
                        rows=[CLEAN_ROWS[0], TWO_SENTENCE_ROW])
        result = export([tsv], tmp_path / "out", ExportOptions(dim=8),
                        parser=_TruncatingParser())
        assert result.exported == 1
        assert any("two-1" in f and "pronoun" in f
                   for f in result.failures)

    def test_zero_token_example_excluded(self, tmp_path):
        tsv = write_tsv(tmp_path / "one.tsv", rows=[CLEAN_ROWS[0]])
        result = export([tsv], tmp_path / "out", ExportOptions(dim=8),
                        parser=_EmptyParser())
        assert result.exported == 0
        assert any("no tokens" in f for f in result.failures)

    def test_failed_examples_leave_no_rows_behind(self, tmp_path):
        tsv = write_tsv(tmp_path / "two.tsv",
                        rows=[CLEAN_ROWS[0], TWO_SENTENCE_ROW])
        result = export([tsv], tmp_path / "out", ExportOptions(dim=8),
                        parser=_TruncatingParser())
        recs = read_records(result.out_dir)
        total = sum(len(r["tokens"]) for r in recs)
        size = (result.out_dir / "embeddings.bin").stat().st_size
        assert size == 16 + 4 * 8 * total


class TestOptions:
    def test_limit_caps_exported_examples(self, tmp_path):
        result = run_export(tmp_path, limit=2)
        assert result.exported == 2
        assert len(read_records(result.out_dir)) == 2

    def test_layer_rule_changes_embeddings_and_manifest(self, tmp_path):
        last = run_export(tmp_path, out="last")
        sum4 = run_export(tmp_path, out="sum4", layer_rule="sum4")
        assert (last.out_dir / "examples.jsonl").read_bytes() \
            == (sum4.out_dir / "examples.jsonl").read_bytes()
        assert (last.out_dir / "embeddings.bin").read_bytes() \
            != (sum4.out_dir / "embeddings.bin").read_bytes()
        assert sum4.manifest["layer_rule"] == "sum4"

    def test_multiple_tsvs_concatenate_in_order(self, tmp_path):
        a = write_tsv(tmp_path / "a.tsv", rows=CLEAN_ROWS[:2])
        b = write_tsv(tmp_path / "b.tsv", rows=CLEAN_ROWS[2:4])
        result = export([a, b], tmp_path / "out", ExportOptions(dim=8))
        assert [r["id"] for r in read_records(result.out_dir)] \
            == ["dev-1", "dev-2", "dev-3", "dev-4"]
        assert list(result.manifest["sources"]) == ["a.tsv", "b.tsv"]
