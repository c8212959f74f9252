"""Offline data preparation for the pronoun resolver.

Reads GAP TSV files, tokenizes and dependency-parses each snippet, runs a
subword encoder, pools subword vectors into per-token embeddings by
byte-span intersection, and writes the resolver's dataset directory
format (examples.jsonl + embeddings.bin + manifest.json).
"""

from .encoders import (Encoding, HashedEncoder, TransformersEncoder,
                       combine_layers, make_encoder)
from .errors import ExportError
from .export import (ExportOptions, ExportResult, export,
                     intersecting_tokens, pool_token_embeddings)
from .gap_tsv import COLUMNS, GapRow, TsvFile, read_tsv
from .parsers import Analysis, ChainParser, SpacyParser, make_parser
from .segment import Segmentation, char_to_byte, sentence_ranges, tokenize
from .verify import AlignmentReport, verify_alignment

__version__ = "0.1.0"

__all__ = [
    "Analysis", "AlignmentReport", "COLUMNS", "ChainParser", "Encoding",
    "ExportError", "ExportOptions", "ExportResult", "GapRow",
    "HashedEncoder", "Segmentation", "SpacyParser", "TransformersEncoder",
    "TsvFile", "char_to_byte", "combine_layers", "export",
    "intersecting_tokens", "make_encoder", "make_parser",
    "pool_token_embeddings", "read_tsv", "sentence_ranges", "tokenize",
    "verify_alignment",
]
