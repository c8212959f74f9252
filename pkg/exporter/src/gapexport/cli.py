"""Command-line entry points: `gapexport export` and `gapexport verify`."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .encoders import make_encoder
from .errors import ExportError
from .export import ExportOptions, export
from .parsers import make_parser
from .verify import verify_alignment

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def cmd_export(args: argparse.Namespace) -> int:
    tsv_paths = [Path(p) for p in args.tsv]
    missing = [p for p in tsv_paths if not p.is_file()]
    if missing:
        _err(f"no such TSV file: {missing[0]}")
        return EXIT_USAGE
    options = ExportOptions(encoder=args.encoder, parser=args.parser,
                            layer_rule=args.layers, dim=args.dim,
                            limit=args.limit)
    try:
        encoder = make_encoder(options.encoder, dim=options.dim)
        parser = make_parser(options.parser)
    except ExportError as exc:
        _err(str(exc))
        return EXIT_USAGE
    try:
        result = export(tsv_paths, args.out, options, encoder=encoder,
                        parser=parser)
    except ExportError as exc:
        _err(str(exc))
        return EXIT_CHECK_FAILED
    for failure in result.failures:
        print(f"skipped: {failure}", file=sys.stderr)
    note = f" ({len(result.failures)} skipped)" if result.failures else ""
    print(f"exported {result.exported} example(s) to {result.out_dir}"
          f"{note}")
    return EXIT_OK if result.exported else EXIT_CHECK_FAILED


def cmd_verify(args: argparse.Namespace) -> int:
    data = Path(args.data)
    if not data.is_dir():
        _err(f"no such dataset directory: {data}")
        return EXIT_USAGE
    try:
        report = verify_alignment(data)
    except ExportError as exc:
        _err(str(exc))
        return EXIT_USAGE
    for failure in report.failures:
        print(failure, file=sys.stderr)
    if report.warning:
        print(f"warning: {report.warning}")
    if not report.ok:
        print(f"{len(report.failures)} unaligned mention(s) in "
              f"{len(report.maps)} example(s)")
        return EXIT_CHECK_FAILED
    print(f"{len(report.maps)} example(s), every mention aligned")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="gapexport",
        description="Export GAP TSVs as tokenized snippets with per-token "
                    "embeddings")
    sub = ap.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("export", help="run the export pipeline")
    ex.add_argument("--tsv", nargs="+", required=True,
                    help="input GAP TSV file(s), concatenated in order")
    ex.add_argument("--out", required=True, help="output dataset directory")
    ex.add_argument("--encoder", default="hashed",
                    help="'hashed' or a transformers model id/path")
    ex.add_argument("--layers", default="last", choices=["last", "sum4"],
                    help="encoder layer-selection rule")
    ex.add_argument("--parser", default="chain",
                    help="'chain', 'spacy', or 'spacy:<model>'")
    ex.add_argument("--dim", type=int, default=256,
                    help="hashed-encoder width (real encoders fix their "
                         "own)")
    ex.add_argument("--limit", type=int, default=0,
                    help="export at most N examples (0 = all)")
    ex.set_defaults(func=cmd_export)

    ver = sub.add_parser("verify",
                         help="audit mention-to-token alignment")
    ver.add_argument("--data", required=True, help="dataset directory")
    ver.set_defaults(func=cmd_verify)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
