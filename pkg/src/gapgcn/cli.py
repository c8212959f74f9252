"""Command-line entry points.

Subcommands: ``validate-data``, ``train``, ``predict``, ``gradcheck``.
Exit codes: 0 success, 1 validation/check failure, 2 I/O or usage error.
Every command is deterministic given (config, data, seed); set RGCN_THREADS
to train folds in parallel worker processes (0 = single-threaded
bitwise-reproducible mode).
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import checks
from .corpus import CorpusError, audit_dataset, load_dataset
from .model import Setting, config_from_record, config_record
from .params import load_checkpoint, save_checkpoint
from .runconfig import ConfigError, RunConfig, load_config
from .training import ensemble_predict, run_experiment

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2

_SETTINGS = tuple(s.value for s in Setting)


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _write_predictions(path: Path, ids: list[str],
                       probs: np.ndarray) -> None:
    lines = ["ID\tp_A\tp_B\tp_NEITHER"]
    for ex_id, row in zip(ids, probs):
        lines.append(f"{ex_id}\t{row[0]:.6f}\t{row[1]:.6f}\t{row[2]:.6f}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_validate_data(args) -> int:
    data_dir = Path(args.data)
    if not data_dir.is_dir():
        _err(f"data directory not found: {data_dir}")
        return EXIT_USAGE
    try:
        n_ok, diagnostics = audit_dataset(data_dir)
    except CorpusError as exc:
        _err(str(exc))
        return EXIT_CHECK_FAILED
    for line in diagnostics:
        print(line)
    if diagnostics or n_ok == 0:
        print(f"{data_dir}: {n_ok} clean example(s), "
              f"{len(diagnostics)} problem(s)")
        return EXIT_CHECK_FAILED
    print(f"{data_dir}: {n_ok} clean example(s)")
    return EXIT_OK


def cmd_train(args) -> int:
    try:
        config = load_config(args.config) if args.config else RunConfig()
        if args.data:
            config.train_data = args.data
        if args.test_data:
            config.test_data = args.test_data
        if args.setting:
            config.setting = args.setting
        if args.seed is not None:
            config.seed = args.seed
        if args.epochs is not None:
            config.epochs = args.epochs
        if args.folds is not None:
            config.folds = args.folds
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_USAGE

    if not config.train_data:
        _err("no training data (use --data or set train_data in the config)")
        return EXIT_USAGE
    if not Path(config.train_data).is_dir():
        _err(f"data directory not found: {config.train_data}")
        return EXIT_USAGE
    if config.test_data and not Path(config.test_data).is_dir():
        _err(f"data directory not found: {config.test_data}")
        return EXIT_USAGE

    try:
        dataset_train = load_dataset(config.train_data)
        dataset_test = (load_dataset(config.test_data)
                        if config.test_data else None)
    except CorpusError as exc:
        _err(str(exc))
        return EXIT_CHECK_FAILED

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    try:
        result = run_experiment(dataset_train, dataset_test, config)
    except (ConfigError, ValueError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    except RuntimeError as exc:
        _err(str(exc))
        return EXIT_CHECK_FAILED
    elapsed = time.perf_counter() - started

    (out_dir / "report.txt").write_text(result.report, encoding="utf-8")
    # Wall-clock goes to a sidecar so report.txt is identical across
    # same-seed runs.
    (out_dir / "timing.txt").write_text(f"wall_seconds = {elapsed:.3f}\n",
                                        encoding="utf-8")
    record = config_record(
        run_config_to_resolver(config, dataset_train.embedding_dim))
    for fold in result.folds:
        save_checkpoint(fold.store, record,
                        out_dir / f"fold_{fold.fold_id}.ckpt")
    if result.test_probs is not None:
        ids = [ex.id for ex, _ in dataset_test.examples]
        _write_predictions(out_dir / "predictions.tsv", ids,
                           result.test_probs)
    print(result.report, end="")
    print(f"artifacts written to {out_dir}")
    return EXIT_OK


def run_config_to_resolver(config: RunConfig, embedding_dim: int):
    """Resolver config with the width filled in from the data."""
    dim = config.embedding_dim if config.embedding_dim > 0 else embedding_dim
    return config.resolver_config(dim)


def cmd_predict(args) -> int:
    model_dir = Path(args.model)
    if not model_dir.is_dir():
        _err(f"model directory not found: {model_dir}")
        return EXIT_USAGE
    ckpt_paths = sorted(model_dir.glob("*.ckpt"))
    if not ckpt_paths:
        _err(f"no .ckpt files in {model_dir}")
        return EXIT_USAGE
    data_dir = Path(args.data)
    if not data_dir.is_dir():
        _err(f"data directory not found: {data_dir}")
        return EXIT_USAGE

    models = []
    try:
        for path in ckpt_paths:
            store, record = load_checkpoint(path)
            models.append((store, config_from_record(record)))
    except (ValueError, KeyError, OSError) as exc:
        _err(f"unreadable checkpoint: {exc}")
        return EXIT_USAGE

    try:
        dataset = load_dataset(data_dir)
    except CorpusError as exc:
        _err(str(exc))
        return EXIT_CHECK_FAILED
    if dataset.embedding_dim != models[0][1].embedding_dim:
        _err(f"checkpoint expects embedding width "
             f"{models[0][1].embedding_dim}, dataset has "
             f"{dataset.embedding_dim}")
        return EXIT_USAGE

    try:
        probs = ensemble_predict(models, dataset)
    except ValueError as exc:
        _err(str(exc))
        return EXIT_USAGE
    ids = [ex.id for ex, _ in dataset.examples]
    _write_predictions(Path(args.out), ids, probs)
    print(f"{len(ids)} prediction(s) written to {args.out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    settings = (_SETTINGS if args.setting == "all" else (args.setting,))
    worst = 0.0
    for name in settings:
        err = checks.micro_gradcheck(name, args.seed,
                                     inject_fault=args.inject_fault)
        worst = max(worst, err)
        verdict = "PASS" if err < checks.GRADCHECK_TOLERANCE else "FAIL"
        print(f"gradcheck {name} seed={args.seed} "
              f"max_rel_err={err:.3e} {verdict}")
    return EXIT_OK if worst < checks.GRADCHECK_TOLERANCE \
        else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gapgcn",
        description="Gated relational graph network for ambiguous-pronoun "
                    "resolution: data validation, k-fold ensemble training, "
                    "prediction, and gradient verification.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-data",
                       help="check a dataset directory against the format "
                            "invariants")
    p.add_argument("--data", required=True, help="dataset directory")
    p.set_defaults(func=cmd_validate_data)

    p = sub.add_parser("train", help="train a k-fold ensemble")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--data", help="training dataset directory")
    p.add_argument("--test-data", help="held-out dataset directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--setting", choices=_SETTINGS,
                   help="model variant (overrides config file)")
    p.add_argument("--seed", type=int, help="RNG seed (overrides config)")
    p.add_argument("--epochs", type=int, help="epochs (overrides config)")
    p.add_argument("--folds", type=int, help="fold count (overrides config)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict",
                       help="write ensemble predictions for a dataset")
    p.add_argument("--model", required=True,
                   help="directory holding fold checkpoints (*.ckpt)")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="output TSV path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck",
                       help="finite-difference check of the analytic "
                            "gradients on a synthetic micro-batch")
    p.add_argument("--setting", choices=_SETTINGS + ("all",), default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-fault", action="store_true",
                   help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, matching our convention
        return int(exc.code or 0)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
