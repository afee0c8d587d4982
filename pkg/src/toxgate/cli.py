"""Command-line surface: train, evaluate, explain, ablate.

Every run is self-contained in its run directory: a copy of the config,
the vocabulary file, the checkpoint, the split manifest, a line-delimited
metrics log, and a reports/ subdirectory. Exit codes: 0 success, 1 runtime
failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, parse_config
from .data import (
    DataError,
    encode_dataset,
    load_dataset,
    load_split_manifest,
    save_split_manifest,
)
from .explain import (
    DEFAULT_TOP_FRACTION,
    attribute,
    render_report,
    write_records,
)
from .metrics import TaskMetrics
from .splitting import iterative_stratified_split
from .tokenizer import Vocabulary, build_vocab
from .training import build_model, evaluate, lambda_sweep, train

__all__ = ["main"]


class UsageError(ValueError):
    """Maps to exit code 2."""


def _require_config_paths(config: RunConfig) -> None:
    if not config.dataset_path:
        raise UsageError("config must set dataset_path")
    if not Path(config.dataset_path).exists():
        raise UsageError(f"dataset path does not exist: {config.dataset_path}")
    if not config.task_columns:
        raise UsageError("config must set task_columns")
    if not config.run_dir:
        raise UsageError("config must set run_dir")


def _prepare(config: RunConfig):
    """Shared train-side pipeline: ingest, vocab, encode."""
    table = load_dataset(
        config.dataset_path, config.smiles_column, list(config.task_columns)
    )
    vocab = build_vocab(table.smiles)
    data = encode_dataset(table, vocab, config.max_len)
    return table, vocab, data


def _log_skips(table, data) -> None:
    if table.n_skipped_invalid:
        print(f"skipped {table.n_skipped_invalid} lexically invalid row(s)")
    if data.n_skipped_too_long:
        print(f"skipped {data.n_skipped_too_long} row(s) longer than max_len")


def cmd_train(config_path: str) -> int:
    config = parse_config(config_path)
    _require_config_paths(config)
    run_dir = Path(config.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "reports").mkdir(exist_ok=True)
    (run_dir / "config.txt").write_text(
        Path(config_path).read_text(encoding="utf-8"), encoding="utf-8"
    )

    table, vocab, data = _prepare(config)
    _log_skips(table, data)
    vocab.save(run_dir / "vocab.txt")
    split = iterative_stratified_split(
        data.labels, data.labeled, config.test_fraction, config.seed
    )
    save_split_manifest(
        run_dir / "split.manifest", split, n_rows=len(data),
        seed=config.seed, test_fraction=config.test_fraction,
    )

    model = build_model(config, vocab_size=len(vocab), task_names=data.task_names)
    with (run_dir / "metrics.log").open("w", encoding="utf-8") as log:
        def on_epoch(epoch: int, report) -> None:
            log.write(json.dumps({"epoch": epoch, **report.to_dict()},
                                 sort_keys=True) + "\n")

        train(model, data, split, config, on_epoch=on_epoch)
    fingerprint = {"config": config.to_text(), "n_rows": len(data)}
    save_checkpoint(run_dir / "checkpoint.bin", model, vocab,
                    train_fingerprint=fingerprint)
    print(f"run complete: {run_dir}")
    return 0


def _format_metrics(metrics: TaskMetrics) -> str:
    lines = [f"macro AUC: {metrics.macro:.6f} "
             f"({metrics.n_undefined} undefined task(s) skipped)"]
    for i, name in enumerate(metrics.task_names):
        auc = metrics.per_task[i]
        shown = "undefined" if auc is None else f"{auc:.6f}"
        lines.append(
            f"  {name}: AUC {shown} over {metrics.labeled[i]} labeled "
            f"({metrics.positives[i]} positive)"
        )
    return "\n".join(lines)


def cmd_evaluate(checkpoint_path: str, data_path: str, split_path: str,
                 out_path: str | None) -> int:
    model, vocab, fingerprint = load_checkpoint(checkpoint_path)
    if not Path(data_path).exists():
        raise UsageError(f"dataset path does not exist: {data_path}")
    smiles_column = "smiles"
    config_text = fingerprint.get("config", "")
    for line in config_text.splitlines():
        if line.strip().startswith("smiles_column"):
            smiles_column = line.split("=", 1)[1].strip()
    table = load_dataset(data_path, smiles_column, model.task_names)
    data = encode_dataset(table, vocab, model.config.max_len)
    split = load_split_manifest(split_path, n_rows=len(data))
    metrics = evaluate(model, data, split.test_idx)
    print(_format_metrics(metrics))
    if out_path:
        Path(out_path).write_text(
            json.dumps(metrics.to_dict(), sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
    return 0


def cmd_explain(checkpoint_path: str, input_path: str, tasks: str,
                out_dir: str, top_fraction: float) -> int:
    model, vocab, _ = load_checkpoint(checkpoint_path)
    if not Path(input_path).exists():
        raise UsageError(f"input file does not exist: {input_path}")
    if tasks == "all":
        task_indices = list(range(model.n_tasks))
    else:
        task_indices = []
        for name in (t.strip() for t in tasks.split(",") if t.strip()):
            if name not in model.task_names:
                raise UsageError(
                    f"unknown task {name!r}; checkpoint tasks: {model.task_names}"
                )
            task_indices.append(model.task_names.index(name))
    if not task_indices:
        raise UsageError("no tasks selected")

    molecules = [
        line.strip()
        for line in Path(input_path).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    records, failures = [], []
    for smiles in molecules:
        for k in task_indices:
            try:
                records.append(attribute(model, vocab, smiles, k))
            except ValueError as exc:
                failures.append(f"{smiles}: {exc}")
    for failure in failures:
        print(f"failed: {failure}", file=sys.stderr)
    if not records:
        raise DataError("no molecule/task pair could be attributed")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_records(out / "attributions.jsonl", records)
    (out / "report.html").write_text(
        render_report(records, top_fraction=top_fraction), encoding="utf-8"
    )
    print(f"wrote {len(records)} record(s) to {out}")
    return 0


def cmd_ablate(config_path: str, lambdas_arg: str) -> int:
    config = parse_config(config_path)
    _require_config_paths(config)
    try:
        lambdas = [float(v) for v in lambdas_arg.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"bad --lambdas value: {exc}") from exc
    if not lambdas:
        raise UsageError("at least one lambda value is required")
    run_dir = Path(config.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    table, vocab, data = _prepare(config)
    _log_skips(table, data)
    rows = lambda_sweep(data, len(vocab), config, lambdas)
    (run_dir / "sweep.json").write_text(
        json.dumps([r.to_dict() for r in rows], indent=2) + "\n", encoding="utf-8"
    )
    header = f"{'lambda':>10}  {'macro AUC':>10}  {'mean mask':>10}  {'delta %':>8}"
    lines = [header, "-" * len(header)]
    for row in rows:
        delta = "n/a" if row.delta_pct is None else f"{row.delta_pct:+.2f}"
        lines.append(
            f"{row.lam:>10g}  {row.macro_auc:>10.4f}  {row.mean_mask:>10.4f}  "
            f"{delta:>8}"
        )
    text = "\n".join(lines)
    (run_dir / "sweep.txt").write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toxgate",
        description="Multi-task molecular property prediction with "
                    "task-gated sparse token attention.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a config file")
    p_train.add_argument("--config", required=True)

    p_eval = sub.add_parser("evaluate", help="evaluate a checkpoint on a split")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--split", required=True)
    p_eval.add_argument("--out", default=None, help="optional JSON report path")

    p_explain = sub.add_parser("explain", help="token attribution report")
    p_explain.add_argument("--checkpoint", required=True)
    p_explain.add_argument("--input", required=True,
                           help="text file, one SMILES per line")
    p_explain.add_argument("--tasks", required=True,
                           help="comma-separated task names, or 'all'")
    p_explain.add_argument("--out-dir", default="explain_out")
    p_explain.add_argument("--top-fraction", type=float,
                           default=DEFAULT_TOP_FRACTION)

    p_ablate = sub.add_parser("ablate", help="sparsity-weight sweep")
    p_ablate.add_argument("--config", required=True)
    p_ablate.add_argument("--lambdas", default="0,1e-4,1e-3,1e-2")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "train":
            return cmd_train(args.config)
        if args.command == "evaluate":
            return cmd_evaluate(args.checkpoint, args.data, args.split, args.out)
        if args.command == "explain":
            return cmd_explain(args.checkpoint, args.input, args.tasks,
                               args.out_dir, args.top_fraction)
        if args.command == "ablate":
            return cmd_ablate(args.config, args.lambdas)
        raise UsageError(f"unknown command {args.command!r}")
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, CheckpointError, ValueError, OSError,
            FloatingPointError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
