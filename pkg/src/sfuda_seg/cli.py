"""Command-line entry points.

Subcommands: generate-synthetic, train-source, train-shape-prior, adapt,
evaluate, report. Every config-driven command accepts ``--set key=value``
dotted overrides (unknown keys are hard errors) and honors the SFUDA_SEED
environment variable. Exit codes: 0 success, 2 config error, 3 missing
artifact, 4 contract violation.

A run directory contains config.json (the resolved config), checkpoints/,
metrics.csv (per-epoch losses and lr), report.json/report.csv and audit.log.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .audit import AuditLog
from .checkpoints import load_checkpoint, save_checkpoint
from .config import ExperimentConfig, load_config
from .crossval import run_cross_validation
from .errors import ConfigError, ContractViolation, MissingArtifact
from .manifest import load_manifest
from .report import emit_report, load_report, merge_reports, render_table
from .synthetic import generate_synthetic
from .training import EpochRecord, train_shape_prior, train_source_segmentation


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sfuda-seg",
        description="Source-free unsupervised domain adaptation for 2-D binary segmentation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--config", type=Path, default=None, help="JSON experiment config")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="dotted-key config override, e.g. network.width_multiplier=0.25",
        )

    p = sub.add_parser("generate-synthetic", help="write paired synthetic source/target datasets")
    add_config_args(p)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("train-source", help="train the segmentation network on source data")
    add_config_args(p)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("train-shape-prior", help="train the shape-prior autoencoder on source masks")
    add_config_args(p)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("adapt", help="4-fold source-free adaptation plus baselines")
    add_config_args(p)
    p.add_argument("--setting", choices=["N", "S", "NS"], required=True)
    p.add_argument("--source-ckpt", type=Path, required=True)
    p.add_argument("--prior-ckpt", type=Path, default=None)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--no-baselines", action="store_true", help="skip the baseline ladder")

    p = sub.add_parser("evaluate", help="validate and print the table of a finished run")
    p.add_argument("--run", type=Path, required=True)

    p = sub.add_parser("report", help="merge run reports into one Table-style ladder")
    p.add_argument("--runs", type=Path, nargs="+", required=True)
    p.add_argument("--out", type=Path, required=True)
    return parser


def _write_metrics(path: Path, rows: list[tuple[str, int, EpochRecord]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["phase", "fold", "epoch", "lr", "train_loss", "val_loss"])
        for phase, fold, rec in rows:
            writer.writerow([phase, fold, rec.epoch, rec.lr, rec.train_loss, rec.val_loss])


def _prepare_run_dir(config: ExperimentConfig, out: Path) -> AuditLog:
    out.mkdir(parents=True, exist_ok=True)
    config.to_json(out / "config.json")
    audit_path = out / "audit.log"
    audit_path.write_text("")
    return AuditLog(path=audit_path)


def _cmd_generate_synthetic(args) -> int:
    config = load_config(args.config, args.overrides)
    src, tgt = generate_synthetic(config.synthetic, args.out)
    print(f"source manifest: {args.out / 'source' / 'manifest.csv'} ({len(src.records)} samples)")
    print(f"target manifest: {args.out / 'target' / 'manifest.csv'} ({len(tgt.records)} samples)")
    return 0


def _require_manifest(path_str: str | None, what: str, domain_tag: str):
    if path_str is None:
        raise ConfigError(f"config must set {what}")
    return load_manifest(path_str, domain_tag=domain_tag)


def _cmd_train_source(args) -> int:
    config = load_config(args.config, args.overrides)
    source = _require_manifest(config.source_manifest, "source_manifest", "source")
    audit = _prepare_run_dir(config, args.out)
    ckpt, history = train_source_segmentation(config, source, audit)
    save_checkpoint(ckpt, args.out / "checkpoints" / "source")
    _write_metrics(args.out / "metrics.csv", [("source", -1, h) for h in history])
    print(f"source checkpoint: {args.out / 'checkpoints' / 'source'}")
    print(f"selected epoch {ckpt.metadata['epoch']}  val_loss {ckpt.metadata['validation_loss']:.6f}")
    return 0


def _cmd_train_shape_prior(args) -> int:
    config = load_config(args.config, args.overrides)
    source = _require_manifest(config.source_manifest, "source_manifest", "source")
    audit = _prepare_run_dir(config, args.out)
    ckpt, history = train_shape_prior(config, source, audit)
    save_checkpoint(ckpt, args.out / "checkpoints" / "shape_prior")
    _write_metrics(args.out / "metrics.csv", [("shape-prior", -1, h) for h in history])
    print(f"shape-prior checkpoint: {args.out / 'checkpoints' / 'shape_prior'}")
    print(f"selected epoch {ckpt.metadata['epoch']}  val_loss {ckpt.metadata['validation_loss']:.6f}")
    return 0


def _cmd_adapt(args) -> int:
    overrides = list(args.overrides) + [f"setting={args.setting}"]
    config = load_config(args.config, overrides)
    target = _require_manifest(config.target_manifest, "target_manifest", "target")
    source_ckpt = load_checkpoint(args.source_ckpt)
    prior_ckpt = load_checkpoint(args.prior_ckpt) if args.prior_ckpt else None
    audit = _prepare_run_dir(config, args.out)

    report = run_cross_validation(
        config,
        source_ckpt,
        prior_ckpt,
        target,
        audit=audit,
        include_baselines=not args.no_baselines,
    )
    rows = []
    for method, folds in report.loss_curves.items():
        for fold_name, curves in folds.items():
            for epoch, (lr, tr, va) in enumerate(
                zip(curves["lr"], curves["train"], curves["val"])
            ):
                rows.append((method, int(fold_name.removeprefix("fold")), EpochRecord(epoch, lr, tr, va)))
    _write_metrics(args.out / "metrics.csv", rows)
    emit_report(report, args.out)
    print(render_table(report), end="")
    return 0


def _cmd_evaluate(args) -> int:
    report_path = args.run / "report.json"
    if not report_path.exists():
        raise MissingArtifact(f"no report.json under {args.run}")
    report = load_report(report_path)
    for m in report.methods:
        if abs(float(np.mean(m.fold_dice)) - m.mean) > 1e-9:
            raise ContractViolation(f"stored mean for {m.method} does not match fold values")
        if abs(float(np.std(m.fold_dice)) - m.std) > 1e-9:
            raise ContractViolation(f"stored std for {m.method} does not match fold values")
    print(render_table(report), end="")
    return 0


def _cmd_report(args) -> int:
    reports = []
    for run in args.runs:
        path = run / "report.json" if run.is_dir() else run
        if not path.exists():
            raise MissingArtifact(f"no report at {path}")
        reports.append(load_report(path))
    merged = merge_reports(reports)
    out = args.out
    emit_report(merged, out.parent if out.suffix else out, stem=out.stem if out.suffix else "table")
    print(render_table(merged), end="")
    return 0


_COMMANDS = {
    "generate-synthetic": _cmd_generate_synthetic,
    "train-source": _cmd_train_source,
    "train-shape-prior": _cmd_train_shape_prior,
    "adapt": _cmd_adapt,
    "evaluate": _cmd_evaluate,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MissingArtifact as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return 3
    except ContractViolation as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
