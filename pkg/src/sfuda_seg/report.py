"""Report rendering: percent-Dice tables in ladder order, CSV and JSON."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .crossval import LADDER, MethodResult, RunReport, report_from_dict
from .errors import ContractViolation

DISPLAY_NAMES = {
    "no_adaptation": "No adaptation",
    "adaent_style": "AdaEnt-style",
    "ours_n": "Ours (N)",
    "ours_s": "Ours (S)",
    "ours_ns": "Ours (NS)",
    "oracle": "Oracle",
}


def format_percent(mean: float, std: float) -> str:
    """Table-style percent Dice with one decimal, e.g. 0.729/0.046 -> '72.9 ± 4.6'."""
    return f"{mean * 100:.1f} ± {std * 100:.1f}"


def ladder_rows(report: RunReport) -> list[tuple[str, MethodResult]]:
    ordered = []
    for key in LADDER:
        for m in report.methods:
            if m.method == key:
                ordered.append((DISPLAY_NAMES[key], m))
                break
    return ordered


def render_table(report: RunReport) -> str:
    lines = ["method,dice"]
    for name, m in ladder_rows(report):
        lines.append(f"{name},{format_percent(m.mean, m.std)}")
    return "\n".join(lines) + "\n"


def emit_report(report: RunReport, out_dir: str | Path, stem: str = "report") -> tuple[Path, Path]:
    """Write CSV (percent Dice, one decimal) and JSON (full precision) renderings."""
    if not report.methods or any(not m.fold_dice for m in report.methods):
        raise ContractViolation("refusing to emit a report with no fold results")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "dice"])
        for name, m in ladder_rows(report):
            writer.writerow([name, format_percent(m.mean, m.std)])
    json_path = out_dir / f"{stem}.json"
    json_path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return csv_path, json_path


def load_report(path: str | Path) -> RunReport:
    return report_from_dict(json.loads(Path(path).read_text()))


def merge_reports(reports: list[RunReport]) -> RunReport:
    """Combine single-setting runs into one ladder; first occurrence of a
    method wins (baselines repeat across runs)."""
    if not reports:
        raise ContractViolation("nothing to merge")
    seen: dict[str, MethodResult] = {}
    digests: dict[str, str] = {}
    curves: dict = {}
    for rep in reports:
        for m in rep.methods:
            seen.setdefault(m.method, m)
        for k, v in rep.checkpoint_digests.items():
            digests.setdefault(k, v)
        for k, v in rep.loss_curves.items():
            curves.setdefault(k, v)
    methods = tuple(seen[k] for k in LADDER if k in seen)
    return RunReport(
        methods=methods,
        fold_count=reports[0].fold_count,
        config=reports[0].config,
        checkpoint_digests=digests,
        loss_curves=curves,
        label_free_validation=all(r.label_free_validation for r in reports),
    )
