import csv
import json
import os
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, List, Mapping, Optional, Sequence

from src.modules.metrics_mod.formulas import (
    EDGE_KINDS,
    REGIMES,
    episode_compliance,
    group_by_task,
    mean,
    plan_metrics,
    regime_counts,
    regime_distribution,
    task_complexity,
    tsr_suite
)
from src.utils.logger import logger

if TYPE_CHECKING:
    from src.core.traversal import EpisodeResult
    from src.modules.env_mod.scenario import Scenario

AGGREGATE = "all"

# Columns whose definitions are conventions of this engine rather than fixed formulas
CONVENTION_COLUMNS = ("soft_precision", "final_score")

TABLE_COLUMNS = (
    "n", "sr_final", "sr_original", "improvement", "aa", "efficiency", "cv",
    "tsr", "tsr_r", "tsr_r_sum", "tsr_c", "ec", "fer",
    "goal_compliance", "soft_recall", "soft_precision", "soft_f1", "size_penalty", "final_score",
    "mean_recovery", "mean_substeps",
)


@dataclass
class MetricReport:
    """Per-task and aggregate metrics plus the regime/edge-kind distribution."""
    per_task: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    aggregate: Dict[str, Any] = field(default_factory=dict)
    regimes: Dict[str, Dict[str, float]] = field(default_factory=dict)
    regime_counts: Dict[str, Dict[str, int]] = field(default_factory=dict)
    complexity: Dict[str, Dict[str, int]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            'per_task': self.per_task,
            'aggregate': self.aggregate,
            'regimes': self.regimes,
            'regime_counts': self.regime_counts,
            'complexity': self.complexity,
            'conventions': list(CONVENTION_COLUMNS)
        }


def _summarize(results: Sequence['EpisodeResult'], tsr: Dict[str, Any]) -> Dict[str, Any]:
    row: Dict[str, Any] = {'n': len(results)}
    row.update(plan_metrics(results))
    row.update(tsr)
    compliance = [episode_compliance(r) for r in results if r.final_state is not None]
    for key in ('goal_compliance', 'soft_recall', 'soft_precision', 'soft_f1', 'size_penalty', 'final_score'):
        row[key] = mean(c[key] for c in compliance)
    row['mean_recovery'] = mean(r.recovery for r in results)
    row['mean_substeps'] = mean(r.substeps for r in results)
    return row


def build_report(
    results: Sequence['EpisodeResult'],
    scenarios: Optional[Mapping[str, 'Scenario']] = None,
    base_risk: Optional[Dict[str, float]] = None
) -> MetricReport:
    """Aggregate results per task and over the whole batch."""
    groups = group_by_task(results)
    per_task_tsr = tsr_suite(groups)
    report = MetricReport()
    for task in sorted(groups):
        report.per_task[task] = _summarize(groups[task], per_task_tsr[task])
    if results:
        report.aggregate = _summarize(results, tsr_suite({AGGREGATE: list(results)})[AGGREGATE])
    report.regimes = regime_distribution(results)
    report.regime_counts = regime_counts(results)
    for name, scenario in sorted((scenarios or {}).items()):
        report.complexity[name] = task_complexity(scenario, base_risk)
    return report


# -- writers -------------------------------------------------------------------

def _ensure_dir(path: str):
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)


def write_json(report: MetricReport, path: str) -> str:
    _ensure_dir(path)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
    logger.info(f"Metrics written to {path}")
    return path


def _fmt(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.3f}"
    return str(value)


def _header(column: str) -> str:
    return f"{column}*" if column in CONVENTION_COLUMNS else column


def render_table(report: MetricReport) -> str:
    """Aligned-column text table; starred columns are conventions."""
    rows = [(task, report.per_task[task]) for task in sorted(report.per_task)]
    if report.aggregate:
        rows.append((AGGREGATE, report.aggregate))
    headers = ["task"] + [_header(c) for c in TABLE_COLUMNS]
    body = [[task] + [_fmt(row.get(c)) for c in TABLE_COLUMNS] for task, row in rows]
    widths = [max(len(line[i]) for line in [headers] + body) for i in range(len(headers))]

    def line(cells: List[str]) -> str:
        return "  ".join(cell.ljust(w) for cell, w in zip(cells, widths)).rstrip()

    out = [line(headers), line(["-" * w for w in widths])]
    out.extend(line(cells) for cells in body)
    out.append("")
    out.append("regime     " + "  ".join(k.ljust(6) for k in EDGE_KINDS))
    for regime in REGIMES:
        shares = report.regimes.get(regime, {})
        out.append(f"{regime:<10} " + "  ".join(_fmt(shares.get(k, 0.0)).ljust(6) for k in EDGE_KINDS))
    out.append("")
    out.append("* convention: " + ", ".join(CONVENTION_COLUMNS))
    return "\n".join(out) + "\n"


def write_text(report: MetricReport, path: str) -> str:
    _ensure_dir(path)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(render_table(report))
    return path


def write_csv(report: MetricReport, path: str) -> str:
    _ensure_dir(path)
    rows = [(task, report.per_task[task]) for task in sorted(report.per_task)]
    if report.aggregate:
        rows.append((AGGREGATE, report.aggregate))
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(["task"] + list(TABLE_COLUMNS))
        for task, row in rows:
            writer.writerow([task] + ["" if row.get(c) is None else row.get(c) for c in TABLE_COLUMNS])
    return path


def write_regimes_csv(report: MetricReport, path: str) -> str:
    """Regime x edge-kind grid of shares, one row per regime."""
    _ensure_dir(path)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(["regime"] + list(EDGE_KINDS))
        for regime in REGIMES:
            shares = report.regimes.get(regime, {})
            writer.writerow([regime] + [shares.get(k, 0.0) for k in EDGE_KINDS])
    return path


def write_all(report: MetricReport, out_dir: str) -> Dict[str, str]:
    return {
        'json': write_json(report, os.path.join(out_dir, "metrics.json")),
        'txt': write_text(report, os.path.join(out_dir, "metrics.txt")),
        'csv': write_csv(report, os.path.join(out_dir, "metrics.csv")),
        'regimes': write_regimes_csv(report, os.path.join(out_dir, "regimes.csv"))
    }
