"""
HECG Metrics Module

Success, accuracy, efficiency, task-success, error-ratio, goal-compliance and
regime-distribution metrics, with JSON, text and CSV report writers.
"""

from src.modules.metrics_mod.formulas import (
    EDGE_KINDS,
    REGIMES,
    mean,
    success_rates,
    action_accuracy,
    episode_efficiency,
    coefficient_of_variation,
    plan_metrics,
    task_success_ratio,
    replan_gain,
    tsr_replan,
    tsr_correction,
    error_ratios,
    error_counts,
    tsr_suite,
    soft_precision,
    compliance_metrics,
    episode_compliance,
    regime_counts,
    regime_distribution,
    main_routing_share,
    task_complexity,
    group_by_task
)
from src.modules.metrics_mod.report import (
    MetricReport,
    AGGREGATE,
    CONVENTION_COLUMNS,
    build_report,
    render_table,
    write_json,
    write_text,
    write_csv,
    write_regimes_csv,
    write_all
)

__all__ = [
    "EDGE_KINDS",
    "REGIMES",
    "mean",
    "success_rates",
    "action_accuracy",
    "episode_efficiency",
    "coefficient_of_variation",
    "plan_metrics",
    "task_success_ratio",
    "replan_gain",
    "tsr_replan",
    "tsr_correction",
    "error_ratios",
    "error_counts",
    "tsr_suite",
    "soft_precision",
    "compliance_metrics",
    "episode_compliance",
    "regime_counts",
    "regime_distribution",
    "main_routing_share",
    "task_complexity",
    "group_by_task",
    "MetricReport",
    "AGGREGATE",
    "CONVENTION_COLUMNS",
    "build_report",
    "render_table",
    "write_json",
    "write_text",
    "write_csv",
    "write_regimes_csv",
    "write_all"
]
