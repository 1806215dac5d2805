"""Experiment harness: seeded grids, learner/baseline comparison, CSV and SVG output."""

from .grid import (
    CSV_HEADER,
    ExperimentConfig,
    GridResult,
    ResultRow,
    TrialOutcome,
    compare_trajectories,
    emit_csv,
    emit_norms_csv,
    run_grid,
    run_trial,
    zigzag_profile,
)
from .svg import cell_summary, emit_svg, emit_trace_svg

__all__ = [
    "CSV_HEADER",
    "ExperimentConfig",
    "GridResult",
    "ResultRow",
    "TrialOutcome",
    "cell_summary",
    "compare_trajectories",
    "emit_csv",
    "emit_norms_csv",
    "emit_svg",
    "emit_trace_svg",
    "run_grid",
    "run_trial",
    "zigzag_profile",
]
