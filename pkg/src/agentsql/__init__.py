"""Multi-agent text-to-SQL harness.

Pipelines (baseline, multi-agent discussion, planner-coder, coder-aggregator)
over any OpenAI-compatible chat endpoint, with SQLite execution and
EX / Soft F1 / R-VES scoring.
"""

from .dataset import Example, SchemaCatalog, load_schema, load_split
from .metrics import MetricScores, aggregate, exec_match, r_ves, soft_f1
from .pipelines import (
    Transcript,
    extract_sql,
    run_baseline,
    run_coder_aggregator,
    run_mad,
    run_planner_coder,
)
from .runner import ExperimentConfig, run_experiment
from .sqlexec import ExecOutcome, ResultTable, execute, time_pair

__all__ = [
    "Example",
    "SchemaCatalog",
    "load_schema",
    "load_split",
    "MetricScores",
    "aggregate",
    "exec_match",
    "r_ves",
    "soft_f1",
    "Transcript",
    "extract_sql",
    "run_baseline",
    "run_coder_aggregator",
    "run_mad",
    "run_planner_coder",
    "ExperimentConfig",
    "run_experiment",
    "ExecOutcome",
    "ResultTable",
    "execute",
    "time_pair",
]
