"""Command-line entry points: run, resume, report, score."""

from __future__ import annotations

import json
from pathlib import Path

import click

from . import report as report_mod
from . import runner as runner_mod
from .errors import AgentSQLError
from .metrics import aggregate


@click.group()
def main():
    """Multi-agent text-to-SQL harness."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def run(config_path):
    """Run an experiment from a YAML config file."""
    try:
        cfg = runner_mod.ExperimentConfig.from_file(config_path)
        manifest = runner_mod.run_experiment(cfg)
    except AgentSQLError as e:
        raise click.ClickException(str(e))
    click.echo(json.dumps(manifest, indent=2))


@main.command()
@click.argument("run_dir", type=click.Path(exists=True))
def resume(run_dir):
    """Resume an interrupted run from its output directory."""
    try:
        manifest = runner_mod.resume(run_dir)
    except AgentSQLError as e:
        raise click.ClickException(str(e))
    click.echo(json.dumps(manifest, indent=2))


@main.command()
@click.argument("run_dir", type=click.Path(exists=True))
def report(run_dir):
    """Regenerate summary tables for a finished run."""
    run_dir = Path(run_dir)
    try:
        cfg = runner_mod.ExperimentConfig.from_dict(
            json.loads((run_dir / "config.json").read_text())
        )
        rows = report_mod.write_run_summaries(run_dir, cfg)
    except (AgentSQLError, OSError, json.JSONDecodeError) as e:
        raise click.ClickException(str(e))
    for r in rows:
        click.echo(f"{r.model_id} {r.pipeline_id} {r.key}: "
                   f"EX={r.ex_pct:.1f} SoftF1={r.soft_f1_pct:.1f} R-VES={r.r_ves_pct:.1f}")


@main.command()
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True),
              help="JSONL of {example_id, sql} predictions")
@click.option("--gold", "split", required=True, help="split name under the dataset root")
@click.option("--root", "dataset_root", required=True, type=click.Path(exists=True))
@click.option("--field-map", default=None, help="bird, spider, or omit for bird")
@click.option("--timing/--no-timing", default=False,
              help="measure execution time for R-VES (default: tau pinned to 1)")
def score(pred_path, split, dataset_root, field_map, timing):
    """Score a predictions file against a split's gold SQL (metrics-only mode)."""
    exec_params = runner_mod.ExecParams(timing_mode="wall" if timing else "none")
    try:
        records = runner_mod.score_predictions(dataset_root, split, field_map,
                                               pred_path, exec_params)
        summary = aggregate(runner_mod.scores_to_metric_scores(records), stratify=True)
    except AgentSQLError as e:
        raise click.ClickException(str(e))
    for rec in records:
        click.echo(json.dumps(rec))
    click.echo(f"# EX={summary.ex_pct:.1f} SoftF1={summary.soft_f1_pct:.1f} "
               f"R-VES={summary.r_ves_pct:.1f} n={summary.count}", err=True)


if __name__ == "__main__":
    main()
