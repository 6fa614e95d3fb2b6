"""Summary tables and the baseline-vs-round-3 delta analysis."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from .metrics import MetricScores, SplitSummary, aggregate


@dataclass
class SummaryRow:
    model_id: str
    pipeline_id: str
    key: str  # round number, planner id, or coder tier
    ex_pct: float
    soft_f1_pct: float
    r_ves_pct: float
    by_difficulty: dict = field(default_factory=dict)

    def __post_init__(self):
        for value in (self.ex_pct, self.soft_f1_pct, self.r_ves_pct):
            if not 0 <= value <= 125:
                raise ValueError(f"percentage out of range: {value}")


METRIC_COLUMNS = ("ex_pct", "soft_f1_pct", "r_ves_pct")


def _row_from_summary(model_id: str, pipeline_id: str, key: str, s: SplitSummary) -> SummaryRow:
    return SummaryRow(
        model_id=model_id,
        pipeline_id=pipeline_id,
        key=key,
        ex_pct=s.ex_pct,
        soft_f1_pct=s.soft_f1_pct,
        r_ves_pct=s.r_ves_pct,
        by_difficulty=s.by_difficulty,
    )


def make_round_table(
    scores_by_model: dict[str, dict[int, list[MetricScores]]],
    pipeline_id: str = "mad",
) -> list[SummaryRow]:
    """One row per (model, round), rounds ordered; models in sorted order."""
    rows = []
    all_rounds = sorted({r for per_round in scores_by_model.values() for r in per_round})
    for model_id in sorted(scores_by_model):
        per_round = scores_by_model[model_id]
        for rnd in all_rounds:
            if rnd not in per_round:
                raise ValueError(f"model '{model_id}' is missing round {rnd}")
            rows.append(
                _row_from_summary(model_id, pipeline_id, f"round{rnd}", aggregate(per_round[rnd]))
            )
    return rows


def make_delta_report(
    baseline_ex: dict[str, float], round3_ex: dict[str, float]
) -> list[tuple[str, float]]:
    """Per-model difference (percentage points) between round-3 judge EX and baseline EX."""
    if set(baseline_ex) != set(round3_ex):
        only_base = sorted(set(baseline_ex) - set(round3_ex))
        only_r3 = sorted(set(round3_ex) - set(baseline_ex))
        raise ValueError(f"model sets differ: baseline-only={only_base}, round3-only={only_r3}")
    out = []
    for model_id in sorted(baseline_ex):
        delta = Decimal(repr(round3_ex[model_id])) - Decimal(repr(baseline_ex[model_id]))
        out.append((model_id, float(delta.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))))
    return out


def write_summary_csv(rows: list[SummaryRow], path: Path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["model", "pipeline", "key", "ex", "soft_f1", "r_ves"])
        for r in rows:
            w.writerow([r.model_id, r.pipeline_id, r.key, f"{r.ex_pct:.1f}",
                        f"{r.soft_f1_pct:.1f}", f"{r.r_ves_pct:.1f}"])


def write_summary_md(rows: list[SummaryRow], path: Path):
    lines = [
        "| Model | Pipeline | Key | EX | Soft F1 | R-VES |",
        "|---|---|---|---|---|---|",
    ]
    for r in rows:
        lines.append(
            f"| {r.model_id} | {r.pipeline_id} | {r.key} "
            f"| {r.ex_pct:.1f} | {r.soft_f1_pct:.1f} | {r.r_ves_pct:.1f} |"
        )
    path.write_text("\n".join(lines) + "\n")


def write_delta_report(deltas: list[tuple[str, float]], out_dir: Path):
    with open(out_dir / "delta.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["model", "delta_ex"])
        for model_id, delta in deltas:
            w.writerow([model_id, f"{delta:+.1f}"])
    plot_lines = [f"{model_id}\t{delta:+.1f}" for model_id, delta in deltas]
    (out_dir / "delta_plot.tsv").write_text("\n".join(plot_lines) + "\n")


def _seed_rows(cfg, seed_dir: Path, seed: int) -> list[SummaryRow]:
    from .runner import _read_jsonl, scores_to_metric_scores

    records = _read_jsonl(seed_dir / "scores.jsonl")
    if not records:
        return []
    scores = scores_to_metric_scores(records)
    model_key = cfg.model or cfg.coder or cfg.aggregator or "-"
    rows = [_row_from_summary(model_key, cfg.pipeline_id, f"seed{seed}",
                              aggregate(scores, stratify=True))]
    if cfg.pipeline_id == "mad":
        per_round: dict[int, list[MetricScores]] = {}
        for rec in records:
            for rnd, rs in rec.get("round_scores", {}).items():
                per_round.setdefault(int(rnd), []).append(
                    MetricScores(ex=int(rs["ex"]), soft_f1=float(rs["soft_f1"]),
                                 r_ves=float(rs["r_ves"]))
                )
        for rnd in sorted(per_round):
            rows.append(_row_from_summary(model_key, cfg.pipeline_id,
                                          f"seed{seed}.round{rnd}", aggregate(per_round[rnd])))
    return rows


def write_run_summaries(out_dir: Path, cfg) -> list[SummaryRow]:
    """Per-seed and best-of-seed summary.csv / summary.md for a finished run.

    Best-of selects the seed with the highest overall EX (ties: first seed).
    """
    out_dir = Path(out_dir)
    all_rows: list[SummaryRow] = []
    per_seed_overall: list[tuple[int, SummaryRow]] = []
    for seed in cfg.seeds:
        rows = _seed_rows(cfg, out_dir / f"seed_{seed}", seed)
        if rows:
            per_seed_overall.append((seed, rows[0]))
            all_rows.extend(rows)
    if per_seed_overall:
        best_seed, best = max(per_seed_overall, key=lambda sr: sr[1].ex_pct)
        all_rows.append(SummaryRow(
            model_id=best.model_id, pipeline_id=best.pipeline_id,
            key=f"best_of_seeds({best_seed})", ex_pct=best.ex_pct,
            soft_f1_pct=best.soft_f1_pct, r_ves_pct=best.r_ves_pct,
            by_difficulty=best.by_difficulty,
        ))
    write_summary_csv(all_rows, out_dir / "summary.csv")
    write_summary_md(all_rows, out_dir / "summary.md")
    with open(out_dir / "summary.json", "w") as f:
        json.dump([r.__dict__ for r in all_rows], f, indent=2)
    return all_rows
