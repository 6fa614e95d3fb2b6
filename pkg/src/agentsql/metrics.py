"""EX, Soft F1, and R-VES scoring over executed result tables."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

from .sqlexec import ResultTable

NUMERIC_REL_TOL = 1e-6

R_VES_VALUES = (0.0, 0.25, 0.5, 0.75, 1.0, 1.25)


@dataclass
class MetricScores:
    ex: int
    soft_f1: float
    r_ves: float
    tp: float = 0.0
    fp: float = 0.0
    fn: float = 0.0
    difficulty: str = "unlabeled"


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def cell_equal(a, b) -> bool:
    """Null matches only null; numbers by value within relative tolerance; text/blobs exact."""
    if a is None or b is None:
        return a is None and b is None
    if _is_number(a) and _is_number(b):
        return math.isclose(float(a), float(b), rel_tol=NUMERIC_REL_TOL, abs_tol=0.0)
    if type(a) is not type(b) and not (_is_number(a) and _is_number(b)):
        return False
    return a == b


def _sort_key_cell(value):
    if value is None:
        return (0, "")
    if _is_number(value):
        return (1, float(value))
    return (2, str(value))


def _sorted_rows(table: ResultTable) -> list[tuple]:
    return sorted(table.rows, key=lambda row: tuple(_sort_key_cell(c) for c in row))


def _rows_equal(a: tuple, b: tuple) -> bool:
    return len(a) == len(b) and all(cell_equal(x, y) for x, y in zip(a, b))


def exec_match(gold: ResultTable, pred: ResultTable) -> int:
    """1 iff the multisets of row tuples match, ignoring row order and column names."""
    if len(gold.columns) != len(pred.columns):
        return 0
    if len(gold.rows) != len(pred.rows):
        return 0
    gold_sorted = _sorted_rows(gold)
    pred_sorted = _sorted_rows(pred)
    return int(all(_rows_equal(g, p) for g, p in zip(gold_sorted, pred_sorted)))


@dataclass
class SoftF1Counts:
    tp: float
    fp: float
    fn: float
    precision: float
    recall: float
    f1: float


def _match_row_cells(gold_row: tuple, pred_row: tuple) -> tuple[int, int, int]:
    """Match cells between one gold/pred row pair as multisets of values."""
    gold_cells = list(gold_row)
    matched = 0
    for cell in pred_row:
        for i, g in enumerate(gold_cells):
            if cell_equal(cell, g):
                matched += 1
                del gold_cells[i]
                break
    fp = len(pred_row) - matched
    fn = len(gold_row) - matched
    return matched, fp, fn


def soft_f1(gold: ResultTable, pred: ResultTable) -> SoftF1Counts:
    """Cell-level partial credit: canonical-sort rows, zip, and match cells per paired row.

    Surplus rows on either side contribute all their cells to FP / FN.
    0/0 precision and recall are 0; two empty tables score f1 = 1.
    """
    gold_rows = _sorted_rows(gold)
    pred_rows = _sorted_rows(pred)
    tp = fp = fn = 0
    for g, p in zip(gold_rows, pred_rows):
        t, f_p, f_n = _match_row_cells(g, p)
        tp += t
        fp += f_p
        fn += f_n
    for p in pred_rows[len(gold_rows):]:
        fp += len(p)
    for g in gold_rows[len(pred_rows):]:
        fn += len(g)

    if tp == 0 and fp == 0 and fn == 0:
        return SoftF1Counts(tp=0, fp=0, fn=0, precision=0.0, recall=0.0, f1=1.0)
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return SoftF1Counts(tp=tp, fp=fp, fn=fn, precision=precision, recall=recall, f1=f1)


def r_ves(correct: int, tau: float | None = None) -> float:
    """Piecewise reward over the gold/pred execution-time ratio; 0 for incorrect SQL."""
    if not correct:
        return 0.0
    if tau is None:
        raise ValueError("tau required when the prediction is correct")
    if tau >= 2:
        return 1.25
    if tau >= 1:
        return 1.0
    if tau >= 0.5:
        return 0.75
    if tau >= 0.25:
        return 0.5
    return 0.25


def round_pct(fraction: float, decimals: int = 1) -> float:
    """fraction in [0, 1.25] to a percentage, half-up at `decimals` places."""
    q = Decimal(1).scaleb(-decimals)
    return float((Decimal(repr(fraction)) * 100).quantize(q, rounding=ROUND_HALF_UP))


@dataclass
class SplitSummary:
    count: int
    ex_pct: float
    soft_f1_pct: float
    r_ves_pct: float
    by_difficulty: dict = field(default_factory=dict)


def aggregate(per_example: list[MetricScores], stratify: bool = False) -> SplitSummary:
    """Means over a split, reported as one-decimal percentages (half-up)."""
    if not per_example:
        raise ValueError("cannot aggregate an empty score list")

    def summarize(scores: list[MetricScores]):
        n = len(scores)
        return (
            round_pct(sum(s.ex for s in scores) / n),
            round_pct(sum(s.soft_f1 for s in scores) / n),
            round_pct(sum(s.r_ves for s in scores) / n),
        )

    ex_pct, f1_pct, rv_pct = summarize(per_example)
    by_difficulty = {}
    if stratify:
        for diff in sorted({s.difficulty for s in per_example}):
            bucket = [s for s in per_example if s.difficulty == diff]
            b_ex, b_f1, b_rv = summarize(bucket)
            by_difficulty[diff] = {
                "count": len(bucket),
                "ex_pct": b_ex,
                "soft_f1_pct": b_f1,
                "r_ves_pct": b_rv,
            }
    return SplitSummary(
        count=len(per_example),
        ex_pct=ex_pct,
        soft_f1_pct=f1_pct,
        r_ves_pct=rv_pct,
        by_difficulty=by_difficulty,
    )
