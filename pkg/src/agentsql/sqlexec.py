"""Sandboxed SQLite execution and repeated-run timing."""

from __future__ import annotations

import hashlib
import sqlite3
import statistics
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .errors import TimingError

DEFAULT_TIMEOUT_S = 30.0
_PROGRESS_OPCODES = 1000


@dataclass(frozen=True)
class ResultTable:
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]

    def __post_init__(self):
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError("row width does not match column count")


@dataclass(frozen=True)
class ExecOutcome:
    status: str  # ok | sql_error | timeout
    table: ResultTable | None = None
    error_text: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass(frozen=True)
class TimingSample:
    gt_times: tuple[float, ...]
    pred_times: tuple[float, ...]
    tau: float


def _canon_cell(value):
    # Integral reals stay real; blobs are kept as compact content digests.
    if isinstance(value, bytes):
        return "blob:" + hashlib.sha256(value).hexdigest()
    return value


def execute(db, sql: str, timeout: float = DEFAULT_TIMEOUT_S) -> ExecOutcome:
    """Run one query read-only against db (SchemaCatalog or path) under a wall-clock timeout."""
    db_path = Path(getattr(db, "db_path", db))
    if timeout <= 0:
        raise ValueError("timeout must be positive")
    deadline = time.monotonic() + timeout
    timed_out = False
    try:
        conn = sqlite3.connect(f"file:{db_path}?mode=ro", uri=True)
    except sqlite3.Error as e:
        return ExecOutcome(status="sql_error", error_text=str(e))
    try:
        def watchdog():
            nonlocal timed_out
            if time.monotonic() > deadline:
                timed_out = True
                return 1
            return 0

        conn.set_progress_handler(watchdog, _PROGRESS_OPCODES)
        try:
            cur = conn.execute(sql)
            raw_rows = cur.fetchall()
        except sqlite3.Error as e:
            if timed_out or "interrupted" in str(e).lower():
                return ExecOutcome(status="timeout", error_text=str(e))
            return ExecOutcome(status="sql_error", error_text=str(e))
        columns = tuple(d[0] for d in cur.description) if cur.description else ()
        rows = tuple(tuple(_canon_cell(c) for c in row) for row in raw_rows)
        return ExecOutcome(status="ok", table=ResultTable(columns=columns, rows=rows))
    finally:
        conn.close()


def iqr_trim(samples: list[float]) -> list[float]:
    """Drop samples outside [Q1 - 1.5*IQR, Q3 + 1.5*IQR]."""
    if len(samples) < 4:
        return list(samples)
    q1, _, q3 = statistics.quantiles(samples, n=4, method="inclusive")
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    return [s for s in samples if lo <= s <= hi]


def trimmed_mean(samples: list[float], trim: str = "iqr") -> float:
    if trim == "iqr":
        kept = iqr_trim(samples)
    elif trim == "none":
        kept = list(samples)
    else:
        raise ValueError(f"unknown trim policy '{trim}'")
    if not kept:
        kept = list(samples)
    return statistics.fmean(kept)


def _time_once(db_path: Path, sql: str, timeout: float, clock: Callable[[], float]) -> float:
    conn = sqlite3.connect(f"file:{db_path}?mode=ro", uri=True)
    try:
        start = clock()
        try:
            conn.execute(sql).fetchall()
        except sqlite3.Error as e:
            raise TimingError(f"timing run failed: {e}") from e
        elapsed = clock() - start
        if elapsed > timeout:
            raise TimingError(f"timing run exceeded {timeout}s")
        return elapsed
    finally:
        conn.close()


def time_pair(
    db,
    gold_sql: str,
    pred_sql: str,
    runs: int = 100,
    trim: str = "iqr",
    timeout: float = DEFAULT_TIMEOUT_S,
    clock: Callable[[], float] = time.monotonic,
) -> TimingSample:
    """Time gold and predicted SQL over repeated runs; tau = trimmed_mean(gt) / trimmed_mean(pred).

    Runs are batched per query and executed serially. A failing repetition is
    retried once, then raises TimingError.
    """
    if runs < 3:
        raise ValueError("runs must be >= 3")
    db_path = Path(getattr(db, "db_path", db))

    def series(sql: str) -> tuple[float, ...]:
        times = []
        for _ in range(runs):
            try:
                times.append(_time_once(db_path, sql, timeout, clock))
            except TimingError:
                times.append(_time_once(db_path, sql, timeout, clock))
        return tuple(times)

    gt_times = series(gold_sql)
    pred_times = series(pred_sql)
    return make_timing_sample(gt_times, pred_times, trim)


def make_timing_sample(gt_times, pred_times, trim: str = "iqr") -> TimingSample:
    gt_mean = trimmed_mean(list(gt_times), trim)
    pred_mean = trimmed_mean(list(pred_times), trim)
    if pred_mean <= 0:
        raise TimingError("predicted-query trimmed mean is not positive")
    return TimingSample(gt_times=tuple(gt_times), pred_times=tuple(pred_times), tau=gt_mean / pred_mean)
