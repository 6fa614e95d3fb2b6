import json
import sqlite3
from pathlib import Path

import pytest

from agentsql.backend import ModelProfile

# Populated by test_acceptance.py; printed after the run so the per-criterion
# verdict lines survive output capturing.
ACCEPTANCE_RESULTS: list[tuple[int, str, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    results = {num: (verdict, label) for num, verdict, label in sorted(ACCEPTANCE_RESULTS)}
    terminalreporter.section("acceptance criteria")
    for num in range(1, 10):
        verdict, label = results.get(num, ("SKIP", "not run in this environment"))
        terminalreporter.write_line(f"criterion {num}: {verdict} — {label}")


def build_database(path: Path, tables: dict[str, tuple[str, list[tuple]]]):
    """tables: name -> (CREATE TABLE sql, rows)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    conn = sqlite3.connect(path)
    try:
        for name, (ddl, rows) in tables.items():
            conn.execute(ddl)
            if rows:
                placeholders = ",".join("?" * len(rows[0]))
                conn.executemany(f"INSERT INTO {name} VALUES ({placeholders})", rows)
        conn.commit()
    finally:
        conn.close()


def build_bench_root(root: Path, n_examples: int = 20, split: str = "mini_dev") -> Path:
    """A miniature BIRD-layout benchmark: two databases, one JSON split."""
    build_database(
        root / "databases" / "db_alpha" / "db_alpha.sqlite",
        {
            "students": (
                "CREATE TABLE students (id INTEGER PRIMARY KEY, name TEXT, school_id INTEGER, gpa REAL)",
                [(i, f"student{i}", i % 3, 2.0 + i * 0.1) for i in range(1, 13)],
            ),
            "schools": (
                "CREATE TABLE schools (id INTEGER PRIMARY KEY, name TEXT)",
                [(0, "North"), (1, "South"), (2, "East")],
            ),
        },
    )
    build_database(
        root / "databases" / "db_beta" / "db_beta.sqlite",
        {
            "orders": (
                "CREATE TABLE orders (id INTEGER PRIMARY KEY, item TEXT, qty INTEGER)",
                [(i, f"item{i % 4}", i * 2) for i in range(1, 16)],
            ),
        },
    )
    difficulties = ["simple", "moderate", "hard"]
    records = []
    for i in range(n_examples):
        if i % 2 == 0:
            db_id, sql = "db_alpha", f"SELECT name FROM students WHERE id = {i % 12 + 1}"
        else:
            db_id, sql = "db_beta", f"SELECT item, qty FROM orders WHERE id = {i % 15 + 1}"
        records.append(
            {
                "question_id": i,
                "db_id": db_id,
                "question": f"Question number {i}?",
                "SQL": sql,
                "evidence": f"hint {i}" if i % 3 == 0 else "",
                "difficulty": difficulties[i % 3],
            }
        )
    (root / f"{split}.json").write_text(json.dumps(records, indent=1))
    return root


def fenced(sql: str, prose: str = "Reasoning first.") -> str:
    return f"{prose}\n```sql\n{sql}\n```"


def replay_fixtures_for(records: list[dict], pipeline: str, models: dict | None = None) -> dict:
    """Tag -> response fixtures covering every request a pipeline makes.

    Even-indexed examples answer with the gold SQL, odd ones with a wrong but
    valid query, so scores exercise both EX outcomes.
    """
    fixtures = {}
    for i, rec in enumerate(records):
        eid = str(rec["question_id"])
        gold = rec["SQL"]
        wrong = "SELECT 1 WHERE 0"
        final = gold if i % 2 == 0 else wrong
        if pipeline == "baseline":
            fixtures[f"{eid}.baseline"] = fenced(final)
        elif pipeline == "mad":
            for agent in (1, 2, 3):
                fixtures[f"{eid}.mad.agent{agent}.r0"] = fenced(gold, f"Starter {agent}.")
                for rnd in (1, 2, 3):
                    fixtures[f"{eid}.mad.agent{agent}.r{rnd}"] = fenced(gold, f"Agent {agent} round {rnd}.")
            for rnd in (1, 2, 3):
                fixtures[f"{eid}.mad.judge.r{rnd}"] = fenced(final, f"Judge verdict round {rnd}.")
        elif pipeline == "planner_coder":
            for planner_id in (models or {}).get("planners", ["planner-a"]):
                fixtures[f"{eid}.pc.planner.{planner_id}"] = f"1. Inspect schema. 2. Filter. ({planner_id})"
            fixtures[f"{eid}.pc.coder"] = fenced(final)
        elif pipeline == "coder_aggregator":
            for n, coder_id in enumerate((models or {}).get("coders", ["coder-a", "coder-b", "coder-c"]), start=1):
                fixtures[f"{eid}.ca.coder{n}.{coder_id}"] = fenced(gold, f"Candidate {n}.")
            fixtures[f"{eid}.ca.aggregator"] = fenced(final, "Synthesis.")
        else:
            raise ValueError(pipeline)
    return fixtures


@pytest.fixture(scope="session")
def bench_root(tmp_path_factory) -> Path:
    return build_bench_root(tmp_path_factory.mktemp("bench"))


@pytest.fixture(scope="session")
def bench_records(bench_root) -> list[dict]:
    return json.loads((bench_root / "mini_dev.json").read_text())


@pytest.fixture
def plain_model() -> ModelProfile:
    return ModelProfile(model_id="test-model", thinking=False)


@pytest.fixture
def thinking_model() -> ModelProfile:
    return ModelProfile(model_id="test-reasoner", thinking=True)
