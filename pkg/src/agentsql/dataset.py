"""Benchmark example loading and SQLite schema catalogs."""

from __future__ import annotations

import json
import sqlite3
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DatasetError, SchemaError

DIFFICULTIES = ("simple", "moderate", "hard", "unlabeled")

# Field maps translate source-distribution record keys onto Example fields.
# Values are source keys; None means "not present in this distribution".
BIRD_FIELD_MAP = {
    "example_id": "question_id",
    "db_id": "db_id",
    "question": "question",
    "gold_sql": "SQL",
    "evidence": "evidence",
    "difficulty": "difficulty",
}

SPIDER_FIELD_MAP = {
    "example_id": None,
    "db_id": "db_id",
    "question": "question",
    "gold_sql": "query",
    "evidence": None,
    "difficulty": None,
}

FIELD_MAPS = {"bird": BIRD_FIELD_MAP, "spider": SPIDER_FIELD_MAP}


@dataclass(frozen=True)
class Example:
    example_id: str
    db_id: str
    question: str
    gold_sql: str
    evidence: str = ""
    difficulty: str = "unlabeled"


@dataclass(frozen=True)
class TableDef:
    name: str
    columns: tuple[str, ...]
    affinities: tuple[str, ...]
    primary_key: tuple[str, ...]
    foreign_keys: tuple[tuple[str, str, str], ...] = ()  # (column, ref_table, ref_column)


@dataclass(frozen=True)
class SchemaCatalog:
    db_id: str
    db_path: Path
    tables: tuple[TableDef, ...]
    ddl_text: str


def _resolve_field_map(field_map: dict | str | None) -> dict:
    if field_map is None:
        return BIRD_FIELD_MAP
    if isinstance(field_map, str):
        try:
            return FIELD_MAPS[field_map]
        except KeyError:
            raise DatasetError(f"unknown field map '{field_map}'") from None
    return field_map


def load_split(root: str | Path, split_name: str, field_map: dict | str | None = None) -> list[Example]:
    """Load a split's JSON examples file into Examples, in file order.

    `field_map` maps Example fields onto the source record keys ("bird" and
    "spider" name the built-in maps). Records missing an example_id key get
    their file index as id.
    """
    root = Path(root)
    fmap = _resolve_field_map(field_map)
    path = root / f"{split_name}.json"
    if not path.is_file():
        raise DatasetError(f"split file not found: {path}")
    try:
        records = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise DatasetError(f"cannot parse {path}: {e}") from e
    if not isinstance(records, list):
        raise DatasetError(f"{path} does not contain a JSON array")

    examples: list[Example] = []
    seen: set[str] = set()
    for i, rec in enumerate(records):
        def get(field: str, required: bool = True, default: str = "") -> str:
            key = fmap.get(field)
            if key is None:
                return default
            if key not in rec:
                if required:
                    raise DatasetError(f"record {i} in {path} missing field '{key}'")
                return default
            value = rec[key]
            return "" if value is None else str(value)

        id_key = fmap.get("example_id")
        example_id = str(rec[id_key]) if id_key and id_key in rec else str(i)
        if example_id in seen:
            raise DatasetError(f"duplicate example_id '{example_id}' in {path}")
        seen.add(example_id)

        gold_sql = get("gold_sql")
        if not gold_sql.strip():
            raise DatasetError(f"record {i} in {path} has empty gold SQL")
        difficulty = get("difficulty", required=False, default="unlabeled") or "unlabeled"
        if difficulty not in DIFFICULTIES:
            raise DatasetError(f"record {i} in {path} has unknown difficulty '{difficulty}'")
        examples.append(
            Example(
                example_id=example_id,
                db_id=get("db_id"),
                question=get("question"),
                gold_sql=gold_sql,
                evidence=get("evidence", required=False),
                difficulty=difficulty,
            )
        )
    return examples


def difficulty_histogram(examples: list[Example]) -> Counter:
    return Counter(e.difficulty for e in examples)


def _read_table_def(conn: sqlite3.Connection, name: str) -> TableDef:
    info = conn.execute(f'PRAGMA table_info("{name}")').fetchall()
    columns = tuple(row[1] for row in info)
    affinities = tuple(row[2] for row in info)
    pk = tuple(row[1] for row in sorted((r for r in info if r[5]), key=lambda r: r[5]))
    fks = tuple(
        (row[3], row[2], row[4] if row[4] is not None else "")
        for row in conn.execute(f'PRAGMA foreign_key_list("{name}")').fetchall()
    )
    return TableDef(name=name, columns=columns, affinities=affinities, primary_key=pk, foreign_keys=fks)


def load_schema(root: str | Path, db_id: str) -> SchemaCatalog:
    """Introspect databases/<db_id>/<db_id>.sqlite under root into a catalog.

    ddl_text is the verbatim CREATE TABLE statements as stored by SQLite, one
    per user table in declared order, separated by a blank line.
    """
    root = Path(root)
    db_path = root / "databases" / db_id / f"{db_id}.sqlite"
    if not db_path.is_file():
        raise SchemaError(f"database file not found: {db_path}")
    try:
        conn = sqlite3.connect(f"file:{db_path}?mode=ro", uri=True)
        try:
            rows = conn.execute(
                "SELECT name, sql FROM sqlite_master "
                "WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY rowid"
            ).fetchall()
            tables = tuple(_read_table_def(conn, name) for name, _ in rows)
        finally:
            conn.close()
    except sqlite3.Error as e:
        raise SchemaError(f"cannot read {db_path}: {e}") from e
    ddl_text = "\n\n".join(sql for _, sql in rows if sql)
    return SchemaCatalog(db_id=db_id, db_path=db_path, tables=tables, ddl_text=ddl_text)
