"""Experiment configuration, the split-processing loop, and checkpoint/resume."""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import pipelines, sqlexec
from .backend import Backend, ModelProfile, make_backend
from .dataset import Example, SchemaCatalog, load_schema, load_split
from .errors import ConfigError, ResumeError, TimingError
from .metrics import MetricScores, exec_match, r_ves, soft_f1

DEFAULT_SEEDS = (42, 11, 98)


@dataclass
class ExecParams:
    timeout_s: float = 30.0
    rves_runs: int = 100
    trim: str = "iqr"
    # "wall" measures real execution time for tau; "none" pins tau to 1.0 for
    # deterministic CI runs.
    timing_mode: str = "wall"


@dataclass
class ExperimentConfig:
    dataset_root: str
    split: str
    pipeline_id: str
    output_dir: str
    field_map: str | dict | None = None
    models: dict[str, ModelProfile] = field(default_factory=dict)
    model: str = ""  # baseline / mad
    planners: list[str] = field(default_factory=list)
    coder: str = ""  # planner_coder
    coders: list[str] = field(default_factory=list)  # coder_aggregator
    aggregator: str = ""
    rounds: int = 3
    seeds: list[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    exec_params: ExecParams = field(default_factory=ExecParams)
    backend_cfg: dict = field(default_factory=dict)
    max_in_flight: int = 1
    limit: int | None = None  # desk-scale profile: first N examples

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        try:
            ds = raw["dataset"]
            pipe = raw["pipeline"]
            cfg = cls(
                dataset_root=ds["root"],
                split=ds["split"],
                field_map=ds.get("field_map"),
                pipeline_id=pipe["id"],
                output_dir=raw["output_dir"],
                model=pipe.get("model", ""),
                planners=list(pipe.get("planners", [])),
                coder=pipe.get("coder", ""),
                coders=list(pipe.get("coders", [])),
                aggregator=pipe.get("aggregator", ""),
                rounds=int(pipe.get("rounds", 3)),
                seeds=list(raw.get("seeds", DEFAULT_SEEDS)),
                exec_params=ExecParams(**raw.get("exec", {})),
                backend_cfg=dict(raw.get("backend", {"kind": "replay"})),
                max_in_flight=int(raw.get("max_in_flight", 1)),
                limit=raw.get("limit"),
            )
        except KeyError as e:
            raise ConfigError(f"missing config key: {e}") from e
        for model_id, spec in raw.get("models", {}).items():
            cfg.models[model_id] = ModelProfile(
                model_id=model_id,
                thinking=bool(spec.get("thinking", False)),
                budgets=dict(spec.get("budgets", {})),
            )
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        raw = yaml.safe_load(Path(path).read_text())
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {path} is not a mapping")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return {
            "dataset": {"root": self.dataset_root, "split": self.split, "field_map": self.field_map},
            "pipeline": {
                "id": self.pipeline_id,
                "model": self.model,
                "planners": self.planners,
                "coder": self.coder,
                "coders": self.coders,
                "aggregator": self.aggregator,
                "rounds": self.rounds,
            },
            "models": {
                mid: {"thinking": p.thinking, "budgets": p.budgets}
                for mid, p in sorted(self.models.items())
            },
            "seeds": self.seeds,
            "exec": {
                "timeout_s": self.exec_params.timeout_s,
                "rves_runs": self.exec_params.rves_runs,
                "trim": self.exec_params.trim,
                "timing_mode": self.exec_params.timing_mode,
            },
            "backend": self.backend_cfg,
            "max_in_flight": self.max_in_flight,
            "limit": self.limit,
            "output_dir": self.output_dir,
        }

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canonical.encode()).hexdigest()

    def profile(self, model_id: str) -> ModelProfile:
        try:
            return self.models[model_id]
        except KeyError:
            raise ConfigError(f"model '{model_id}' has no profile") from None

    def validate(self):
        if self.pipeline_id not in pipelines.PIPELINE_IDS:
            raise ConfigError(f"unknown pipeline '{self.pipeline_id}'")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")
        needed: list[str] = []
        if self.pipeline_id in ("baseline", "mad"):
            if not self.model:
                raise ConfigError(f"pipeline '{self.pipeline_id}' requires pipeline.model")
            needed.append(self.model)
        elif self.pipeline_id == "planner_coder":
            if not self.planners or not self.coder:
                raise ConfigError("planner_coder requires pipeline.planners and pipeline.coder")
            needed.extend(self.planners)
            needed.append(self.coder)
        elif self.pipeline_id == "coder_aggregator":
            if not self.coders or not self.aggregator:
                raise ConfigError("coder_aggregator requires pipeline.coders and pipeline.aggregator")
            needed.extend(self.coders)
            needed.append(self.aggregator)
        for model_id in needed:
            self.profile(model_id)


class _SchemaCache:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._cache: dict[str, SchemaCatalog] = {}

    def get(self, db_id: str) -> SchemaCatalog:
        if db_id not in self._cache:
            self._cache[db_id] = load_schema(self.root, db_id)
        return self._cache[db_id]


def _score_sql(
    schema: SchemaCatalog,
    gold_outcome: sqlexec.ExecOutcome,
    gold_sql: str,
    pred_sql: str | None,
    exec_params: ExecParams,
    difficulty: str,
) -> dict:
    """Score one predicted SQL against an already-executed gold query."""
    record = {"ex": 0, "soft_f1": 0.0, "r_ves": 0.0, "tp": 0.0, "fp": 0.0, "fn": 0.0,
              "tau": None, "pred_status": None, "difficulty": difficulty}
    if pred_sql is None or not gold_outcome.ok:
        record["pred_status"] = "missing" if pred_sql is None else "gold_failed"
        return record
    pred_outcome = sqlexec.execute(schema, pred_sql, timeout=exec_params.timeout_s)
    record["pred_status"] = pred_outcome.status
    if not pred_outcome.ok:
        return record
    ex = exec_match(gold_outcome.table, pred_outcome.table)
    f1 = soft_f1(gold_outcome.table, pred_outcome.table)
    record.update(ex=ex, soft_f1=f1.f1, tp=f1.tp, fp=f1.fp, fn=f1.fn)
    if ex == 1:
        if exec_params.timing_mode == "none":
            tau = 1.0
        else:
            try:
                tau = sqlexec.time_pair(
                    schema, gold_sql, pred_sql,
                    runs=exec_params.rves_runs, trim=exec_params.trim,
                    timeout=exec_params.timeout_s,
                ).tau
            except TimingError:
                tau = None
        record["tau"] = tau
        record["r_ves"] = r_ves(1, tau) if tau is not None else 0.0
    return record


def _run_pipeline(cfg: ExperimentConfig, backend: Backend, example: Example,
                  schema: SchemaCatalog, seed: int) -> pipelines.Transcript:
    if cfg.pipeline_id == "baseline":
        return pipelines.run_baseline(example, schema, backend, cfg.profile(cfg.model), seed=seed)
    if cfg.pipeline_id == "mad":
        return pipelines.run_mad(example, schema, backend, cfg.profile(cfg.model),
                                 rounds=cfg.rounds, seed=seed)
    if cfg.pipeline_id == "planner_coder":
        return pipelines.run_planner_coder(
            example, schema, backend,
            planners=[cfg.profile(p) for p in cfg.planners],
            coder=cfg.profile(cfg.coder), seed=seed,
        )
    return pipelines.run_coder_aggregator(
        example, schema, backend,
        coders=[cfg.profile(c) for c in cfg.coders],
        aggregator=cfg.profile(cfg.aggregator), seed=seed,
    )


def _process_example(cfg: ExperimentConfig, backend: Backend, schemas: _SchemaCache,
                     example: Example, seed: int) -> tuple[list[dict], dict]:
    """Returns (transcript JSONL records, score record) for one example."""
    schema = schemas.get(example.db_id)
    transcript = _run_pipeline(cfg, backend, example, schema, seed)

    gold_outcome = sqlexec.execute(schema, example.gold_sql, timeout=cfg.exec_params.timeout_s)
    score = _score_sql(schema, gold_outcome, example.gold_sql, transcript.final_sql,
                       cfg.exec_params, example.difficulty)
    score.update(example_id=example.example_id, pipeline=cfg.pipeline_id,
                 final_sql=transcript.final_sql, failure=transcript.failure)

    if cfg.pipeline_id == "mad":
        round_scores = {}
        for rnd, sql in sorted(pipelines.judge_sql_by_round(transcript).items()):
            rs = _score_sql(schema, gold_outcome, example.gold_sql, sql,
                            cfg.exec_params, example.difficulty)
            round_scores[str(rnd)] = {k: rs[k] for k in ("ex", "soft_f1", "r_ves")}
        score["round_scores"] = round_scores

    turn_records = [
        {
            "type": "turn",
            "example_id": transcript.example_id,
            "pipeline": transcript.pipeline_id,
            "agent_id": turn.agent_id,
            "round": turn.round,
            "tag": turn.tag,
            "raw_text": turn.raw_text,
            "extracted_sql": turn.extracted_sql,
        }
        for turn in transcript.turns
    ]
    turn_records.append(
        {
            "type": "summary",
            "example_id": transcript.example_id,
            "pipeline": transcript.pipeline_id,
            "final_sql": transcript.final_sql,
            "failure": transcript.failure,
            "warnings": transcript.warnings,
        }
    )
    return turn_records, score


def _atomic_write(path: Path, text: str):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _read_jsonl(path: Path) -> list[dict]:
    """Read a JSONL file, silently dropping a torn trailing line."""
    records = []
    if not path.exists():
        return records
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError:
            break
    return records


class _SeedWriter:
    """Single writer funneling per-example records into append-consistent files."""

    def __init__(self, seed_dir: Path):
        seed_dir.mkdir(parents=True, exist_ok=True)
        self.transcripts_path = seed_dir / "transcripts.jsonl"
        self.scores_path = seed_dir / "scores.jsonl"

    def completed_ids(self) -> set[str]:
        scores = _read_jsonl(self.scores_path)
        completed = {r["example_id"] for r in scores}
        # Rewrite both files keeping only fully-committed examples so a torn
        # tail never survives into the resumed run.
        _atomic_write(self.scores_path,
                      "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in scores))
        transcripts = [r for r in _read_jsonl(self.transcripts_path)
                       if r["example_id"] in completed]
        _atomic_write(self.transcripts_path,
                      "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in transcripts))
        return completed

    def commit(self, turn_records: list[dict], score: dict):
        with open(self.transcripts_path, "a") as f:
            for rec in turn_records:
                f.write(json.dumps(rec, ensure_ascii=False) + "\n")
            f.flush()
            os.fsync(f.fileno())
        with open(self.scores_path, "a") as f:
            f.write(json.dumps(score, ensure_ascii=False) + "\n")
            f.flush()
            os.fsync(f.fileno())


def _write_manifest(out_dir: Path, cfg: ExperimentConfig, status: str, counts: dict):
    manifest = {
        "config_hash": cfg.config_hash(),
        "status": status,
        "updated_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "counts": counts,
    }
    _atomic_write(out_dir / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    return manifest


def run_experiment(cfg: ExperimentConfig, backend: Backend | None = None,
                   stop_after: int | None = None) -> dict:
    """Process the configured split for every seed, checkpointing per example.

    `stop_after` stops cleanly after that many newly processed examples
    (crash-safety testing hook). Returns the final manifest.
    """
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _atomic_write(out_dir / "config.json",
                  json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    if backend is None:
        backend = make_backend(**cfg.backend_cfg)

    examples = load_split(cfg.dataset_root, cfg.split, cfg.field_map)
    if cfg.limit is not None:
        examples = examples[: cfg.limit]
    schemas = _SchemaCache(cfg.dataset_root)

    counts: dict = {"total_per_seed": len(examples), "seeds": {}}
    interrupted = False
    remaining = stop_after
    for seed in cfg.seeds:
        writer = _SeedWriter(out_dir / f"seed_{seed}")
        completed = writer.completed_ids()
        pending = [e for e in examples if e.example_id not in completed]
        if remaining is not None:
            pending = pending[:remaining]

        with ThreadPoolExecutor(max_workers=cfg.max_in_flight) as pool:
            results = pool.map(
                lambda ex: _process_example(cfg, backend, schemas, ex, seed), pending
            )
            done = 0
            for turn_records, score in results:
                writer.commit(turn_records, score)
                done += 1
        if remaining is not None:
            remaining -= done
        counts["seeds"][str(seed)] = len(completed) + done
        if remaining is not None and remaining <= 0:
            interrupted = counts["seeds"][str(seed)] < len(examples) or seed != cfg.seeds[-1]
            break

    status = "interrupted" if interrupted else "complete"
    manifest = _write_manifest(out_dir, cfg, status, counts)
    if status == "complete":
        from .report import write_run_summaries

        write_run_summaries(out_dir, cfg)
    return manifest


def resume(run_dir: str | Path) -> dict:
    """Continue an interrupted run; completed records are never recomputed."""
    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.json"
    config_path = run_dir / "config.json"
    if not manifest_path.exists() or not config_path.exists():
        raise ResumeError(f"{run_dir} does not contain manifest.json and config.json")
    manifest = json.loads(manifest_path.read_text())
    cfg = ExperimentConfig.from_dict(json.loads(config_path.read_text()))
    if cfg.config_hash() != manifest.get("config_hash"):
        raise ResumeError("stored config does not match the manifest's config hash")
    return run_experiment(cfg)


def score_predictions(cfg_dataset_root: str, split: str, field_map, pred_path: str | Path,
                      exec_params: ExecParams | None = None) -> list[dict]:
    """Metrics-only mode: score a JSONL of {example_id, sql} against a split's gold."""
    exec_params = exec_params or ExecParams()
    examples = {e.example_id: e for e in load_split(cfg_dataset_root, split, field_map)}
    schemas = _SchemaCache(cfg_dataset_root)
    records = []
    for rec in _read_jsonl(Path(pred_path)):
        example = examples.get(str(rec.get("example_id")))
        if example is None:
            raise ConfigError(f"prediction for unknown example_id '{rec.get('example_id')}'")
        schema = schemas.get(example.db_id)
        gold_outcome = sqlexec.execute(schema, example.gold_sql, timeout=exec_params.timeout_s)
        score = _score_sql(schema, gold_outcome, example.gold_sql, rec.get("sql"),
                           exec_params, example.difficulty)
        score["example_id"] = example.example_id
        records.append(score)
    return records


def scores_to_metric_scores(records: list[dict]) -> list[MetricScores]:
    return [
        MetricScores(
            ex=int(r.get("ex", 0)),
            soft_f1=float(r.get("soft_f1", 0.0)),
            r_ves=float(r.get("r_ves", 0.0)),
            tp=float(r.get("tp", 0.0)),
            fp=float(r.get("fp", 0.0)),
            fn=float(r.get("fn", 0.0)),
            difficulty=r.get("difficulty", "unlabeled"),
        )
        for r in records
    ]
