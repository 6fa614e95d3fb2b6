"""SQL extraction and the four orchestration pipelines."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .backend import Backend, ChatRequest, Completion, ModelProfile, batch
from .dataset import Example, SchemaCatalog
from .errors import BackendError, ExtractionError
from .prompts import (
    Persona,
    personas as default_personas,
    render,
    render_agent_responses,
    render_candidates,
    render_joint_plans,
)

PIPELINE_IDS = ("baseline", "mad", "planner_coder", "coder_aggregator")

_FENCE_RE = re.compile(r"```([A-Za-z0-9_+-]*)[ \t]*\n?(.*?)```", re.DOTALL)
_STMT_START_RE = re.compile(r"(?i)\b(?:SELECT|WITH)\b")
_LINE_START_RE = re.compile(r"(?im)^[ \t]*(?:SELECT|WITH)\b")


@dataclass
class AgentTurn:
    agent_id: str
    round: int
    raw_text: str
    extracted_sql: str | None = None
    tag: str = ""


@dataclass
class Transcript:
    example_id: str
    pipeline_id: str
    turns: list[AgentTurn] = field(default_factory=list)
    final_sql: str | None = None
    failure: str | None = None
    warnings: list[str] = field(default_factory=list)


def _normalize_stmt(sql: str) -> str:
    sql = sql.strip()
    while sql.endswith(";"):
        sql = sql[:-1].rstrip()
    return sql


def extract_sql(raw_text: str) -> str:
    """Pull the final SQL statement out of a free-text completion.

    Preference order: last fenced block labeled sql; last unlabeled fenced
    block starting with SELECT/WITH; last bare statement starting with
    SELECT/WITH. Trailing semicolons are stripped, internal newlines kept.
    """
    candidates = []
    for m in _FENCE_RE.finditer(raw_text):
        label, body = m.group(1).lower(), m.group(2).strip()
        if label == "sql" and body:
            candidates.append(body)
        elif label in ("", "sqlite") and _STMT_START_RE.match(body):
            candidates.append(body)
    if candidates:
        return _normalize_stmt(candidates[-1])

    # No usable fence: take the last statement-looking span of plain text.
    line_starts = list(_LINE_START_RE.finditer(raw_text))
    if line_starts:
        start = line_starts[-1].start()
    else:
        inline = list(_STMT_START_RE.finditer(raw_text))
        if not inline:
            raise ExtractionError("no SQL statement found in completion")
        start = inline[-1].start()
        # A trailing SELECT may belong to an enclosing WITH clause.
        prev_semi = raw_text.rfind(";", 0, start)
        enclosing = _STMT_START_RE.search(raw_text, prev_semi + 1)
        if enclosing and raw_text[enclosing.start():enclosing.start() + 4].upper() == "WITH":
            start = enclosing.start()
    end = raw_text.find(";", start)
    stmt = raw_text[start:] if end == -1 else raw_text[start:end]
    stmt = _normalize_stmt(stmt)
    if not stmt:
        raise ExtractionError("no SQL statement found in completion")
    return stmt


def _try_extract(text: str) -> str | None:
    try:
        return extract_sql(text)
    except ExtractionError:
        return None


def _request(prompt: str, profile: ModelProfile, role: str, tag: str, seed: int | None) -> ChatRequest:
    return ChatRequest(
        messages=(("user", prompt),),
        decode=profile.default_decode(seed),
        max_new_tokens=profile.budget_for(role),
        tag=tag,
        role=role,
    )


def run_baseline(
    example: Example,
    schema: SchemaCatalog,
    backend: Backend,
    model: ModelProfile,
    seed: int | None = None,
) -> Transcript:
    t = Transcript(example_id=example.example_id, pipeline_id="baseline")
    prompt = render("baseline", {"schema": schema.ddl_text, "question": example.question}, model)
    tag = f"{example.example_id}.baseline"
    try:
        completion = backend.complete(_request(prompt, model, "baseline", tag, seed), model)
    except BackendError as e:
        t.failure = f"backend: {e}"
        return t
    sql = _try_extract(completion.text)
    t.turns.append(AgentTurn(agent_id="coder", round=0, raw_text=completion.text,
                             extracted_sql=sql, tag=tag))
    if sql is None:
        t.failure = "extraction"
    else:
        t.final_sql = sql
    return t


def run_mad(
    example: Example,
    schema: SchemaCatalog,
    backend: Backend,
    model: ModelProfile,
    rounds: int = 3,
    persona_set: tuple[Persona, ...] | None = None,
    seed: int | None = None,
    max_in_flight: int = 1,
) -> Transcript:
    """Multi-agent discussion: 3 persona starters, `rounds` critique rounds,
    a judge verdict after every round; the last verdict is the prediction."""
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    persona_set = persona_set or default_personas()
    t = Transcript(example_id=example.example_id, pipeline_id="mad")
    base_slots = {"schema": schema.ddl_text, "question": example.question}
    eid = example.example_id

    def run_parallel(reqs: list[ChatRequest]) -> list[Completion] | None:
        results = batch(backend, reqs, model, max_in_flight=max_in_flight)
        for r in results:
            if isinstance(r, BackendError):
                t.failure = f"backend: {r}"
                return None
        return results

    starter_reqs = [
        _request(
            render("mad_starter", {**base_slots, "persona": p.text}, model),
            model, "discussion", f"{eid}.mad.agent{i}.r0", seed,
        )
        for i, p in enumerate(persona_set, start=1)
    ]
    results = run_parallel(starter_reqs)
    if results is None:
        return t
    current = [r.text for r in results]
    for i, text in enumerate(current, start=1):
        t.turns.append(AgentTurn(agent_id=f"agent{i}", round=0, raw_text=text,
                                 extracted_sql=_try_extract(text),
                                 tag=f"{eid}.mad.agent{i}.r0"))

    for rnd in range(1, rounds + 1):
        discuss_reqs = []
        for i in range(1, 4):
            others = [(j, current[j - 1]) for j in range(1, 4) if j != i]
            slots = {**base_slots, "agent_responses": render_agent_responses(others)}
            discuss_reqs.append(
                _request(render("mad_discuss", slots, model), model, "discussion",
                         f"{eid}.mad.agent{i}.r{rnd}", seed)
            )
        results = run_parallel(discuss_reqs)
        if results is None:
            return t
        current = [r.text for r in results]
        for i, text in enumerate(current, start=1):
            t.turns.append(AgentTurn(agent_id=f"agent{i}", round=rnd, raw_text=text,
                                     extracted_sql=_try_extract(text),
                                     tag=f"{eid}.mad.agent{i}.r{rnd}"))

        judge_slots = {
            **base_slots,
            "agent_responses": render_agent_responses([(i, current[i - 1]) for i in range(1, 4)]),
        }
        judge_tag = f"{eid}.mad.judge.r{rnd}"
        try:
            verdict = backend.complete(
                _request(render("mad_judge", judge_slots, model), model, "judge",
                         judge_tag, seed),
                model,
            )
        except BackendError as e:
            t.failure = f"backend: {e}"
            return t
        t.turns.append(AgentTurn(agent_id="judge", round=rnd, raw_text=verdict.text,
                                 extracted_sql=_try_extract(verdict.text), tag=judge_tag))

    final_judge = t.turns[-1]
    if final_judge.extracted_sql is None:
        t.failure = "extraction"
    else:
        t.final_sql = final_judge.extracted_sql
    return t


def judge_sql_by_round(transcript: Transcript) -> dict[int, str | None]:
    """Round -> judge-extracted SQL, for round-wise scoring of MAD runs."""
    return {
        turn.round: turn.extracted_sql
        for turn in transcript.turns
        if turn.agent_id == "judge"
    }


def run_planner_coder(
    example: Example,
    schema: SchemaCatalog,
    backend: Backend,
    planners: list[ModelProfile],
    coder: ModelProfile,
    seed: int | None = None,
) -> Transcript:
    """One or two reasoning planners produce plans; a coder turns them into SQL."""
    if not planners:
        raise ValueError("at least one planner required")
    t = Transcript(example_id=example.example_id, pipeline_id="planner_coder")
    base_slots = {"schema": schema.ddl_text, "question": example.question}
    eid = example.example_id

    plans: list[tuple[str, str]] = []
    for planner in planners:
        tag = f"{eid}.pc.planner.{planner.model_id}"
        prompt = render("pc_planner", base_slots, planner)
        try:
            completion = backend.complete(_request(prompt, planner, "planner", tag, seed), planner)
        except BackendError as e:
            t.warnings.append(f"planner {planner.model_id} failed: {e}")
            continue
        if not completion.text.strip():
            t.warnings.append(f"planner {planner.model_id} returned an empty plan")
        plans.append((planner.model_id, completion.text))
        t.turns.append(AgentTurn(agent_id=f"planner:{planner.model_id}", round=0,
                                 raw_text=completion.text, tag=tag))
    if not plans:
        t.failure = "backend: all planners failed"
        return t

    coder_slots = {**base_slots, "plan": render_joint_plans(plans)}
    coder_tag = f"{eid}.pc.coder"
    try:
        completion = backend.complete(
            _request(render("pc_coder", coder_slots, coder), coder, "coder", coder_tag, seed),
            coder,
        )
    except BackendError as e:
        t.failure = f"backend: {e}"
        return t
    sql = _try_extract(completion.text)
    t.turns.append(AgentTurn(agent_id=f"coder:{coder.model_id}", round=0,
                             raw_text=completion.text, extracted_sql=sql, tag=coder_tag))
    if sql is None:
        t.failure = "extraction"
    else:
        t.final_sql = sql
    return t


def run_coder_aggregator(
    example: Example,
    schema: SchemaCatalog,
    backend: Backend,
    coders: list[ModelProfile],
    aggregator: ModelProfile,
    seed: int | None = None,
) -> Transcript:
    """Independent zero-shot coder candidates synthesized by a reasoning aggregator."""
    if not coders:
        raise ValueError("at least one coder required")
    t = Transcript(example_id=example.example_id, pipeline_id="coder_aggregator")
    base_slots = {"schema": schema.ddl_text, "question": example.question}
    eid = example.example_id

    candidates: list[tuple[int, str, str]] = []
    any_ok = False
    for n, coder in enumerate(coders, start=1):
        tag = f"{eid}.ca.coder{n}.{coder.model_id}"
        prompt = render("baseline", base_slots, coder)
        try:
            completion = backend.complete(_request(prompt, coder, "baseline", tag, seed), coder)
        except BackendError as e:
            t.warnings.append(f"coder {coder.model_id} failed: {e}")
            candidates.append((n, coder.model_id, "(candidate unavailable: coder failed)"))
            continue
        any_ok = True
        candidates.append((n, coder.model_id, completion.text))
        t.turns.append(AgentTurn(agent_id=f"coder:{coder.model_id}", round=0,
                                 raw_text=completion.text,
                                 extracted_sql=_try_extract(completion.text), tag=tag))
    if not any_ok:
        t.failure = "backend: all coders failed"
        return t

    agg_slots = {
        **base_slots,
        "hint": example.evidence,
        "coder_outputs": render_candidates(candidates),
    }
    agg_tag = f"{eid}.ca.aggregator"
    try:
        completion = backend.complete(
            _request(render("ca_aggregator", agg_slots, aggregator), aggregator,
                     "aggregator", agg_tag, seed),
            aggregator,
        )
    except BackendError as e:
        t.failure = f"backend: {e}"
        return t
    sql = _try_extract(completion.text)
    t.turns.append(AgentTurn(agent_id="aggregator", round=0, raw_text=completion.text,
                             extracted_sql=sql, tag=agg_tag))
    if sql is None:
        t.failure = "extraction"
    else:
        t.final_sql = sql
    return t
