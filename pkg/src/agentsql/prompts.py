"""Prompt template loading and rendering for all pipeline roles."""

from __future__ import annotations

import string
from dataclasses import dataclass
from importlib import resources

from .backend import ModelProfile
from .errors import RenderError

COT_SUFFIX = "Let's think step by step"

DEFAULT_PERSONAS = {
    "simple": "prefers short and concise solutions",
    "technical": "gives detailed, technically thorough answers",
    "thinker": "explores multiple alternatives before deciding",
}

PERSONA_ORDER = ("simple", "technical", "thinker")

JOINT_PLAN_HEADER = "--- PLAN FROM {planner_id} ---"

# Templates where the step-by-step suffix may be appended (skipped for
# reasoning models).
_COT_APPLICABLE = {
    "baseline": True,
    "mad_starter": True,
    "mad_discuss": True,
    "mad_judge": True,
    "pc_planner": False,
    "pc_coder": True,
    "ca_aggregator": False,
}

TEMPLATE_IDS = tuple(_COT_APPLICABLE)


@dataclass(frozen=True)
class Persona:
    id: str
    text: str


def personas(overrides: dict[str, str] | None = None) -> tuple[Persona, ...]:
    texts = dict(DEFAULT_PERSONAS)
    if overrides:
        texts.update(overrides)
    out = tuple(Persona(id=pid, text=texts[pid]) for pid in PERSONA_ORDER)
    if len({p.text for p in out}) != len(out):
        raise ValueError("persona texts must be pairwise distinct")
    return out


def _load_body(template_id: str) -> str:
    if template_id not in _COT_APPLICABLE:
        raise RenderError(f"unknown template '{template_id}'")
    ref = resources.files("agentsql.templates") / f"{template_id}.txt"
    return ref.read_text().rstrip("\n")


def _slot_names(body: str) -> set[str]:
    return {name for _, name, _, _ in string.Formatter().parse(body) if name}


def render(template_id: str, slots: dict[str, str], model: ModelProfile) -> str:
    """Fill a template's slots; appends the step-by-step suffix for non-thinking models.

    The aggregator's "Context: {hint}" fragment is dropped entirely when the
    hint is empty.
    """
    body = _load_body(template_id)
    if template_id == "ca_aggregator" and not slots.get("hint"):
        body = body.replace("{question} Context: {hint}", "{question}")
        slots = {k: v for k, v in slots.items() if k != "hint"}

    expected = _slot_names(body)
    given = set(slots)
    if given != expected:
        missing = expected - given
        extra = given - expected
        parts = []
        if missing:
            parts.append(f"missing slots: {sorted(missing)}")
        if extra:
            parts.append(f"unexpected slots: {sorted(extra)}")
        raise RenderError(f"template '{template_id}': " + "; ".join(parts))

    text = body.format(**slots)
    if _COT_APPLICABLE[template_id] and not model.thinking:
        text = f"{text}\n{COT_SUFFIX}"
    return text


def render_agent_responses(responses: list[tuple[int, str]]) -> str:
    """Format peer responses as numbered agent blocks for discuss/judge prompts."""
    blocks = [f"###### Agent {n}\n{text}" for n, text in responses]
    return "\n".join(blocks)


def render_joint_plans(plans: list[tuple[str, str]]) -> str:
    """Combine planner outputs; a single plan passes through without a header."""
    if not plans:
        raise ValueError("at least one plan required")
    if len(plans) == 1:
        return plans[0][1]
    blocks = [f"{JOINT_PLAN_HEADER.format(planner_id=pid)}\n{text}" for pid, text in plans]
    return "\n\n".join(blocks)


def render_candidates(candidates: list[tuple[int, str, str]]) -> str:
    """Format (ordinal, model_id, raw completion) coder candidates for the aggregator."""
    blocks = [f"###### Candidate {n} ({model_id})\n{text}" for n, model_id, text in candidates]
    return "\n".join(blocks)
