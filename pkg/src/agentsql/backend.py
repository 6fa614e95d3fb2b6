"""Chat-completion backends: OpenAI-compatible HTTP, scripted, and replay."""

from __future__ import annotations

import hashlib
import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import httpx

from .errors import BackendError, ContextOverflowError

DEFAULT_BUDGETS = {
    "baseline": 1024,
    "discussion": 4096,
    "judge": 4096,
    "planner": 8192,
    "coder": 1024,
    "aggregator": 8192,
}
THINKING_BASELINE_BUDGET = 8192

GREEDY_DECODE_KWARGS = {"temperature": 0.0, "repetition_penalty": 1.05}
SAMPLED_DECODE_KWARGS = {"temperature": 0.6, "top_p": 0.95, "top_k": 30, "repetition_penalty": 1.0}


@dataclass(frozen=True)
class DecodeParams:
    mode: str = "greedy"  # greedy | sampled
    temperature: float = 0.0
    top_p: float = 1.0
    top_k: int = 0
    repetition_penalty: float = 1.0
    seed: int | None = None

    def __post_init__(self):
        if self.mode not in ("greedy", "sampled"):
            raise ValueError(f"unknown decode mode '{self.mode}'")
        if self.mode == "sampled" and self.temperature <= 0:
            raise ValueError("sampled decoding requires temperature > 0")

    @classmethod
    def greedy(cls, seed: int | None = None) -> "DecodeParams":
        return cls(mode="greedy", repetition_penalty=1.05, seed=seed)

    @classmethod
    def sampled(cls, seed: int | None = None) -> "DecodeParams":
        return cls(mode="sampled", temperature=0.6, top_p=0.95, top_k=30,
                   repetition_penalty=1.0, seed=seed)


@dataclass(frozen=True)
class ModelProfile:
    model_id: str
    thinking: bool = False
    decode: DecodeParams | None = None
    budgets: dict = field(default_factory=dict)

    def default_decode(self, seed: int | None = None) -> DecodeParams:
        if self.decode is not None:
            return replace(self.decode, seed=seed)
        return DecodeParams.sampled(seed) if self.thinking else DecodeParams.greedy(seed)

    def budget_for(self, role: str) -> int:
        if role in self.budgets:
            return self.budgets[role]
        if role == "baseline" and self.thinking:
            return THINKING_BASELINE_BUDGET
        try:
            return DEFAULT_BUDGETS[role]
        except KeyError:
            raise ValueError(f"unknown role '{role}'") from None


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[tuple[str, str], ...]  # (role, text)
    decode: DecodeParams
    max_new_tokens: int
    tag: str
    role: str = "baseline"

    def __post_init__(self):
        if not self.messages:
            raise ValueError("messages must be nonempty")
        if self.messages[0][0] not in ("system", "user"):
            raise ValueError("first message must be system or user")

    def content_hash(self) -> str:
        payload = json.dumps([list(m) for m in self.messages], ensure_ascii=False)
        return hashlib.sha256(payload.encode()).hexdigest()


@dataclass(frozen=True)
class Completion:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0


class Backend:
    """Base backend with budget enforcement and a thread-safe trace log."""

    def __init__(self):
        self._trace: list[dict] = []
        self._trace_lock = threading.Lock()

    def complete(self, req: ChatRequest, profile: ModelProfile) -> Completion:
        budget = profile.budget_for(req.role)
        if req.max_new_tokens > budget:
            raise BackendError(
                f"request {req.tag}: max_new_tokens {req.max_new_tokens} exceeds "
                f"{req.role} budget {budget}"
            )
        start = time.monotonic()
        completion = self._complete(req, profile)
        latency = time.monotonic() - start
        with self._trace_lock:
            self._trace.append(
                {
                    "tag": req.tag,
                    "model_id": profile.model_id,
                    "role": req.role,
                    "messages": [list(m) for m in req.messages],
                    "response": completion.text,
                    "usage": {
                        "prompt_tokens": completion.prompt_tokens,
                        "completion_tokens": completion.completion_tokens,
                    },
                    "latency_s": latency,
                }
            )
        return completion

    def _complete(self, req: ChatRequest, profile: ModelProfile) -> Completion:
        raise NotImplementedError

    @property
    def trace(self) -> list[dict]:
        with self._trace_lock:
            return list(self._trace)

    def clear_trace(self):
        with self._trace_lock:
            self._trace.clear()


def batch(
    backend: Backend,
    reqs: list[ChatRequest],
    profile: ModelProfile,
    max_in_flight: int = 1,
) -> list[Completion | BackendError]:
    """Run requests concurrently; results are positionally aligned with reqs.

    A hard failure fills its own slot with the error and never aborts siblings.
    """
    if max_in_flight < 1:
        raise ValueError("max_in_flight must be >= 1")

    def one(req: ChatRequest):
        try:
            return backend.complete(req, profile)
        except BackendError as e:
            return e

    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(one, reqs))


class ScriptedBackend(Backend):
    """Returns canned responses in call order; wraps around when exhausted."""

    def __init__(self, responses: list[str]):
        super().__init__()
        if not responses:
            raise ValueError("scripted backend needs at least one response")
        self._responses = list(responses)
        self._lock = threading.Lock()
        self._i = 0

    def _complete(self, req: ChatRequest, profile: ModelProfile) -> Completion:
        with self._lock:
            text = self._responses[self._i % len(self._responses)]
            self._i += 1
        return Completion(text=text)


class ReplayBackend(Backend):
    """Deterministic fixture lookup by request tag (fallback: request hash).

    Fixture files are JSONL objects {"tag": ..., "response": ...} or
    {"request_hash": ..., "response": ...}.
    """

    def __init__(self, fixtures: dict[str, str]):
        super().__init__()
        self._fixtures = dict(fixtures)
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "ReplayBackend":
        fixtures = {}
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            key = rec.get("tag") or rec.get("request_hash")
            if key is None:
                raise ValueError(f"fixture record without tag or request_hash: {line[:80]}")
            fixtures[key] = rec["response"]
        return cls(fixtures)

    def _complete(self, req: ChatRequest, profile: ModelProfile) -> Completion:
        with self._lock:
            if req.tag in self._fixtures:
                return Completion(text=self._fixtures[req.tag])
            h = req.content_hash()
            if h in self._fixtures:
                return Completion(text=self._fixtures[h])
        raise BackendError(f"no replay fixture for tag '{req.tag}'")


class HttpBackend(Backend):
    """OpenAI-compatible /chat/completions client with bounded retries."""

    RETRIES = 3
    BACKOFF_S = 1.0

    def __init__(
        self,
        base_url: str,
        api_key: str = "",
        timeout_s: float = 300.0,
        send_sampler_extras: bool = True,
    ):
        super().__init__()
        self._base_url = base_url.rstrip("/")
        self._api_key = api_key
        self._timeout_s = timeout_s
        self._send_sampler_extras = send_sampler_extras
        self._client = httpx.Client(timeout=timeout_s)

    def _payload(self, req: ChatRequest, profile: ModelProfile) -> dict:
        d = req.decode
        payload = {
            "model": profile.model_id,
            "messages": [{"role": r, "content": t} for r, t in req.messages],
            "max_tokens": req.max_new_tokens,
            "temperature": 0.0 if d.mode == "greedy" else d.temperature,
        }
        if d.mode == "sampled":
            payload["top_p"] = d.top_p
        if d.seed is not None:
            payload["seed"] = d.seed
        if self._send_sampler_extras:
            # Non-standard fields; servers that reject them get a retry without.
            if d.mode == "sampled" and d.top_k:
                payload["top_k"] = d.top_k
            if d.repetition_penalty != 1.0:
                payload["repetition_penalty"] = d.repetition_penalty
        return payload

    def _complete(self, req: ChatRequest, profile: ModelProfile) -> Completion:
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        payload = self._payload(req, profile)
        last_error: Exception | None = None
        for attempt in range(self.RETRIES):
            try:
                resp = self._client.post(
                    f"{self._base_url}/chat/completions", json=payload, headers=headers
                )
                if resp.status_code == 400 and "context" in resp.text.lower():
                    raise ContextOverflowError(resp.text[:500])
                if resp.status_code == 400 and self._send_sampler_extras:
                    # Retry once without the non-standard sampler fields.
                    payload.pop("top_k", None)
                    payload.pop("repetition_penalty", None)
                resp.raise_for_status()
                body = resp.json()
                choice = body["choices"][0]
                usage = body.get("usage", {})
                return Completion(
                    text=choice["message"]["content"],
                    prompt_tokens=usage.get("prompt_tokens", 0),
                    completion_tokens=usage.get("completion_tokens", 0),
                )
            except ContextOverflowError:
                raise
            except (httpx.HTTPError, KeyError, ValueError) as e:
                last_error = e
                time.sleep(self.BACKOFF_S * (2**attempt))
        raise BackendError(f"request {req.tag} failed after {self.RETRIES} attempts: {last_error}")


def make_backend(kind: str, **kwargs) -> Backend:
    if kind == "http":
        return HttpBackend(**kwargs)
    if kind == "replay":
        path = kwargs.get("fixtures_path")
        if path:
            return ReplayBackend.from_file(path)
        return ReplayBackend(kwargs.get("fixtures", {}))
    if kind == "scripted":
        return ScriptedBackend(kwargs["responses"])
    raise ValueError(f"unknown backend kind '{kind}'")
