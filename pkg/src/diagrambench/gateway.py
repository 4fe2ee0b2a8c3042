"""Chat-completion gateway: HTTP backends, a deterministic scripted mock, and call logging.

Every call is appended to a JSONL log so tests and audits can replay exactly
which template went to which model with which payload.  Structured outputs
(score triples, index choices) are parsed from plain text with a bounded
retry loop rather than trusting the model to emit JSON.
"""

from __future__ import annotations

import datetime as _dt
import json
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

from .model import ScoreTriple


class GatewayError(Exception):
    pass


class TransportError(GatewayError):
    """Network-level failure; eligible for retry."""


class BackendRefusalError(GatewayError):
    """The backend answered but refused or errored; not retried."""


class StructuredOutputError(GatewayError):
    """Repeated attempts failed to yield a parseable structured answer."""


class ScriptExhaustedError(GatewayError):
    """The mock script ran out of entries."""


class ScriptMismatchError(GatewayError):
    """The next scripted entry does not match the incoming request."""


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion call: system+user text, optional image attachments."""

    model_id: str
    system_message: str = ""
    user_message: str = ""
    template_id: str | None = None
    attachments: tuple[bytes, ...] = ()
    slot_bindings: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.model_id:
            raise ValueError("model_id must be non-empty")
        if not self.system_message and not self.user_message:
            raise ValueError("request needs a system or user message")


@dataclass(frozen=True)
class BackendReply:
    text: str
    attachments_accepted: bool = True


class Backend(Protocol):
    def complete(self, request: ChatRequest) -> BackendReply: ...


@dataclass
class MockScriptEntry:
    """Matcher is a template id or a substring of the concatenated messages."""

    matcher: str
    response: str


class MockScript:
    def __init__(self, entries: Sequence[MockScriptEntry | tuple[str, str]]):
        self.entries = [
            entry if isinstance(entry, MockScriptEntry) else MockScriptEntry(*entry)
            for entry in entries
        ]
        self.cursor = 0
        self._lock = threading.Lock()

    def next(self, request: ChatRequest) -> str:
        with self._lock:
            if self.cursor >= len(self.entries):
                raise ScriptExhaustedError(
                    f"mock script exhausted after {len(self.entries)} entries"
                )
            entry = self.entries[self.cursor]
            haystack = f"{request.system_message}\n{request.user_message}"
            if entry.matcher != (request.template_id or "") and entry.matcher not in haystack:
                raise ScriptMismatchError(
                    f"script entry {self.cursor} expects {entry.matcher!r}; got template "
                    f"{request.template_id!r}"
                )
            self.cursor += 1
            return entry.response

    @property
    def exhausted(self) -> bool:
        return self.cursor >= len(self.entries)

    def assert_exhausted(self) -> None:
        if not self.exhausted:
            remaining = [e.matcher for e in self.entries[self.cursor :]]
            raise AssertionError(f"mock script has unconsumed entries: {remaining}")


@dataclass
class MockBackend:
    """Deterministic backend driven by an ordered script."""

    script: MockScript
    accepts_attachments: bool = True

    def complete(self, request: ChatRequest) -> BackendReply:
        text = self.script.next(request)
        return BackendReply(text=text, attachments_accepted=self.accepts_attachments)


@dataclass
class HttpBackend:
    """OpenAI-style chat completions endpoint; credentials come from the environment."""

    endpoint: str
    api_key_env: str = "DIAGRAMBENCH_API_KEY"
    timeout: float = 120.0
    temperature: float | None = None
    max_tokens: int | None = None

    def _api_key(self) -> str:
        import os

        key = os.environ.get(self.api_key_env, "")
        if not key:
            raise BackendRefusalError(f"environment variable {self.api_key_env} is not set")
        return key

    def complete(self, request: ChatRequest) -> BackendReply:
        import base64

        import httpx

        content: object = request.user_message
        if request.attachments:
            parts: list[dict] = [{"type": "text", "text": request.user_message}]
            for blob in request.attachments:
                encoded = base64.b64encode(blob).decode("ascii")
                parts.append(
                    {
                        "type": "image_url",
                        "image_url": {"url": f"data:image/png;base64,{encoded}"},
                    }
                )
            content = parts
        messages = []
        if request.system_message:
            messages.append({"role": "system", "content": request.system_message})
        messages.append({"role": "user", "content": content})
        payload: dict = {"model": request.model_id, "messages": messages}
        if self.temperature is not None:
            payload["temperature"] = self.temperature
        if self.max_tokens is not None:
            payload["max_tokens"] = self.max_tokens
        try:
            response = httpx.post(
                self.endpoint,
                json=payload,
                headers={"Authorization": f"Bearer {self._api_key()}"},
                timeout=self.timeout,
            )
        except httpx.HTTPError as exc:
            raise TransportError(f"request to {self.endpoint} failed: {exc}") from exc
        if response.status_code >= 500 or response.status_code == 429:
            raise TransportError(f"backend returned HTTP {response.status_code}")
        if response.status_code != 200:
            raise BackendRefusalError(
                f"backend returned HTTP {response.status_code}: {response.text[:500]}"
            )
        body = response.json()
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendRefusalError(f"malformed completion payload: {body}") from exc
        return BackendReply(text=text or "", attachments_accepted=True)


class CallLog:
    """Append-only JSONL record of every gateway call (including retries)."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.entries: list[dict] = []
        self._lock = threading.Lock()

    def append(self, entry: dict) -> None:
        line = json.dumps(entry, ensure_ascii=False)
        with self._lock:
            self.entries.append(entry)
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as handle:
                    handle.write(line + "\n")

    def by_template(self, template_id: str) -> list[dict]:
        return [e for e in self.entries if e.get("template_id") == template_id]


def parse_score_triple(text: str) -> ScoreTriple | None:
    """Extract ``Q1: a ... Q2: b ... Q3: c`` with each value in 1..5."""
    match = re.search(
        r"Q1\s*:\s*(-?\d+).*?Q2\s*:\s*(-?\d+).*?Q3\s*:\s*(-?\d+)", text, re.DOTALL
    )
    if not match:
        return None
    values = tuple(int(g) for g in match.groups())
    if any(not 1 <= v <= 5 for v in values):
        return None
    return ScoreTriple(c1=values[0], c2=values[1], c3=values[2])


def parse_index_choice(text: str, m: int) -> int | None:
    """Extract a single integer choice in 1..m; ambiguity or range misses fail."""
    candidates = {int(tok) for tok in re.findall(r"-?\d+", text)}
    if len(candidates) != 1:
        return None
    value = candidates.pop()
    if not 1 <= value <= m:
        return None
    return value


@dataclass
class Gateway:
    """Backend plus logging, bounded transport retries, and structured parsing."""

    backend: Backend
    call_log: CallLog = field(default_factory=CallLog)
    max_retries: int = 2
    structured_attempts: int = 3

    def _log(self, request: ChatRequest, *, attempt: int, response: str | None,
             error: str | None, attachments_accepted: bool, latency_ms: float) -> None:
        self.call_log.append(
            {
                "ts": _dt.datetime.now(_dt.timezone.utc).isoformat(),
                "model_id": request.model_id,
                "template_id": request.template_id,
                "system_message": request.system_message,
                "user_message": request.user_message,
                "slot_bindings": dict(request.slot_bindings),
                "attachment_count": len(request.attachments),
                "attachments_accepted": attachments_accepted,
                "attempt": attempt,
                "response": response,
                "error": error,
                "latency_ms": round(latency_ms, 3),
            }
        )

    def complete(self, request: ChatRequest) -> str:
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            start = time.monotonic()
            try:
                reply = self.backend.complete(request)
            except TransportError as exc:
                self._log(
                    request,
                    attempt=attempt,
                    response=None,
                    error=str(exc),
                    attachments_accepted=False,
                    latency_ms=(time.monotonic() - start) * 1000,
                )
                last_error = exc
                continue
            except GatewayError as exc:
                self._log(
                    request,
                    attempt=attempt,
                    response=None,
                    error=str(exc),
                    attachments_accepted=False,
                    latency_ms=(time.monotonic() - start) * 1000,
                )
                raise
            self._log(
                request,
                attempt=attempt,
                response=reply.text,
                error=None,
                attachments_accepted=reply.attachments_accepted,
                latency_ms=(time.monotonic() - start) * 1000,
            )
            return reply.text
        raise TransportError(
            f"gave up after {self.max_retries + 1} attempts: {last_error}"
        ) from last_error

    def _complete_parsed(self, request: ChatRequest, parse: Callable[[str], object | None],
                         description: str) -> object:
        failures: list[str] = []
        for _ in range(self.structured_attempts):
            text = self.complete(request)
            value = parse(text)
            if value is not None:
                return value
            failures.append(text[:200])
        raise StructuredOutputError(
            f"could not parse {description} after {self.structured_attempts} attempts; "
            f"last responses: {failures}"
        )

    def complete_score_triple(self, request: ChatRequest) -> ScoreTriple:
        value = self._complete_parsed(request, parse_score_triple, "a Q1/Q2/Q3 score triple")
        assert isinstance(value, ScoreTriple)
        return value

    def complete_index_choice(self, request: ChatRequest, m: int) -> int:
        value = self._complete_parsed(
            request, lambda text: parse_index_choice(text, m), f"an index choice in 1..{m}"
        )
        assert isinstance(value, int)
        return value


def scripted_gateway(entries: Sequence[MockScriptEntry | tuple[str, str]],
                     call_log: CallLog | None = None) -> tuple[Gateway, MockScript]:
    """Convenience: a gateway driven by an ordered mock script."""
    script = MockScript(entries)
    gateway = Gateway(backend=MockBackend(script=script), call_log=call_log or CallLog())
    return gateway, script
