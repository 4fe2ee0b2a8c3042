"""Rendering of dot source through an external Graphviz-compatible command.

The renderer shells out to whatever ``dot``-compatible executable is
configured.  Discovery order: explicit argument, the ``DIAGRAMBENCH_DOT``
environment variable, a ``dot`` binary on PATH, then the bundled WASM shim
(which needs Node and a one-time ``npm install``).
"""

from __future__ import annotations

import re
import shlex
import shutil
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

from .model import DotSource, RenderError, RenderOutcome

DEFAULT_TIMEOUT = 30.0
DEFAULT_DISCLAIMER_PHRASES = ("generated with an AI", "AI model")

_SHIM_DIR = Path(__file__).parent / "assets" / "dotshim"


class RendererUnavailableError(RuntimeError):
    """No working dot-compatible renderer could be located."""


def _shim_command() -> list[str] | None:
    node = shutil.which("node")
    script = _SHIM_DIR / "dotshim.mjs"
    if node is None or not script.exists():
        return None
    if not (_SHIM_DIR / "node_modules").is_dir():
        npm = shutil.which("npm")
        if npm is None:
            return None
        proc = subprocess.run(
            [npm, "install", "--no-audit", "--no-fund"],
            cwd=_SHIM_DIR,
            capture_output=True,
            text=True,
            timeout=600,
        )
        if proc.returncode != 0:
            return None
    return [node, str(script)]


def discover_dot_command(explicit: str | list[str] | None = None, env: dict | None = None) -> list[str]:
    """Resolve the renderer command line, raising if nothing usable exists."""
    import os

    environ = env if env is not None else os.environ
    if explicit:
        return shlex.split(explicit) if isinstance(explicit, str) else list(explicit)
    from_env = environ.get("DIAGRAMBENCH_DOT")
    if from_env:
        return shlex.split(from_env)
    on_path = shutil.which("dot")
    if on_path:
        return [on_path]
    shim = _shim_command()
    if shim:
        return shim
    raise RendererUnavailableError(
        "no dot-compatible renderer found: set DIAGRAMBENCH_DOT, install graphviz, "
        "or provide node+npm for the bundled shim"
    )


@dataclass
class DotRenderer:
    """Runs dot source through the external renderer and captures outcomes."""

    command: list[str] | None = None
    timeout: float = DEFAULT_TIMEOUT
    image_format: str = "png"
    _version: str | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.command = discover_dot_command(self.command)

    def version(self) -> str:
        if self._version is None:
            proc = subprocess.run(
                self.command + ["-V"], capture_output=True, text=True, timeout=self.timeout
            )
            self._version = (proc.stderr or proc.stdout).strip()
        return self._version

    def render(self, source: DotSource | str, image_format: str | None = None) -> RenderOutcome:
        """Render dot code to image bytes; failures come back as RenderOutcome errors."""
        code = source.code if isinstance(source, DotSource) else source
        fmt = image_format or self.image_format
        version = self.version()
        try:
            proc = subprocess.run(
                self.command + [f"-T{fmt}"],
                input=code.encode("utf-8"),
                capture_output=True,
                timeout=self.timeout,
            )
        except subprocess.TimeoutExpired:
            return RenderOutcome(
                error=RenderError(
                    message=f"renderer timed out after {self.timeout:g}s", exit_status=None
                ),
                renderer_version=version,
            )
        if proc.returncode != 0 or not proc.stdout:
            message = proc.stderr.decode("utf-8", errors="replace").strip()
            if not message:
                message = "renderer produced no output"
            return RenderOutcome(
                error=RenderError(message=message, exit_status=proc.returncode),
                renderer_version=version,
            )
        return RenderOutcome(image=proc.stdout, image_format=fmt, renderer_version=version)


# --- lightweight dot-source inspection (no renderer involved) ---

_KEYWORDS = {"graph", "digraph", "subgraph", "node", "edge", "strict"}


def _tokenize(code: str) -> list[str] | None:
    """Split dot source into coarse tokens; None when quoting/comments are broken."""
    tokens: list[str] = []
    i, n = 0, len(code)
    while i < n:
        ch = code[i]
        if ch in " \t\r\n":
            i += 1
        elif code.startswith("//", i) or ch == "#":
            nl = code.find("\n", i)
            i = n if nl == -1 else nl + 1
        elif code.startswith("/*", i):
            end = code.find("*/", i + 2)
            if end == -1:
                return None
            i = end + 2
        elif ch == '"':
            j = i + 1
            while j < n:
                if code[j] == "\\":
                    j += 2
                elif code[j] == '"':
                    break
                else:
                    j += 1
            if j >= n:
                return None
            tokens.append(code[i : j + 1])
            i = j + 1
        elif code.startswith("->", i) or code.startswith("--", i):
            tokens.append(code[i : i + 2])
            i += 2
        elif ch in "{}[];,=:":
            tokens.append(ch)
            i += 1
        else:
            j = i
            while j < n and code[j] not in ' \t\r\n{}[];,=:"' and not code.startswith("->", j) and not code.startswith("--", j):
                j += 1
            tokens.append(code[i:j])
            i = j
    return tokens


def _unquote(token: str) -> str:
    if token.startswith('"') and token.endswith('"') and len(token) >= 2:
        return re.sub(r"\\(.)", r"\1", token[1:-1])
    return token


def check_disclaimer(code: str, phrases: tuple[str, ...] = DEFAULT_DISCLAIMER_PHRASES) -> bool:
    """True when a graph-level label carries one of the disclaimer phrases."""
    tokens = _tokenize(code)
    if tokens is None:
        return False
    labels: list[str] = []
    bracket_depth = 0
    for idx, tok in enumerate(tokens):
        if tok == "[":
            bracket_depth += 1
        elif tok == "]":
            bracket_depth = max(0, bracket_depth - 1)
        elif tok.lower() == "label" or _unquote(tok).lower() == "label":
            if idx + 2 < len(tokens) and tokens[idx + 1] == "=":
                if bracket_depth == 0:
                    labels.append(_unquote(tokens[idx + 2]))
                else:
                    # inside an attr list: only graph [...] lists are graph-level
                    open_idx = idx
                    while open_idx >= 0 and tokens[open_idx] != "[":
                        open_idx -= 1
                    if open_idx > 0 and tokens[open_idx - 1].lower() == "graph":
                        labels.append(_unquote(tokens[idx + 2]))
    lowered = [label.lower() for label in labels]
    return any(phrase.lower() in label for phrase in phrases for label in lowered)


@dataclass(frozen=True)
class LintIssue:
    kind: str
    detail: str


def static_lint(code: str) -> list[LintIssue]:
    """Structural checks on dot source: orphans, unused declarations, duplicate edges."""
    tokens = _tokenize(code)
    if tokens is None or not tokens:
        return [LintIssue(kind="unparseable", detail="unbalanced quote or comment")]
    if tokens.count("{") != tokens.count("}") or tokens.count("[") != tokens.count("]"):
        return [LintIssue(kind="unparseable", detail="unbalanced braces or brackets")]

    declared: set[str] = set()
    edge_endpoints: set[str] = set()
    edges: list[tuple[str, str]] = []
    bracket_depth = 0
    idx = 0
    while idx < len(tokens):
        tok = tokens[idx]
        if tok == "[":
            bracket_depth += 1
        elif tok == "]":
            bracket_depth -= 1
        elif bracket_depth == 0 and tok in ("->", "--"):
            tail = tokens[idx - 1] if idx > 0 else None
            head = tokens[idx + 1] if idx + 1 < len(tokens) else None
            if tail and head and tail not in "{}[];,=:" and head not in "{}[];,=:":
                tail_id = _unquote(tail).split(":")[0]
                head_id = _unquote(head).split(":")[0]
                if tail_id.lower() not in _KEYWORDS and head_id.lower() not in _KEYWORDS:
                    edges.append((tail_id, head_id))
                    edge_endpoints.update((tail_id, head_id))
        elif (
            bracket_depth == 0
            and tok not in "{}[];,=:"
            and tok not in ("->", "--")
            and _unquote(tok).lower() not in _KEYWORDS
        ):
            prev = tokens[idx - 1] if idx > 0 else None
            nxt = tokens[idx + 1] if idx + 1 < len(tokens) else None
            if nxt == "=" or prev == "=":
                idx += 1
                continue
            if prev in ("->", "--") or nxt in ("->", "--"):
                idx += 1
                continue
            if prev is not None and _unquote(prev).lower() in ("digraph", "graph", "subgraph"):
                idx += 1
                continue
            declared.add(_unquote(tok).split(":")[0])
        idx += 1

    nodes = declared | edge_endpoints
    issues: list[LintIssue] = [LintIssue(kind="node_count", detail=str(len(nodes)))]
    for name in sorted(nodes - edge_endpoints):
        issues.append(LintIssue(kind="orphan_node", detail=name))
    for name in sorted(declared - edge_endpoints):
        issues.append(LintIssue(kind="declared_unused", detail=name))
    seen: dict[tuple[str, str], int] = {}
    for pair in edges:
        seen[pair] = seen.get(pair, 0) + 1
    for (tail, head), count in sorted(seen.items()):
        if count > 1:
            issues.append(LintIssue(kind="duplicate_edge", detail=f"{tail} -> {head} (x{count})"))
    return issues
