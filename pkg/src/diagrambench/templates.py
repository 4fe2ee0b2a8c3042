"""Prompt templates with named slots.

Templates are bundled verbatim as JSON assets and never edited at runtime.
Slot substitution is a single literal pass: slot markers like ``{text}`` are
replaced exactly once, and braces inside bound values (dot code is full of
them) are never re-interpreted.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Mapping, Sequence

TEMPLATE_IDS = ("R1", "R2", "R3rst1", "R3rst2", "R30", "R4", "R5", "Ra")

SLOT_KINDS = ("text", "analysis_list", "example_pair_source", "example_pair_analysis")


class UnknownTemplateError(KeyError):
    pass


class UnboundSlotError(ValueError):
    """A required slot has no binding (the message names the slot)."""


class UnknownSlotError(ValueError):
    """A binding was supplied for a slot the template does not declare."""


@dataclass(frozen=True)
class SlotSpec:
    name: str
    kind: str
    required: bool = True


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    system: str
    user: str
    slots: tuple[SlotSpec, ...]

    def slot(self, name: str) -> SlotSpec:
        for spec in self.slots:
            if spec.name == name:
                return spec
        raise UnknownSlotError(f"template {self.template_id} has no slot {name!r}")


def _asset_bytes(name: str) -> bytes:
    return (resources.files("diagrambench") / "assets" / "templates" / name).read_bytes()


@lru_cache(maxsize=1)
def load_templates() -> dict[str, PromptTemplate]:
    registry: dict[str, PromptTemplate] = {}
    for template_id in TEMPLATE_IDS:
        raw = json.loads(_asset_bytes(f"{template_id}.json"))
        slots = tuple(
            SlotSpec(name=name, kind=spec["kind"], required=spec.get("required", True))
            for name, spec in raw.get("slots", {}).items()
        )
        for spec in slots:
            if spec.kind not in SLOT_KINDS:
                raise ValueError(f"template {template_id}: unknown slot kind {spec.kind!r}")
        registry[template_id] = PromptTemplate(
            template_id=raw["template_id"], system=raw["system"], user=raw["user"], slots=slots
        )
    return registry


def get_template(template_id: str) -> PromptTemplate:
    try:
        return load_templates()[template_id]
    except KeyError:
        raise UnknownTemplateError(f"unknown template: {template_id}") from None


def template_digests() -> dict[str, str]:
    """SHA-256 of each bundled template file, for drift detection."""
    return {
        template_id: hashlib.sha256(_asset_bytes(f"{template_id}.json")).hexdigest()
        for template_id in TEMPLATE_IDS
    }


def _format_binding(spec: SlotSpec, value: object) -> str:
    if spec.kind == "text":
        if not isinstance(value, str):
            raise TypeError(f"slot {spec.name!r} expects a string")
        return value
    if spec.kind == "analysis_list":
        if not isinstance(value, Sequence) or isinstance(value, str):
            raise TypeError(f"slot {spec.name!r} expects a sequence of analysis strings")
        parts = [f"***Analysis {i}***:\n{item}" for i, item in enumerate(value, start=1)]
        return "\n" + "\n\n".join(parts)
    if spec.kind == "example_pair_source":
        source, dot = value  # type: ignore[misc]
        return f"\n***Example text***:\n{source}\n\n***Example diagram***:\n{dot}"
    if spec.kind == "example_pair_analysis":
        analysis, dot = value  # type: ignore[misc]
        return f"\n***Example analysis***:\n{analysis}\n\n***Example diagram***:\n{dot}"
    raise ValueError(f"unknown slot kind {spec.kind!r}")


_SLOT_RE = re.compile(r"\{([a-z0-9_]+)\}")


def _substitute(body: str, rendered: Mapping[str, str], template: PromptTemplate) -> str:
    declared = {spec.name: spec for spec in template.slots}

    def repl(match: re.Match[str]) -> str:
        name = match.group(1)
        if name not in declared:
            return match.group(0)
        if name not in rendered:
            if not declared[name].required:
                return ""
            raise UnboundSlotError(f"slot {name!r} of template {template.template_id} is unbound")
        return rendered[name]

    return _SLOT_RE.sub(repl, body)


def render_prompt(template_id: str, bindings: Mapping[str, object]) -> tuple[str, str]:
    """Fill a template's slots; returns (system_message, user_message)."""
    template = get_template(template_id)
    declared = {spec.name: spec for spec in template.slots}
    for name in bindings:
        if name not in declared:
            raise UnknownSlotError(f"template {template_id} has no slot {name!r}")
    for spec in template.slots:
        if spec.required and spec.name not in bindings:
            raise UnboundSlotError(f"slot {spec.name!r} of template {template_id} is unbound")
    rendered = {name: _format_binding(declared[name], value) for name, value in bindings.items()}
    system = _substitute(template.system, rendered, template)
    user = _substitute(template.user, rendered, template)
    return system, user
