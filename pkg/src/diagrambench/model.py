"""Shared domain types for diagram generation runs and their evaluation.

Every type is an immutable value (frozen dataclass) with a JSON-dict
round trip; no I/O or model calls happen here. Serialized field names
match the attribute names exactly.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import Optional

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class HallucinationTags:
    """Presence flags for the four hallucination types tracked per diagram.

    h_fact: content contradicting or unverifiable against world knowledge.
    h_ae: deviation from the layout instructions in the generation prompts.
    h_c: misalignment with the provided text context.
    h_log: internal logical inconsistency.
    """

    h_fact: bool = False
    h_ae: bool = False
    h_c: bool = False
    h_log: bool = False

    def __post_init__(self):
        for name in ("h_fact", "h_ae", "h_c", "h_log"):
            if not isinstance(getattr(self, name), bool):
                raise TypeError(f"{name} must be a bool")

    def any_present(self) -> bool:
        return self.h_fact or self.h_ae or self.h_c or self.h_log

    def to_dict(self) -> dict:
        return {"h_fact": self.h_fact, "h_ae": self.h_ae, "h_c": self.h_c, "h_log": self.h_log}

    @classmethod
    def from_dict(cls, d: dict) -> "HallucinationTags":
        return cls(
            h_fact=bool(d["h_fact"]),
            h_ae=bool(d["h_ae"]),
            h_c=bool(d["h_c"]),
            h_log=bool(d["h_log"]),
        )


class Difficulty(str, Enum):
    ADVANCED = "advanced"
    MEDIUM = "medium"
    BASIC = "basic"


class Method(str, Enum):
    RST1 = "rst1"
    RST2 = "rst2"
    ZERO_SHOT = "zero_shot"


class DotStage(str, Enum):
    INITIAL = "initial"
    REPAIRED = "repaired"
    REFINED = "refined"
    FINAL = "final"


def content_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class SourceText:
    """An input text with a difficulty tier."""

    id: str
    body: str
    difficulty: Difficulty
    license_note: str = ""

    def __post_init__(self):
        if not self.body:
            raise ValueError("source text body must be non-empty")
        object.__setattr__(self, "difficulty", Difficulty(self.difficulty))

    @property
    def body_hash(self) -> str:
        return content_hash(self.body)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "body": self.body,
            "difficulty": self.difficulty.value,
            "license_note": self.license_note,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SourceText":
        return cls(
            id=d["id"],
            body=d["body"],
            difficulty=Difficulty(d["difficulty"]),
            license_note=d.get("license_note", ""),
        )


@dataclass(frozen=True)
class RstAnalysis:
    """Raw discourse-analysis text for a source, kept verbatim as produced."""

    source_id: str
    text: str
    producer_model: str

    def __post_init__(self):
        if not self.text:
            raise ValueError("analysis text must be non-empty")

    def to_dict(self) -> dict:
        return {"source_id": self.source_id, "text": self.text, "producer_model": self.producer_model}

    @classmethod
    def from_dict(cls, d: dict) -> "RstAnalysis":
        return cls(source_id=d["source_id"], text=d["text"], producer_model=d["producer_model"])


@dataclass(frozen=True)
class DotSource:
    """A piece of Graphviz dot code at a known pipeline stage."""

    code: str
    stage: DotStage = DotStage.INITIAL

    def __post_init__(self):
        if not self.code:
            raise ValueError("dot code must be non-empty")
        object.__setattr__(self, "stage", DotStage(self.stage))

    def to_dict(self) -> dict:
        return {"code": self.code, "stage": self.stage.value}

    @classmethod
    def from_dict(cls, d: dict) -> "DotSource":
        return cls(code=d["code"], stage=DotStage(d["stage"]))


@dataclass(frozen=True)
class ExampleEntry:
    """One (source, analysis, diagram) triple of the demonstration dictionary."""

    index: int
    source: SourceText
    analysis: RstAnalysis
    diagram: DotSource

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "source": self.source.to_dict(),
            "analysis": self.analysis.to_dict(),
            "diagram": self.diagram.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExampleEntry":
        return cls(
            index=d["index"],
            source=SourceText.from_dict(d["source"]),
            analysis=RstAnalysis.from_dict(d["analysis"]),
            diagram=DotSource.from_dict(d["diagram"]),
        )


@dataclass(frozen=True)
class ExampleDictionary:
    """Ordered demonstration entries, indexed 1..M."""

    entries: tuple[ExampleEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        indices = [e.index for e in self.entries]
        if sorted(indices) != list(range(1, len(indices) + 1)):
            raise ValueError(f"entry indices must be exactly 1..M, got {indices}")

    @property
    def m(self) -> int:
        return len(self.entries)

    def entry(self, index: int) -> ExampleEntry:
        for e in self.entries:
            if e.index == index:
                return e
        raise IndexError(f"example index {index} out of range 1..{self.m}")

    def analyses(self) -> list[str]:
        return [e.analysis.text for e in sorted(self.entries, key=lambda e: e.index)]

    def to_dict(self) -> dict:
        return {"entries": [e.to_dict() for e in self.entries]}

    @classmethod
    def from_dict(cls, d: dict) -> "ExampleDictionary":
        return cls(entries=tuple(ExampleEntry.from_dict(e) for e in d["entries"]))


@dataclass(frozen=True)
class Demonstration:
    """In-context example pair: (source text, dot) or (analysis text, dot)."""

    kind: Method
    parts: tuple[str, str]

    def __post_init__(self):
        kind = Method(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "parts", tuple(self.parts))
        if kind not in (Method.RST1, Method.RST2):
            raise ValueError("demonstration kind must be rst1 or rst2")
        if len(self.parts) != 2 or not all(isinstance(p, str) and p for p in self.parts):
            raise ValueError("demonstration parts must be a pair of non-empty strings")

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "parts": list(self.parts)}

    @classmethod
    def from_dict(cls, d: dict) -> "Demonstration":
        return cls(kind=Method(d["kind"]), parts=tuple(d["parts"]))


@dataclass(frozen=True)
class RenderError:
    message: str
    exit_status: int

    def to_dict(self) -> dict:
        return {"message": self.message, "exit_status": self.exit_status}

    @classmethod
    def from_dict(cls, d: dict) -> "RenderError":
        return cls(message=d["message"], exit_status=d["exit_status"])


@dataclass(frozen=True)
class RenderOutcome:
    """Either rendered image bytes or the renderer's error, never both."""

    image: Optional[bytes] = None
    image_format: Optional[str] = None
    error: Optional[RenderError] = None
    renderer_version: str = ""

    def __post_init__(self):
        has_image = self.image is not None
        has_error = self.error is not None
        if has_image == has_error:
            raise ValueError("exactly one of image or error must be populated")
        if has_image and (not self.image or not self.image_format):
            raise ValueError("image branch requires non-empty bytes and a format tag")

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class RepairEntry:
    """One round of the render-repair loop."""

    faulty_code: str
    error: str
    corrected_code: str

    def to_dict(self) -> dict:
        return {"faulty_code": self.faulty_code, "error": self.error, "corrected_code": self.corrected_code}

    @classmethod
    def from_dict(cls, d: dict) -> "RepairEntry":
        return cls(faulty_code=d["faulty_code"], error=d["error"], corrected_code=d["corrected_code"])


@dataclass(frozen=True)
class PipelineRun:
    """Full trace of one generation run.

    For RST methods the analysis, chosen example, and demonstration are
    required; a zero-shot run must not carry them. Failed runs keep the
    partial trace plus the failing step tag.
    """

    run_id: str
    method: Method
    source_id: str
    model_id: str
    repair_model_id: str
    analysis: Optional[RstAnalysis] = None
    chosen_example: Optional[int] = None
    demonstration: Optional[Demonstration] = None
    initial_code: Optional[DotSource] = None
    initial_image: Optional[bytes] = None
    repair_log_initial: tuple[RepairEntry, ...] = ()
    refined_code: Optional[DotSource] = None
    refinement_explanation: str = ""
    repair_log_final: tuple[RepairEntry, ...] = ()
    final_image: Optional[bytes] = None
    image_format: str = "png"
    renderer_version: str = ""
    started_at: str = ""
    finished_at: str = ""
    status: str = "ok"
    failed_step: Optional[str] = None
    error: Optional[str] = None
    disclaimer_present: Optional[bool] = None
    source_body_hash: str = ""

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "repair_log_initial", tuple(self.repair_log_initial))
        object.__setattr__(self, "repair_log_final", tuple(self.repair_log_final))
        rst_only = {
            "analysis": self.analysis,
            "chosen_example": self.chosen_example,
            "demonstration": self.demonstration,
        }
        if self.method is Method.ZERO_SHOT:
            extras = [k for k, v in rst_only.items() if v is not None]
            if extras:
                raise ValueError(f"zero_shot run must not carry {extras}")
        elif self.status == "ok":
            missing = [k for k, v in rst_only.items() if v is None]
            if missing:
                raise ValueError(f"{self.method.value} run missing {missing}")
        if self.status == "ok" and not self.final_image:
            raise ValueError("successful run requires a non-empty final image")
        if self.status not in ("ok", "failed"):
            raise ValueError(f"unknown run status {self.status!r}")
        if self.status == "failed" and not self.failed_step:
            raise ValueError("failed run must name the failing step")

    @property
    def effective_initial_code(self) -> Optional[DotSource]:
        """The code whose render produced the pre-refinement image."""
        if self.repair_log_initial:
            return DotSource(self.repair_log_initial[-1].corrected_code, DotStage.REPAIRED)
        return self.initial_code

    @property
    def effective_final_code(self) -> Optional[DotSource]:
        """The code whose render produced the final image."""
        if self.repair_log_final:
            return DotSource(self.repair_log_final[-1].corrected_code, DotStage.FINAL)
        if self.refined_code is not None:
            return DotSource(self.refined_code.code, DotStage.FINAL)
        return None

    def to_dict(self) -> dict:
        """JSON form; image bytes are externalized by the store, not inlined."""
        return {
            "schema_version": SCHEMA_VERSION,
            "run_id": self.run_id,
            "method": self.method.value,
            "source_id": self.source_id,
            "model_id": self.model_id,
            "repair_model_id": self.repair_model_id,
            "analysis": self.analysis.to_dict() if self.analysis else None,
            "chosen_example": self.chosen_example,
            "demonstration": self.demonstration.to_dict() if self.demonstration else None,
            "initial_code": self.initial_code.to_dict() if self.initial_code else None,
            "repair_log_initial": [e.to_dict() for e in self.repair_log_initial],
            "refined_code": self.refined_code.to_dict() if self.refined_code else None,
            "refinement_explanation": self.refinement_explanation,
            "repair_log_final": [e.to_dict() for e in self.repair_log_final],
            "image_format": self.image_format,
            "renderer_version": self.renderer_version,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "status": self.status,
            "failed_step": self.failed_step,
            "error": self.error,
            "disclaimer_present": self.disclaimer_present,
            "source_body_hash": self.source_body_hash,
        }

    @classmethod
    def from_dict(cls, d: dict, initial_image: Optional[bytes] = None, final_image: Optional[bytes] = None) -> "PipelineRun":
        return cls(
            run_id=d["run_id"],
            method=Method(d["method"]),
            source_id=d["source_id"],
            model_id=d["model_id"],
            repair_model_id=d["repair_model_id"],
            analysis=RstAnalysis.from_dict(d["analysis"]) if d.get("analysis") else None,
            chosen_example=d.get("chosen_example"),
            demonstration=Demonstration.from_dict(d["demonstration"]) if d.get("demonstration") else None,
            initial_code=DotSource.from_dict(d["initial_code"]) if d.get("initial_code") else None,
            initial_image=initial_image,
            repair_log_initial=tuple(RepairEntry.from_dict(e) for e in d.get("repair_log_initial", [])),
            refined_code=DotSource.from_dict(d["refined_code"]) if d.get("refined_code") else None,
            refinement_explanation=d.get("refinement_explanation", ""),
            repair_log_final=tuple(RepairEntry.from_dict(e) for e in d.get("repair_log_final", [])),
            final_image=final_image,
            image_format=d.get("image_format", "png"),
            renderer_version=d.get("renderer_version", ""),
            started_at=d.get("started_at", ""),
            finished_at=d.get("finished_at", ""),
            status=d.get("status", "ok"),
            failed_step=d.get("failed_step"),
            error=d.get("error"),
            disclaimer_present=d.get("disclaimer_present"),
            source_body_hash=d.get("source_body_hash", ""),
        )


@dataclass(frozen=True)
class StepHallucinationRecord:
    """Expert verdicts on hallucination in intermediate pipeline outputs.

    True marks hallucination present; None marks a step that did not run
    (zero-shot runs have no analysis or similarity step, hence no h1/h2
    and nothing to inherit).
    """

    run_id: str
    h1: Optional[bool] = None
    h2: Optional[bool] = None
    h6: Optional[bool] = None
    h_inh: Optional[bool] = None

    def to_dict(self) -> dict:
        return {"run_id": self.run_id, "h1": self.h1, "h2": self.h2, "h6": self.h6, "h_inh": self.h_inh}

    @classmethod
    def from_dict(cls, d: dict) -> "StepHallucinationRecord":
        return cls(run_id=d["run_id"], h1=d.get("h1"), h2=d.get("h2"), h6=d.get("h6"), h_inh=d.get("h_inh"))


@dataclass(frozen=True)
class ScoreTriple:
    c1: int
    c2: int
    c3: int

    def __post_init__(self):
        for name in ("c1", "c2", "c3"):
            v = getattr(self, name)
            if not isinstance(v, int) or not 1 <= v <= 5:
                raise ValueError(f"{name} must be an integer in 1..5, got {v!r}")

    def to_dict(self) -> dict:
        return {"c1": self.c1, "c2": self.c2, "c3": self.c3}

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreTriple":
        return cls(c1=d["c1"], c2=d["c2"], c3=d["c3"])


@dataclass(frozen=True)
class RubricAnnotation:
    """One rater's full rubric entry for one diagram.

    The stored c1/c3 must equal recomputation from the subscores/flags;
    construction enforces it, and validate_record re-checks imported data.
    """

    diagram_id: str
    rater_id: str
    l1: int
    l2: int
    l3: int
    c1: int
    c2: int
    layout_flags: "LayoutChecklist"
    c3: int
    hallucination: "HallucinationTags"

    def __post_init__(self):
        from . import rubric

        for name in ("l1", "l2", "l3", "c1", "c2", "c3"):
            v = getattr(self, name)
            if not isinstance(v, int) or not 1 <= v <= 5:
                raise ValueError(f"{name} must be an integer in 1..5, got {v!r}")
        expected_c1 = rubric.compute_c1(self.l1, self.l2, self.l3)
        if self.c1 != expected_c1:
            raise ValueError(f"stored c1={self.c1} but L=({self.l1},{self.l2},{self.l3}) derives {expected_c1}")
        expected_c3 = rubric.compute_c3(self.layout_flags)
        if self.c3 != expected_c3:
            raise ValueError(f"stored c3={self.c3} but flags derive {expected_c3}")

    @classmethod
    def from_subscores(cls, diagram_id, rater_id, l1, l2, l3, c2, layout_flags, hallucination) -> "RubricAnnotation":
        from . import rubric

        if not isinstance(layout_flags, rubric.LayoutChecklist):
            layout_flags = rubric.LayoutChecklist.from_flags(layout_flags)
        return cls(
            diagram_id=diagram_id,
            rater_id=rater_id,
            l1=l1,
            l2=l2,
            l3=l3,
            c1=rubric.compute_c1(l1, l2, l3),
            c2=rubric.validate_c2(c2),
            layout_flags=layout_flags,
            c3=rubric.compute_c3(layout_flags),
            hallucination=hallucination,
        )

    def to_dict(self) -> dict:
        return {
            "diagram_id": self.diagram_id,
            "rater_id": self.rater_id,
            "l1": self.l1,
            "l2": self.l2,
            "l3": self.l3,
            "c1": self.c1,
            "c2": self.c2,
            "layout_flags": self.layout_flags.to_dict(),
            "c3": self.c3,
            "hallucination": self.hallucination.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RubricAnnotation":
        from . import rubric

        return cls(
            diagram_id=d["diagram_id"],
            rater_id=d["rater_id"],
            l1=d["l1"],
            l2=d["l2"],
            l3=d["l3"],
            c1=d["c1"],
            c2=d["c2"],
            layout_flags=rubric.LayoutChecklist.from_dict(d["layout_flags"]),
            c3=d["c3"],
            hallucination=HallucinationTags.from_dict(d["hallucination"]),
        )


@dataclass(frozen=True)
class EvaluationRecord:
    """One diagram's row in the evaluation dataset.

    Carries the study's per-diagram criterion scores, the individual
    rater annotations, the consensus hallucination tags reached by
    discussion, and the per-step hallucination verdicts.
    """

    diagram_id: str
    image_ref: str
    source_id: str
    source_text: str
    c1: int
    c2: int
    c3: int
    difficulty: Difficulty
    method: Method
    model: str
    annotations: tuple[RubricAnnotation, ...] = ()
    hallucination: "HallucinationTags" = None  # type: ignore[assignment]
    step_hallucination: Optional[StepHallucinationRecord] = None

    def __post_init__(self):
        object.__setattr__(self, "difficulty", Difficulty(self.difficulty))
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "annotations", tuple(self.annotations))
        if self.hallucination is None:
            object.__setattr__(self, "hallucination", HallucinationTags())
        for name in ("c1", "c2", "c3"):
            v = getattr(self, name)
            if not isinstance(v, int) or not 1 <= v <= 5:
                raise ValueError(f"{name} must be an integer in 1..5, got {v!r}")

    def to_dict(self) -> dict:
        return {
            "diagram_id": self.diagram_id,
            "image_ref": self.image_ref,
            "source_id": self.source_id,
            "source_text": self.source_text,
            "c1": self.c1,
            "c2": self.c2,
            "c3": self.c3,
            "difficulty": self.difficulty.value,
            "method": self.method.value,
            "model": self.model,
            "annotations": [a.to_dict() for a in self.annotations],
            "hallucination": self.hallucination.to_dict(),
            "step_hallucination": self.step_hallucination.to_dict() if self.step_hallucination else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationRecord":
        return cls(
            diagram_id=d["diagram_id"],
            image_ref=d["image_ref"],
            source_id=d["source_id"],
            source_text=d.get("source_text", ""),
            c1=d["c1"],
            c2=d["c2"],
            c3=d["c3"],
            difficulty=Difficulty(d["difficulty"]),
            method=Method(d["method"]),
            model=d["model"],
            annotations=tuple(RubricAnnotation.from_dict(a) for a in d.get("annotations", [])),
            hallucination=HallucinationTags.from_dict(d["hallucination"]) if d.get("hallucination") else HallucinationTags(),
            step_hallucination=StepHallucinationRecord.from_dict(d["step_hallucination"]) if d.get("step_hallucination") else None,
        )


@dataclass(frozen=True)
class EvaluationDataset:
    records: tuple[EvaluationRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        ids = [r.diagram_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate diagram_id in dataset")

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "records": [r.to_dict() for r in self.records]}

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationDataset":
        return cls(records=tuple(EvaluationRecord.from_dict(r) for r in d["records"]))


def validate_record(record: EvaluationRecord, expected_raters: int = 2) -> list[str]:
    """Report every invariant violation in one dataset record.

    Returns human-readable violation strings; an empty list means valid.
    Checks score ranges, derived-score consistency of each annotation,
    the two-raters-per-diagram completeness rule, and step-record shape.
    """
    from . import rubric

    problems: list[str] = []
    for name in ("c1", "c2", "c3"):
        v = getattr(record, name)
        if not 1 <= v <= 5:
            problems.append(f"{name}={v} out of range 1..5")
    raters = [a.rater_id for a in record.annotations]
    if len(set(raters)) != len(raters):
        problems.append(f"duplicate rater ids {raters}")
    if len(record.annotations) != expected_raters:
        problems.append(f"expected {expected_raters} rater annotations, found {len(record.annotations)}")
    for ann in record.annotations:
        if ann.diagram_id != record.diagram_id:
            problems.append(f"annotation of rater {ann.rater_id} points at {ann.diagram_id}")
        for name in ("l1", "l2", "l3", "c1", "c2", "c3"):
            v = getattr(ann, name)
            if not 1 <= v <= 5:
                problems.append(f"rater {ann.rater_id}: {name}={v} out of range 1..5")
        expected_c1 = rubric.compute_c1(ann.l1, ann.l2, ann.l3)
        if ann.c1 != expected_c1:
            problems.append(f"rater {ann.rater_id}: stored c1={ann.c1} != derived {expected_c1}")
        expected_c3 = rubric.compute_c3(ann.layout_flags)
        if ann.c3 != expected_c3:
            problems.append(f"rater {ann.rater_id}: stored c3={ann.c3} != derived {expected_c3}")
    sh = record.step_hallucination
    if sh is not None and record.method is Method.ZERO_SHOT:
        for name in ("h1", "h2", "h_inh"):
            if getattr(sh, name) is not None:
                problems.append(f"zero_shot record carries step tag {name}")
    return problems


def validate_dataset(dataset: EvaluationDataset, expected_raters: int = 2) -> dict[str, list[str]]:
    """Per-diagram validation reports for every invalid record."""
    reports = {}
    for record in dataset.records:
        problems = validate_record(record, expected_raters=expected_raters)
        if problems:
            reports[record.diagram_id] = problems
    return reports
