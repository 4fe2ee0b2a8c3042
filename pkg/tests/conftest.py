from __future__ import annotations

import pytest

from diagrambench.model import (
    Difficulty,
    EvaluationDataset,
    EvaluationRecord,
    HallucinationTags,
    Method,
    RubricAnnotation,
    StepHallucinationRecord,
)
from diagrambench.render import DotRenderer
from diagrambench.rubric import LayoutChecklist


@pytest.fixture(scope="session")
def renderer() -> DotRenderer:
    return DotRenderer()


@pytest.fixture(scope="session")
def tiny_png(renderer) -> bytes:
    outcome = renderer.render("digraph { a -> b }")
    assert outcome.ok, outcome.error
    return outcome.image


def make_annotation(diagram_id: str, rater_id: str, l1=4, l2=4, l3=4, c2=4,
                    flags=(False,) * 7, tags: HallucinationTags | None = None) -> RubricAnnotation:
    return RubricAnnotation.from_subscores(
        diagram_id=diagram_id,
        rater_id=rater_id,
        l1=l1,
        l2=l2,
        l3=l3,
        c2=c2,
        layout_flags=LayoutChecklist.from_flags(flags),
        hallucination=tags or HallucinationTags(),
    )


def make_record(
    diagram_id: str,
    *,
    c1=4,
    c2=4,
    c3=4,
    difficulty=Difficulty.MEDIUM,
    method=Method.RST1,
    model="o3",
    source_id: str | None = None,
    source_text: str = "some text",
    annotations=(),
    hallucination: HallucinationTags | None = None,
    step: StepHallucinationRecord | None = None,
) -> EvaluationRecord:
    return EvaluationRecord(
        diagram_id=diagram_id,
        image_ref=f"{diagram_id}.png",
        source_id=source_id or f"src-{diagram_id}",
        source_text=source_text,
        c1=c1,
        c2=c2,
        c3=c3,
        difficulty=difficulty,
        method=method,
        model=model,
        annotations=tuple(annotations),
        hallucination=hallucination,
        step_hallucination=step,
    )


def make_rated_record(diagram_id: str, scores_a: tuple[int, int, int],
                      scores_b: tuple[int, int, int], **kwargs) -> EvaluationRecord:
    """Record with two rater annotations whose c1 values equal the given scores.

    The raters' c1 comes out of compute_c1, so the requested c1 must be
    attainable; (x, x, x) always yields x.
    """
    def ann(rater, triple):
        c1, c2, c3_score = triple
        flags = _flags_for_c3(c3_score)
        return make_annotation(diagram_id, rater, l1=c1, l2=c1, l3=c1, c2=c2, flags=flags)

    a = ann("rater-a", scores_a)
    b = ann("rater-b", scores_b)
    kwargs.setdefault("c1", a.c1)
    kwargs.setdefault("c2", a.c2)
    kwargs.setdefault("c3", a.c3)
    return make_record(diagram_id, annotations=(a, b), **kwargs)


def _flags_for_c3(score: int) -> tuple[bool, ...]:
    count = {5: 0, 4: 1, 3: 3, 2: 4, 1: 5}[score]
    return tuple(i < count for i in range(7))


def flags_for_c3(score: int) -> tuple[bool, ...]:
    return _flags_for_c3(score)


def dataset_of(*records) -> EvaluationDataset:
    return EvaluationDataset(records=tuple(records))
