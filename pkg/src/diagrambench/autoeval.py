"""Automated rubric scoring of diagrams in three prompting modes.

E1 shows the model scored examples only, E2 combines the rubric prompt with
the examples, E3 uses the rubric prompt alone.  Example-based modes must not
score diagrams that share a source text with the example set.  Each diagram
is scored on several passes and the per-criterion scores are aggregated by a
rounded mean (half rounds up).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from .gateway import ChatRequest, Gateway, GatewayError
from .model import EvaluationDataset, EvaluationRecord, ScoreTriple, SourceText
from .store import bundled_asset_path
from .templates import get_template

MODES = ("E1", "E2", "E3")
DEFAULT_REPEATS = 2


class AutoEvalUsageError(ValueError):
    """Mode/example-set combination is not allowed."""


@dataclass(frozen=True)
class ScoredExample:
    """A source text, its rendered diagram (optional bytes), and reference scores."""

    sample_id: str
    source: SourceText
    scores: ScoreTriple
    image: Optional[bytes] = None
    image_ref: Optional[str] = None


@dataclass(frozen=True)
class IclExampleSet:
    examples: tuple[ScoredExample, ...]

    def __post_init__(self):
        object.__setattr__(self, "examples", tuple(self.examples))
        if not self.examples:
            raise ValueError("example set must be non-empty")

    @property
    def source_ids(self) -> frozenset[str]:
        return frozenset(e.source.id for e in self.examples)

    @property
    def source_hashes(self) -> frozenset[str]:
        return frozenset(e.source.body_hash for e in self.examples)


def load_icl_examples(path: str | Path | None = None,
                      images_dir: str | Path | None = None) -> IclExampleSet:
    """Load the scored-example fixture (bundled by default).

    Diagram images are study artifacts; when ``images_dir`` is given, each
    example's ``image_ref`` is resolved against it and missing files are an
    error.  Without it the examples stay text-and-scores only.
    """
    source_path = Path(path) if path is not None else bundled_asset_path("icl_examples.json")
    data = json.loads(source_path.read_text(encoding="utf-8"))
    sources = {s["id"]: SourceText.from_dict(s) for s in data["sources"]}
    examples = []
    for raw in data["examples"]:
        image = None
        ref = raw.get("image_ref")
        if ref and images_dir is not None:
            image_path = Path(images_dir) / ref
            if not image_path.exists():
                raise FileNotFoundError(f"example image missing: {image_path}")
            image = image_path.read_bytes()
        examples.append(
            ScoredExample(
                sample_id=raw["sample_id"],
                source=sources[raw["source_id"]],
                scores=ScoreTriple(c1=raw["c1"], c2=raw["c2"], c3=raw["c3"]),
                image=image,
                image_ref=ref,
            )
        )
    return IclExampleSet(examples=tuple(examples))


def format_example_block(example_set: IclExampleSet) -> str:
    parts = []
    last_source = None
    for i, example in enumerate(example_set.examples, start=1):
        lines = [f"***Example {i}***"]
        if example.source.id != last_source:
            lines.append(f"***Text***:\n{example.source.body}")
            last_source = example.source.id
        scores = example.scores
        lines.append(f"***Scores***: Q1: {scores.c1} Q2: {scores.c2} Q3: {scores.c3}")
        parts.append("\n".join(lines))
    return "\n\n".join(parts)


@dataclass(frozen=True)
class AutoEvalConfig:
    mode: str
    model_id: str
    repeats: int = DEFAULT_REPEATS
    example_set: Optional[IclExampleSet] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise AutoEvalUsageError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.mode in ("E1", "E2") and self.example_set is None:
            raise AutoEvalUsageError(f"mode {self.mode} requires a scored example set")
        if self.mode == "E3" and self.example_set is not None:
            raise AutoEvalUsageError("mode E3 must not carry an example set")
        if self.repeats < 1:
            raise AutoEvalUsageError("repeats must be >= 1")


def build_eval_request(config: AutoEvalConfig, source_text: str,
                       image: Optional[bytes]) -> ChatRequest:
    """Compose the system/user messages for one scoring call."""
    rubric_body = get_template("Ra").system
    if config.mode == "E1":
        system = format_example_block(config.example_set)
    elif config.mode == "E2":
        system = rubric_body + "\n\n" + format_example_block(config.example_set)
    else:
        system = rubric_body
    attachments: list[bytes] = []
    if config.mode in ("E1", "E2"):
        attachments.extend(e.image for e in config.example_set.examples if e.image)
    if image:
        attachments.append(image)
    return ChatRequest(
        model_id=config.model_id,
        system_message=system,
        user_message=source_text,
        template_id=f"auto-{config.mode}",
        attachments=tuple(attachments),
    )


def round_half_up_mean(values: Sequence[int]) -> int:
    """Mean of integers, ties rounding up (3.5 -> 4)."""
    mean = Fraction(sum(values), len(values))
    floor = mean.numerator // mean.denominator
    return floor + (1 if mean - floor >= Fraction(1, 2) else 0)


@dataclass(frozen=True)
class DiagramEvaluation:
    diagram_id: str
    runs: tuple[ScoreTriple, ...]
    aggregated: ScoreTriple


@dataclass
class AutoEvalResult:
    mode: str
    model_id: str
    evaluations: list[DiagramEvaluation] = field(default_factory=list)
    excluded: list[str] = field(default_factory=list)
    failures: list[tuple[str, str]] = field(default_factory=list)  # (diagram_id, message)

    @property
    def complete(self) -> bool:
        return not self.failures


def _excluded(record: EvaluationRecord, config: AutoEvalConfig) -> bool:
    if config.example_set is None:
        return False
    return record.source_id in config.example_set.source_ids


def evaluate_record(gateway: Gateway, config: AutoEvalConfig,
                    record: EvaluationRecord,
                    image: Optional[bytes] = None) -> DiagramEvaluation:
    runs = []
    for _ in range(config.repeats):
        request = build_eval_request(config, record.source_text, image)
        runs.append(gateway.complete_score_triple(request))
    aggregated = ScoreTriple(
        c1=round_half_up_mean([r.c1 for r in runs]),
        c2=round_half_up_mean([r.c2 for r in runs]),
        c3=round_half_up_mean([r.c3 for r in runs]),
    )
    return DiagramEvaluation(diagram_id=record.diagram_id, runs=tuple(runs), aggregated=aggregated)


def evaluate_dataset(gateway: Gateway, config: AutoEvalConfig, dataset: EvaluationDataset,
                     images: Optional[dict[str, bytes]] = None) -> AutoEvalResult:
    """Score every eligible diagram; per-diagram failures are recorded, not fatal."""
    result = AutoEvalResult(mode=config.mode, model_id=config.model_id)
    for record in dataset.records:
        if _excluded(record, config):
            result.excluded.append(record.diagram_id)
            continue
        image = (images or {}).get(record.diagram_id)
        try:
            result.evaluations.append(evaluate_record(gateway, config, record, image))
        except GatewayError as exc:
            result.failures.append((record.diagram_id, str(exc)))
    return result


def write_scores_csv(result: AutoEvalResult, path: str | Path) -> Path:
    out_path = Path(path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["diagram_id", "mode", "model", "run_index", "c1", "c2", "c3", "aggregated"])
        for evaluation in result.evaluations:
            for idx, triple in enumerate(evaluation.runs, start=1):
                writer.writerow(
                    [evaluation.diagram_id, result.mode, result.model_id, idx,
                     triple.c1, triple.c2, triple.c3, "false"]
                )
            agg = evaluation.aggregated
            writer.writerow(
                [evaluation.diagram_id, result.mode, result.model_id, "",
                 agg.c1, agg.c2, agg.c3, "true"]
            )
    return out_path
