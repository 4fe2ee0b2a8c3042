"""HTTP service backing the rating workflow.

Serves diagrams to raters under optional blinding, assigns each diagram to a
fixed number of distinct raters (balanced round-robin), accepts rubric
submissions with server-side recomputation of the derived scores, collects
consensus hallucination tags, and reports live reliability summaries through
the same code path the offline statistics use.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from fastapi import Body, Depends, FastAPI, HTTPException, Query, Request
from fastapi.responses import Response

from .model import (
    Difficulty,
    EvaluationDataset,
    EvaluationRecord,
    HallucinationTags,
    Method,
    RubricAnnotation,
)
from .rubric import LayoutChecklist, ScoreRangeError
from .stats import DegenerateRatingsError, irr_per_criterion


@dataclass(frozen=True)
class StudyDiagram:
    """One unit of rating work."""

    diagram_id: str
    source_id: str
    source_text: str
    difficulty: Difficulty
    method: Method
    model: str
    image: Optional[bytes] = None
    image_format: str = "png"

    def __post_init__(self):
        object.__setattr__(self, "difficulty", Difficulty(self.difficulty))
        object.__setattr__(self, "method", Method(self.method))


def _round_half_up(values: list[int]) -> int:
    from fractions import Fraction

    mean = Fraction(sum(values), len(values))
    floor = mean.numerator // mean.denominator
    return floor + (1 if mean - floor >= Fraction(1, 2) else 0)


class StudyState:
    """All mutable study data; submission writes are serialized by a lock."""

    def __init__(
        self,
        diagrams: list[StudyDiagram],
        raters: dict[str, str],
        *,
        blinding: bool = True,
        raters_per_diagram: int = 2,
        data_dir: str | Path | None = None,
    ):
        if len(raters) < raters_per_diagram:
            raise ValueError(
                f"need at least {raters_per_diagram} raters, got {len(raters)}"
            )
        ids = [d.diagram_id for d in diagrams]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate diagram ids in study")
        self.diagrams = {d.diagram_id: d for d in diagrams}
        self.order = ids
        self.raters = dict(raters)  # rater_id -> token
        self.blinding = blinding
        self.raters_per_diagram = raters_per_diagram
        self.submissions: dict[tuple[str, str], RubricAnnotation] = {}
        self.consensus: dict[str, HallucinationTags] = {}
        self._lock = threading.Lock()
        self.data_dir = Path(data_dir) if data_dir else None
        self.assignments = self._assign()
        if self.data_dir:
            self.data_dir.mkdir(parents=True, exist_ok=True)
            self._replay()

    def _assign(self) -> dict[str, tuple[str, ...]]:
        """Balanced round-robin: diagram i goes to raters (i*k+j) mod P, j<k."""
        pool = sorted(self.raters)
        k = self.raters_per_diagram
        table = {}
        for i, diagram_id in enumerate(self.order):
            table[diagram_id] = tuple(pool[(i * k + j) % len(pool)] for j in range(k))
        return table

    # --- persistence ---

    def _journal(self) -> Path:
        return self.data_dir / "submissions.jsonl"

    def _record_event(self, kind: str, payload: dict) -> None:
        if not self.data_dir:
            return
        with self._journal().open("a", encoding="utf-8") as handle:
            handle.write(json.dumps({"kind": kind, **payload}, ensure_ascii=False) + "\n")

    def _replay(self) -> None:
        journal = self._journal()
        if not journal.exists():
            return
        for line in journal.read_text(encoding="utf-8").splitlines():
            event = json.loads(line)
            if event["kind"] == "score":
                ann = RubricAnnotation.from_dict(event["annotation"])
                self.submissions[(ann.diagram_id, ann.rater_id)] = ann
            elif event["kind"] == "consensus":
                self.consensus[event["diagram_id"]] = HallucinationTags.from_dict(event["tags"])

    # --- queries ---

    def rater_for_token(self, token: str) -> Optional[str]:
        for rater_id, expected in self.raters.items():
            if expected == token:
                return rater_id
        return None

    def assigned_to(self, rater_id: str) -> list[str]:
        return [d for d in self.order if rater_id in self.assignments[d]]

    def pending_for(self, rater_id: str) -> list[str]:
        return [
            d for d in self.assigned_to(rater_id) if (d, rater_id) not in self.submissions
        ]

    def completed(self, diagram_id: str) -> bool:
        return all(
            (diagram_id, rater) in self.submissions
            for rater in self.assignments[diagram_id]
        )

    # --- mutations ---

    def submit(self, rater_id: str, diagram_id: str, payload: dict) -> RubricAnnotation:
        if diagram_id not in self.diagrams:
            raise KeyError(diagram_id)
        if rater_id not in self.assignments[diagram_id]:
            raise PermissionError(f"{rater_id} is not assigned to {diagram_id}")
        try:
            flags = LayoutChecklist.from_dict(payload["layout_flags"])
            raw_tags = {"h_fact": False, "h_ae": False, "h_c": False, "h_log": False}
            raw_tags.update(payload.get("hallucination") or {})
            tags = HallucinationTags.from_dict(raw_tags)
            annotation = RubricAnnotation.from_subscores(
                diagram_id=diagram_id,
                rater_id=rater_id,
                l1=int(payload["l1"]),
                l2=int(payload["l2"]),
                l3=int(payload["l3"]),
                c2=int(payload["c2"]),
                layout_flags=flags,
                hallucination=tags,
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed submission: {exc}") from exc
        with self._lock:
            if (diagram_id, rater_id) in self.submissions:
                raise FileExistsError(f"{rater_id} already scored {diagram_id}")
            self.submissions[(diagram_id, rater_id)] = annotation
            self._record_event("score", {"annotation": annotation.to_dict()})
        return annotation

    def submit_consensus(self, diagram_id: str, tags: HallucinationTags) -> None:
        if diagram_id not in self.diagrams:
            raise KeyError(diagram_id)
        with self._lock:
            self.consensus[diagram_id] = tags
            self._record_event(
                "consensus", {"diagram_id": diagram_id, "tags": tags.to_dict()}
            )

    # --- exports ---

    def export_dataset(self, completed_only: bool = True) -> EvaluationDataset:
        """Dataset over (completed) units; diagram scores are rounded rater means."""
        records = []
        for diagram_id in self.order:
            annotations = [
                self.submissions[(diagram_id, rater)]
                for rater in self.assignments[diagram_id]
                if (diagram_id, rater) in self.submissions
            ]
            if completed_only and len(annotations) < self.raters_per_diagram:
                continue
            if not annotations:
                continue
            diagram = self.diagrams[diagram_id]
            records.append(
                EvaluationRecord(
                    diagram_id=diagram_id,
                    image_ref=f"{diagram_id}.{diagram.image_format}",
                    source_id=diagram.source_id,
                    source_text=diagram.source_text,
                    c1=_round_half_up([a.c1 for a in annotations]),
                    c2=_round_half_up([a.c2 for a in annotations]),
                    c3=_round_half_up([a.c3 for a in annotations]),
                    difficulty=diagram.difficulty,
                    method=diagram.method,
                    model=diagram.model,
                    annotations=tuple(annotations),
                    hallucination=self.consensus.get(diagram_id),
                )
            )
        return EvaluationDataset(records=tuple(records))

    def irr_summary(self) -> dict:
        dataset = self.export_dataset(completed_only=True)
        completed = len(dataset.records)
        body: dict = {
            "completed_units": completed,
            "total_units": len(self.order),
            "criteria": {},
        }
        if completed == 0:
            return body
        try:
            estimates = irr_per_criterion(dataset)
        except (DegenerateRatingsError, ValueError) as exc:
            body["message"] = str(exc)
            return body
        body["criteria"] = {name: est.to_dict() for name, est in estimates.items()}
        return body

    @classmethod
    def from_dataset(
        cls,
        dataset: EvaluationDataset,
        raters: dict[str, str],
        *,
        images: Optional[dict[str, bytes]] = None,
        **kwargs,
    ) -> "StudyState":
        diagrams = [
            StudyDiagram(
                diagram_id=r.diagram_id,
                source_id=r.source_id,
                source_text=r.source_text,
                difficulty=r.difficulty,
                method=r.method,
                model=r.model,
                image=(images or {}).get(r.diagram_id),
            )
            for r in dataset.records
        ]
        return cls(diagrams, raters, **kwargs)


def create_app(state: StudyState, frontend_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="diagram rating service")

    def authed_rater(request: Request) -> str:
        header = request.headers.get("authorization", "")
        if not header.lower().startswith("bearer "):
            raise HTTPException(status_code=401, detail="missing bearer token")
        rater_id = state.rater_for_token(header[7:].strip())
        if rater_id is None:
            raise HTTPException(status_code=401, detail="unknown token")
        return rater_id

    def diagram_view(diagram: StudyDiagram) -> dict:
        view = {
            "diagram_id": diagram.diagram_id,
            "difficulty": diagram.difficulty.value,
            "image_ref": f"/diagrams/{diagram.diagram_id}/image",
            "has_image": diagram.image is not None,
            "completed": state.completed(diagram.diagram_id),
        }
        if not state.blinding:
            view["method"] = diagram.method.value
            view["model"] = diagram.model
        return view

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "diagrams": len(state.order)}

    @app.get("/diagrams")
    def list_diagrams(_: str = Depends(authed_rater)) -> list[dict]:
        return [diagram_view(state.diagrams[d]) for d in state.order]

    @app.get("/diagrams/{diagram_id}")
    def get_diagram(diagram_id: str, _: str = Depends(authed_rater)) -> dict:
        if diagram_id not in state.diagrams:
            raise HTTPException(status_code=404, detail="unknown diagram")
        diagram = state.diagrams[diagram_id]
        view = diagram_view(diagram)
        view["source_text"] = diagram.source_text
        return view

    @app.get("/diagrams/{diagram_id}/image")
    def get_image(diagram_id: str, _: str = Depends(authed_rater)) -> Response:
        diagram = state.diagrams.get(diagram_id)
        if diagram is None:
            raise HTTPException(status_code=404, detail="unknown diagram")
        if diagram.image is None:
            raise HTTPException(status_code=404, detail="no image stored")
        media = "image/png" if diagram.image_format == "png" else "image/svg+xml"
        return Response(content=diagram.image, media_type=media)

    @app.get("/assignments")
    def assignments(rater: str = Query(...), rater_id: str = Depends(authed_rater)) -> dict:
        if rater != rater_id:
            raise HTTPException(status_code=403, detail="token does not match rater")
        pending = state.pending_for(rater_id)
        done = [d for d in state.assigned_to(rater_id) if d not in pending]
        return {"rater_id": rater_id, "pending": pending, "submitted": done}

    @app.post("/diagrams/{diagram_id}/scores", status_code=201)
    def submit_scores(
        diagram_id: str,
        payload: dict = Body(...),
        rater_id: str = Depends(authed_rater),
    ) -> dict:
        try:
            annotation = state.submit(rater_id, diagram_id, payload)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown diagram") from None
        except PermissionError as exc:
            raise HTTPException(status_code=403, detail=str(exc)) from None
        except FileExistsError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None
        except (ValueError, ScoreRangeError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        return annotation.to_dict()

    @app.post("/diagrams/{diagram_id}/consensus-hallucination")
    def submit_consensus(
        diagram_id: str,
        payload: dict = Body(...),
        _: str = Depends(authed_rater),
    ) -> dict:
        try:
            tags = HallucinationTags.from_dict(payload)
        except (KeyError, TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=f"bad consensus tags: {exc!r}") from None
        try:
            state.submit_consensus(diagram_id, tags)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown diagram") from None
        return {"diagram_id": diagram_id, "hallucination": tags.to_dict()}

    @app.get("/summary/irr")
    def irr(_: str = Depends(authed_rater)) -> dict:
        return state.irr_summary()

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="ui")

    return app
