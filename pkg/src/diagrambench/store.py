"""Filesystem persistence: run directories, datasets, CSV exchange, bundled fixtures."""

from __future__ import annotations

import csv
import json
import os
import tempfile
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING, Optional

from .model import (
    EvaluationDataset,
    ExampleDictionary,
    HallucinationTags,
    PipelineRun,
    RubricAnnotation,
)
from .rubric import LayoutChecklist

if TYPE_CHECKING:
    from .render import DotRenderer


class StoreError(RuntimeError):
    pass


_RUN_JSON = "run.json"
_DOT_FILES = {
    "initial_code": "initial.dot",
    "refined_code": "refined.dot",
}

CSV_COLUMNS = (
    "kind", "diagram_id", "rater_id",
    "l1", "l2", "l3", "c1", "c2",
    "k1", "k2", "k3", "k4", "k5", "k6", "k7", "c3",
    "h_fact", "h_ae", "h_c", "h_log",
)


class ExperimentStore:
    """One directory per run; datasets and exports live beside them."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.runs_dir = self.root / "runs"
        self.runs_dir.mkdir(parents=True, exist_ok=True)

    def run_dir(self, run_id: str) -> Path:
        return self.runs_dir / run_id

    def save_run(self, run: PipelineRun) -> Path:
        """Write the run atomically; rewriting an existing run id is an error."""
        target = self.run_dir(run.run_id)
        if target.exists():
            raise StoreError(f"run {run.run_id} already exists; runs are immutable")
        staging = Path(tempfile.mkdtemp(prefix=f".{run.run_id}.", dir=self.runs_dir))
        try:
            (staging / _RUN_JSON).write_text(
                json.dumps(run.to_dict(), indent=2, ensure_ascii=False), encoding="utf-8"
            )
            for attr, filename in _DOT_FILES.items():
                source = getattr(run, attr)
                if source is not None:
                    (staging / filename).write_text(source.code, encoding="utf-8")
            effective = run.effective_final_code
            if effective is not None:
                (staging / "final.dot").write_text(effective.code, encoding="utf-8")
            if run.initial_image:
                (staging / f"initial.{run.image_format}").write_bytes(run.initial_image)
            if run.final_image:
                (staging / f"final.{run.image_format}").write_bytes(run.final_image)
            os.rename(staging, target)
        except FileExistsError:
            raise StoreError(f"run {run.run_id} already exists; runs are immutable") from None
        finally:
            if staging.exists():
                for child in staging.iterdir():
                    child.unlink()
                staging.rmdir()
        return target

    def load_run(self, run_id: str) -> PipelineRun:
        target = self.run_dir(run_id)
        run_json = target / _RUN_JSON
        if not run_json.exists():
            raise StoreError(f"run {run_id} not found under {self.runs_dir}")
        data = json.loads(run_json.read_text(encoding="utf-8"))
        fmt = data.get("image_format", "png")
        initial = target / f"initial.{fmt}"
        final = target / f"final.{fmt}"
        return PipelineRun.from_dict(
            data,
            initial_image=initial.read_bytes() if initial.exists() else None,
            final_image=final.read_bytes() if final.exists() else None,
        )

    def list_runs(self) -> list[str]:
        return sorted(
            p.name for p in self.runs_dir.iterdir()
            if p.is_dir() and (p / _RUN_JSON).exists()
        )

    def save_dataset(self, dataset: EvaluationDataset, name: str = "dataset.json") -> Path:
        path = self.root / name
        path.write_text(
            json.dumps(dataset.to_dict(), indent=2, ensure_ascii=False), encoding="utf-8"
        )
        return path

    def load_dataset(self, name: str = "dataset.json") -> EvaluationDataset:
        path = self.root / name
        if not path.exists():
            raise StoreError(f"dataset not found: {path}")
        return EvaluationDataset.from_dict(json.loads(path.read_text(encoding="utf-8")))


def load_dataset_file(path: str | Path) -> EvaluationDataset:
    file_path = Path(path)
    if not file_path.exists():
        raise StoreError(f"dataset not found: {file_path}")
    return EvaluationDataset.from_dict(json.loads(file_path.read_text(encoding="utf-8")))


def _bool_cell(value: bool) -> str:
    return "true" if value else "false"


def _parse_bool(cell: str) -> bool:
    lowered = cell.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no", ""):
        return False
    raise ValueError(f"not a boolean cell: {cell!r}")


def export_dataset_csv(dataset: EvaluationDataset, path: str | Path) -> Path:
    """One row per (diagram, rater) plus one consensus row per diagram."""
    out_path = Path(path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_COLUMNS)
        for record in dataset.records:
            for ann in record.annotations:
                flags = ann.layout_flags.as_tuple()
                writer.writerow(
                    ["rating", record.diagram_id, ann.rater_id,
                     ann.l1, ann.l2, ann.l3, ann.c1, ann.c2,
                     *[_bool_cell(f) for f in flags], ann.c3,
                     *[_bool_cell(v) for v in (
                         ann.hallucination.h_fact, ann.hallucination.h_ae,
                         ann.hallucination.h_c, ann.hallucination.h_log)]]
                )
            tags = record.hallucination
            writer.writerow(
                ["consensus", record.diagram_id, "",
                 "", "", "", record.c1, record.c2,
                 *[""] * 7, record.c3,
                 *[_bool_cell(v) for v in (tags.h_fact, tags.h_ae, tags.h_c, tags.h_log)]]
            )
    return out_path


def import_annotations(path: str | Path) -> tuple[list[RubricAnnotation], list[str]]:
    """Read rating rows back; every malformed row becomes a reported error.

    The stored c1/c3 cells must agree with recomputation from the raw
    subscores and flags; disagreement rejects the row.
    """
    annotations: list[RubricAnnotation] = []
    errors: list[str] = []
    with Path(path).open("r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise StoreError(f"CSV is missing columns: {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            if row["kind"] != "rating":
                continue
            try:
                flags = LayoutChecklist.from_flags(
                    tuple(_parse_bool(row[f"k{i}"]) for i in range(1, 8))
                )
                tags = HallucinationTags(
                    h_fact=_parse_bool(row["h_fact"]),
                    h_ae=_parse_bool(row["h_ae"]),
                    h_c=_parse_bool(row["h_c"]),
                    h_log=_parse_bool(row["h_log"]),
                )
                annotations.append(
                    RubricAnnotation(
                        diagram_id=row["diagram_id"],
                        rater_id=row["rater_id"],
                        l1=int(row["l1"]),
                        l2=int(row["l2"]),
                        l3=int(row["l3"]),
                        c1=int(row["c1"]),
                        c2=int(row["c2"]),
                        layout_flags=flags,
                        c3=int(row["c3"]),
                        hallucination=tags,
                    )
                )
            except (ValueError, KeyError) as exc:
                errors.append(f"row {lineno}: {exc}")
    return annotations, errors


def bundled_asset_path(*parts: str) -> Path:
    return Path(str(resources.files("diagrambench") / "assets")).joinpath(*parts)


def load_example_dictionary(
    path: str | Path | None = None, renderer: Optional["DotRenderer"] = None
) -> ExampleDictionary:
    """Load the demonstration dictionary (bundled by default).

    When a renderer is supplied, every entry's diagram is rendered once as a
    smoke test; a failing entry raises immediately.
    """
    source = Path(path) if path is not None else bundled_asset_path("example_dictionary.json")
    data = json.loads(source.read_text(encoding="utf-8"))
    dictionary = ExampleDictionary.from_dict(data)
    if renderer is not None:
        for entry in dictionary.entries:
            outcome = renderer.render(entry.diagram)
            if not outcome.ok:
                raise StoreError(
                    f"example dictionary entry {entry.index} does not render: "
                    f"{outcome.error.message}"
                )
    return dictionary
