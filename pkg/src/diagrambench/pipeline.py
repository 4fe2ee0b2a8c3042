"""Generation pipeline: analysis, example selection, ICL prompting, repair, refinement.

Three methods share the skeleton.  The two analysis-guided methods run all
seven steps; the zero-shot baseline skips analysis and example selection and
jumps straight to diagram generation.
"""

from __future__ import annotations

import datetime as _dt
import re
import uuid
from dataclasses import dataclass, field

from .gateway import ChatRequest, Gateway, GatewayError
from .model import (
    Demonstration,
    DotSource,
    DotStage,
    ExampleDictionary,
    Method,
    PipelineRun,
    RepairEntry,
    RstAnalysis,
    SourceText,
)
from .render import DotRenderer, check_disclaimer
from .templates import render_prompt

DEFAULT_MAX_REPAIR_ITERS = 5

STEP_ANALYSIS = "step1_analysis"
STEP_SELECT = "step2_select_example"
STEP_DEMONSTRATION = "step3_demonstration"
STEP_GENERATE = "step4_generate"
STEP_REPAIR_INITIAL = "step5_repair_initial"
STEP_REFINE = "step6_refine"
STEP_REPAIR_FINAL = "step7_repair_final"


class PipelineError(RuntimeError):
    """A pipeline step failed; carries the step tag and the partial run."""

    def __init__(self, step: str, cause: Exception, partial_run: PipelineRun | None = None):
        super().__init__(f"{step}: {cause}")
        self.step = step
        self.cause = cause
        self.partial_run = partial_run


class ExtractionError(ValueError):
    """No dot code block could be recovered from a model response."""


class RepairExhaustedError(RuntimeError):
    def __init__(self, entries: list[RepairEntry], last_error: str):
        super().__init__(f"code still broken after {len(entries)} repair rounds: {last_error}")
        self.entries = entries
        self.last_error = last_error


_FENCE_RE = re.compile(r"```(?:dot|graphviz|gv)?[ \t]*\n(.*?)```", re.DOTALL | re.IGNORECASE)
_GRAPH_HEAD_RE = re.compile(r"\b(?:strict\s+)?(?:di)?graph\b[^{]*\{")


def _balanced_graph_span(text: str, start: int) -> int | None:
    """Index just past the brace that closes the graph opened at ``start``."""
    depth = 0
    in_string = False
    i = text.index("{", start)
    while i < len(text):
        ch = text[i]
        if in_string:
            if ch == "\\":
                i += 1
            elif ch == '"':
                in_string = False
        elif ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return i + 1
        i += 1
    return None


def extract_dot_block(text: str) -> str:
    """Pull dot code out of a model response.

    Fenced code blocks win; otherwise the first balanced ``digraph``/``graph``
    body found in the raw text is used.
    """
    for match in _FENCE_RE.finditer(text):
        candidate = match.group(1).strip()
        if _GRAPH_HEAD_RE.search(candidate):
            return candidate
    head = _GRAPH_HEAD_RE.search(text)
    if head:
        end = _balanced_graph_span(text, head.start())
        if end is not None:
            return text[head.start() : end].strip()
    raise ExtractionError("response contains no dot code block")


def split_refinement(text: str) -> tuple[str, str]:
    """Separate refined dot code from the accompanying explanation prose."""
    code = extract_dot_block(text)
    explanation = text
    for match in _FENCE_RE.finditer(text):
        if code in match.group(1):
            explanation = text[: match.start()] + text[match.end() :]
            break
    else:
        idx = text.find(code)
        if idx != -1:
            explanation = text[:idx] + text[idx + len(code) :]
    explanation = explanation.strip()
    if not explanation:
        raise ExtractionError("refinement response carries no explanation text")
    return code, explanation


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


@dataclass
class GenerationPipeline:
    gateway: Gateway
    renderer: DotRenderer
    dictionary: ExampleDictionary | None = None
    max_repair_iters: int = DEFAULT_MAX_REPAIR_ITERS
    run_id_suffix: str | None = field(default=None, repr=False)  # tests pin this

    def _request(self, template_id: str, bindings: dict, model_id: str,
                 attachments: tuple[bytes, ...] = ()) -> ChatRequest:
        system, user = render_prompt(template_id, bindings)
        summary = {
            name: value for name, value in bindings.items() if isinstance(value, str)
        }
        return ChatRequest(
            model_id=model_id,
            system_message=system,
            user_message=user,
            template_id=template_id,
            attachments=attachments,
            slot_bindings=summary,
        )

    # --- individual steps ---

    def run_rst_analysis(self, source: SourceText, model_id: str) -> RstAnalysis:
        text = self.gateway.complete(self._request("R1", {"text": source.body}, model_id))
        if not text.strip():
            raise ExtractionError("analysis response is empty")
        return RstAnalysis(source_id=source.id, text=text, producer_model=model_id)

    def select_similar_example(self, analysis: RstAnalysis, model_id: str) -> int:
        if self.dictionary is None:
            raise PipelineError(STEP_SELECT, ValueError("no example dictionary configured"))
        request = self._request(
            "R2",
            {"example_analyses": self.dictionary.analyses(), "analyzed_text": analysis.text},
            model_id,
        )
        return self.gateway.complete_index_choice(request, self.dictionary.m)

    def construct_demonstration(self, method: Method, chosen: int) -> Demonstration:
        if self.dictionary is None:
            raise PipelineError(STEP_DEMONSTRATION, ValueError("no example dictionary configured"))
        entry = self.dictionary.entry(chosen)
        if method is Method.RST1:
            return Demonstration(kind=Method.RST1, parts=(entry.source.body, entry.diagram.code))
        if method is Method.RST2:
            return Demonstration(kind=Method.RST2, parts=(entry.analysis.text, entry.diagram.code))
        raise ValueError("zero-shot runs use no demonstration")

    def generate_diagram(self, method: Method, source: SourceText, model_id: str,
                         analysis: RstAnalysis | None = None,
                         demonstration: Demonstration | None = None) -> DotSource:
        if method is Method.RST1:
            assert demonstration is not None
            request = self._request(
                "R3rst1", {"example_1": demonstration.parts, "text": source.body}, model_id
            )
        elif method is Method.RST2:
            assert demonstration is not None and analysis is not None
            request = self._request(
                "R3rst2",
                {"example_2": demonstration.parts, "analyzed_text": analysis.text},
                model_id,
            )
        else:
            request = self._request("R30", {"text": source.body}, model_id)
        response = self.gateway.complete(request)
        return DotSource(code=extract_dot_block(response), stage=DotStage.INITIAL)

    def repair_until_renderable(
        self, code: str, repair_model_id: str, stage: DotStage
    ) -> tuple[list[RepairEntry], DotSource, bytes]:
        """Render; on failure ask for a fix and try again, up to the iteration cap."""
        entries: list[RepairEntry] = []
        current = code
        outcome = self.renderer.render(current)
        while not outcome.ok:
            if len(entries) >= self.max_repair_iters:
                raise RepairExhaustedError(entries, outcome.error.message)
            request = self._request(
                "R5", {"dot": current, "error": outcome.error.message}, repair_model_id
            )
            response = self.gateway.complete(request)
            corrected = extract_dot_block(response)
            entries.append(
                RepairEntry(faulty_code=current, error=outcome.error.message,
                            corrected_code=corrected)
            )
            current = corrected
            outcome = self.renderer.render(current)
        final_stage = stage if not entries else (
            DotStage.REPAIRED if stage is DotStage.INITIAL else stage
        )
        return entries, DotSource(code=current, stage=final_stage), outcome.image

    def refine_diagram(self, code: str, image: bytes, model_id: str) -> tuple[DotSource, str]:
        request = self._request("R4", {"dot": code}, model_id, attachments=(image,))
        response = self.gateway.complete(request)
        refined, explanation = split_refinement(response)
        return DotSource(code=refined, stage=DotStage.REFINED), explanation

    # --- full run ---

    def _new_run_id(self, source: SourceText, method: Method, model_id: str) -> str:
        suffix = self.run_id_suffix or uuid.uuid4().hex[:8]
        stamp = _dt.datetime.now(_dt.timezone.utc).strftime("%Y%m%dT%H%M%S")
        return f"{source.id}--{method.value}--{model_id}--{stamp}--{suffix}"

    def run(self, method: Method | str, source: SourceText, model_id: str,
            repair_model_id: str | None = None) -> PipelineRun:
        """Execute the pipeline; failures raise PipelineError carrying a partial run."""
        method = Method(method)
        repair_model = repair_model_id or model_id
        started = _now()
        run_id = self._new_run_id(source, method, model_id)
        state: dict = {}

        def fail(step: str, cause: Exception) -> PipelineError:
            partial = PipelineRun(
                run_id=run_id,
                method=method,
                source_id=source.id,
                model_id=model_id,
                repair_model_id=repair_model,
                analysis=state.get("analysis"),
                chosen_example=state.get("chosen"),
                demonstration=state.get("demonstration"),
                initial_code=state.get("initial_code"),
                initial_image=state.get("initial_image"),
                repair_log_initial=state.get("repair_initial", ()),
                refined_code=state.get("refined_code"),
                refinement_explanation=state.get("explanation", ""),
                repair_log_final=state.get("repair_final", ()),
                renderer_version=self.renderer.version(),
                started_at=started,
                finished_at=_now(),
                status="failed",
                failed_step=step,
                error=str(cause),
                source_body_hash=source.body_hash,
            )
            return PipelineError(step, cause, partial)

        if method in (Method.RST1, Method.RST2):
            try:
                state["analysis"] = self.run_rst_analysis(source, model_id)
            except (GatewayError, ExtractionError) as exc:
                raise fail(STEP_ANALYSIS, exc) from exc
            try:
                state["chosen"] = self.select_similar_example(state["analysis"], model_id)
            except GatewayError as exc:
                raise fail(STEP_SELECT, exc) from exc
            state["demonstration"] = self.construct_demonstration(method, state["chosen"])

        try:
            state["initial_code"] = self.generate_diagram(
                method, source, model_id,
                analysis=state.get("analysis"), demonstration=state.get("demonstration"),
            )
        except (GatewayError, ExtractionError) as exc:
            raise fail(STEP_GENERATE, exc) from exc

        try:
            repair_entries, renderable, image = self.repair_until_renderable(
                state["initial_code"].code, repair_model, DotStage.INITIAL
            )
            state["repair_initial"] = tuple(repair_entries)
            state["initial_image"] = image
        except (GatewayError, ExtractionError, RepairExhaustedError) as exc:
            if isinstance(exc, RepairExhaustedError):
                state["repair_initial"] = tuple(exc.entries)
            raise fail(STEP_REPAIR_INITIAL, exc) from exc

        try:
            state["refined_code"], state["explanation"] = self.refine_diagram(
                renderable.code, image, model_id
            )
        except (GatewayError, ExtractionError) as exc:
            raise fail(STEP_REFINE, exc) from exc

        try:
            final_entries, final_code, final_image = self.repair_until_renderable(
                state["refined_code"].code, repair_model, DotStage.FINAL
            )
            state["repair_final"] = tuple(final_entries)
        except (GatewayError, ExtractionError, RepairExhaustedError) as exc:
            if isinstance(exc, RepairExhaustedError):
                state["repair_final"] = tuple(exc.entries)
            raise fail(STEP_REPAIR_FINAL, exc) from exc

        return PipelineRun(
            run_id=run_id,
            method=method,
            source_id=source.id,
            model_id=model_id,
            repair_model_id=repair_model,
            analysis=state.get("analysis"),
            chosen_example=state.get("chosen"),
            demonstration=state.get("demonstration"),
            initial_code=state["initial_code"],
            initial_image=state["initial_image"],
            repair_log_initial=state["repair_initial"],
            refined_code=state["refined_code"],
            refinement_explanation=state["explanation"],
            repair_log_final=state["repair_final"],
            final_image=final_image,
            image_format=self.renderer.image_format,
            renderer_version=self.renderer.version(),
            started_at=started,
            finished_at=_now(),
            status="ok",
            disclaimer_present=check_disclaimer(final_code.code),
            source_body_hash=source.body_hash,
        )
