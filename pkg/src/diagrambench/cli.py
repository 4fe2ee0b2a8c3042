"""Command line entry point for batch experiments.

Exit codes: 0 success, 1 usage error, 2 environment error (no renderer or
backend misconfiguration), 3 partial failure (some units failed; a report
file is written).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import autoeval as autoeval_mod
from . import stats as stats_mod
from .config import AppConfig, ConfigError, load_config
from .gateway import CallLog, Gateway, HttpBackend, MockBackend, MockScript
from .model import Difficulty, EvaluationDataset, Method, SourceText
from .pipeline import GenerationPipeline, PipelineError
from .render import DotRenderer, RendererUnavailableError
from .store import ExperimentStore, load_dataset_file, load_example_dictionary

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ENV = 2
EXIT_PARTIAL = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; this workbench reserves 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class EnvironmentProblem(RuntimeError):
    pass


def _load_mock_script(path: str) -> MockScript:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    entries = []
    for item in raw:
        if isinstance(item, dict):
            entries.append((item["matcher"], item["response"]))
        else:
            entries.append((item[0], item[1]))
    return MockScript(entries)


def build_gateway(config: AppConfig, out_dir: Path) -> Gateway:
    gw = config.gateway
    call_log = CallLog(gw.call_log or out_dir / "calls.jsonl")
    if gw.backend == "mock":
        if not gw.mock_script:
            raise EnvironmentProblem(
                "mock backend needs a script (gateway.mock_script or --mock-script)"
            )
        backend = MockBackend(script=_load_mock_script(gw.mock_script))
    else:
        import os

        if not os.environ.get(gw.api_key_env):
            raise EnvironmentProblem(
                f"http backend needs the {gw.api_key_env} environment variable"
            )
        backend = HttpBackend(
            endpoint=gw.endpoint, api_key_env=gw.api_key_env, temperature=gw.temperature
        )
    return Gateway(
        backend=backend,
        call_log=call_log,
        max_retries=gw.max_retries,
        structured_attempts=gw.structured_attempts,
    )


def load_texts(path: str | Path) -> list[SourceText]:
    """Read source texts from a directory of .txt files with optional sidecars.

    ``name.txt`` holds the body; ``name.json`` may set id, difficulty, and
    license_note (defaults: stem as id, medium difficulty).
    """
    directory = Path(path)
    if not directory.is_dir():
        raise EnvironmentProblem(f"texts directory not found: {directory}")
    texts = []
    for txt in sorted(directory.glob("*.txt")):
        meta = {}
        sidecar = txt.with_suffix(".json")
        if sidecar.exists():
            meta = json.loads(sidecar.read_text(encoding="utf-8"))
        texts.append(
            SourceText(
                id=meta.get("id", txt.stem),
                body=txt.read_text(encoding="utf-8"),
                difficulty=Difficulty(meta.get("difficulty", "medium")),
                license_note=meta.get("license_note", ""),
            )
        )
    if not texts:
        raise EnvironmentProblem(f"no .txt files under {directory}")
    return texts


def _effective_config_dump(config: AppConfig, out_dir: Path, extra: dict) -> None:
    from dataclasses import asdict

    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"config": asdict(config), **extra}
    (out_dir / "effective_config.json").write_text(
        json.dumps(payload, indent=2, default=str), encoding="utf-8"
    )


def _apply_generate_flags(config: AppConfig, args) -> AppConfig:
    from dataclasses import replace

    gw = config.gateway
    if args.model:
        gw = replace(gw, model_id=args.model)
    if args.repair_model:
        gw = replace(gw, repair_model_id=args.repair_model)
    if args.mock_script:
        gw = replace(gw, mock_script=args.mock_script)
    if args.backend:
        gw = replace(gw, backend=args.backend)
    config = replace(config, gateway=gw)
    if args.out:
        config = replace(config, out_dir=args.out)
    if args.max_repairs is not None:
        config = replace(config, max_repair_iters=args.max_repairs)
    return config


def cmd_generate(args) -> int:
    try:
        config = _apply_generate_flags(load_config(args.config), args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENV
    out_dir = Path(config.out_dir)
    method = Method(args.method.replace("-", "_"))
    try:
        texts = load_texts(args.texts)
        renderer = DotRenderer(
            command=config.render.dot_command,
            timeout=config.render.timeout,
            image_format=config.render.image_format,
        )
        gateway = build_gateway(config, out_dir)
    except (EnvironmentProblem, RendererUnavailableError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENV

    _effective_config_dump(
        config, out_dir,
        {"command": "generate", "method": method.value, "texts": [t.id for t in texts]},
    )
    store = ExperimentStore(out_dir)
    dictionary = load_example_dictionary(args.dictionary)
    pipeline = GenerationPipeline(
        gateway=gateway,
        renderer=renderer,
        dictionary=dictionary,
        max_repair_iters=config.max_repair_iters,
    )

    def one(text: SourceText) -> tuple[str, str | None]:
        try:
            run = pipeline.run(
                method, text, config.gateway.model_id, config.gateway.repair_model_id
            )
            store.save_run(run)
            return run.run_id, None
        except PipelineError as exc:
            if exc.partial_run is not None:
                store.save_run(exc.partial_run)
                return exc.partial_run.run_id, f"{exc.step}: {exc.cause}"
            return text.id, f"{exc.step}: {exc.cause}"

    results: list[tuple[str, str | None]] = []
    if args.jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(one, texts))
    else:
        results = [one(text) for text in texts]

    failures = [(rid, err) for rid, err in results if err]
    for rid, _ in results:
        print(rid)
    if failures:
        report = {
            "failed": [{"run_id": rid, "error": err} for rid, err in failures],
            "succeeded": [rid for rid, err in results if not err],
        }
        report_path = out_dir / "generate_report.json"
        report_path.write_text(json.dumps(report, indent=2), encoding="utf-8")
        print(f"{len(failures)} of {len(results)} runs failed; report: {report_path}",
              file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_autoeval(args, parser: _Parser) -> int:
    mode = args.mode.upper()
    example_set = None
    if args.icl_examples:
        if mode == "E3":
            parser.error("mode e3 does not take --icl-examples")
        path = None if args.icl_examples == "bundled" else args.icl_examples
        example_set = autoeval_mod.load_icl_examples(path, images_dir=args.images_dir)
    elif mode in ("E1", "E2"):
        parser.error(f"mode {args.mode} requires --icl-examples (path or 'bundled')")
    try:
        eval_config = autoeval_mod.AutoEvalConfig(
            mode=mode, model_id=args.model, repeats=args.repeats, example_set=example_set
        )
    except autoeval_mod.AutoEvalUsageError as exc:
        parser.error(str(exc))

    try:
        config = load_config(args.config)
        if args.mock_script:
            from dataclasses import replace

            config = replace(config, gateway=replace(config.gateway, mock_script=args.mock_script))
        dataset = load_dataset_file(args.dataset)
        out_path = Path(args.out)
        gateway = build_gateway(config, out_path.parent)
    except (EnvironmentProblem, ConfigError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENV

    images = {}
    if args.images_dir:
        for record in dataset.records:
            candidate = Path(args.images_dir) / record.image_ref
            if candidate.exists():
                images[record.diagram_id] = candidate.read_bytes()
    result = autoeval_mod.evaluate_dataset(gateway, eval_config, dataset, images=images)
    autoeval_mod.write_scores_csv(result, out_path)
    print(f"scored {len(result.evaluations)} diagrams "
          f"({len(result.excluded)} excluded) -> {out_path}")
    if result.failures:
        report_path = out_path.with_suffix(".failures.json")
        report_path.write_text(
            json.dumps([{"diagram_id": d, "error": e} for d, e in result.failures], indent=2),
            encoding="utf-8",
        )
        print(f"{len(result.failures)} diagrams failed; report: {report_path}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _format_ratio(value) -> str:
    return "" if value is None else f"{float(value):.2f}"


def _write_stats_csvs(tables: stats_mod.SummaryTables, out_dir: Path) -> None:
    import csv

    with (out_dir / "summary_criteria.csv").open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["model", "method", "criterion",
             "p1", "p2", "p3", "p4", "p5", "modes", "q1", "q2", "q3",
             "g_advanced", "g_medium", "g_basic"]
        )
        for group in tables.groups:
            for criterion, summary in group.criteria.items():
                writer.writerow(
                    [group.model, group.method, criterion,
                     *[_format_ratio(summary.distribution[s]) for s in stats_mod.SCORES],
                     "|".join(str(m) for m in summary.modes),
                     *[f"{q:g}" for q in summary.quartiles],
                     *[_format_ratio(summary.g_by_difficulty[d])
                       for d in ("advanced", "medium", "basic")]]
                )

    with (out_dir / "summary_hallucination.csv").open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["model", "method", "h_fact_free", "h_ae_free", "h_c_free",
                         "h_log_free", "g_r"])
        for group in tables.groups:
            writer.writerow(
                [group.model, group.method,
                 *[_format_ratio(group.hallucination_free[t]) for t in stats_mod.ALL_TAGS],
                 _format_ratio(group.g_r)]
            )

    with (out_dir / "summary_steps.csv").open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["model", "method", "h1_free", "h2_free", "h6_free", "g6",
                         "h_inh_free", "g_inh"])
        for model_row in tables.model_steps:
            writer.writerow([model_row.model, "-", _format_ratio(model_row.h1_free),
                             _format_ratio(model_row.h2_free), "", "", "", ""])
        for group in tables.groups:
            writer.writerow(
                [group.model, group.method, "", "",
                 _format_ratio(group.h6_free), _format_ratio(group.g6),
                 _format_ratio(group.h_inh_free), _format_ratio(group.g_inh)]
            )


def cmd_stats(args) -> int:
    try:
        dataset = load_dataset_file(args.dataset)
    except (RuntimeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENV
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    tables = stats_mod.summarize_dataset(dataset)
    summary = tables.to_dict()
    if any(record.annotations for record in dataset.records):
        try:
            estimates = stats_mod.irr_per_criterion(
                dataset, bootstrap_resamples=args.bootstrap, seed=args.seed
            )
            summary["irr"] = {name: est.to_dict() for name, est in estimates.items()}
        except (stats_mod.DegenerateRatingsError, ValueError) as exc:
            summary["irr"] = {"error": str(exc)}
    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, ensure_ascii=False), encoding="utf-8"
    )
    _write_stats_csvs(tables, out_dir)
    print(f"wrote summary.json and CSV tables to {out_dir}")
    return EXIT_OK


def cmd_serve(args) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENV
    if len(config.service.raters) < config.service.raters_per_diagram:
        print("error: service needs rater tokens in config ([service.raters])",
              file=sys.stderr)
        return EXIT_ENV
    try:
        dataset = load_dataset_file(args.dataset)
    except (RuntimeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENV
    images = {}
    if args.images_dir:
        for record in dataset.records:
            candidate = Path(args.images_dir) / record.image_ref
            if candidate.exists():
                images[record.diagram_id] = candidate.read_bytes()

    from .service import StudyState, create_app

    state = StudyState.from_dataset(
        dataset,
        config.service.raters,
        images=images,
        blinding=config.service.blinding,
        raters_per_diagram=config.service.raters_per_diagram,
        data_dir=args.data_dir,
    )
    app = create_app(state, frontend_dir=args.frontend)

    import uvicorn

    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def cmd_vectors(args) -> int:
    from .rubric import export_test_vectors

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(export_test_vectors(), indent=1), encoding="utf-8")
    print(f"wrote shared rubric test vectors to {out_path}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="diagrambench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="run the generation pipeline over a text directory")
    gen.add_argument("--method", required=True, choices=["rst1", "rst2", "zero-shot"])
    gen.add_argument("--texts", required=True, help="directory of .txt sources")
    gen.add_argument("--model", default=None)
    gen.add_argument("--repair-model", default=None)
    gen.add_argument("--out", default=None)
    gen.add_argument("--config", default=None)
    gen.add_argument("--backend", choices=["mock", "http"], default=None)
    gen.add_argument("--mock-script", default=None)
    gen.add_argument("--dictionary", default=None, help="example dictionary JSON (default: bundled)")
    gen.add_argument("--max-repairs", type=int, default=None)
    gen.add_argument("--jobs", type=int, default=1)

    ae = sub.add_parser("autoeval", help="score diagrams with a model under mode e1/e2/e3")
    ae.add_argument("--mode", required=True, choices=["e1", "e2", "e3"])
    ae.add_argument("--dataset", required=True)
    ae.add_argument("--model", required=True)
    ae.add_argument("--repeats", type=int, default=2)
    ae.add_argument("--icl-examples", default=None,
                    help="scored example set JSON, or 'bundled' (required for e1/e2)")
    ae.add_argument("--images-dir", default=None)
    ae.add_argument("--out", required=True)
    ae.add_argument("--config", default=None)
    ae.add_argument("--mock-script", default=None)

    st = sub.add_parser("stats", help="summary tables and reliability estimates")
    st.add_argument("--dataset", required=True)
    st.add_argument("--out", required=True)
    st.add_argument("--bootstrap", type=int, default=stats_mod.DEFAULT_BOOTSTRAP_RESAMPLES)
    st.add_argument("--seed", type=int, default=stats_mod.DEFAULT_SEED)

    sv = sub.add_parser("serve", help="run the rating service")
    sv.add_argument("--dataset", required=True)
    sv.add_argument("--port", type=int, default=8000)
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--config", default=None)
    sv.add_argument("--images-dir", default=None)
    sv.add_argument("--data-dir", default=None)
    sv.add_argument("--frontend", default=None)

    vec = sub.add_parser("vectors", help="export shared rubric test vectors")
    vec.add_argument("--out", required=True)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "generate":
        return cmd_generate(args)
    if args.command == "autoeval":
        return cmd_autoeval(args, parser)
    if args.command == "stats":
        return cmd_stats(args)
    if args.command == "serve":
        return cmd_serve(args)
    if args.command == "vectors":
        return cmd_vectors(args)
    parser.error(f"unknown command {args.command}")
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
