"""Command-line driver for the full pipeline and its individual stages.

Exit codes: 0 on success, 1 for runtime failures (backend errors, partial
study-group runs), 2 for configuration or input errors.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from gostudy.annotations import AnnotationError, load_annotations, parse_annotation_tsv
from gostudy.backend import HttpChatBackend, MockChatBackend
from gostudy.config import PipelineConfig, load_pipeline_config
from gostudy.errors import ConfigError, GostudyError
from gostudy.hfs import MissingLabels, rank_dataset
from gostudy.ontology import OntologyError, OntologyGraph, parse_obo
from gostudy.report import (
    ReportError,
    apply_annotations,
    build_report,
    load_annotations_file,
    render,
)
from gostudy.vsg import (
    DuplicateAgent,
    IncompleteConfig,
    RunFailed,
    RunParams,
    Transcript,
    build_study_group,
    orchestrate,
    read_transcript,
)

# Everything here is the user's configuration or input being wrong.
_INPUT_ERRORS = (
    ConfigError,
    OntologyError,
    AnnotationError,
    MissingLabels,
    IncompleteConfig,
    DuplicateAgent,
    ReportError,
    FileNotFoundError,
)


def _load_ontology(cfg: PipelineConfig) -> OntologyGraph:
    try:
        return parse_obo(cfg.ontology_path.read_text(encoding="utf-8"))
    except OntologyError as exc:
        raise type(exc)(f"{cfg.ontology_path}: {exc}") from exc


def _run_rank(cfg: PipelineConfig, out_dir: Path) -> None:
    graph = _load_ontology(cfg)
    tables_dir = out_dir / "tables"
    tables_dir.mkdir(parents=True, exist_ok=True)
    for organism in cfg.organisms:
        path = organism.annotations_path
        try:
            rows = parse_annotation_tsv(path.read_text(encoding="utf-8"))
            dataset, report = load_annotations(rows, graph, organism=organism.spec.name)
            table = rank_dataset(
                dataset, edge_mode=cfg.edge_mode, allow_unlabeled=cfg.allow_unlabeled
            )
        except (AnnotationError, MissingLabels) as exc:
            raise type(exc)(f"{path}: {exc}") from exc
        name = organism.spec.name
        (tables_dir / f"{name}.tsv").write_text(table.to_tsv(), encoding="utf-8")
        (tables_dir / f"{name}.json").write_text(table.to_json(), encoding="utf-8")
        (tables_dir / f"{name}.load_report.txt").write_text(report.to_text(), encoding="utf-8")
        print(f"ranked {len(table.rows)} terms for {name} -> {tables_dir / f'{name}.tsv'}")


def _build_backend(cfg: PipelineConfig, args: argparse.Namespace):
    if args.live:
        if not cfg.vsg.backend_url:
            raise ConfigError("--live requires a backend URL in the config or environment")
        return HttpChatBackend(cfg.vsg.backend_url, cfg.vsg.response_path)
    script = Path(args.mock_script) if args.mock_script else cfg.mock_script
    if script is None:
        raise ConfigError("mock mode needs --mock-script or vsg.mock_script in the config")
    if not script.exists():
        raise ConfigError(f"mock script not found: {script}")
    return MockChatBackend.from_file(str(script))


def _print_statuses(transcript: Transcript) -> None:
    for output in transcript.outputs:
        line = f"[{output.status}] {output.task_id}"
        if output.retries:
            line += f" (retries={output.retries})"
        if output.error:
            line += f" - {output.error}"
        print(line)


def _run_vsg(cfg: PipelineConfig, args: argparse.Namespace, out_dir: Path) -> Transcript:
    vsg_cfg = cfg.vsg
    if args.seed is not None:
        vsg_cfg = replace(vsg_cfg, sampling=replace(vsg_cfg.sampling, seed=args.seed))
    graph = build_study_group(vsg_cfg)
    backend = _build_backend(cfg, args)
    params = RunParams(
        sampling=vsg_cfg.sampling,
        retry=vsg_cfg.retry,
        out_dir=out_dir / "runs",
        config_digest=vsg_cfg.digest(),
    )
    transcript = orchestrate(graph, backend, params)
    _print_statuses(transcript)
    print(f"run {transcript.run_id}: {len(transcript.outputs)} outputs -> {params.out_dir}")
    return transcript


def _write_report(
    transcript: Transcript,
    annotations_path: Path | None,
    out_dir: Path,
    formats: str,
) -> None:
    report = build_report(transcript)
    if annotations_path is not None:
        records = load_annotations_file(annotations_path)
        apply_annotations(report, records)
    out_dir.mkdir(parents=True, exist_ok=True)
    if formats in ("md", "both"):
        (out_dir / "report.md").write_text(render(report, "markdown"), encoding="utf-8")
    if formats in ("html", "both"):
        (out_dir / "report.html").write_text(render(report, "html"), encoding="utf-8")
    totals = report.label_totals()
    summary = " ".join(
        f"{label}={totals.get(label, 0)}"
        for label in ("supported", "unsupported", "contradicted", "unreviewed")
    )
    print(f"claims={len(report.claims)} {summary}")


def cmd_rank(args: argparse.Namespace) -> int:
    cfg = load_pipeline_config(args.config)
    _run_rank(cfg, Path(args.out) if args.out else cfg.out_dir)
    return 0


def cmd_vsg(args: argparse.Namespace) -> int:
    cfg = load_pipeline_config(args.config)
    out_dir = Path(args.out) if args.out else cfg.out_dir
    try:
        _run_vsg(cfg, args, out_dir)
    except RunFailed as exc:
        _print_statuses(exc.transcript)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    transcript = read_transcript(Path(args.transcript))
    annotations = Path(args.annotations) if args.annotations else None
    if annotations is not None and not annotations.exists():
        raise ConfigError(f"annotations file not found: {annotations}")
    _write_report(transcript, annotations, Path(args.out), args.format)
    return 0


def cmd_pipeline(args: argparse.Namespace) -> int:
    cfg = load_pipeline_config(args.config)
    out_dir = Path(args.out) if args.out else cfg.out_dir
    _run_rank(cfg, out_dir)
    try:
        transcript = _run_vsg(cfg, args, out_dir)
    except RunFailed as exc:
        _print_statuses(exc.transcript)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    annotations = cfg.report_annotations
    if annotations is not None and not annotations.exists():
        raise ConfigError(f"annotations file not found: {annotations}")
    _write_report(transcript, annotations, out_dir, args.format)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gostudy",
        description="Rank GO terms by hierarchical feature selection and run the"
        " virtual study group over the results.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, *, config: bool = True) -> None:
        if config:
            p.add_argument("--config", required=True, help="pipeline config (TOML or JSON)")
        p.add_argument("--out", default=None, help="output directory (default from config)")

    p_rank = sub.add_parser("rank", help="rank GO terms per organism")
    add_common(p_rank)
    p_rank.set_defaults(func=cmd_rank)

    p_vsg = sub.add_parser("vsg", help="run the virtual study group")
    add_common(p_vsg)
    p_vsg.add_argument("--mock-script", default=None, help="scripted responses (JSON)")
    p_vsg.add_argument("--live", action="store_true", help="call the configured HTTP backend")
    p_vsg.add_argument("--seed", type=int, default=None, help="override sampling seed")
    p_vsg.set_defaults(func=cmd_vsg)

    p_report = sub.add_parser("report", help="render an annotated report from a transcript")
    p_report.add_argument("--transcript", required=True, help="transcript JSON path")
    p_report.add_argument("--annotations", default=None, help="support annotations JSON")
    p_report.add_argument("--out", default="out", help="output directory")
    p_report.add_argument("--format", choices=("md", "html", "both"), default="both")
    p_report.set_defaults(func=cmd_report)

    p_pipe = sub.add_parser("pipeline", help="rank, study group and report in one go")
    add_common(p_pipe)
    p_pipe.add_argument("--mock-script", default=None, help="scripted responses (JSON)")
    p_pipe.add_argument("--live", action="store_true", help="call the configured HTTP backend")
    p_pipe.add_argument("--seed", type=int, default=None, help="override sampling seed")
    p_pipe.add_argument("--format", choices=("md", "html", "both"), default="both")
    p_pipe.set_defaults(func=cmd_pipeline)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RunFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except GostudyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:  # unreadable inputs, unwritable output directory
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
