"""Pipeline configuration: one TOML or JSON file drives every stage.

Paths inside the file are resolved relative to the file itself. The backend
URL can be overridden with the GOSTUDY_BACKEND_URL environment variable.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from gostudy.backend import DEFAULT_RESPONSE_PATH, RetryPolicy, SamplingParams
from gostudy.errors import ConfigError
from gostudy.hfs import EDGE_MODES
from gostudy.vsg import ROLES, OrganismSpec, VsgConfig

BACKEND_URL_ENV = "GOSTUDY_BACKEND_URL"


@dataclass(frozen=True)
class OrganismFiles:
    spec: OrganismSpec
    annotations_path: Path


@dataclass(frozen=True)
class PipelineConfig:
    """Everything the CLI needs: inputs, selection options, study group, report."""

    base_dir: Path
    ontology_path: Path
    organisms: tuple[OrganismFiles, ...]
    edge_mode: str
    allow_unlabeled: bool
    vsg: VsgConfig
    mock_script: Path | None
    report_annotations: Path | None
    out_dir: Path


def _read_document(path: Path) -> dict:
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        if path.suffix == ".json":
            with open(path, encoding="utf-8") as handle:
                doc = json.load(handle)
        else:
            with open(path, "rb") as handle:
                doc = tomllib.load(handle)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a table/object")
    return doc


def _require(doc: object, key: str, context: str) -> object:
    if not isinstance(doc, dict) or key not in doc:
        raise ConfigError(f"{context}: missing required key {key!r}")
    return doc[key]


def load_pipeline_config(path: Path | str) -> PipelineConfig:
    """Parse and validate the pipeline configuration file."""
    path = Path(path)
    doc = _read_document(path)
    base = path.parent

    ontology_section = _require(doc, "ontology", str(path))
    ontology_path = base / str(_require(ontology_section, "path", "ontology"))
    if not ontology_path.exists():
        raise ConfigError(f"ontology file not found: {ontology_path}")

    hfs_section = doc.get("hfs", {})
    edge_mode = str(hfs_section.get("tie_break", "degree"))
    if edge_mode not in EDGE_MODES:
        raise ConfigError(f"hfs.tie_break must be one of {EDGE_MODES}, got {edge_mode!r}")
    allow_unlabeled = bool(hfs_section.get("allow_unlabeled", False))

    raw_organisms = _require(doc, "organisms", str(path))
    if not isinstance(raw_organisms, list) or not raw_organisms:
        raise ConfigError("organisms must be a non-empty list")
    organisms: list[OrganismFiles] = []
    for entry in raw_organisms:
        name = str(_require(entry, "name", "organism entry"))
        species = str(entry.get("species", name))
        terms = entry.get("terms", [])
        try:
            term_pairs = tuple((str(t["id"]), str(t["label"])) for t in terms)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"organism {name}: each term needs 'id' and 'label'") from exc
        spec = OrganismSpec(name=name, species=species, terms=term_pairs)
        annotations_path = base / str(_require(entry, "annotations", f"organism {name}"))
        if not annotations_path.exists():
            raise ConfigError(f"annotation file not found: {annotations_path}")
        organisms.append(OrganismFiles(spec=spec, annotations_path=annotations_path))

    vsg_section = doc.get("vsg", {})
    backend_section = vsg_section.get("backend", {})
    backend_url = os.environ.get(BACKEND_URL_ENV) or str(backend_section.get("url", ""))
    sampling_section = vsg_section.get("sampling", {})
    retry_section = vsg_section.get("retry", {})
    models = {str(k): str(v) for k, v in vsg_section.get("models", {}).items()}
    unknown_roles = set(models) - set(ROLES)
    if unknown_roles:
        raise ConfigError(f"vsg.models has unknown roles: {sorted(unknown_roles)}")

    seed = sampling_section.get("seed", 0)
    vsg_config = VsgConfig(
        organisms=tuple(o.spec for o in organisms),
        models=models,
        personas={str(k): str(v) for k, v in vsg_section.get("personas", {}).items()},
        backend_url=backend_url,
        response_path=str(backend_section.get("response_path", DEFAULT_RESPONSE_PATH)),
        sampling=SamplingParams(
            temperature=float(sampling_section.get("temperature", 0.0)),
            seed=None if seed is None else int(seed),
        ),
        retry=RetryPolicy(
            attempts=int(retry_section.get("attempts", 3)),
            backoff_base=float(retry_section.get("backoff_base", 1.0)),
            timeout=float(retry_section.get("timeout", 120.0)),
        ),
        seniors_see_task_statement=bool(vsg_section.get("seniors_see_task_statement", True)),
    )

    mock_script = vsg_section.get("mock_script")
    report_section = doc.get("report", {})
    report_annotations = report_section.get("annotations")

    return PipelineConfig(
        base_dir=base,
        ontology_path=ontology_path,
        organisms=tuple(organisms),
        edge_mode=edge_mode,
        allow_unlabeled=allow_unlabeled,
        vsg=vsg_config,
        mock_script=base / str(mock_script) if mock_script else None,
        report_annotations=base / str(report_annotations) if report_annotations else None,
        out_dir=Path(str(doc.get("out_dir", "out"))),
    )
