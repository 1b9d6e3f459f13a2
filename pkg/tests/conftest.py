from __future__ import annotations

from pathlib import Path

import pytest

from gostudy.annotations import AnnotationRow, load_annotations
from gostudy.ontology import OntologyGraph, Term, build_graph, parse_obo

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
GOLDEN = Path(__file__).resolve().parent / "golden"

_criterion_outcomes: dict[str, str] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    name = marker.args[0]
    if report.when == "call":
        _criterion_outcomes[name] = report.outcome
    elif report.when == "setup" and report.outcome != "passed":
        _criterion_outcomes[name] = report.outcome


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _criterion_outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _criterion_outcomes.items():
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  {name}")


def graph_from_parents(parents: dict[str, set[str]]) -> OntologyGraph:
    """Build an OntologyGraph straight from a parent map (test convenience)."""
    terms = [
        Term(id=t, name=f"term {t}", namespace="biological_process", parents=frozenset(ps))
        for t, ps in parents.items()
    ]
    return build_graph(terms)


def dataset_from_rows(rows: list[tuple], graph: OntologyGraph, organism: str = "test"):
    annotation_rows = [
        AnnotationRow(gene=r[0], term=r[1], label=r[2] if len(r) > 2 else None, line=i + 1)
        for i, r in enumerate(rows)
    ]
    return load_annotations(annotation_rows, graph, organism=organism)


@pytest.fixture(autouse=True)
def _no_backend_env(monkeypatch):
    monkeypatch.delenv("GOSTUDY_BACKEND_URL", raising=False)


@pytest.fixture(scope="session")
def fixture_ontology() -> OntologyGraph:
    return parse_obo((FIXTURES / "ontology.obo").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def regulation_graph() -> OntologyGraph:
    """The seven-term regulation hierarchy."""
    return parse_obo((FIXTURES / "regulation.obo").read_text(encoding="utf-8"))


@pytest.fixture()
def diamond_graph() -> OntologyGraph:
    """root <- {left, right} <- bottom."""
    return graph_from_parents(
        {
            "GO:0000001": set(),
            "GO:0000002": {"GO:0000001"},
            "GO:0000003": {"GO:0000001"},
            "GO:0000004": {"GO:0000002", "GO:0000003"},
        }
    )
