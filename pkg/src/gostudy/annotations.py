"""Gene annotation loading and the true-path closure.

Annotating a gene to a term implies annotation to every ancestor of that
term, so each gene's term set is closed upward before it enters a Dataset.
The Dataset view (instances plus an ordered feature universe) is what the
feature-selection stage consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from gostudy.errors import GostudyError
from gostudy.ontology import TERM_ID_RE, OntologyGraph

CLASS_LABELS = ("pro", "anti")


class AnnotationError(GostudyError):
    """Base class for annotation-loading errors."""


class EmptyDataset(AnnotationError):
    """No usable annotation rows were provided."""


class InconsistentLabel(AnnotationError):
    """One gene carries conflicting class labels."""


@dataclass(frozen=True)
class AnnotationRow:
    """One ``gene<TAB>term[<TAB>class]`` record, with its source line number."""

    gene: str
    term: str
    label: str | None = None
    line: int = 0


@dataclass(frozen=True)
class GeneInstance:
    """A gene with its upward-closed annotation set and optional class label."""

    gene: str
    annotations: frozenset[str]
    class_label: str | None = None


@dataclass(frozen=True)
class Dataset:
    """Immutable per-organism view of gene instances over one ontology.

    ``feature_universe`` holds every term annotating at least one instance,
    in children-before-parents order (the graph's topological order).
    """

    organism: str
    instances: tuple[GeneInstance, ...]
    ontology: OntologyGraph
    feature_universe: tuple[str, ...]

    def instance(self, gene: str) -> GeneInstance:
        for inst in self.instances:
            if inst.gene == gene:
                return inst
        raise KeyError(gene)

    def labelled(self) -> bool:
        return all(inst.class_label is not None for inst in self.instances)


@dataclass
class LoadReport:
    """Per-row problems and oddities observed while loading one organism."""

    organism: str
    skipped: list[tuple[int, str, str, str]] = field(default_factory=list)  # line, gene, term, reason
    unannotated_genes: list[str] = field(default_factory=list)

    def skip(self, row: AnnotationRow, reason: str) -> None:
        self.skipped.append((row.line, row.gene, row.term, reason))

    def to_text(self) -> str:
        lines = [f"# load report: {self.organism}"]
        for line_no, gene, term, reason in self.skipped:
            lines.append(f"skipped line {line_no}: gene={gene} term={term} ({reason})")
        for gene in self.unannotated_genes:
            lines.append(f"gene {gene} retained with zero valid annotations")
        lines.append(f"# {len(self.skipped)} row(s) skipped")
        return "\n".join(lines) + "\n"


def true_path_closure(terms: set[str] | frozenset[str], graph: OntologyGraph) -> frozenset[str]:
    """Close a term set upward: the terms plus all of their ancestors."""
    closed: set[str] = set()
    for term in terms:
        closed.add(term)
        closed.update(graph.ancestors(term))
    return frozenset(closed)


def is_closed(terms: frozenset[str], graph: OntologyGraph) -> bool:
    return all(graph.ancestors(t) <= terms for t in terms)


def parse_annotation_tsv(text: str) -> list[AnnotationRow]:
    """Parse ``gene_id<TAB>go_id[<TAB>class]`` lines; ``#`` lines are comments."""
    rows: list[AnnotationRow] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        gene = parts[0].strip()
        term = parts[1].strip() if len(parts) > 1 else ""
        label = parts[2].strip() if len(parts) > 2 and parts[2].strip() else None
        rows.append(AnnotationRow(gene=gene, term=term, label=label, line=line_no))
    return rows


def load_annotations(
    rows: list[AnnotationRow],
    graph: OntologyGraph,
    organism: str = "unknown",
) -> tuple[Dataset, LoadReport]:
    """Group rows by gene, close each gene's terms upward, build the Dataset.

    Rows naming unknown or malformed terms (or malformed genes) are skipped
    and listed in the LoadReport; the gene keeps its remaining valid terms.
    Genes left with no valid terms are retained with an all-zero annotation
    set and noted in the report. Raises EmptyDataset when there are no rows
    at all, and InconsistentLabel when one gene carries both class labels.
    """
    if not rows:
        raise EmptyDataset(f"no annotation rows for {organism}")

    report = LoadReport(organism=organism)
    terms_by_gene: dict[str, set[str]] = {}
    label_by_gene: dict[str, str | None] = {}

    for row in rows:
        if not row.gene or any(c.isspace() for c in row.gene):
            report.skip(row, "malformed gene id")
            continue
        terms_by_gene.setdefault(row.gene, set())
        if row.label is not None:
            if row.label not in CLASS_LABELS:
                report.skip(row, f"unknown class label {row.label!r}")
                continue
            previous = label_by_gene.get(row.gene)
            if previous is not None and previous != row.label:
                raise InconsistentLabel(
                    f"gene {row.gene}: conflicting labels {previous!r} and {row.label!r}"
                    f" (line {row.line})"
                )
            label_by_gene[row.gene] = row.label
        if not TERM_ID_RE.match(row.term):
            report.skip(row, "malformed term id")
            continue
        if row.term not in graph:
            report.skip(row, "unknown term")
            continue
        terms_by_gene[row.gene].add(row.term)

    if not terms_by_gene:
        raise EmptyDataset(f"no usable annotation rows for {organism}")

    instances = []
    for gene in sorted(terms_by_gene):
        terms = terms_by_gene[gene]
        if not terms:
            report.unannotated_genes.append(gene)
        instances.append(
            GeneInstance(
                gene=gene,
                annotations=true_path_closure(terms, graph),
                class_label=label_by_gene.get(gene),
            )
        )

    used: set[str] = set()
    for inst in instances:
        used.update(inst.annotations)
    universe = tuple(t for t in graph.topo_order if t in used)

    dataset = Dataset(
        organism=organism,
        instances=tuple(instances),
        ontology=graph,
        feature_universe=universe,
    )
    return dataset, report


def binary_vector(inst: GeneInstance, universe: tuple[str, ...]) -> tuple[int, ...]:
    """The instance's annotations as a 0/1 vector over the feature universe."""
    return tuple(1 if term in inst.annotations else 0 for term in universe)
