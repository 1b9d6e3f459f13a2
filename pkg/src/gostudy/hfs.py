"""Lazy hierarchical feature selection and frequency-based term ranking.

For each gene instance, hierarchy-redundant GO terms are removed: a positive
term survives only if none of its descendants in the feature universe is
positive (most specific positives), and a negative term survives only if none
of its ancestors is negative (most general negatives). Every removed value is
implied by a kept one, so the selection loses no information.

Terms are then ranked by how often they survive selection across instances;
ties are broken by how often a term participates in per-instance dependence
trees (tree-augmented naive Bayes), then by term id.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable

from gostudy.annotations import Dataset, GeneInstance, is_closed
from gostudy.errors import GostudyError

# CMI below this is treated as "no dependence evidence"; such edges never
# enter the spanning structure.
WEIGHT_EPS = 1e-12

EDGE_MODES = ("degree", "membership")


class SelectionError(GostudyError):
    """Base class for feature-selection errors."""


class ClosureViolation(SelectionError):
    """An instance's annotation set is not closed under ancestors."""


class MissingLabels(SelectionError):
    """Tree learning needs class labels and the unlabelled fallback is off."""


@dataclass(frozen=True)
class SelectionResult:
    """The hierarchy-non-redundant terms kept for one gene instance."""

    gene: str
    selected: frozenset[str]


@dataclass(frozen=True)
class TanTree:
    """Maximum-dependence spanning structure over one instance's selected terms.

    Edges are unordered (a, b) pairs with a < b; they form a forest with one
    tree per connected component of the positive-weight dependence graph.
    """

    gene: str
    nodes: frozenset[str]
    edges: frozenset[tuple[str, str]]


@dataclass(frozen=True)
class TableRow:
    rank: int
    term: str
    name: str
    selection_count: int
    edge_count: int


@dataclass(frozen=True)
class RankedTermTable:
    """Per-organism term ranking, most informative first."""

    organism: str
    rows: tuple[TableRow, ...]

    def to_tsv(self) -> str:
        lines = ["rank\tterm\tname\tselection_count\tedge_count"]
        for row in self.rows:
            lines.append(
                f"{row.rank}\t{row.term}\t{row.name}\t{row.selection_count}\t{row.edge_count}"
            )
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        doc = {
            "organism": self.organism,
            "rows": [
                {
                    "rank": row.rank,
                    "term": row.term,
                    "name": row.name,
                    "selection_count": row.selection_count,
                    "edge_count": row.edge_count,
                }
                for row in self.rows
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def hip_select(inst: GeneInstance, ds: Dataset) -> SelectionResult:
    """Keep the most specific positive and most general negative terms.

    Viewed over the feature universe as this instance's binary vector:
    a 1-valued term is kept iff no descendant in the universe is 1-valued,
    and a 0-valued term is kept iff no ancestor in the universe is 0-valued.
    """
    if not is_closed(inst.annotations, ds.ontology):
        raise ClosureViolation(f"gene {inst.gene}: annotations not closed under ancestors")

    universe = set(ds.feature_universe)
    ones = inst.annotations & universe
    graph = ds.ontology

    selected: set[str] = set()
    for term in ds.feature_universe:
        if term in ones:
            if not (graph.descendants(term) & ones):
                selected.add(term)
        else:
            negative_ancestors = (graph.ancestors(term) & universe) - ones
            if not negative_ancestors:
                selected.add(term)
    return SelectionResult(gene=inst.gene, selected=frozenset(selected))


# Other per-instance selection strategies can slot in anywhere one of these
# is accepted (lazy selection is just a function of instance and dataset).
SelectionStrategy = Callable[[GeneInstance, Dataset], SelectionResult]


def selection_frequencies(ds: Dataset, select: SelectionStrategy = hip_select) -> dict[str, int]:
    """How many instances keep each universe term after selection."""
    counts = {term: 0 for term in ds.feature_universe}
    for inst in ds.instances:
        result = select(inst, ds)  # errors carry the offending gene id
        for term in result.selected:
            counts[term] += 1
    return counts


def _smoothed_cmi(xi: list[int], xj: list[int], labels: list[int]) -> float:
    """Conditional mutual information I(Xi; Xj | C) with add-one smoothing.

    All probabilities derive from one add-one-smoothed joint over the eight
    (xi, xj, c) cells, so the estimate is a proper distribution and the
    result is never negative.
    """
    counts = [[[0, 0], [0, 0]], [[0, 0], [0, 0]]]
    for a, b, c in zip(xi, xj, labels):
        counts[a][b][c] += 1
    total = len(xi) + 8.0

    p = [[[(counts[a][b][c] + 1) / total for c in (0, 1)] for b in (0, 1)] for a in (0, 1)]
    p_c = [sum(p[a][b][c] for a in (0, 1) for b in (0, 1)) for c in (0, 1)]
    p_ic = [[sum(p[a][b][c] for b in (0, 1)) for c in (0, 1)] for a in (0, 1)]
    p_jc = [[sum(p[a][b][c] for a in (0, 1)) for c in (0, 1)] for b in (0, 1)]

    value = 0.0
    for a in (0, 1):
        for b in (0, 1):
            for c in (0, 1):
                value += p[a][b][c] * math.log(
                    p[a][b][c] * p_c[c] / (p_ic[a][c] * p_jc[b][c])
                )
    return value


def _smoothed_mi(xi: list[int], xj: list[int]) -> float:
    """Unconditional mutual information with add-one smoothing (label-free fallback)."""
    counts = [[0, 0], [0, 0]]
    for a, b in zip(xi, xj):
        counts[a][b] += 1
    total = len(xi) + 4.0

    p = [[(counts[a][b] + 1) / total for b in (0, 1)] for a in (0, 1)]
    p_i = [p[a][0] + p[a][1] for a in (0, 1)]
    p_j = [p[0][b] + p[1][b] for b in (0, 1)]

    value = 0.0
    for a in (0, 1):
        for b in (0, 1):
            value += p[a][b] * math.log(p[a][b] / (p_i[a] * p_j[b]))
    return value


class _UnionFind:
    def __init__(self, items: list[str]) -> None:
        self.parent = {item: item for item in items}

    def find(self, item: str) -> str:
        root = item
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[item] != root:
            self.parent[item], item = root, self.parent[item]
        return root

    def union(self, a: str, b: str) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


def pair_weights(
    nodes: list[str], ds: Dataset, *, allow_unlabeled: bool = False
) -> dict[tuple[str, str], float]:
    """Dependence weight for every node pair, estimated over all instances."""
    columns = {
        term: [1 if term in inst.annotations else 0 for inst in ds.instances]
        for term in nodes
    }
    labels: list[int] | None
    if ds.labelled():
        labels = [1 if inst.class_label == "pro" else 0 for inst in ds.instances]
    elif allow_unlabeled:
        labels = None
    else:
        raise MissingLabels(
            "dataset has unlabelled instances; pass allow_unlabeled=True to fall back"
            " to unconditional mutual information"
        )

    weights: dict[tuple[str, str], float] = {}
    ordered = sorted(nodes)
    for i, a in enumerate(ordered):
        for b in ordered[i + 1 :]:
            if labels is None:
                weights[(a, b)] = _smoothed_mi(columns[a], columns[b])
            else:
                weights[(a, b)] = _smoothed_cmi(columns[a], columns[b], labels)
    return weights


def maximum_spanning_forest(
    nodes: list[str], weights: dict[tuple[str, str], float]
) -> frozenset[tuple[str, str]]:
    """Kruskal over strictly-positive edges; ties broken by smallest pair."""
    candidates = sorted(
        ((w, a, b) for (a, b), w in weights.items() if w > WEIGHT_EPS),
        key=lambda e: (-e[0], e[1], e[2]),
    )
    forest = _UnionFind(nodes)
    edges: set[tuple[str, str]] = set()
    for _, a, b in candidates:
        if forest.union(a, b):
            edges.add((a, b))
    return frozenset(edges)


def learn_tan_tree(
    inst: GeneInstance,
    sel: SelectionResult,
    ds: Dataset,
    *,
    allow_unlabeled: bool = False,
) -> TanTree:
    """Maximum-weight dependence tree over this instance's selected terms.

    Edge weights are conditional mutual information given the binary class,
    estimated over every dataset instance restricted to the selected terms.
    With fewer than two selected terms the result is a valid singleton tree.
    """
    nodes = sorted(sel.selected)
    if len(nodes) < 2:
        return TanTree(gene=inst.gene, nodes=frozenset(nodes), edges=frozenset())
    weights = pair_weights(nodes, ds, allow_unlabeled=allow_unlabeled)
    edges = maximum_spanning_forest(nodes, weights)
    return TanTree(gene=inst.gene, nodes=frozenset(nodes), edges=edges)


def edge_frequencies(trees: list[TanTree], mode: str = "degree") -> dict[str, int]:
    """Per-term participation in the dependence trees.

    ``degree`` counts edge endpoints (a term in k edges of one tree adds k);
    ``membership`` adds at most 1 per tree in which the term touches any edge.
    """
    if mode not in EDGE_MODES:
        raise ValueError(f"unknown edge-frequency mode: {mode!r}")
    counts: dict[str, int] = {}
    for tree in trees:
        touched: set[str] = set()
        for a, b in tree.edges:
            if mode == "degree":
                counts[a] = counts.get(a, 0) + 1
                counts[b] = counts.get(b, 0) + 1
            else:
                touched.add(a)
                touched.add(b)
        for term in touched:
            counts[term] = counts.get(term, 0) + 1
    return counts


def rank_terms(
    selection: dict[str, int], edges: dict[str, int], ds: Dataset
) -> RankedTermTable:
    """Order universe terms by (selection desc, edge desc, term id asc)."""
    ordered = sorted(
        ds.feature_universe,
        key=lambda t: (-selection.get(t, 0), -edges.get(t, 0), t),
    )
    rows = tuple(
        TableRow(
            rank=position,
            term=term,
            name=ds.ontology.term(term).name,
            selection_count=selection.get(term, 0),
            edge_count=edges.get(term, 0),
        )
        for position, term in enumerate(ordered, start=1)
    )
    return RankedTermTable(organism=ds.organism, rows=rows)


def rank_dataset(
    ds: Dataset,
    *,
    edge_mode: str = "degree",
    allow_unlabeled: bool = False,
    select: SelectionStrategy = hip_select,
) -> RankedTermTable:
    """Full ranking pipeline: select per instance, learn trees, count, sort."""
    selections = [select(inst, ds) for inst in ds.instances]
    selection_counts = {term: 0 for term in ds.feature_universe}
    for result in selections:
        for term in result.selected:
            selection_counts[term] += 1
    trees = [
        learn_tan_tree(inst, sel, ds, allow_unlabeled=allow_unlabeled)
        for inst, sel in zip(ds.instances, selections)
    ]
    edge_counts = edge_frequencies(trees, mode=edge_mode)
    return rank_terms(selection_counts, edge_counts, ds)
