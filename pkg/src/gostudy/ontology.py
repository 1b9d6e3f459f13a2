"""Gene Ontology DAG: OBO-subset parsing and reachability queries.

Only ``is_a`` edges are modelled. The graph is immutable once built and
precomputes the full ancestor/descendant closures, so per-term queries are
set lookups rather than traversals.
"""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass, field

from gostudy.errors import GostudyError

TERM_ID_RE = re.compile(r"GO:[0-9]{7}\Z")

NAMESPACES = ("biological_process", "molecular_function", "cellular_component")


class OntologyError(GostudyError):
    """Base class for ontology parsing and query errors."""


class BadTermId(OntologyError):
    """Identifier does not match ``GO:`` followed by exactly 7 digits."""


class DuplicateTerm(OntologyError):
    """The same term id appears in more than one stanza."""


class DanglingEdge(OntologyError):
    """An ``is_a`` target is not defined anywhere in the file."""


class CyclicOntology(OntologyError):
    """The ``is_a`` edges contain a cycle (including self-loops)."""


class UnknownTerm(OntologyError):
    """A queried term id is not part of the graph."""


class MalformedStanza(OntologyError):
    """A ``[Term]`` stanza is missing a required key or is out of order."""


def check_term_id(value: str) -> str:
    """Validate and return a GO term id, raising BadTermId otherwise."""
    if not TERM_ID_RE.match(value):
        raise BadTermId(f"malformed term id: {value!r}")
    return value


@dataclass(frozen=True)
class Term:
    """One ontology term with its direct ``is_a`` parents."""

    id: str
    name: str
    namespace: str
    parents: frozenset[str] = frozenset()


@dataclass(frozen=True)
class OntologyGraph:
    """Validated, acyclic ``is_a`` hierarchy of GO terms.

    ``topo_order`` lists children before parents, ties broken by term id, so
    iterating it visits the most specific terms first. ``dropped_obsolete``
    counts the obsolete stanzas silently skipped during parsing.
    """

    terms: dict[str, Term]
    ancestor_closure: dict[str, frozenset[str]]
    descendant_closure: dict[str, frozenset[str]]
    topo_order: tuple[str, ...]
    dropped_obsolete: int = field(default=0, compare=False)

    def __contains__(self, term_id: str) -> bool:
        return term_id in self.terms

    def __len__(self) -> int:
        return len(self.terms)

    def term(self, term_id: str) -> Term:
        try:
            return self.terms[term_id]
        except KeyError:
            raise UnknownTerm(f"unknown term: {term_id}") from None

    def ancestors(self, term_id: str) -> frozenset[str]:
        """All terms reachable via parent edges, excluding the term itself."""
        try:
            return self.ancestor_closure[term_id]
        except KeyError:
            raise UnknownTerm(f"unknown term: {term_id}") from None

    def descendants(self, term_id: str) -> frozenset[str]:
        """All terms from which this one is reachable, excluding itself."""
        try:
            return self.descendant_closure[term_id]
        except KeyError:
            raise UnknownTerm(f"unknown term: {term_id}") from None

    def related(self, a: str, b: str) -> bool:
        """True iff one term is an ancestor of the other, or they are equal."""
        if a not in self.terms:
            raise UnknownTerm(f"unknown term: {a}")
        if b not in self.terms:
            raise UnknownTerm(f"unknown term: {b}")
        return a == b or a in self.ancestor_closure[b] or b in self.ancestor_closure[a]

    def roots(self) -> frozenset[str]:
        return frozenset(t for t, anc in self.ancestor_closure.items() if not anc)

    def leaves(self) -> frozenset[str]:
        return frozenset(t for t, dec in self.descendant_closure.items() if not dec)


def build_graph(terms: list[Term], dropped_obsolete: int = 0) -> OntologyGraph:
    """Assemble and validate an OntologyGraph from already-parsed terms."""
    by_id: dict[str, Term] = {}
    for term in terms:
        if term.id in by_id:
            raise DuplicateTerm(f"duplicate term id: {term.id}")
        by_id[term.id] = term
    for term in by_id.values():
        for parent in term.parents:
            if parent == term.id:
                raise CyclicOntology(f"{term.id} is its own parent")
            if parent not in by_id:
                raise DanglingEdge(f"{term.id} is_a {parent}: target undefined")

    topo = _topo_children_first(by_id)

    # Parents precede children in reversed topo order, so one pass suffices.
    ancestor_closure: dict[str, frozenset[str]] = {}
    for term_id in reversed(topo):
        acc: set[str] = set()
        for parent in by_id[term_id].parents:
            acc.add(parent)
            acc.update(ancestor_closure[parent])
        ancestor_closure[term_id] = frozenset(acc)

    descendants: dict[str, set[str]] = {t: set() for t in by_id}
    for term_id, ancestors in ancestor_closure.items():
        for ancestor in ancestors:
            descendants[ancestor].add(term_id)
    descendant_closure = {t: frozenset(d) for t, d in descendants.items()}

    return OntologyGraph(
        terms=by_id,
        ancestor_closure=ancestor_closure,
        descendant_closure=descendant_closure,
        topo_order=tuple(topo),
        dropped_obsolete=dropped_obsolete,
    )


def _topo_children_first(by_id: dict[str, Term]) -> list[str]:
    """Kahn's algorithm over child->parent edges, heap-ordered for determinism."""
    child_count = {t: 0 for t in by_id}
    for term in by_id.values():
        for parent in term.parents:
            child_count[parent] += 1

    ready = [t for t, n in child_count.items() if n == 0]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        term_id = heapq.heappop(ready)
        order.append(term_id)
        for parent in by_id[term_id].parents:
            child_count[parent] -= 1
            if child_count[parent] == 0:
                heapq.heappush(ready, parent)
    if len(order) != len(by_id):
        stuck = sorted(t for t, n in child_count.items() if n > 0)
        raise CyclicOntology(f"cycle detected among: {', '.join(stuck)}")
    return order


def parse_obo(text: str) -> OntologyGraph:
    """Parse an OBO-subset flat file into a validated OntologyGraph.

    A file is a header (ignored) followed by ``[Term]`` stanzas of
    ``key: value`` lines. Recognised keys: ``id`` (required, first), ``name``
    (required), ``namespace`` (required), ``is_a`` (repeatable, trailing
    ``! comment`` stripped) and ``is_obsolete``. Unknown keys and non-Term
    stanzas are ignored; obsolete terms are dropped and counted.
    """
    terms: list[Term] = []
    dropped = 0

    stanza: dict[str, object] | None = None  # None until the first [Term]
    in_term = False

    def finish() -> None:
        nonlocal stanza, dropped
        if stanza is None:
            return
        if stanza.get("obsolete"):
            dropped += 1
        else:
            for key in ("id", "name", "namespace"):
                if key not in stanza:
                    raise MalformedStanza(f"[Term] stanza missing required {key!r}")
            if stanza["namespace"] not in NAMESPACES:
                raise MalformedStanza(
                    f"{stanza['id']}: unknown namespace {stanza['namespace']!r}"
                )
            terms.append(
                Term(
                    id=stanza["id"],  # type: ignore[arg-type]
                    name=stanza["name"],  # type: ignore[arg-type]
                    namespace=stanza["namespace"],  # type: ignore[arg-type]
                    parents=frozenset(stanza["parents"]),  # type: ignore[arg-type]
                )
            )
        stanza = None

    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            finish()  # a blank line terminates the stanza
            continue
        if line.startswith("["):
            finish()
            in_term = line == "[Term]"
            if in_term:
                stanza = {"parents": []}
            continue
        if not in_term or stanza is None:
            continue  # header or ignored stanza type
        key, sep, value = line.partition(":")
        if not sep:
            continue
        key = key.strip()
        value = value.strip()
        if key == "id":
            if "id" in stanza:
                raise MalformedStanza(f"stanza has two id lines ({stanza['id']}, {value})")
            stanza["id"] = check_term_id(value)
        elif key in ("name", "namespace", "is_a", "is_obsolete"):
            if "id" not in stanza:
                raise MalformedStanza(f"{key!r} before id in [Term] stanza")
            if key == "name":
                stanza["name"] = value
            elif key == "namespace":
                stanza["namespace"] = value
            elif key == "is_a":
                target = value.split("!", 1)[0].strip()
                stanza["parents"].append(check_term_id(target))  # type: ignore[union-attr]
            else:
                stanza["obsolete"] = value.lower() == "true"
        # all other keys ignored
    finish()

    return build_graph(terms, dropped_obsolete=dropped)
