"""Claim-level support annotation and highlighted report rendering.

Agent outputs are segmented into sentence claims with exact character
offsets. Reviewers attach support labels (with citations) via a JSON file;
rendering wraps supported claims in green-class markup, unsupported ones in
yellow, contradicted ones in a third class, and leaves everything else
untouched, so stripping the injected markup recovers the original text.
"""

from __future__ import annotations

import html
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from gostudy.errors import GostudyError
from gostudy.vsg import STATUS_COMPLETED, Transcript

LABEL_SUPPORTED = "supported"
LABEL_UNSUPPORTED = "unsupported"
LABEL_CONTRADICTED = "contradicted"
LABEL_UNREVIEWED = "unreviewed"
LABELS = (LABEL_SUPPORTED, LABEL_UNSUPPORTED, LABEL_CONTRADICTED, LABEL_UNREVIEWED)

# Labels that demand at least one citation; the others must have none.
CITED_LABELS = (LABEL_SUPPORTED, LABEL_CONTRADICTED)

HIGHLIGHT_CLASS = {
    LABEL_SUPPORTED: "claim-supported",
    LABEL_UNSUPPORTED: "claim-unsupported",
    LABEL_CONTRADICTED: "claim-contradicted",
}

_SENTENCE_END = ".?!"


class ReportError(GostudyError):
    """Base class for report-assembly errors."""


class UnknownClaim(ReportError):
    """An annotation references a claim id that does not exist."""


class MissingCitation(ReportError):
    """A supported or contradicted label arrived without citations."""


class InvalidAnnotation(ReportError):
    """Label outside the known set, or citations on a label that forbids them."""


@dataclass(frozen=True)
class Claim:
    """One sentence of an agent output, located by exact offsets."""

    id: str
    source_task: str
    text: str
    start: int
    end: int


@dataclass(frozen=True)
class SupportAnnotation:
    claim: str
    label: str
    citations: tuple[str, ...] = ()
    note: str | None = None


def segment_claims(text: str, task_id: str) -> list[Claim]:
    """Split text into sentence claims, keeping exact character offsets.

    A sentence ends at '.', '?' or '!' followed by whitespace and an
    uppercase letter, or at end of text. Inter-claim whitespace is left in
    the gaps, so claims plus gaps reconstruct the input exactly.
    """
    claims: list[Claim] = []
    n = len(text)

    def add(start: int, end: int) -> None:
        while start < end and text[start].isspace():
            start += 1
        if start < end:
            claims.append(
                Claim(
                    id=f"{task_id}:{len(claims)}",
                    source_task=task_id,
                    text=text[start:end],
                    start=start,
                    end=end,
                )
            )

    start = 0
    i = 0
    while i < n:
        if text[i] in _SENTENCE_END:
            lookahead = i + 1
            while lookahead < n and text[lookahead].isspace():
                lookahead += 1
            at_end = lookahead == n
            if at_end or (lookahead > i + 1 and text[lookahead].isupper()):
                add(start, i + 1)
                start = lookahead
                i = lookahead
                continue
        i += 1
    add(start, n)
    return claims


@dataclass
class AnnotatedReport:
    """A transcript's claims plus whatever support annotations exist so far."""

    transcript: Transcript
    claims: dict[str, Claim] = field(default_factory=dict)
    annotations: dict[str, SupportAnnotation] = field(default_factory=dict)

    def annotate(
        self,
        claim_id: str,
        label: str,
        citations: tuple[str, ...] = (),
        note: str | None = None,
    ) -> AnnotatedReport:
        """Attach a support label to one claim (last write per claim wins)."""
        if claim_id not in self.claims:
            raise UnknownClaim(f"unknown claim id: {claim_id}")
        if label not in LABELS:
            raise InvalidAnnotation(f"unknown label {label!r}")
        if label in CITED_LABELS and not citations:
            raise MissingCitation(f"label {label!r} requires at least one citation")
        if label not in CITED_LABELS and citations:
            raise InvalidAnnotation(f"label {label!r} does not take citations")
        self.annotations[claim_id] = SupportAnnotation(
            claim=claim_id, label=label, citations=tuple(citations), note=note
        )
        return self

    def summary_counts(self) -> dict[str, Counter]:
        """Per-agent label counts, recomputed from the annotation map."""
        counts: dict[str, Counter] = {}
        for annotation in self.annotations.values():
            claim = self.claims[annotation.claim]
            agent = self.transcript.output(claim.source_task).agent_id
            counts.setdefault(agent, Counter())[annotation.label] += 1
        return counts

    def label_totals(self) -> Counter:
        totals: Counter = Counter()
        for per_agent in self.summary_counts().values():
            totals.update(per_agent)
        return totals


def build_report(transcript: Transcript) -> AnnotatedReport:
    """Segment every completed output of a transcript into claims."""
    report = AnnotatedReport(transcript=transcript)
    for output in transcript.outputs:
        if output.status != STATUS_COMPLETED or not output.response:
            continue
        for claim in segment_claims(output.response, output.task_id):
            report.claims[claim.id] = claim
    return report


def load_annotations_file(path: Path) -> list[dict]:
    """Read a ``{run_id, annotations: [...]}`` JSON document."""
    with open(path, encoding="utf-8") as handle:
        doc = json.load(handle)
    if not isinstance(doc, dict) or "annotations" not in doc:
        raise ReportError(f"{path}: expected an object with an 'annotations' list")
    return list(doc["annotations"])


def apply_annotations(report: AnnotatedReport, records: list[dict]) -> AnnotatedReport:
    """Apply annotation records, reporting every dangling claim id at once."""
    dangling = [r.get("claim_id", "?") for r in records if r.get("claim_id") not in report.claims]
    if dangling:
        raise UnknownClaim(f"unknown claim ids: {', '.join(dangling)}")
    for record in records:
        report.annotate(
            record["claim_id"],
            record.get("label", LABEL_UNREVIEWED),
            citations=tuple(record.get("citations", ())),
            note=record.get("note"),
        )
    return report


def _highlight(text: str, label: str | None, citations: tuple[str, ...], escape: bool) -> str:
    chunk = html.escape(text) if escape else text
    css = HIGHLIGHT_CLASS.get(label or "")
    if css is None:
        return chunk  # unannotated or unreviewed text passes through
    rendered = f'<span class="{css}">{chunk}</span>'
    if citations:
        refs = "; ".join(html.escape(c) if escape else c for c in citations)
        rendered += f'<span class="claim-citations">[{refs}]</span>'
    return rendered


def _render_output_body(report: AnnotatedReport, task_id: str, text: str, escape: bool) -> str:
    claims = sorted(
        (c for c in report.claims.values() if c.source_task == task_id),
        key=lambda c: c.start,
    )
    parts: list[str] = []
    cursor = 0
    for claim in claims:
        if cursor < claim.start:
            parts.append(html.escape(text[cursor:claim.start]) if escape else text[cursor:claim.start])
        annotation = report.annotations.get(claim.id)
        label = annotation.label if annotation else None
        citations = annotation.citations if annotation else ()
        parts.append(_highlight(text[claim.start:claim.end], label, citations, escape))
        cursor = claim.end
    if cursor < len(text):
        parts.append(html.escape(text[cursor:]) if escape else text[cursor:])
    return "".join(parts)


_HTML_HEAD = """<!DOCTYPE html>
<html>
<head>
<meta charset="utf-8">
<title>Virtual study group report</title>
<style>
.claim-supported { background: #ccf2cc; }
.claim-unsupported { background: #fdf3a6; }
.claim-contradicted { background: #f6c6c6; }
.claim-citations { color: #555555; font-size: 0.85em; }
pre.agent-output { white-space: pre-wrap; border: 1px solid #cccccc; padding: 1em; }
</style>
</head>
<body>
<h1>Virtual study group report</h1>
"""


def render(report: AnnotatedReport, format: str = "html") -> str:
    """Render the annotated transcript as 'markdown' or 'html' text."""
    if format not in ("markdown", "html"):
        raise ValueError(f"unknown format: {format!r}")
    escape = format == "html"
    sections: list[str] = []
    for output in report.transcript.outputs:
        if output.status != STATUS_COMPLETED or not output.response:
            continue
        body = _render_output_body(report, output.task_id, output.response, escape)
        if escape:
            sections.append(
                f'<section class="agent-output" id="{html.escape(output.task_id)}">\n'
                f"<h2>{html.escape(output.agent_name)}</h2>\n"
                f'<pre class="agent-output">{body}</pre>\n'
                f"</section>\n"
            )
        else:
            sections.append(f"## {output.agent_name}\n\n{body}\n")
    if escape:
        return _HTML_HEAD + "\n".join(sections) + "</body>\n</html>\n"
    return "# Virtual study group report\n\n" + "\n".join(sections)
