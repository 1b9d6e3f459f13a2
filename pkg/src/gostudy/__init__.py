"""Gene Ontology knowledge discovery pipeline.

Ranks GO terms for ageing-related gene sets with lazy hierarchical feature
selection, then hands the top terms to a virtual study group of chat-model
agents that drafts, critiques and synthesises a knowledge report with
claim-level support annotations.
"""

from gostudy.annotations import (
    Dataset,
    GeneInstance,
    binary_vector,
    load_annotations,
    parse_annotation_tsv,
    true_path_closure,
)
from gostudy.backend import HttpChatBackend, MockChatBackend, RetryPolicy, SamplingParams, chat
from gostudy.errors import ConfigError, GostudyError
from gostudy.hfs import (
    RankedTermTable,
    SelectionResult,
    TanTree,
    edge_frequencies,
    hip_select,
    learn_tan_tree,
    rank_dataset,
    rank_terms,
    selection_frequencies,
)
from gostudy.ontology import OntologyGraph, Term, parse_obo
from gostudy.report import AnnotatedReport, Claim, build_report, render, segment_claims
from gostudy.vsg import (
    AgentGraph,
    Transcript,
    VsgConfig,
    build_study_group,
    orchestrate,
    render_prompt,
)

__version__ = "0.1.0"

__all__ = [
    "AgentGraph",
    "AnnotatedReport",
    "Claim",
    "ConfigError",
    "Dataset",
    "GeneInstance",
    "GostudyError",
    "HttpChatBackend",
    "MockChatBackend",
    "OntologyGraph",
    "RankedTermTable",
    "RetryPolicy",
    "SamplingParams",
    "SelectionResult",
    "TanTree",
    "Term",
    "Transcript",
    "VsgConfig",
    "binary_vector",
    "build_report",
    "build_study_group",
    "chat",
    "edge_frequencies",
    "hip_select",
    "learn_tan_tree",
    "load_annotations",
    "orchestrate",
    "parse_annotation_tsv",
    "parse_obo",
    "rank_dataset",
    "rank_terms",
    "render",
    "render_prompt",
    "segment_claims",
    "selection_frequencies",
    "true_path_closure",
    "__version__",
]
