"""Retrieval + generation evidence pipeline for multiple-choice medical QA."""

from .corpus import CorpusStats, CorpusStore, Snippet
from .data import Question, load_dataset
from .harness import RunConfig, RunSummary, accuracy, report, run
from .kads import parse_selection, select_documents
from .kgcc import complete_context, parse_knowledge_points
from .llm import Gateway, RoleConfig, ScriptedBackend
from .pipeline import MODES, Pipeline
from .reader import UNPARSED, AnswerRecord, parse_answer
from .retrieval import IndexConfig, LexicalReranker, build_index, source_balanced_retrieve

__version__ = "0.1.0"

__all__ = [
    "AnswerRecord", "CorpusStats", "CorpusStore", "Gateway", "IndexConfig", "LexicalReranker", "MODES",
    "Pipeline", "Question", "RoleConfig", "RunConfig", "RunSummary", "ScriptedBackend", "Snippet", "UNPARSED",
    "accuracy", "build_index", "complete_context", "load_dataset", "parse_answer", "parse_knowledge_points",
    "parse_selection", "report", "run", "select_documents", "source_balanced_retrieve",
]
