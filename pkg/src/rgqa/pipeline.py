"""Per-question orchestration for every run mode.

=========  ===============================================================
mode       evidence handed to the reader
=========  ===============================================================
full       integrator selection over retrieved + knowledge-guided generated
direct     none (direct-response prompt)
rag_only   retrieved documents
gag_only   knowledge-guided generated documents, retrieval skipped
no_kgcc    integrator selection over retrieved + question-only generated
no_kads    reranker top-k over retrieved + knowledge-guided generated
=========  ===============================================================
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .data import Question
from .kads import rerank_candidates, select_documents
from .kgcc import MAX_POINTS, complete_context
from .llm import Gateway
from .reader import AnswerRecord, answer, direct_answer
from .retrieval import LexicalReranker, Reranker, SourceIndexes, source_balanced_retrieve

MODES = ("full", "direct", "rag_only", "gag_only", "no_kgcc", "no_kads")
RETRIEVAL_MODES = frozenset({"full", "rag_only", "no_kgcc", "no_kads"})

# Roles each mode is allowed to call; the mode-isolation tests read traces against this.
ALLOWED_ROLES: dict[str, frozenset[str]] = {
    "full": frozenset({"summarizer", "explorer", "generator", "integrator", "reader"}),
    "direct": frozenset({"reader"}),
    "rag_only": frozenset({"reader"}),
    "gag_only": frozenset({"explorer", "generator", "reader"}),
    "no_kgcc": frozenset({"generator", "integrator", "reader"}),
    "no_kads": frozenset({"summarizer", "explorer", "generator", "reader"}),
}


@dataclass
class Pipeline:
    gateway: Gateway
    indexes: SourceIndexes | None = None
    reranker: Reranker = field(default_factory=LexicalReranker)
    final_k: int = 5
    max_points: int = MAX_POINTS
    demos: Sequence[dict] = ()
    refill_budget: int | None = None

    def answer_question(self, q: Question, mode: str) -> AnswerRecord:
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
        calls: list[dict] = []
        stage: dict = {}
        errors: list[str] = []
        warnings: list[str] = []

        if mode == "direct":
            record = direct_answer(self.gateway, q, trace=calls)
            return self._finish(record, stage, calls, errors, warnings)

        retrieved = []
        if mode in RETRIEVAL_MODES:
            if self.indexes is None:
                raise ValueError(f"mode {mode!r} needs a retrieval index")
            result = source_balanced_retrieve(q, self.indexes, self.reranker)
            stage["retrieval"] = result.to_dict()
            retrieved = result.docs
            if result.fallback_used:
                warnings.append(f"reranker fallback: {result.error}")
            if not retrieved:
                warnings.append("no documents retrieved")

        if mode == "rag_only":
            docs = list(retrieved)
        else:
            completion = complete_context(
                self.gateway, q, retrieved,
                final_k=self.final_k,
                max_points=self.max_points,
                use_knowledge=mode != "no_kgcc",
                refill_budget=self.refill_budget,
                demos=self.demos,
                trace=calls,
            )
            stage["summaries"] = [s.to_dict() for s in completion.summaries]
            stage["knowledge_points"] = [p.title for p in completion.points]
            stage["generated"] = [d.to_dict() for d in completion.docs]
            errors += completion.errors
            if completion.incomplete:
                warnings.append(f"generated {len(completion.docs)}/{self.final_k} background documents")
            generated = completion.docs

            if mode == "gag_only":
                docs = list(generated)
            elif mode == "no_kads":
                pool = [*retrieved, *generated]
                docs = rerank_candidates(q, pool, self.final_k, self.reranker) if pool else []
                stage["selection"] = {"method": "rerank", "reranker": self.reranker.name,
                                      "docs": [d.doc_id for d in docs]}
            else:
                selection = select_documents(
                    self.gateway, q, [*retrieved, *generated],
                    final_k=self.final_k, reranker=self.reranker, trace=calls,
                )
                stage["selection"] = selection.to_dict()
                if selection.fallback_used:
                    warnings.append(f"selection fallback: {selection.error}")
                docs = selection.docs

        record = answer(self.gateway, q, docs, mode=mode, trace=calls)
        return self._finish(record, stage, calls, errors, warnings)

    @staticmethod
    def _finish(record: AnswerRecord, stage: dict, calls: list[dict], errors: list[str],
                warnings: list[str]) -> AnswerRecord:
        record.trace = {**stage, **record.trace, "calls": calls}
        record.errors = errors + record.errors
        record.warnings = warnings + record.warnings
        usage = {"calls": len(calls), "prompt_tokens": 0, "completion_tokens": 0}
        for c in calls:
            for k in ("prompt_tokens", "completion_tokens"):
                usage[k] += int(c.get("usage", {}).get(k, 0))
        record.usage = usage
        return record


def roles_called(record: AnswerRecord) -> list[str]:
    return [c["role"] for c in record.trace.get("calls", [])]
