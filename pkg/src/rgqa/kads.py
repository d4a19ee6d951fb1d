"""Knowledge-aware document selection over the pooled retrieved + generated candidates."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .data import Question
from .llm import Gateway, LLMError
from .prompts import SELECT, render
from .retrieval import LexicalReranker, Reranker, RerankerError, rank_passages
from .text import clip_tokens

log = logging.getLogger(__name__)

CLIP_TOKENS = 512
CANDIDATE_ORDER = "retrieved_then_generated"

_HEADER = re.compile(r"final\s*selection", re.IGNORECASE)
_LABEL = re.compile(r"\[\s*(\d{1,6})\s*\]")


@dataclass
class SelectionResult:
    reasoning: str
    selected: list[int]
    fallback_used: bool
    docs: list = field(default_factory=list)
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "selected": self.selected,
            "fallback_used": self.fallback_used,
            "reasoning": self.reasoning,
            "error": self.error,
            "candidate_order": CANDIDATE_ORDER,
            "docs": [d.doc_id for d in self.docs],
        }


def parse_selection(text: str, valid: Iterable[int], final_k: int = 5) -> list[int]:
    """Labels from the last ``Final Selection`` line, filtered, de-duplicated, capped.

    Bracketed ids are read from the rest of the header's line, or from the next
    non-empty line if the header line has none. Without a header the result is
    empty, whatever brackets appear elsewhere.
    """
    valid = set(valid)
    matches = list(_HEADER.finditer(text))
    if not matches:
        return []
    tail = text[matches[-1].end():]
    lines = tail.split("\n")
    labels = _LABEL.findall(lines[0])
    if not labels:
        rest = [ln for ln in lines[1:] if ln.strip()]
        labels = _LABEL.findall(rest[0]) if rest else []
    out: list[int] = []
    for raw in labels:
        label = int(raw)
        if label in valid and label not in out:
            out.append(label)
        if len(out) == final_k:
            break
    return out


def _reasoning(text: str) -> str:
    matches = list(_HEADER.finditer(text))
    head = text[: matches[-1].start()] if matches else text
    head = re.sub(r"^\s*-?\s*\**\s*reasoning\s*\**\s*:\s*", "", head.strip(), flags=re.IGNORECASE)
    return head.rstrip(" -*\n")


def rerank_candidates(q: Question, candidates: Sequence, final_k: int, reranker: Reranker) -> list:
    """Top ``final_k`` candidates by reranker score; lexical overlap if the reranker fails."""
    try:
        ranked = rank_passages(q.retrieval_query(), candidates, reranker, final_k)
    except RerankerError as exc:
        log.warning("%s: reranker failed during selection fallback: %s", q.qid, exc)
        ranked = rank_passages(q.retrieval_query(), candidates, LexicalReranker(), final_k)
    return [doc for doc, _ in ranked]


def select_documents(
    gateway: Gateway,
    q: Question,
    candidates: Sequence,
    *,
    final_k: int = 5,
    reranker: Reranker | None = None,
    clip: int = CLIP_TOKENS,
    trace: list | None = None,
) -> SelectionResult:
    """One integrator call over candidates labelled ``[1]..[n]`` in the given order.

    The chosen documents are returned in label order. An empty or unparseable
    selection (or a failed call) falls back to reranking all candidates.
    """
    reranker = reranker or LexicalReranker()
    if not candidates:
        return SelectionResult("", [], False)
    n = len(candidates)
    messages = render(SELECT, {
        "documents": [clip_tokens(c.passage(), clip) for c in candidates],
        "question": q.render(),
        "num_candidates": n,
        "final_k": final_k,
        "selection_format": " ".join(f"[id{i}]" for i in range(1, final_k + 1)),
    })
    req = gateway.request("integrator", messages, question_id=q.qid)
    error = None
    try:
        text = gateway.chat(req, trace).text
    except LLMError as exc:
        text, error = "", str(exc)
    selected = parse_selection(text, range(1, n + 1), final_k)
    if selected:
        docs = [candidates[i - 1] for i in sorted(selected)]
        return SelectionResult(_reasoning(text), selected, False, docs, error)

    chosen = rerank_candidates(q, candidates, final_k, reranker)
    position = {id(c): i for i, c in enumerate(candidates, start=1)}
    labels = [position[id(c)] for c in chosen]
    docs = [candidates[i - 1] for i in sorted(labels)]
    return SelectionResult(_reasoning(text), labels, True, docs, error or "no valid selection parsed")
