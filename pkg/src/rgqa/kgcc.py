"""Knowledge-guided context completion.

Three steps per question: summarize each retrieved document, ask the explorer
which knowledge is still missing, then generate one background document per
missing-knowledge point and top up with question-conditioned documents.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from .data import Question
from .llm import Gateway, LLMError
from .prompts import EXPLORE, GENERATE, GENERATE_FROM_QUESTION, SUMMARIZE, render
from .retrieval import ScoredDoc
from .text import normalize_ws

log = logging.getLogger(__name__)

NO_INFO = "no useful information"
MAX_POINTS = 3

_SUMMARY_PREFIX = re.compile(r"^\s*\**\s*useful information\s*\**\s*:\s*\**\s*", re.IGNORECASE)
_DOC_PREFIX = re.compile(r"^\s*\**\s*background document\s*\**\s*:\s*\**\s*", re.IGNORECASE)
_KNOWLEDGE_LINE = re.compile(
    r"^\s*(?:[-*•]\s+)?(?:\*\*)?\s*knowledge\s*(?:point\s*)?#?\s*(\d+)\s*(?:\*\*)?\s*[:：]\s*(?:\*\*)?\s*(.*?)\s*$",
    re.IGNORECASE,
)


@dataclass
class SummaryRecord:
    doc_id: str
    text: str
    useful: bool
    error: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class KnowledgePoint:
    index: int
    title: str


@dataclass(frozen=True)
class GeneratedDoc:
    doc_id: str
    text: str
    provenance: str  # "knowledge" or "question"
    knowledge_index: int | None = None
    title: str = ""

    def passage(self) -> str:
        return self.text

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ContextCompletion:
    docs: list[GeneratedDoc]
    summaries: list[SummaryRecord] = field(default_factory=list)
    points: list[KnowledgePoint] = field(default_factory=list)
    incomplete: bool = False
    errors: list[str] = field(default_factory=list)


def is_no_info(text: str) -> bool:
    return normalize_ws(text).rstrip(" .!").casefold() == NO_INFO


def load_demonstrations(path: str | Path) -> list[dict]:
    """Read ``{question, document, summary}`` JSON lines used as few-shot turns."""
    demos = []
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip():
            continue
        rec = json.loads(raw)
        if not all(isinstance(rec.get(k), str) for k in ("question", "document", "summary")):
            raise ValueError(f"{path}:{line_no}: demonstration needs string question/document/summary")
        demos.append(rec)
    return demos


def summarize_document(gateway: Gateway, q: Question, doc: ScoredDoc, position: int, *,
                       demos: Sequence[dict] = (), trace: list | None = None) -> SummaryRecord:
    messages: list[dict[str, str]] = []
    for demo in demos:
        messages += render(SUMMARIZE, {"documents": demo["document"], "question": demo["question"]})
        messages.append({"role": "assistant", "content": demo["summary"]})
    messages += render(SUMMARIZE, {"documents": doc.passage(), "question": q.render()})
    req = gateway.request("summarizer", messages, question_id=q.qid, discriminator=f"doc{position}")
    try:
        text = gateway.chat(req, trace).text
    except LLMError as exc:
        return SummaryRecord(doc.doc_id, "", useful=False, error=str(exc))
    text = _SUMMARY_PREFIX.sub("", text).strip()
    return SummaryRecord(doc.doc_id, text, useful=bool(text) and not is_no_info(text))


def parse_knowledge_points(text: str, max_points: int = MAX_POINTS) -> list[KnowledgePoint]:
    """Extract ``Knowledge i: title`` lines in order of appearance.

    Accepts bullet and bold variants. Titles are stripped of markdown emphasis
    and template brackets; duplicates (case/whitespace-insensitive) keep the first.
    """
    titles: list[str] = []
    seen: set[str] = set()
    for line in text.splitlines():
        m = _KNOWLEDGE_LINE.match(line)
        if not m:
            continue
        title = m.group(2).strip().strip("*").strip()
        if title.startswith("[") and title.endswith("]"):
            title = title[1:-1]
        title = normalize_ws(title.strip("*").strip())
        norm = title.casefold()
        if not title or norm in seen:
            continue
        seen.add(norm)
        titles.append(title)
        if len(titles) == max_points:
            break
    return [KnowledgePoint(i, t) for i, t in enumerate(titles, start=1)]


def explore_missing_knowledge(gateway: Gateway, q: Question, summaries: Sequence[SummaryRecord], *,
                              max_points: int = MAX_POINTS, trace: list | None = None) -> list[KnowledgePoint]:
    """Missing-knowledge titles; only useful summaries are shown to the explorer."""
    info = [s.text for s in summaries if s.useful]
    fmt = "\n".join(f"- Knowledge {i}: [Conceptual title {i}]" for i in range(1, max_points + 1))
    messages = render(EXPLORE, {
        "information": info,
        "question": q.render(),
        "max_points": _count_word(max_points),
        "knowledge_format": fmt,
    })
    req = gateway.request("explorer", messages, question_id=q.qid)
    try:
        text = gateway.chat(req, trace).text
    except LLMError as exc:
        log.warning("%s: explorer failed: %s", q.qid, exc)
        return []
    return parse_knowledge_points(text, max_points)


def _count_word(n: int) -> str:
    words = ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"]
    return words[n] if 0 <= n < len(words) else str(n)


def generate_background(gateway: Gateway, q: Question, point: KnowledgePoint | None, *,
                        attempt: int = 1, trace: list | None = None) -> GeneratedDoc | None:
    """One background document, or ``None`` when the call fails or returns nothing.

    ``attempt`` numbers question-conditioned generations so that repeated
    samples of the same prompt are cached and scripted independently.
    """
    if point is not None:
        messages = render(GENERATE, {"question": q.render(), "knowledge_point": point.title})
        req = gateway.request("generator", messages, question_id=q.qid, discriminator=f"k{point.index}")
    else:
        messages = render(GENERATE_FROM_QUESTION, {"question": q.render()})
        req = gateway.request("generator", messages, question_id=q.qid, discriminator=f"q{attempt}", sample=attempt)
    try:
        text = gateway.chat(req, trace).text
    except LLMError as exc:
        log.warning("%s: generation %s failed: %s", q.qid, req.discriminator, exc)
        return None
    text = _DOC_PREFIX.sub("", text).strip()
    if not text:
        return None
    if point is not None:
        return GeneratedDoc("", text, "knowledge", point.index)
    return GeneratedDoc("", text, "question")


def complete_context(
    gateway: Gateway,
    q: Question,
    retrieved: Sequence[ScoredDoc],
    *,
    final_k: int = 5,
    max_points: int = MAX_POINTS,
    use_knowledge: bool = True,
    refill_budget: int | None = None,
    demos: Sequence[dict] = (),
    trace: list | None = None,
) -> ContextCompletion:
    """Produce ``final_k`` generated documents for ``q``.

    Knowledge-conditioned documents come first in knowledge-point order,
    followed by question-conditioned ones. Failed generations are replaced by
    extra question-conditioned attempts, at most ``refill_budget`` of them
    (default ``final_k``); if that runs out the result is flagged incomplete.
    With ``use_knowledge=False`` the summarize/explore steps are skipped.
    """
    out = ContextCompletion(docs=[])
    if use_knowledge:
        out.summaries = [
            summarize_document(gateway, q, doc, i, demos=demos, trace=trace)
            for i, doc in enumerate(retrieved, start=1)
        ]
        out.errors += [f"summary {s.doc_id}: {s.error}" for s in out.summaries if s.error]
        out.points = explore_missing_knowledge(gateway, q, out.summaries, max_points=max_points, trace=trace)
        out.points = out.points[:final_k]

    docs: list[GeneratedDoc] = []
    for point in out.points:
        doc = generate_background(gateway, q, point, trace=trace)
        if doc is None:
            out.errors.append(f"generation for knowledge {point.index} failed")
        else:
            docs.append(doc)

    planned = final_k - len(out.points)
    budget = planned + (final_k if refill_budget is None else refill_budget)
    attempt = 0
    while len(docs) < final_k and attempt < budget:
        attempt += 1
        doc = generate_background(gateway, q, None, attempt=attempt, trace=trace)
        if doc is None:
            out.errors.append(f"question-conditioned generation {attempt} failed")
        else:
            docs.append(doc)

    out.docs = [
        GeneratedDoc(f"gen:{q.qid}:{i}", d.text, d.provenance, d.knowledge_index)
        for i, d in enumerate(docs, start=1)
    ]
    out.incomplete = len(out.docs) < final_k
    if out.incomplete:
        log.warning("%s: only %d/%d background documents generated", q.qid, len(out.docs), final_k)
    return out
