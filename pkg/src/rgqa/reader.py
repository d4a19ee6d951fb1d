"""Answer generation and answer parsing."""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

from .data import Question
from .llm import Gateway, LLMError
from .prompts import ANSWER, ANSWER_DIRECT, render

UNPARSED = "UNPARSED"

_MAX_OBJECT_SCAN = 256
_CHOICE = re.compile(r"^\s*(?:option\s*)?[\(\[]?\s*([A-Za-z])\s*[\)\]]?\s*(?:[.:)\-]|\s|$)", re.IGNORECASE)
_NEAR_ANSWER = re.compile(
    r"(?i:\banswer(?:[ _]choice)?)[\"']?\s*(?i:is\s*(?:option\s*)?|:|=)?\s*[:=]?\s*[\"'(\[*]*\s*([A-Z])(?![A-Za-z0-9])"
)


@dataclass
class AnswerRecord:
    question_id: str
    mode: str
    predicted: str
    reasoning: str = ""
    dataset: str = ""
    gold: str | None = None
    evidence: list[dict] = field(default_factory=list)
    label_map: dict[str, str] | None = None
    usage: dict[str, int] = field(default_factory=dict)
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    trace: dict[str, Any] = field(default_factory=dict)

    @property
    def correct(self) -> bool:
        return self.gold is not None and self.predicted == self.gold

    @property
    def retrieved_fraction(self) -> float | None:
        if not self.evidence:
            return None
        return sum(e["origin"] == "retrieved" for e in self.evidence) / len(self.evidence)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_dict(cls, payload: dict) -> "AnswerRecord":
        return cls(**payload)


def _normalize_choice(value: Any, q_labels: Sequence[str], option_texts: dict[str, str] | None) -> str:
    if not isinstance(value, str):
        return UNPARSED
    raw = value.strip()
    if option_texts:
        folded = raw.rstrip(".").casefold()
        for label, text in option_texts.items():
            if folded == text.strip().casefold():
                return label
    m = _CHOICE.match(raw)
    if not m:
        return UNPARSED
    letter = m.group(1).upper()
    return letter if letter in q_labels else UNPARSED


def _json_objects(text: str):
    decoder = json.JSONDecoder()
    pos = text.find("{")
    scanned = 0
    while pos != -1 and scanned < _MAX_OBJECT_SCAN:
        scanned += 1
        try:
            obj, _ = decoder.raw_decode(text, pos)
        except (ValueError, RecursionError):
            obj = None
        if isinstance(obj, dict):
            yield obj
        pos = text.find("{", pos + 1)


def parse_answer_full(text: str, labels: Sequence[str], option_texts: dict[str, str] | None = None) -> tuple[str, str, int]:
    """``(choice, reasoning, tier)``; tier 0 means nothing was recognised."""
    labels = list(labels)
    try:
        obj = json.loads(text.strip())
    except (ValueError, RecursionError):
        obj = None
    if isinstance(obj, dict) and "answer_choice" in obj:
        return _normalize_choice(obj["answer_choice"], labels, option_texts), _str(obj.get("reasoning")), 1

    found = [o for o in _json_objects(text) if "answer_choice" in o]
    if found:
        obj = found[-1]
        return _normalize_choice(obj["answer_choice"], labels, option_texts), _str(obj.get("reasoning")), 2

    matches = _NEAR_ANSWER.findall(text)
    if matches:
        letter = matches[-1]
        return (letter if letter in labels else UNPARSED), text.strip(), 3
    return UNPARSED, text.strip(), 0


def _str(value: Any) -> str:
    return value if isinstance(value, str) else ("" if value is None else json.dumps(value))


def parse_answer(text: str, labels: Sequence[str], option_texts: dict[str, str] | None = None) -> str:
    """Option label or ``UNPARSED``.

    Tries, in order: the whole text as a JSON object with ``answer_choice``; the
    last such object embedded in the text; the last uppercase letter standing
    right after the word "answer". A choice outside ``labels`` is ``UNPARSED``.
    """
    return parse_answer_full(text, labels, option_texts)[0]


def _origin(doc) -> str:
    return "generated" if getattr(doc, "provenance", None) else "retrieved"


def evidence_entries(docs: Sequence) -> list[dict]:
    return [{"doc_id": d.doc_id, "origin": _origin(d)} for d in docs]


def _call_reader(gateway: Gateway, q: Question, messages, mode: str, trace: list | None,
                 docs: Sequence) -> AnswerRecord:
    record = AnswerRecord(
        question_id=q.qid,
        mode=mode,
        predicted=UNPARSED,
        dataset=q.dataset,
        gold=q.gold,
        evidence=evidence_entries(docs),
        label_map=q.meta.get("label_map"),
    )
    req = gateway.request("reader", messages, question_id=q.qid)
    try:
        text = gateway.chat(req, trace).text
    except LLMError as exc:
        record.errors.append(f"reader: {exc}")
        return record
    choice, reasoning, tier = parse_answer_full(text, q.labels, q.options)
    record.predicted = choice
    record.reasoning = reasoning
    record.trace["answer_parse_tier"] = tier
    return record


def answer(gateway: Gateway, q: Question, docs: Sequence, *, mode: str = "full",
           trace: list | None = None) -> AnswerRecord:
    """Chain-of-thought answer over ``docs`` (may be empty)."""
    messages = render(ANSWER, {
        "documents": [d.passage() for d in docs],
        "question": q.render(),
        "labels": "/".join(q.labels),
    })
    return _call_reader(gateway, q, messages, mode, trace, docs)


def direct_answer(gateway: Gateway, q: Question, *, trace: list | None = None) -> AnswerRecord:
    messages = render(ANSWER_DIRECT, {"question": q.render(), "labels": "/".join(q.labels)})
    return _call_reader(gateway, q, messages, "direct", trace, [])
