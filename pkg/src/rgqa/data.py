"""Question type and benchmark dataset loaders.

Every loader maps its benchmark's field names onto :class:`Question`. The
canonical JSONL schema is::

    {"id": "q1", "question": "...", "options": {"A": "...", "B": "..."},
     "answer": "B", "dataset": "medqa"}

``options`` may also be a list, in which case labels A, B, C, ... are assigned
in list order. ``answer`` is optional (inference-only runs).
"""

from __future__ import annotations

import json
import logging
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterator

from .text import normalize_ws

log = logging.getLogger(__name__)

LABELS = string.ascii_uppercase


class DatasetError(Exception):
    pass


@dataclass(frozen=True)
class Question:
    qid: str
    stem: str
    options: dict[str, str]
    gold: str | None = None
    dataset: str = ""
    meta: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if not self.qid:
            raise ValueError("empty question id")
        if not self.stem.strip():
            raise ValueError(f"{self.qid}: empty question stem")
        if not 2 <= len(self.options) <= 4:
            raise ValueError(f"{self.qid}: expected 2-4 options, got {len(self.options)}")
        if any(not str(t).strip() for t in self.options.values()):
            raise ValueError(f"{self.qid}: empty option text")
        if self.gold is not None and self.gold not in self.options:
            raise ValueError(f"{self.qid}: gold label {self.gold!r} not among {list(self.options)}")

    @property
    def labels(self) -> list[str]:
        return list(self.options)

    def render(self) -> str:
        """Stem followed by one ``"A. text"`` line per option, in dataset order."""
        lines = [self.stem.strip()]
        lines += [f"{label}. {text}" for label, text in self.options.items()]
        return "\n".join(lines)

    def retrieval_query(self) -> str:
        return " ".join([self.stem, *self.options.values()])

    def to_dict(self) -> dict:
        out = {"id": self.qid, "question": self.stem, "options": dict(self.options), "answer": self.gold,
               "dataset": self.dataset}
        if self.meta:
            out["meta"] = self.meta
        return out


def _labelled(values: list[str]) -> dict[str, str]:
    return {LABELS[i]: normalize_ws(str(v)) for i, v in enumerate(values)}


def _options_field(raw: Any) -> dict[str, str]:
    if isinstance(raw, dict):
        return {str(k).strip(): normalize_ws(str(v)) for k, v in raw.items()}
    if isinstance(raw, list):
        return _labelled(raw)
    raise ValueError("'options' must be an object or a list")


def _gold_from_index(idx: Any, n: int, base: int) -> str:
    if isinstance(idx, str) and idx.strip().isdigit():
        idx = int(idx)
    if not isinstance(idx, int) or isinstance(idx, bool):
        raise ValueError(f"answer index {idx!r} is not an integer")
    pos = idx - base
    if not 0 <= pos < n:
        raise ValueError(f"answer index {idx!r} out of range")
    return LABELS[pos]


def _canonical(rec: dict, n: int, dataset: str) -> Question:
    opts = _options_field(rec["options"])
    gold = rec.get("answer")
    return Question(
        qid=str(rec.get("id") or f"{dataset}-{n:05d}"),
        stem=normalize_ws(rec["question"]),
        options=opts,
        gold=None if gold in (None, "") else str(gold).strip(),
        dataset=rec.get("dataset") or dataset,
        meta=rec.get("meta") or {},
    )


def _medqa(rec: dict, n: int, dataset: str) -> Question:
    opts = _options_field(rec["options"])
    gold = rec.get("answer_idx")
    return Question(
        qid=str(rec.get("id") or f"{dataset}-{n:05d}"),
        stem=normalize_ws(rec["question"]),
        options=opts,
        gold=None if gold in (None, "") else str(gold).strip(),
        dataset=dataset,
    )


def _medmcqa(rec: dict, n: int, dataset: str) -> Question:
    # Raw MedMCQA release: opa..opd, "cop" is 1-based.
    opts = _labelled([rec["opa"], rec["opb"], rec["opc"], rec["opd"]])
    cop = rec.get("cop")
    return Question(
        qid=str(rec.get("id") or f"{dataset}-{n:05d}"),
        stem=normalize_ws(rec["question"]),
        options=opts,
        gold=None if cop in (None, "") else _gold_from_index(cop, 4, base=1),
        dataset=dataset,
    )


def _mmlu(rec: dict, n: int, dataset: str) -> Question:
    opts = _labelled(list(rec["choices"]))
    ans = rec.get("answer")
    if isinstance(ans, str) and ans.strip().upper() in opts:
        gold = ans.strip().upper()
    elif ans in (None, ""):
        gold = None
    else:
        gold = _gold_from_index(ans, len(opts), base=0)
    meta = {"subject": rec["subject"]} if rec.get("subject") else {}
    return Question(
        qid=str(rec.get("id") or f"{dataset}-{n:05d}"),
        stem=normalize_ws(rec["question"]),
        options=opts,
        gold=gold,
        dataset=dataset,
        meta=meta,
    )


def _yes_no(words: list[str]) -> Callable[[dict, int, str], Question]:
    label_map = {LABELS[i]: w for i, w in enumerate(words)}
    inverse = {w: label for label, w in label_map.items()}

    def adapter(rec: dict, n: int, dataset: str) -> Question:
        stem = rec.get("QUESTION") or rec.get("question") or rec.get("body")
        if not isinstance(stem, str):
            raise KeyError("QUESTION/question/body")
        if rec.get("type") not in (None, "yesno"):
            raise ValueError(f"not a yes/no question (type {rec.get('type')!r})")
        raw = rec.get("final_decision", rec.get("exact_answer", rec.get("answer")))
        if isinstance(raw, list):
            raw = raw[0] if raw else None
        gold = None
        if raw not in (None, ""):
            word = str(raw).strip().lower()
            if word not in inverse:
                raise ValueError(f"answer {raw!r} not in {words}")
            gold = inverse[word]
        # Original abstracts/snippets are deliberately dropped: the pipeline supplies its own evidence.
        return Question(
            qid=str(rec.get("id") or rec.get("pmid") or f"{dataset}-{n:05d}"),
            stem=normalize_ws(stem),
            options=dict(label_map),
            gold=gold,
            dataset=dataset,
            meta={"label_map": dict(label_map)},
        )

    return adapter


ADAPTERS: dict[str, Callable[[dict, int, str], Question]] = {
    "canonical": _canonical,
    "medqa": _medqa,
    "medmcqa": _medmcqa,
    "mmlu": _mmlu,
    "pubmedqa": _yes_no(["yes", "no", "maybe"]),
    "bioasq": _yes_no(["yes", "no"]),
}


def _records(path: Path) -> Iterator[tuple[int, Any]]:
    """Yield ``(position, record)`` from JSONL, a JSON list, or a JSON object keyed by id.

    JSONL lines that fail to parse are yielded as ``(line, exception)``.
    """
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        doc = None
    if isinstance(doc, list):
        yield from enumerate(doc, start=1)
        return
    if isinstance(doc, dict) and doc and all(isinstance(v, dict) for v in doc.values()):
        for i, (key, rec) in enumerate(doc.items(), start=1):
            yield i, {"id": key, **rec}
        return
    for line_no, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            yield line_no, json.loads(raw)
        except json.JSONDecodeError as exc:
            yield line_no, exc


def load_dataset(
    path: str | Path,
    fmt: str = "canonical",
    *,
    dataset: str | None = None,
    expected_count: int | None = None,
    rejects: list[dict] | None = None,
) -> list[Question]:
    """Load and validate questions from ``path`` using adapter ``fmt``.

    Invalid records are skipped and described in ``rejects`` (when given) as
    ``{"line": n, "reason": ...}``. Raises :class:`DatasetError` when nothing
    valid remains or when ``expected_count`` does not match.
    """
    path = Path(path)
    if fmt not in ADAPTERS:
        raise DatasetError(f"unknown dataset format {fmt!r}; known: {sorted(ADAPTERS)}")
    if not path.is_file():
        raise FileNotFoundError(path)
    adapter = ADAPTERS[fmt]
    name = dataset or (fmt if fmt != "canonical" else path.stem)
    out: list[Question] = []
    seen: set[str] = set()
    bad: list[dict] = []
    for pos, rec in _records(path):
        try:
            if isinstance(rec, Exception):
                raise ValueError(f"invalid json: {rec}")
            if not isinstance(rec, dict):
                raise ValueError("record is not a json object")
            q = adapter(rec, pos, name)
            if q.qid in seen:
                raise ValueError(f"duplicate question id {q.qid!r}")
        except KeyError as exc:
            bad.append({"line": pos, "reason": f"missing field {exc.args[0]!r}"})
            continue
        except (ValueError, TypeError) as exc:
            bad.append({"line": pos, "reason": str(exc)})
            continue
        seen.add(q.qid)
        out.append(q)
    if rejects is not None:
        rejects.extend(bad)
    if bad:
        log.warning("%s: %d record(s) rejected", path, len(bad))
    if not out:
        raise DatasetError(f"{path}: no valid questions ({len(bad)} rejected)")
    if expected_count is not None and len(out) != expected_count:
        raise DatasetError(f"{path}: expected {expected_count} questions, loaded {len(out)}")
    log.info("%s: loaded %d questions (%s)", path, len(out), fmt)
    return out
