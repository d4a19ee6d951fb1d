"""Evaluation runs: fan questions out through a :class:`Pipeline`, persist records, summarise.

Output directory layout::

    records.jsonl   one AnswerRecord per line, in dataset order once the run ends
    timings.jsonl   per-question wall time (kept out of records so replays are byte-identical)
    summary.json    RunSummary
"""

from __future__ import annotations

import json
import logging
import os
import statistics
import tempfile
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .data import Question
from .pipeline import MODES, Pipeline
from .reader import UNPARSED, AnswerRecord

log = logging.getLogger(__name__)


class ScoringError(Exception):
    pass


@dataclass
class RunConfig:
    mode: str = "full"
    output_dir: str = "runs/out"
    concurrency: int = 4
    limit: int | None = None

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.concurrency < 1:
            raise ValueError("concurrency must be >= 1")


@dataclass
class Tally:
    total: int = 0
    correct: int = 0
    wrong: int = 0
    unparsed: int = 0
    accuracy: float | None = None


@dataclass
class RunSummary:
    mode: str
    datasets: dict[str, Tally]
    overall: Tally
    mean_evidence: float
    retrieved_fraction: float | None
    calls: dict[str, int]
    tokens: dict[str, int]
    errors: int
    runtime: dict = field(default_factory=dict)

    def comparable(self) -> dict:
        """Everything except wall-clock and cache counters."""
        out = asdict(self)
        out.pop("runtime")
        return out

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "RunSummary":
        payload = dict(payload)
        payload["datasets"] = {k: Tally(**v) for k, v in payload["datasets"].items()}
        payload["overall"] = Tally(**payload["overall"])
        return cls(**payload)


def accuracy(records: Iterable[AnswerRecord], questions: Sequence[Question]) -> float:
    """Share of records whose prediction equals gold; ``UNPARSED`` counts as wrong."""
    gold = {q.qid: q.gold for q in questions}
    records = list(records)
    unknown = [r.question_id for r in records if r.question_id not in gold]
    missing = [r.question_id for r in records if r.question_id in gold and gold[r.question_id] is None]
    if unknown or missing:
        raise ScoringError(f"no gold label for: {', '.join(unknown + missing)}")
    if not records:
        raise ScoringError("no records to score")
    hits = sum(r.predicted == gold[r.question_id] for r in records)
    return hits / len(records)


def _tally(records: Sequence[AnswerRecord], questions: dict[str, Question]) -> Tally:
    t = Tally(total=len(records))
    scorable = all(questions[r.question_id].gold is not None for r in records) and records
    for r in records:
        if r.predicted == UNPARSED:
            t.unparsed += 1
        elif r.predicted == questions[r.question_id].gold:
            t.correct += 1
        else:
            t.wrong += 1
    if scorable:
        t.accuracy = t.correct / t.total
    return t


def summarize_run(records: Sequence[AnswerRecord], questions: Sequence[Question], mode: str) -> RunSummary:
    by_id = {q.qid: q for q in questions}
    groups: dict[str, list[AnswerRecord]] = {}
    for r in records:
        groups.setdefault(by_id[r.question_id].dataset or "default", []).append(r)
    fractions = [f for f in (r.retrieved_fraction for r in records) if f is not None]
    calls = Counter(c["role"] for r in records for c in r.trace.get("calls", []))
    return RunSummary(
        mode=mode,
        datasets={name: _tally(recs, by_id) for name, recs in sorted(groups.items())},
        overall=_tally(records, by_id),
        mean_evidence=statistics.fmean(len(r.evidence) for r in records) if records else 0.0,
        retrieved_fraction=statistics.fmean(fractions) if fractions else None,
        calls=dict(sorted(calls.items())),
        tokens={
            "prompt_tokens": sum(r.usage.get("prompt_tokens", 0) for r in records),
            "completion_tokens": sum(r.usage.get("completion_tokens", 0) for r in records),
        },
        errors=sum(bool(r.errors) for r in records),
    )


def read_records(path: str | Path) -> list[AnswerRecord]:
    """Load records, ignoring a torn final line left by an interrupted run."""
    path = Path(path)
    if not path.exists():
        return []
    out = []
    for raw in path.read_text(encoding="utf-8").splitlines():
        if not raw.strip():
            continue
        try:
            out.append(AnswerRecord.from_dict(json.loads(raw)))
        except (ValueError, TypeError):
            log.warning("%s: skipping unreadable record line", path)
    return out


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def run(config: RunConfig, pipeline: Pipeline, questions: Sequence[Question]) -> RunSummary:
    """Answer every question not already recorded in ``config.output_dir``.

    Records are appended as questions finish (the main thread is the only
    writer), then rewritten in dataset order. A stage failure inside one
    question degrades that record; it never aborts the run.
    """
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records_path = out_dir / "records.jsonl"
    questions = list(questions)[: config.limit] if config.limit else list(questions)
    wanted = {q.qid for q in questions}

    done = {r.question_id: r for r in read_records(records_path) if r.question_id in wanted and r.mode == config.mode}
    todo = [q for q in questions if q.qid not in done]
    log.info("%s: %d questions, %d already recorded", config.mode, len(questions), len(done))

    stats = pipeline.gateway.stats
    calls_before, hits_before = stats.backend_calls, stats.cache_hits
    started = time.perf_counter()

    # Drop anything that is not a completed record for this run before appending.
    _atomic_write(records_path, "".join(done[q.qid].to_json() + "\n" for q in questions if q.qid in done))

    def work(q: Question) -> tuple[AnswerRecord, float]:
        t0 = time.perf_counter()
        rec = pipeline.answer_question(q, config.mode)
        return rec, time.perf_counter() - t0

    with records_path.open("a", encoding="utf-8") as rec_fh, (out_dir / "timings.jsonl").open("a") as time_fh:
        with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
            futures = [pool.submit(work, q) for q in todo]
            for fut in as_completed(futures):
                rec, seconds = fut.result()
                done[rec.question_id] = rec
                rec_fh.write(rec.to_json() + "\n")
                rec_fh.flush()
                time_fh.write(json.dumps({"question_id": rec.question_id, "seconds": round(seconds, 4)}) + "\n")

    ordered = [done[q.qid] for q in questions]
    _atomic_write(records_path, "".join(r.to_json() + "\n" for r in ordered))
    summary = summarize_run(ordered, questions, config.mode)
    summary.runtime = {
        "wall_time_s": round(time.perf_counter() - started, 3),
        "backend_calls": stats.backend_calls - calls_before,
        "cache_hits": stats.cache_hits - hits_before,
        "resumed": len(questions) - len(todo),
    }
    _atomic_write(out_dir / "summary.json", json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n")
    return summary


def _pct(x: float | None) -> str:
    return "-" if x is None else f"{100 * x:.2f}"


def report(summaries: Sequence[RunSummary], out_dir: str | Path | None = None) -> str:
    """Aligned accuracy table, one row per summary, in input order.

    Dataset columns are sorted by name; ``avg`` is the mean of per-dataset
    accuracies. When ``out_dir`` is given, ``report.txt`` and ``report.json``
    are written there.
    """
    if not summaries:
        raise ValueError("report needs at least one summary")
    datasets = sorted({name for s in summaries for name in s.datasets})
    header = ["mode", *datasets, "avg", "n", "correct", "wrong", "unparsed", "mean_docs", "retrieved_frac"]
    rows = []
    machine = []
    for s in summaries:
        accs = [s.datasets[d].accuracy if d in s.datasets else None for d in datasets]
        known = [a for a in accs if a is not None]
        avg = statistics.fmean(known) if known and len(known) == len(accs) else None
        rows.append([
            s.mode, *(_pct(a) for a in accs), _pct(avg), str(s.overall.total), str(s.overall.correct),
            str(s.overall.wrong), str(s.overall.unparsed), f"{s.mean_evidence:.2f}",
            "-" if s.retrieved_fraction is None else f"{s.retrieved_fraction:.3f}",
        ])
        machine.append({"mode": s.mode, "accuracy": dict(zip(datasets, accs)), "average": avg,
                        "total": s.overall.total, "correct": s.overall.correct, "wrong": s.overall.wrong,
                        "unparsed": s.overall.unparsed, "mean_evidence": s.mean_evidence,
                        "retrieved_fraction": s.retrieved_fraction})
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(header)]
    fmt = lambda cells: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths)))  # noqa: E731
    lines = [fmt(header), "  ".join("-" * w for w in widths), *(fmt(r) for r in rows)]
    table = "\n".join(lines) + "\n"
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(table, encoding="utf-8")
        (out / "report.json").write_text(json.dumps({"columns": header, "rows": machine}, indent=2) + "\n")
    return table
