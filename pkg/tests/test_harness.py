import json
import random

import pytest

from helpers import golden_responder, synthetic_corpus, synthetic_questions
from rgqa.cache import ResponseCache
from rgqa.data import Question
from rgqa.harness import RunConfig, RunSummary, ScoringError, Tally, accuracy, read_records, report, run
from rgqa.llm import Gateway, ScriptedBackend
from rgqa.pipeline import Pipeline
from rgqa.reader import UNPARSED, AnswerRecord
from rgqa.retrieval import build_index

QS = [Question(f"q{i}", "stem", {"A": "a", "B": "b"}, "A", "toy") for i in range(4)]


def rec(qid, predicted, mode="full"):
    return AnswerRecord(qid, mode, predicted)


def test_three_of_four_correct():
    assert accuracy([rec("q0", "A"), rec("q1", "A"), rec("q2", "A"), rec("q3", "B")], QS) == 0.75


def test_all_unparsed_is_zero():
    assert accuracy([rec(q.qid, UNPARSED) for q in QS], QS) == 0.0


def test_missing_gold_is_a_scoring_error():
    qs = [Question("x", "s", {"A": "a", "B": "b"})]
    with pytest.raises(ScoringError, match="x"):
        accuracy([rec("x", "A")], qs)
    with pytest.raises(ScoringError, match="nope"):
        accuracy([rec("nope", "A")], QS)


@pytest.fixture(scope="module")
def indexes():
    return build_index(synthetic_corpus(random.Random(5), {"textbook": 30, "wikipedia": 30}))


def make_pipeline(indexes, qs, cache=None, backend=None):
    backend = backend or ScriptedBackend(responder=golden_responder(qs))
    return Pipeline(Gateway(backend, cache=cache, retries=0), indexes)


def test_run_writes_records_in_dataset_order(tmp_path, indexes):
    qs = synthetic_questions(8)
    summary = run(RunConfig("full", str(tmp_path), concurrency=4), make_pipeline(indexes, qs), qs)
    records = read_records(tmp_path / "records.jsonl")
    assert [r.question_id for r in records] == [q.qid for q in qs]
    assert summary.overall.accuracy == 1.0 and summary.overall.total == 8
    assert summary.calls == {"explorer": 8, "generator": 40, "integrator": 8, "reader": 8, "summarizer": 40}
    assert summary.mean_evidence == 5.0 and summary.retrieved_fraction == pytest.approx(0.4)
    saved = RunSummary.from_dict(json.loads((tmp_path / "summary.json").read_text()))
    assert saved.comparable() == summary.comparable()
    assert len((tmp_path / "timings.jsonl").read_text().splitlines()) == 8


def test_direct_mode_run_has_no_retrieval_or_generation(tmp_path, indexes):
    qs = synthetic_questions(4)
    run(RunConfig("direct", str(tmp_path)), make_pipeline(indexes, qs), qs)
    for r in read_records(tmp_path / "records.jsonl"):
        assert [c["role"] for c in r.trace["calls"]] == ["reader"]
        assert "retrieval" not in r.trace


def test_resume_skips_recorded_questions(tmp_path, indexes):
    qs = synthetic_questions(6)
    run(RunConfig("full", str(tmp_path), limit=3), make_pipeline(indexes, qs), qs)
    # simulate a crash mid-write
    with (tmp_path / "records.jsonl").open("a") as fh:
        fh.write('{"question_id": "syn-00')
    backend = ScriptedBackend(responder=golden_responder(qs))
    summary = run(RunConfig("full", str(tmp_path)), make_pipeline(indexes, qs, backend=backend), qs)
    assert summary.runtime["resumed"] == 3
    assert backend.calls == 3 * 13
    assert [r.question_id for r in read_records(tmp_path / "records.jsonl")] == [q.qid for q in qs]


def test_warm_cache_rerun_is_identical(tmp_path, indexes):
    qs = synthetic_questions(5)
    cache = ResponseCache(tmp_path / "cache")
    first = run(RunConfig("full", str(tmp_path / "a")), make_pipeline(indexes, qs, cache), qs)
    backend = ScriptedBackend({})  # any backend call would raise
    second = run(RunConfig("full", str(tmp_path / "b")), make_pipeline(indexes, qs, cache, backend), qs)
    assert backend.calls == 0 and second.runtime["backend_calls"] == 0
    assert first.comparable() == second.comparable()
    assert (tmp_path / "a" / "records.jsonl").read_bytes() == (tmp_path / "b" / "records.jsonl").read_bytes()


def test_unparsed_counts_wrong_in_summary(tmp_path, indexes):
    qs = synthetic_questions(4)
    answers = {"syn-000": '{"answer_choice": "A"}', "syn-001": "no idea", "syn-002": '{"answer_choice": "A"}',
               "syn-003": '{"answer_choice": "D"}'}
    base = golden_responder(qs)
    backend = ScriptedBackend(responder=lambda r: answers[r.question_id] if r.role == "reader" else base(r))
    s = run(RunConfig("rag_only", str(tmp_path)), make_pipeline(indexes, qs, backend=backend), qs)
    assert (s.overall.correct, s.overall.wrong, s.overall.unparsed) == (2, 1, 1)
    assert s.overall.accuracy == 0.5


def _summary(mode, accs, frac):
    datasets = {name: Tally(10, round(a * 10), 10 - round(a * 10), 0, a) for name, a in accs.items()}
    total = Tally(10 * len(accs), sum(t.correct for t in datasets.values()),
                  sum(t.wrong for t in datasets.values()), 0)
    return RunSummary(mode, datasets, total, 5.0, frac, {}, {}, 0)


def test_report_has_one_row_per_mode(tmp_path):
    summaries = [
        _summary("full", {"medqa": 0.7, "bioasq": 0.9}, 0.4),
        _summary("rag_only", {"medqa": 0.6, "bioasq": 0.8}, 1.0),
        _summary("gag_only", {"medqa": 0.5, "bioasq": 0.7}, None),
    ]
    table = report(summaries, tmp_path)
    lines = table.splitlines()
    assert len(lines) == 5
    assert lines[0].split() == ["mode", "bioasq", "medqa", "avg", "n", "correct", "wrong", "unparsed", "mean_docs",
                                "retrieved_frac"]
    assert lines[2].split()[:4] == ["full", "90.00", "70.00", "80.00"]
    assert lines[4].split()[-1] == "-"
    data = json.loads((tmp_path / "report.json").read_text())
    assert [r["mode"] for r in data["rows"]] == ["full", "rag_only", "gag_only"]
    assert (tmp_path / "report.txt").read_text() == table
