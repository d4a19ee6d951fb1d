import random

import pytest

from helpers import golden_responder, synthetic_corpus, synthetic_questions
from rgqa.kads import rerank_candidates
from rgqa.kgcc import GeneratedDoc
from rgqa.llm import Gateway, ScriptedBackend
from rgqa.pipeline import ALLOWED_ROLES, MODES, Pipeline, roles_called
from rgqa.retrieval import LexicalReranker, build_index, source_balanced_retrieve


@pytest.fixture(scope="module")
def indexes():
    return build_index(synthetic_corpus(random.Random(11), {"textbook": 40, "wikipedia": 40}))


def make_pipeline(indexes, qs, **kw):
    return Pipeline(Gateway(ScriptedBackend(responder=golden_responder(qs, **kw)), retries=0), indexes)


def test_full_mode_stages(indexes):
    [q] = synthetic_questions(1)
    rec = make_pipeline(indexes, [q]).answer_question(q, "full")
    assert rec.predicted == q.gold and rec.correct
    t = rec.trace
    assert len(t["retrieval"]["docs"]) == 5
    assert len(t["summaries"]) == 5 and len(t["knowledge_points"]) == 3
    assert [g["provenance"] for g in t["generated"]] == ["knowledge"] * 3 + ["question"] * 2
    assert t["selection"]["selected"] == [1, 3, 6, 7, 10]
    assert [e["origin"] for e in rec.evidence] == ["retrieved", "retrieved", "generated", "generated", "generated"]
    assert roles_called(rec) == ["summarizer"] * 5 + ["explorer"] + ["generator"] * 5 + ["integrator", "reader"]
    assert rec.usage["calls"] == 13 and rec.usage["prompt_tokens"] > 0


@pytest.mark.parametrize("mode", MODES)
def test_modes_only_call_allowed_roles(indexes, mode):
    qs = synthetic_questions(3)
    pipe = make_pipeline(indexes, qs)
    for q in qs:
        rec = pipe.answer_question(q, mode)
        assert set(roles_called(rec)) <= ALLOWED_ROLES[mode]
        assert rec.mode == mode and rec.predicted == q.gold


def test_mode_evidence_shapes(indexes):
    [q] = synthetic_questions(1)
    pipe = make_pipeline(indexes, [q])
    rag = pipe.answer_question(q, "rag_only")
    assert [e["origin"] for e in rag.evidence] == ["retrieved"] * 5
    gag = pipe.answer_question(q, "gag_only")
    assert [e["origin"] for e in gag.evidence] == ["generated"] * 5 and "retrieval" not in gag.trace
    assert roles_called(pipe.answer_question(q, "direct")) == ["reader"]
    no_kgcc = pipe.answer_question(q, "no_kgcc")
    assert [g["provenance"] for g in no_kgcc.trace["generated"]] == ["question"] * 5


def test_no_kads_uses_rerank_top_k(indexes):
    [q] = synthetic_questions(1)
    pipe = make_pipeline(indexes, [q])
    rec = pipe.answer_question(q, "no_kads")
    assert "integrator" not in roles_called(rec)
    assert rec.trace["selection"]["method"] == "rerank"
    assert len(rec.evidence) == 5


def test_unknown_mode_and_missing_index():
    [q] = synthetic_questions(1)
    pipe = Pipeline(Gateway(ScriptedBackend({})))
    with pytest.raises(ValueError, match="unknown mode"):
        pipe.answer_question(q, "fancy")
    with pytest.raises(ValueError, match="retrieval index"):
        pipe.answer_question(q, "full")


def test_empty_corpora_proceed_generation_only():
    [q] = synthetic_questions(1)
    pipe = make_pipeline(build_index([], sources=["tb", "wiki"]), [q], selection="[1] [2]")
    rec = pipe.answer_question(q, "full")
    assert "no documents retrieved" in rec.warnings
    assert [e["origin"] for e in rec.evidence] == ["generated", "generated"]
    assert rec.predicted == q.gold


def test_no_kads_matches_standalone_rerank(indexes):
    [q] = synthetic_questions(1)
    pipe = make_pipeline(indexes, [q])
    rec = pipe.answer_question(q, "no_kads")
    retrieved = source_balanced_retrieve(q, indexes, LexicalReranker()).docs
    generated = [GeneratedDoc(g["doc_id"], g["text"], g["provenance"], g["knowledge_index"])
                 for g in rec.trace["generated"]]
    expected = rerank_candidates(q, [*retrieved, *generated], 5, LexicalReranker())
    assert [e["doc_id"] for e in rec.evidence] == [d.doc_id for d in expected]
