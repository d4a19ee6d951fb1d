import json

import pytest
from hypothesis import given, settings, strategies as st

from rgqa.corpus import CorpusError, CorpusStore, DuplicateDocIdError, Snippet, SnippetNotFound


def write_lines(path, records):
    path.write_text("".join((r if isinstance(r, str) else json.dumps(r)) + "\n" for r in records))
    return path


def test_three_line_file_counts(tmp_path):
    f = write_lines(tmp_path / "tb.jsonl", [{"text": "alpha"}, {"text": "beta"}, {"text": "gamma"}])
    stats = CorpusStore(tmp_path / "store").ingest_corpus(f, "textbook")
    assert stats.counts == {"textbook": 3}
    assert stats.rejects == []


def test_blank_text_is_rejected_and_ingestion_continues(tmp_path):
    f = write_lines(tmp_path / "c.jsonl", [
        {"text": "one"}, {"text": "two"}, {"text": "   \t "}, {"text": "four"}, {"text": "five"},
    ])
    store = CorpusStore(tmp_path / "store")
    stats = store.ingest_corpus(f, "textbook")
    assert stats.counts["textbook"] == 4
    assert stats.rejects == [{"line": 3, "reason": "empty 'text'"}]
    report = (tmp_path / "store" / "rejects" / "textbook.jsonl").read_text().splitlines()
    assert json.loads(report[0])["line"] == 3


@pytest.mark.parametrize("bad, reason", [
    ("{not json", "invalid json"),
    ("[1, 2]", "not a json object"),
    ('{"title": "x"}', "'text'"),
    ('{"text": 3}', "'text'"),
    ('{"text": "ok", "title": 5}', "'title'"),
    ('{"text": "ok", "id": ["a"]}', "'id'"),
])
def test_malformed_lines_are_reported(tmp_path, bad, reason):
    f = write_lines(tmp_path / "c.jsonl", [{"text": "fine"}, bad])
    stats = CorpusStore(tmp_path / "s").ingest_corpus(f, "wiki")
    assert stats.counts["wiki"] == 1
    assert len(stats.rejects) == 1 and stats.rejects[0]["line"] == 2
    assert reason in stats.rejects[0]["reason"]


def test_sources_are_isolated(tmp_path):
    store = CorpusStore(tmp_path / "s")
    store.ingest_corpus(write_lines(tmp_path / "a.jsonl", [{"text": "a"}] * 2), "textbook")
    stats = store.ingest_corpus(write_lines(tmp_path / "b.jsonl", [{"text": "b"}] * 5), "wikipedia")
    assert stats.counts == {"textbook": 2, "wikipedia": 5}


def test_default_ids_use_source_and_line(tmp_path):
    store = CorpusStore(tmp_path / "s")
    store.ingest_corpus(write_lines(tmp_path / "a.jsonl", [{"text": "x"}, {"text": "y", "id": "custom"}]), "tb")
    assert store.get_snippet("tb:1").text == "x"
    assert store.get_snippet("custom").text == "y"


def test_duplicate_id_within_file_names_both_lines(tmp_path):
    f = write_lines(tmp_path / "a.jsonl", [{"id": "d1", "text": "x"}, {"text": "y"}, {"id": "d1", "text": "z"}])
    store = CorpusStore(tmp_path / "s")
    with pytest.raises(DuplicateDocIdError) as err:
        store.ingest_corpus(f, "tb")
    assert "line 1" in str(err.value) and "line 3" in str(err.value)
    assert len(store) == 0


def test_duplicate_id_across_sources(tmp_path):
    store = CorpusStore(tmp_path / "s")
    store.ingest_corpus(write_lines(tmp_path / "a.jsonl", [{"id": "d1", "text": "x"}]), "tb")
    with pytest.raises(DuplicateDocIdError, match="stored snippet"):
        store.ingest_corpus(write_lines(tmp_path / "b.jsonl", [{"id": "d1", "text": "y"}]), "wiki")


def test_get_snippet_round_trip_and_not_found(tmp_path):
    store = CorpusStore(tmp_path / "s")
    store.ingest_corpus(write_lines(tmp_path / "a.jsonl", [{"id": "a", "title": " T ", "text": "  two   words\n"}]), "tb")
    store.ingest_corpus(write_lines(tmp_path / "b.jsonl", [{"id": "b", "text": "other"}]), "wiki")
    assert store.get_snippet("a") == Snippet("a", "tb", "T", "two words")
    with pytest.raises(SnippetNotFound):
        store.get_snippet("nope")
    with pytest.raises(SnippetNotFound):
        store.get_snippet("b", source="tb")


def test_store_reopens_and_rebuilds_offsets(tmp_path):
    store = CorpusStore(tmp_path / "s")
    store.ingest_corpus(write_lines(tmp_path / "a.jsonl", [{"text": f"doc {i}"} for i in range(10)]), "tb")
    again = CorpusStore(tmp_path / "s")
    assert len(again) == 10
    assert again.get_snippet("tb:7").text == "doc 6"
    assert again.sources == ["tb"]


def test_torn_trailing_line_is_ignored_then_overwritten(tmp_path):
    store = CorpusStore(tmp_path / "s")
    store.ingest_corpus(write_lines(tmp_path / "a.jsonl", [{"text": "kept"}]), "tb")
    with (tmp_path / "s" / "snippets.jsonl").open("ab") as fh:
        fh.write(b'{"doc_id": "half", "sour')
    reopened = CorpusStore(tmp_path / "s")
    assert len(reopened) == 1
    reopened.ingest_corpus(write_lines(tmp_path / "b.jsonl", [{"id": "n1", "text": "next"}]), "tb")
    assert [s.text for s in CorpusStore(tmp_path / "s").iter_snippets()] == ["kept", "next"]


def test_declared_sources_are_enforced(tmp_path):
    store = CorpusStore(tmp_path / "s", sources=["textbook"])
    with pytest.raises(CorpusError, match="not declared"):
        store.ingest_corpus(write_lines(tmp_path / "a.jsonl", [{"text": "x"}]), "pubmed")


def test_stats_tokens_and_vocabulary(tmp_path):
    store = CorpusStore(tmp_path / "s")
    stats = store.ingest_corpus(write_lines(tmp_path / "a.jsonl", [{"text": "Aspirin aspirin dose"}, {"text": "dose x"}]), "tb")
    # "x" is dropped by the tokenizer (length < 2)
    assert stats.total_tokens == 4
    assert stats.vocab_size == 2


texts = st.text(alphabet=st.characters(blacklist_categories=("Cs",)), min_size=0, max_size=40)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(texts, texts), min_size=1, max_size=15))
def test_round_trip_and_counts_property(tmp_path_factory, rows):
    tmp = tmp_path_factory.mktemp("prop")
    f = write_lines(tmp / "c.jsonl", [{"title": t, "text": x} for t, x in rows])
    store = CorpusStore(tmp / "s")
    stats = store.ingest_corpus(f, "src")
    valid = [(i, t, x) for i, (t, x) in enumerate(rows, start=1) if " ".join(x.split())]
    assert stats.counts["src"] == len(valid) == len(rows) - len(stats.rejects)
    for line, title, text in valid:
        snip = store.get_snippet(f"src:{line}")
        assert snip.text == " ".join(text.split())
        assert snip.title == " ".join(title.split())
