"""Per-source BM25 indexes, source-balanced candidate retrieval and reranking.

Scoring is Okapi BM25 in the Lucene 8+ form (no ``k1 + 1`` numerator factor)::

    score(q, d) = sum_{t in q} idf(t) * tf / (tf + k1 * (1 - b + b * |d| / avgdl))
    idf(t)      = ln(1 + (N - df + 0.5) / (df + 0.5))

Query terms are summed with multiplicity, as a bag-of-words query generator
does. Every ranked list in this module orders by score descending and breaks
ties by ascending ``doc_id``.
"""

from __future__ import annotations

import json
import logging
import math
import threading
import time
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Protocol, Sequence, TypeVar

import httpx

from .cache import ResponseCache, content_hash
from .corpus import Snippet
from .data import Question
from .text import TOKENIZER_ID, tokenize

log = logging.getLogger(__name__)

T = TypeVar("T")


@dataclass(frozen=True)
class IndexConfig:
    k1: float = 0.9
    b: float = 0.4
    tokenizer: str = TOKENIZER_ID
    per_source_k: int = 32
    final_k: int = 5

    def __post_init__(self) -> None:
        if not self.k1 > 0:
            raise ValueError(f"k1 must be > 0, got {self.k1}")
        if not 0 <= self.b <= 1:
            raise ValueError(f"b must be in [0, 1], got {self.b}")
        if self.per_source_k < 1 or self.final_k < 1:
            raise ValueError("per_source_k and final_k must be >= 1")
        if self.tokenizer != TOKENIZER_ID:
            raise ValueError(f"unknown tokenizer {self.tokenizer!r}")


@dataclass(frozen=True)
class ScoredDoc:
    snippet: Snippet
    bm25_score: float
    rank: int
    rerank_score: float | None = None

    @property
    def doc_id(self) -> str:
        return self.snippet.doc_id

    @property
    def source(self) -> str:
        return self.snippet.source

    def passage(self) -> str:
        return self.snippet.passage()

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "source": self.source,
            "rank": self.rank,
            "bm25_score": self.bm25_score,
            "rerank_score": self.rerank_score,
        }


class BM25Index:
    """Inverted index over a single source."""

    def __init__(self, source: str, k1: float = 0.9, b: float = 0.4):
        self.source = source
        self.k1 = k1
        self.b = b
        self.snippets: list[Snippet] = []
        self.doc_len: list[int] = []
        self.postings: dict[str, list[tuple[int, int]]] = {}
        self.avgdl = 0.0

    @classmethod
    def build(cls, source: str, snippets: Iterable[Snippet], k1: float = 0.9, b: float = 0.4) -> "BM25Index":
        index = cls(source, k1, b)
        for snip in snippets:
            index._add(snip)
        index._finalize()
        return index

    def _add(self, snip: Snippet) -> None:
        idx = len(self.snippets)
        self.snippets.append(snip)
        counts = Counter(tokenize(snip.text))
        self.doc_len.append(sum(counts.values()))
        for term, tf in counts.items():
            self.postings.setdefault(term, []).append((idx, tf))

    def _finalize(self) -> None:
        self.avgdl = sum(self.doc_len) / len(self.doc_len) if self.doc_len else 0.0
        # Ascending doc_id order lets the zero-score fill walk documents in tie-break order.
        self._id_order = sorted(range(len(self.snippets)), key=lambda i: self.snippets[i].doc_id)

    @property
    def n_docs(self) -> int:
        return len(self.snippets)

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def idf(self, term: str) -> float:
        df = self.df(term)
        return math.log(1 + (self.n_docs - df + 0.5) / (df + 0.5))

    def scores(self, query_tokens: Sequence[str]) -> dict[int, float]:
        """BM25 score for every document sharing at least one term with the query."""
        acc: dict[int, float] = {}
        if not self.n_docs:
            return acc
        for term, qtf in Counter(query_tokens).items():
            posting = self.postings.get(term)
            if not posting:
                continue
            idf = self.idf(term)
            for idx, tf in posting:
                norm = self.k1 * (1 - self.b + self.b * self.doc_len[idx] / self.avgdl)
                acc[idx] = acc.get(idx, 0.0) + qtf * idf * tf / (tf + norm)
        return acc

    def search(self, query_tokens: Sequence[str], n: int) -> list[ScoredDoc]:
        """Top ``n`` documents; unmatched documents (score 0) fill in by ascending doc_id."""
        if not query_tokens or n < 1:
            return []
        acc = self.scores(query_tokens)
        ranked = sorted(acc.items(), key=lambda kv: (-kv[1], self.snippets[kv[0]].doc_id))[:n]
        if len(ranked) < n:
            for idx in self._id_order:
                if idx not in acc:
                    ranked.append((idx, 0.0))
                    if len(ranked) == n:
                        break
        return [ScoredDoc(self.snippets[idx], score, rank) for rank, (idx, score) in enumerate(ranked, start=1)]

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "k1": self.k1,
            "b": self.b,
            "snippets": [[s.doc_id, s.title, s.text] for s in self.snippets],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "BM25Index":
        snippets = (Snippet(doc_id=i, source=payload["source"], title=t, text=x) for i, t, x in payload["snippets"])
        return cls.build(payload["source"], snippets, payload["k1"], payload["b"])


@dataclass
class SourceIndexes:
    """One :class:`BM25Index` per source label, in declaration order."""

    config: IndexConfig
    indexes: dict[str, BM25Index] = field(default_factory=dict)

    @property
    def sources(self) -> list[str]:
        return list(self.indexes)

    def save(self, path: str | Path) -> None:
        payload = {"config": self.config.__dict__, "indexes": [ix.to_dict() for ix in self.indexes.values()]}
        Path(path).write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "SourceIndexes":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        config = IndexConfig(**payload["config"])
        indexes = {ix["source"]: BM25Index.from_dict(ix) for ix in payload["indexes"]}
        return cls(config, indexes)


def build_index(
    snippets: Iterable[Snippet], config: IndexConfig = IndexConfig(), sources: Iterable[str] = ()
) -> SourceIndexes:
    """Group snippets by source and build an independent index for each.

    Labels listed in ``sources`` get an index even when they have no snippets.
    """
    groups: dict[str, list[Snippet]] = {s: [] for s in sources}
    for snip in snippets:
        groups.setdefault(snip.source, []).append(snip)
    return SourceIndexes(
        config, {src: BM25Index.build(src, docs, config.k1, config.b) for src, docs in groups.items()}
    )


def query_text(q: Question | str) -> str:
    return q if isinstance(q, str) else q.retrieval_query()


def retrieve_per_source(indexes: SourceIndexes, q: Question | str, n: int) -> dict[str, list[ScoredDoc]]:
    if n < 1:
        raise ValueError("n must be >= 1")
    tokens = tokenize(query_text(q))
    return {src: ix.search(tokens, n) for src, ix in indexes.indexes.items()}


# --- reranking -------------------------------------------------------------


class RerankerError(Exception):
    pass


class Reranker(Protocol):
    name: str

    def score(self, query: str, passages: Sequence[tuple[str, str]]) -> list[float]:
        """Relevance of each ``(id, text)`` passage to ``query``, in input order."""
        ...


class LexicalReranker:
    """Offline stand-in for a cross-encoder: share of query terms present in the passage."""

    name = "lexical-overlap"

    def score(self, query: str, passages: Sequence[tuple[str, str]]) -> list[float]:
        q_terms = set(tokenize(query))
        if not q_terms:
            return [0.0] * len(passages)
        return [len(q_terms & set(tokenize(text))) / len(q_terms) for _, text in passages]


class HttpReranker:
    """Client for a cross-encoder service.

    Wire contract: ``POST url`` with ``{"query": str, "passages": [{"id", "text"}]}``
    answered by ``{"scores": [{"id", "score"}]}``. Responses are cached by
    content hash when a cache is supplied, so replayed runs make no calls.
    """

    name = "http"

    def __init__(
        self,
        url: str,
        *,
        timeout: float = 30.0,
        retries: int = 2,
        backoff: float = 0.5,
        max_in_flight: int = 4,
        cache: ResponseCache | None = None,
        client: httpx.Client | None = None,
    ):
        self.url = url
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.cache = cache
        self._client = client or httpx.Client(timeout=timeout)
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self.calls = 0

    def score(self, query: str, passages: Sequence[tuple[str, str]]) -> list[float]:
        body = {"query": query, "passages": [{"id": pid, "text": text} for pid, text in passages]}
        key = content_hash({"reranker": self.url, **body})
        if self.cache is not None:
            cached = self.cache.get(key)
            if cached is not None:
                return [float(s) for s in cached]
        by_id = self._post(body)
        try:
            scores = [float(by_id[pid]) for pid, _ in passages]
        except KeyError as exc:
            raise RerankerError(f"reranker response lacks a score for {exc.args[0]!r}") from None
        if self.cache is not None:
            self.cache.put(key, scores)
        return scores

    def _post(self, body: dict) -> dict[str, float]:
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                with self._slots:
                    self.calls += 1
                    resp = self._client.post(self.url, json=body, timeout=self.timeout)
                resp.raise_for_status()
                return {str(item["id"]): item["score"] for item in resp.json()["scores"]}
            except (httpx.HTTPError, ValueError, KeyError, TypeError) as exc:
                last = exc
                log.warning("reranker attempt %d/%d failed: %s", attempt + 1, self.retries + 1, exc)
        raise RerankerError(f"reranker unreachable after {self.retries + 1} attempts: {last}")


def rank_passages(
    query: str,
    items: Sequence[T],
    reranker: Reranker,
    top_k: int,
    *,
    doc_id=lambda d: d.doc_id,
    text=lambda d: d.passage(),
) -> list[tuple[T, float]]:
    """Score ``items`` with ``reranker``; best ``top_k`` by score, ties by ascending id."""
    if not items:
        return []
    scores = reranker.score(query, [(doc_id(it), text(it)) for it in items])
    if len(scores) != len(items):
        raise RerankerError(f"reranker returned {len(scores)} scores for {len(items)} passages")
    order = sorted(range(len(items)), key=lambda i: (-scores[i], doc_id(items[i])))
    return [(items[i], scores[i]) for i in order[:top_k]]


def rerank(q: Question | str, candidates: Sequence[ScoredDoc], top_k: int, reranker: Reranker) -> list[ScoredDoc]:
    if not candidates:
        raise ValueError("rerank needs at least one candidate")
    ranked = rank_passages(query_text(q), candidates, reranker, top_k)
    return [replace(doc, rerank_score=score, rank=rank) for rank, (doc, score) in enumerate(ranked, start=1)]


def bm25_order(candidates: Sequence[ScoredDoc], top_k: int) -> list[ScoredDoc]:
    ranked = sorted(candidates, key=lambda d: (-d.bm25_score, d.doc_id))[:top_k]
    return [replace(doc, rank=rank) for rank, doc in enumerate(ranked, start=1)]


@dataclass
class RetrievalResult:
    docs: list[ScoredDoc]
    candidates: list[ScoredDoc]
    per_source: dict[str, int]
    reranker: str
    fallback_used: bool = False
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "per_source": self.per_source,
            "n_candidates": len(self.candidates),
            "reranker": self.reranker,
            "fallback_used": self.fallback_used,
            "error": self.error,
            "docs": [d.to_dict() for d in self.docs],
        }


def source_balanced_retrieve(
    q: Question | str, indexes: SourceIndexes, reranker: Reranker, config: IndexConfig | None = None
) -> RetrievalResult:
    """Top ``per_source_k`` from every source, pooled, then reranked down to ``final_k``.

    If the reranker fails, the pool is ordered by BM25 score instead.
    """
    config = config or indexes.config
    per_source = retrieve_per_source(indexes, q, config.per_source_k)
    pool: list[ScoredDoc] = []
    seen: set[str] = set()
    for docs in per_source.values():
        for doc in docs:
            if doc.doc_id not in seen:
                seen.add(doc.doc_id)
                pool.append(doc)
    counts = {src: len(docs) for src, docs in per_source.items()}
    if not pool:
        return RetrievalResult([], [], counts, reranker.name)
    try:
        docs = rerank(q, pool, config.final_k, reranker)
    except RerankerError as exc:
        log.warning("reranker failed, using BM25 order: %s", exc)
        return RetrievalResult(bm25_order(pool, config.final_k), pool, counts, reranker.name, True, str(exc))
    return RetrievalResult(docs, pool, counts, reranker.name)
