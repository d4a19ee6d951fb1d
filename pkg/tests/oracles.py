"""Independent reference computations used to check the production code paths.

Nothing here imports from ``rgqa``'s scoring code: the BM25 oracle evaluates the
formula directly for one (query, document) pair at a time, from raw text.
"""

from __future__ import annotations

import math
import re


def oracle_tokens(text: str) -> list[str]:
    return [t for t in re.findall(r"[a-z0-9]+", text.lower()) if len(t) > 1]


class BruteForceBM25:
    """Scores one (query, document) pair at a time straight from the formula."""

    def __init__(self, corpus_texts: list[str], k1: float, b: float):
        self.docs = [oracle_tokens(t) for t in corpus_texts]
        self.k1, self.b = k1, b
        self.avgdl = sum(len(d) for d in self.docs) / len(self.docs)

    def score(self, query: str, doc_text: str) -> float:
        n = len(self.docs)
        doc = oracle_tokens(doc_text)
        total = 0.0
        for term in oracle_tokens(query):  # multiset: a repeated query term counts again
            df = sum(1 for d in self.docs if term in d)
            tf = doc.count(term)
            if df == 0 or tf == 0:
                continue
            idf = math.log(1 + (n - df + 0.5) / (df + 0.5))
            total += idf * tf / (tf + self.k1 * (1 - self.b + self.b * len(doc) / self.avgdl))
        return total


def bm25_bruteforce(query: str, doc_text: str, corpus_texts: list[str], k1: float, b: float) -> float:
    """Score one document against ``query`` by direct formula evaluation over the whole corpus."""
    return BruteForceBM25(corpus_texts, k1, b).score(query, doc_text)


def overlap_ratio(query: str, doc_text: str) -> float:
    q = set(oracle_tokens(query))
    return len(q & set(oracle_tokens(doc_text))) / len(q) if q else 0.0
