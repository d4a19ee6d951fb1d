"""Shared builders for synthetic corpora, questions and scripted LLM behaviour."""

from __future__ import annotations

import json
import random

from rgqa.corpus import Snippet
from rgqa.data import Question
from rgqa.llm import ChatRequest

WORDS = (
    "aspirin insulin renal cardiac hepatic neural tumor gene protein receptor kinase fever cough anemia "
    "platelet thrombosis sepsis antibiotic vaccine antibody lymph marrow thyroid cortisol glucose lipid "
    "artery vein valve murmur rash lesion biopsy stroke seizure migraine dementia asthma fibrosis ulcer"
).split()


def snippets(source: str, texts: list[str], prefix: str | None = None) -> list[Snippet]:
    prefix = prefix or source
    return [Snippet(f"{prefix}-{i:03d}", source, "", t) for i, t in enumerate(texts)]


def random_text(rng: random.Random, lo: int = 3, hi: int = 30) -> str:
    return " ".join(rng.choice(WORDS) for _ in range(rng.randint(lo, hi)))


def synthetic_corpus(rng: random.Random, per_source: dict[str, int]) -> list[Snippet]:
    out = []
    for source, n in per_source.items():
        out += snippets(source, [random_text(rng) for _ in range(n)])
    return out


def synthetic_questions(n: int, seed: int = 0, n_options: int = 4) -> list[Question]:
    rng = random.Random(seed)
    labels = "ABCD"[:n_options]
    qs = []
    for i in range(n):
        qs.append(Question(
            qid=f"syn-{i:03d}",
            stem=f"Which finding explains {random_text(rng, 4, 10)}?",
            options={lab: random_text(rng, 1, 3) for lab in labels},
            gold=labels[i % n_options],
            dataset="synthetic",
        ))
    return qs


def golden_responder(questions: list[Question], n_points: int = 3, selection: str = "[1] [3] [6] [7] [10]"):
    """Scripted behaviour for every role: summaries alternate useless/useful, the
    explorer names ``n_points`` gaps, the integrator picks ``selection`` and the
    reader answers the gold label."""
    gold = {q.qid: q.gold for q in questions}

    def respond(req: ChatRequest) -> str | None:
        qid, disc = req.question_id, req.discriminator
        if req.role == "summarizer":
            idx = int(disc[3:])
            return "No useful information." if idx % 2 else f"Useful facts from document {idx} for {qid}."
        if req.role == "explorer":
            lines = ["- Reasoning: the summaries leave gaps."]
            lines += [f"- Knowledge {i}: gap {i} of {qid}" for i in range(1, n_points + 1)]
            return "\n".join(lines)
        if req.role == "generator":
            return f"Background Document: generated text {disc} about {qid}."
        if req.role == "integrator":
            return f"- Reasoning: mapping done.\n- Final Selection: {selection}"
        if req.role == "reader":
            return json.dumps({"reasoning": f"reasoning for {qid}", "answer_choice": gold[qid]})
        return None

    return respond
