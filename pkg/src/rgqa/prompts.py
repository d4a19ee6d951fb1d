"""Prompt templates for the five pipeline roles.

Placeholders are ``{name}`` with lowercase names. Literal braces that are not
a bare ``{identifier}`` (the JSON example in the answering prompt, say) are left
untouched by rendering.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

PLACEHOLDER = re.compile(r"\{([a-z_][a-z0-9_]*)\}")


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    text: str

    @property
    def placeholders(self) -> list[str]:
        return list(dict.fromkeys(PLACEHOLDER.findall(self.text)))

    def fill(self, bindings: dict[str, object]) -> str:
        missing = [name for name in self.placeholders if name not in bindings]
        if missing:
            raise TemplateError(f"{', '.join(missing)} unbound in template {self.template_id!r}")
        # One pass: placeholder-like text inside bound values is never expanded.
        return PLACEHOLDER.sub(lambda m: render_value(bindings[m.group(1)]), self.text)


def number_blocks(texts: list[str]) -> str:
    """``[1] first\\n\\n[2] second`` -- the labels the selection parser reads back."""
    return "\n\n".join(f"[{i}] {t}" for i, t in enumerate(texts, start=1))


def render_value(value: object) -> str:
    if isinstance(value, (list, tuple)):
        return number_blocks([str(v) for v in value]) if value else "(none)"
    return str(value)


def render(template: PromptTemplate, bindings: dict[str, object]) -> list[dict[str, str]]:
    """Fill ``template`` and wrap it as a single user turn.

    List-valued bindings become numbered blocks ``[k] text`` in input order; an
    empty list renders as ``(none)``.
    """
    return [{"role": "user", "content": template.fill(bindings)}]


SUMMARIZE = PromptTemplate(
    "summarize",
    """You are a professional medical expert.
Given the following question and a retrieved document, distill the useful information that can assist in answering the question.
Focus only on details directly supported by evidence from the document, and avoid including irrelevant or speculative content.
If the document does not contain relevant information, return "No useful information."
Do not attempt to answer the question—only summarize the essential knowledge needed for answering it accurately.

Input:
Retrieved Document: {documents}
Question: {question}

Output:
Useful Information:""",
)

EXPLORE = PromptTemplate(
    "explore",
    """You are a professional medical expert.
Given the question and several pieces of useful information extracted from retrieved documents, identify the most important missing knowledge required to answer the question thoroughly.
Analyze the question to determine key knowledge components, compare them with the provided information, and identify the gaps.
Select the {max_points} most critical and non-redundant missing knowledge points, each expressed as a concise conceptual title rather than a full sentence.

Input:
Useful Information: {information}
Question: {question}

Output Format:
- Reasoning: [Detailed explanation]
{knowledge_format}""",
)

GENERATE = PromptTemplate(
    "generate",
    """You are a professional medical expert.
Given the following medical question and a single knowledge point, generate a concise background document that provides relevant explanations or context strictly based on the given knowledge point.
Do not infer or guess the correct answer, and avoid mentioning any answer options.
Write in English and keep the content within 256 words.

Input:
Question: {question}
Knowledge Point: {knowledge_point}

Output:
Background Document:""",
)

GENERATE_FROM_QUESTION = PromptTemplate(
    "generate_question",
    """You are a professional medical expert.
Given the following medical question, generate a concise background document that provides relevant explanations or context for the knowledge the question relies on.
Do not infer or guess the correct answer, and avoid mentioning any answer options.
Write in English and keep the content within 256 words.

Input:
Question: {question}

Output:
Background Document:""",
)

SELECT = PromptTemplate(
    "select",
    """You are a professional medical expert.
Given a medical question and {num_candidates} candidate passages (each labeled with an identifier [id]), select the top-{final_k} most useful passages for answering the question accurately.

Follow the reasoning steps below:
1. Information Requirements Identification: Identify the key knowledge points necessary to answer the question thoroughly.
2. Requirement-to-Passage Mapping: Match each passage to the corresponding knowledge point(s) and classify irrelevant ones into a "No Useful Information" group.
3. Document Selection for Completeness and Conciseness: Choose up to {final_k} passages that together provide comprehensive coverage of the key knowledge points while minimizing redundancy.

Input:
Documents: {documents}
Question: {question}

Output Format:
- Reasoning: [Detailed explanation]
- Final Selection: {selection_format}""",
)

ANSWER = PromptTemplate(
    "answer",
    """You are a professional medical expert.
Given the question and several retrieved or generated documents, reason step-by-step and provide the final answer.
First, extract and utilize useful information from the documents; if insufficient, rely on your medical knowledge to complete the reasoning.
Return your output in JSON format containing both reasoning and the final answer choice.

Input:
Retrieved Documents: {documents}
Question: {question}

Output Format:
{"reasoning": "explanation", "answer_choice": "{labels}"}""",
)

ANSWER_DIRECT = PromptTemplate(
    "answer_direct",
    """You are a professional medical expert.
Given the question, reason step-by-step and provide the final answer, relying on your medical knowledge.
Return your output in JSON format containing both reasoning and the final answer choice.

Input:
Question: {question}

Output Format:
{"reasoning": "explanation", "answer_choice": "{labels}"}""",
)

TEMPLATES: dict[str, PromptTemplate] = {
    t.template_id: t for t in (SUMMARIZE, EXPLORE, GENERATE, GENERATE_FROM_QUESTION, SELECT, ANSWER, ANSWER_DIRECT)
}
