"""Whitespace normalization and the lowercase word tokenizer shared by all stages."""

from __future__ import annotations

import re

_WS = re.compile(r"\s+")
_SPLIT = re.compile(r"[^0-9a-z]+")

TOKENIZER_ID = "lower-alnum-min2"


def normalize_ws(text: str) -> str:
    return _WS.sub(" ", text).strip()


def tokenize(text: str) -> list[str]:
    """Lowercase, split on anything that is not [0-9a-z], drop tokens shorter than 2.

    Non-ASCII letters act as separators, which keeps the tokenizer identical
    across platforms and locales.
    """
    return [tok for tok in _SPLIT.split(text.lower()) if len(tok) >= 2]


def clip_tokens(text: str, limit: int, marker: str = " ...") -> str:
    """Clip to at most ``limit`` whitespace-delimited tokens, appending ``marker`` if clipped."""
    words = text.split()
    if len(words) <= limit:
        return text
    return " ".join(words[:limit]) + marker
