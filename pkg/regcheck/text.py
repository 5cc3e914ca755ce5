"""Functions to manipulate strings: tokens, terms, sentences."""

import re
from typing import List

_TOKEN = re.compile(r"[^\W_]+")
_WHITESPACE = re.compile(r"\s+")
_SENTENCE_END = re.compile(r"(?<=[.!?;])\s+")


def tokenize(text: str) -> List[str]:
    """Lowercase ``text`` and split it on anything that is not alphanumeric.

    >>> tokenize("Covered Entity's PHI")
    ['covered', 'entity', 's', 'phi']
    >>> tokenize("164.502(a)")
    ['164', '502', 'a']
    """
    return _TOKEN.findall(text.lower())


def normalize_term(term: str) -> str:
    """Case-fold ``term`` and collapse its internal whitespace."""
    return _WHITESPACE.sub(" ", term).strip().lower()


def collapse(text: str) -> str:
    """Join the lines of ``text`` with single spaces."""
    return _WHITESPACE.sub(" ", text).strip()


def sentences(text: str) -> List[str]:
    """Split prose into sentence chunks; never returns an empty list."""
    chunks = [c.strip() for c in _SENTENCE_END.split(text.strip())]
    return [c for c in chunks if c] or [text]


def whitespace_token_count(text: str) -> int:
    """Count words the way dataset statistics do: split on whitespace."""
    return len(text.split())
