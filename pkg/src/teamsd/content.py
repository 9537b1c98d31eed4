"""Title controls: word count, Flesch reading ease, promotional wording."""

from __future__ import annotations

import re
from importlib import resources
from pathlib import Path

from .corpus import ConfigError

# Bump when the syllable heuristic changes; recorded in run manifests.
SYLLABLE_HEURISTIC_VERSION = "vowel-groups-1"

_EDGE_PUNCT = "\"'`.,;:!?()[]{}<>«»“”‘’—–…"
_VOWEL_RUN = re.compile(r"[aeiouy]+")
_SENTENCE_END = re.compile(r"[.!?]+")


def tokenize(title: str) -> list[str]:
    """Whitespace tokens with punctuation stripped from both ends.

    Hyphenated compounds stay one token; tokens without a letter or digit
    (dashes, stray symbols) are dropped.
    """
    tokens = (t.strip(_EDGE_PUNCT) for t in title.split())
    return [t for t in tokens if any(c.isalnum() for c in t)]


def title_word_count(title: str) -> int:
    return len(tokenize(title))


def count_syllables(word: str) -> int:
    """Vowel-group count, minus a silent final ``e``, at least 1."""
    w = word.lower()
    n = len(_VOWEL_RUN.findall(w))
    if w.endswith("e"):
        n -= 1
    return max(1, n)


def flesch_reading_ease(title: str) -> float | None:
    words = tokenize(title)
    if not words:
        return None
    sentences = max(1, len(_SENTENCE_END.findall(title)))
    syllables = sum(count_syllables(w) for w in words)
    return 206.835 - 1.015 * (len(words) / sentences) - 84.6 * (syllables / len(words))


def default_lexicon() -> frozenset[str]:
    text = resources.files("teamsd").joinpath("data/promotional_words.txt").read_text(encoding="utf-8")
    return _parse_lexicon(text)


def _parse_lexicon(text: str) -> frozenset[str]:
    words = (line.split("#", 1)[0].strip().lower() for line in text.splitlines())
    return frozenset(w for w in words if w)


def load_lexicon(path: str | Path | None = None) -> frozenset[str]:
    """Read a one-word-per-line lexicon; ``None`` gives the bundled default."""
    if path is None:
        return default_lexicon()
    try:
        return _parse_lexicon(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"lexicon file not found: {path}") from None


def promotional_fraction(title: str, lexicon: frozenset[str]) -> float:
    """Percentage of title tokens found in ``lexicon`` (case-insensitive)."""
    tokens = tokenize(title)
    if not tokens:
        return 0.0
    hits = sum(1 for t in tokens if t.lower() in lexicon)
    return 100.0 * hits / len(tokens)
