import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teamsd.corpus import ConfigError
from teamsd.content import (
    count_syllables,
    default_lexicon,
    flesch_reading_ease,
    load_lexicon,
    promotional_fraction,
    title_word_count,
    tokenize,
)


def test_word_count():
    assert title_word_count("Structural Diversity Drives Disruptive Scientific Innovation") == 6
    assert title_word_count("") == 0
    assert title_word_count("state-of-the-art methods") == 2
    assert title_word_count("  Hello,   world! ") == 2
    assert tokenize("(A) -- b.") == ["A", "b"]


@pytest.mark.parametrize("word, n", [("cat", 1), ("the", 1), ("table", 1), ("diversity", 4), ("queue", 1), ("rhythm", 1), ("idea", 2)])
def test_syllables(word, n):
    assert count_syllables(word) == n


def test_flesch_examples():
    assert flesch_reading_ease("The cat sat") == pytest.approx(119.19, abs=0.005)
    assert flesch_reading_ease("Dog") == pytest.approx(121.22, abs=0.005)
    assert flesch_reading_ease("") is None
    assert flesch_reading_ease("...") is None


def test_flesch_decreases_with_syllables():
    assert flesch_reading_ease("The cat sat") > flesch_reading_ease("The kitten sat") > flesch_reading_ease("The elephant sat")


_words = st.lists(st.sampled_from(["cat", "diversity", "network", "a", "unprecedented", "team"]), min_size=1, max_size=10)


@settings(max_examples=100, deadline=None)
@given(_words, st.randoms())
def test_flesch_order_invariant(words, rnd):
    shuffled = list(words)
    rnd.shuffle(shuffled)
    assert flesch_reading_ease(" ".join(words)) == pytest.approx(flesch_reading_ease(" ".join(shuffled)), abs=1e-9)


def test_promo_examples():
    lex = frozenset({"unique"})
    assert promotional_fraction("A unique approach", lex) == pytest.approx(33.33, abs=0.005)
    assert promotional_fraction("A plain approach", lex) == 0.0
    assert promotional_fraction("", lex) == 0.0
    lex2 = frozenset({"unique", "unprecedented"})
    title = "A unique and unprecedented view of team network structure"
    assert title_word_count(title) == 9
    assert promotional_fraction("A unique and unprecedented view of team structure", lex2) == 25.0


def test_promo_case_insensitive_and_default_lexicon():
    lex = default_lexicon()
    assert {"unique", "crucial", "unprecedented"} <= lex
    assert promotional_fraction("UNIQUE, Crucial!", lex) == 100.0


@settings(max_examples=100, deadline=None)
@given(_words)
def test_promo_dilution(words):
    lex = default_lexicon()
    before = promotional_fraction(" ".join(words), lex)
    after = promotional_fraction(" ".join(words + ["zzzplain"]), lex)
    assert 0 <= after <= 100
    assert after < before or before == after == 0


def test_lexicon_file(tmp_path):
    p = tmp_path / "lex.txt"
    p.write_text("# adjectives\nNovel\n\nbold  # trailing\n", encoding="utf-8")
    assert load_lexicon(p) == {"novel", "bold"}
    assert load_lexicon(None) == default_lexicon()
    with pytest.raises(ConfigError):
        load_lexicon(tmp_path / "missing.txt")
