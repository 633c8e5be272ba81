import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from unts import text
from unts.synthetic import SynthConfig, SynthConfigError, generate_synthetic_corpus
from unts.text import (BOS_ID, EOS_ID, PAD_ID, UNK_ID, EmptyInputError, ParseError, Vocabulary, count_syllables,
                       detokenize, flesch_ease, load_parallel, partition_corpus, tokenize)


# ---------------------------------------------------------------------------
# tokenize


def test_tokenize_examples():
    assert tokenize("The cat sat.") == ["the", "cat", "sat", "."]
    assert tokenize("Don't stop") == ["don", "'", "t", "stop"]


@pytest.mark.parametrize("s", ["", "   ", "\n\t"])
def test_tokenize_empty(s):
    with pytest.raises(EmptyInputError):
        tokenize(s)


@given(st.text(alphabet=st.characters(blacklist_categories=("Cs",)), min_size=1))
def test_tokenize_roundtrip_is_idempotent(s):
    try:
        toks = tokenize(s)
    except EmptyInputError:
        return
    assert all(t and t == t.lower() and not any(c.isspace() for c in t) for t in toks)
    assert tokenize(detokenize(toks)) == toks


# ---------------------------------------------------------------------------
# syllables and Flesch reading ease


@pytest.mark.parametrize("word,n", [("cat", 1), ("simplification", 5), ("the", 1), ("make", 1),
                                   ("rhythm", 1), ("beautiful", 3)])
def test_count_syllables(word, n):
    assert count_syllables(word) == n


@given(st.text(alphabet="abcdefghijklmnopqrstuvwxyz", min_size=1, max_size=20))
def test_syllables_positive(w):
    assert count_syllables(w) >= 1


def test_flesch_the_cat_sat():
    assert flesch_ease([["the", "cat", "sat", "."]]) == pytest.approx(119.19, abs=0.01)


@given(st.integers(1, 20))
def test_flesch_duplication_invariant(k):
    s = ["the", "elephant", "was", "remarkably", "quiet", "."]
    assert flesch_ease([s] * k) == pytest.approx(flesch_ease([s]), abs=1e-9)


def test_flesch_long_polysyllabic_sentence_negative():
    s = ["banana"] * 40                       # 40 words, 3 syllables each
    assert flesch_ease([s]) < 0
    assert flesch_ease([s]) == pytest.approx(206.835 - 1.015 * 40 - 84.6 * 3)


def test_flesch_decreases_with_syllables():
    assert flesch_ease([["cat", "dog", "sat"]]) > flesch_ease([["catalog", "dog", "sat"]])


def test_flesch_no_words():
    with pytest.raises(ValueError):
        flesch_ease([[".", ","]])


# ---------------------------------------------------------------------------
# vocabulary


def test_vocabulary_reserved_ids():
    v = Vocabulary(["b", "a"])
    assert (PAD_ID, BOS_ID, EOS_ID, UNK_ID) == (0, 1, 2, 3)
    assert v.lookup("a") == 5 and v.lookup("zzz") == UNK_ID
    assert v.decode(v.encode(["a", "b", "q"])) == ["a", "b", "<unk>"]


def test_vocabulary_build_by_frequency(tmp_path):
    v = Vocabulary.build([["a", "b", "a"], ["c", "a", "b"]], max_size=6)
    assert len(v) == 6 and "c" not in v and v.lookup("a") == 4
    v.save(tmp_path / "v.txt")
    assert Vocabulary.load(tmp_path / "v.txt").itos == v.itos


# ---------------------------------------------------------------------------
# partitioning


def _fixed_fe(monkeypatch, table):
    monkeypatch.setattr(text, "sentence_fe", lambda toks: table[toks[0]])


def test_partition_table_examples(monkeypatch):
    _fixed_fe(monkeypatch, {"s": 76.67, "c": 7.26, "m": 40.0, "lo": 10.0, "hi": 70.0})
    corpus, stats = partition_corpus([["s"], ["c"], ["m"], ["lo"], ["hi"]])
    assert corpus.simple == [["s"]]
    assert corpus.complex == [["c"], ["lo"]]             # FE <= 10 is complex
    assert stats.discarded == 2                           # 40 and exactly 70 are dropped


@given(st.lists(st.lists(st.sampled_from(["the", "cat", "extraordinary", "responsibility", ".", "a"]),
                         min_size=1, max_size=15), max_size=30))
def test_partition_exhaustive_and_exclusive(sents):
    corpus, stats = partition_corpus(sents)
    assert stats.total == len(sents)
    assert len(corpus.simple) + len(corpus.complex) + stats.discarded == len(sents)
    for s in corpus.simple:
        assert text.sentence_fe(s) > 70
    for s in corpus.complex:
        assert text.sentence_fe(s) <= 10


# ---------------------------------------------------------------------------
# parallel files


def test_load_parallel(tmp_path):
    p = tmp_path / "par.tsv"
    p.write_text("A complex one.\tA simple one.\nSecond complex.\tSecond.\n", encoding="utf-8")
    pairs = load_parallel(p)
    assert len(pairs) == 2 and pairs[1] == (["second", "complex", "."], ["second", "."])


def test_load_parallel_empty(tmp_path):
    p = tmp_path / "empty.tsv"
    p.write_text("", encoding="utf-8")
    assert load_parallel(p) == []


def test_load_parallel_two_tabs(tmp_path):
    p = tmp_path / "bad.tsv"
    p.write_text("ok\tfine\na\tb\tc\n", encoding="utf-8")
    with pytest.raises(ParseError) as info:
        load_parallel(p)
    assert info.value.lineno == 2 and ":2:" in str(info.value)


# ---------------------------------------------------------------------------
# synthetic corpus

SMALL = SynthConfig(n_simple=300, n_complex=300, n_parallel=50, n_dev=40, n_test=40)


def test_synthetic_deterministic():
    a, b = generate_synthetic_corpus(SMALL), generate_synthetic_corpus(SMALL)
    assert a.corpus == b.corpus and a.dev == b.dev and a.synonyms == b.synonyms
    for k in a.embeddings:
        np.testing.assert_array_equal(a.embeddings[k], b.embeddings[k])


def test_synthetic_seed_changes_corpus():
    from dataclasses import replace
    assert generate_synthetic_corpus(SMALL).corpus != generate_synthetic_corpus(replace(SMALL, seed=8)).corpus


def test_synthetic_fe_separation():
    sc = generate_synthetic_corpus(SMALL)
    assert flesch_ease(sc.corpus.simple) > SMALL.simple_min_fe
    assert flesch_ease(sc.corpus.complex) < SMALL.complex_max_fe
    assert all(text.sentence_fe(s) > SMALL.simple_min_fe for s in sc.corpus.simple)
    assert all(text.sentence_fe(s) <= SMALL.complex_max_fe for s in sc.corpus.complex)


def test_every_complex_sentence_has_rare_token():
    sc = generate_synthetic_corpus(SMALL)
    rare = set(sc.synonyms)
    for s in sc.corpus.complex + [c for c, _ in sc.dev + sc.test]:
        assert rare & set(s)


def test_synthetic_sides_disjoint():
    sc = generate_synthetic_corpus(SMALL)
    simple = {tuple(s) for s in sc.corpus.simple}
    held_out = {tuple(s) for _, s in sc.dev + sc.test}
    assert not simple & held_out


def test_synthetic_vocabulary_too_small():
    with pytest.raises(SynthConfigError, match="too small"):
        generate_synthetic_corpus(SynthConfig(n_concepts=10, adj_prob=0.0, n_simple=5000))


def test_synonym_embeddings_are_close():
    sc = generate_synthetic_corpus(SMALL)
    for r, f in list(sc.synonyms.items())[:20]:
        d_syn = np.linalg.norm(sc.embeddings[r] - sc.embeddings[f])
        others = [np.linalg.norm(sc.embeddings[r] - sc.embeddings[o]) for o in sc.lexicon.nouns[:10] if o != f]
        assert d_syn < min(others)
