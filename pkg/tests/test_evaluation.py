import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unts.evaluation import (EvalInstance, EvalReport, bleu, evaluate, fe_diff, load_instances, sari, sentence_sari,
                             word_diff)
from unts.text import flesch_ease, tokenize


# ---------------------------------------------------------------------------
# brute-force SARI oracle: explicit loops over the n-gram universe, no Counter algebra


def _grams(toks, n):
    return [tuple(toks[i:i + n]) for i in range(len(toks) - n + 1)]


def _count(lst, g):
    return sum(1 for x in lst if x == g)


def _div(num, den, target_empty):
    if den == 0:
        return 1.0 if target_empty else 0.0
    return num / den


def _f(p, r):
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def oracle_sari(src, pred, refs, max_n=4):
    total = 0.0
    R = len(refs)
    for n in range(1, max_n + 1):
        s, c = _grams(src, n), _grams(pred, n)
        rs = [_grams(r, n) for r in refs]
        universe = sorted(set(s) | set(c) | {g for r in rs for g in r})
        keep_num_p = keep_num_r = del_num = 0.0
        n_keep_sys = n_keep_all = n_del_sys = n_del_all = 0
        for g in universe:
            sc = _count(s, g) * R
            cc = _count(c, g) * R
            rc = sum(_count(r, g) for r in rs)
            ksys, kall = min(sc, cc), min(sc, rc)
            kgood = min(ksys, rc)
            if ksys > 0:
                n_keep_sys += 1
                keep_num_p += kgood / ksys
            if kall > 0:
                n_keep_all += 1
                keep_num_r += kgood / kall
            dsys, dall = max(sc - cc, 0), max(sc - rc, 0)
            dgood = max(dsys - rc, 0)
            if dsys > 0:
                n_del_sys += 1
                del_num += dgood / dsys
            if dall > 0:
                n_del_all += 1
        p_keep = _div(keep_num_p, n_keep_sys, n_keep_all == 0)
        r_keep = _div(keep_num_r, n_keep_all, n_keep_sys == 0)
        p_del = _div(del_num, n_del_sys, n_del_all == 0)
        added = [g for g in set(c) if g not in set(s)]
        good = [g for g in added if any(g in r for r in rs)]
        possible = [g for g in {g for r in rs for g in r} if g not in set(s)]
        p_add = _div(len(good), len(added), not possible)
        r_add = _div(len(good), len(possible), not added)
        total += (_f(p_keep, r_keep) + p_del + _f(p_add, r_add)) / 3
    return total / max_n


def _random_instance(rng, vocab="abcdef"):
    def sent():
        return list(rng.choice(list(vocab), size=int(rng.integers(1, 13))))
    src = sent()
    pred = sent() if rng.random() < 0.7 else list(src)
    refs = [sent() if rng.random() < 0.7 else list(src) for _ in range(int(rng.integers(1, 9)))]
    return src, pred, refs


def test_sari_matches_oracle_on_random_instances():
    rng = np.random.default_rng(11)
    for _ in range(300):
        src, pred, refs = _random_instance(rng)
        assert abs(sentence_sari(src, pred, refs) - oracle_sari(src, pred, refs)) < 1e-9


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from("abcd"), min_size=1, max_size=12),
       st.lists(st.sampled_from("abcde"), min_size=0, max_size=12),
       st.lists(st.lists(st.sampled_from("abce"), min_size=1, max_size=12), min_size=1, max_size=4))
def test_sari_oracle_property(src, pred, refs):
    assert abs(sentence_sari(src, pred, refs) - oracle_sari(src, pred, refs)) < 1e-9


def test_sari_full_agreement_is_100():
    s = tokenize("the cat sat on the mat .")
    assert sari([EvalInstance(s, s, [s, s])]) == pytest.approx(100.0)


def test_sari_lexical_substitution_toy_corpus():
    inst = [
        EvalInstance(tokenize("the feline sat ."), tokenize("the cat sat ."), [tokenize("the cat sat .")]),
        EvalInstance(tokenize("he departed early"), tokenize("he left early"),
                     [tokenize("he left early"), tokenize("he went early")]),
        EvalInstance(tokenize("a big house"), tokenize("a big house"), [tokenize("a large house")]),
    ]
    expected = 100 * np.mean([oracle_sari(i.source, i.prediction, i.references) for i in inst])
    assert sari(inst) == pytest.approx(expected, abs=1e-9)


def test_sari_unrelated_prediction_only_deletion_counts():
    src, ref = tokenize("a b c"), tokenize("a b d")
    pred = ["x", "y", "z"]
    # unigrams: keep 0, add 0, deletion precision 1/3 ("c" is the only good deletion)
    assert sentence_sari(src, pred, [ref], max_n=1) == pytest.approx(1 / 9)
    # n=2: del 1/2; n=3: nothing keepable and nothing kept -> keep 1, del 1; n=4: all sets empty -> 1
    assert sentence_sari(src, pred, [ref]) == pytest.approx((1 / 9 + 1 / 6 + 2 / 3 + 1) / 4)


def test_sari_prefers_reference_over_source():
    rng = np.random.default_rng(4)
    for _ in range(100):
        src, _, refs = _random_instance(rng)
        ref = refs[0]
        if ref == src:
            continue
        assert sentence_sari(src, ref, [ref]) >= sentence_sari(src, src, [ref])


def test_sari_in_range():
    rng = np.random.default_rng(5)
    for _ in range(100):
        src, pred, refs = _random_instance(rng)
        assert 0.0 <= sentence_sari(src, pred, refs) <= 1.0


# ---------------------------------------------------------------------------
# BLEU


def test_bleu_exact_reference_is_100():
    inst = [EvalInstance(tokenize("a b c d e"), tokenize("the cat sat on the mat"),
                         [tokenize("the cat sat on the mat"), tokenize("x y")]),
            EvalInstance(tokenize("q"), tokenize("one two three four"), [tokenize("one two three four")])]
    assert bleu(inst) == pytest.approx(100.0)


def test_bleu_no_overlap_is_zero():
    inst = [EvalInstance(["a"], ["x", "y", "z", "w"], [["a", "b", "c", "d"]])]
    assert bleu(inst) == 0.0


def test_bleu_two_instance_hand_computation():
    inst = [
        EvalInstance(["s"], tokenize("the cat sat on the mat"),
                     [tokenize("the cat sat on a mat"), tokenize("a cat sat on the mat")]),
        EvalInstance(["s"], tokenize("a small dog runs"), [tokenize("a dog runs fast")]),
    ]
    # clipped matches / totals per order: 8/10, 6/8, 4/6, 3/4; lengths 10 vs 10 -> BP 1
    expected = 100 * math.exp((math.log(8 / 10) + math.log(6 / 8) + math.log(4 / 6) + math.log(3 / 4)) / 4)
    assert bleu(inst) == pytest.approx(expected, abs=1e-9)
    assert bleu(inst) == pytest.approx(74.01, abs=0.01)


def test_bleu_brevity_penalty():
    inst = [EvalInstance(["s"], ["the", "cat"], [tokenize("the cat sat on the mat")])]
    assert bleu(inst, max_n=2) == pytest.approx(100 * math.exp(1 - 6 / 2), abs=1e-9)


def test_bleu_empty_corpus():
    with pytest.raises(ValueError):
        bleu([])


# ---------------------------------------------------------------------------
# FE-diff and word-diff


def test_word_diff_examples():
    src = list("abcdefghij")
    assert word_diff([EvalInstance(src, src[:7], [src])]) == 3
    assert word_diff([EvalInstance(src, src, [src])]) == 0
    assert word_diff([EvalInstance(src[:2], src, [src])]) == -8


def test_fe_diff_identity_and_hand_pair():
    s = tokenize("the implementation proceeded")
    p = tokenize("the work went on")
    assert fe_diff([EvalInstance(s, s, [s])])[0] == 0.0
    val, skipped = fe_diff([EvalInstance(s, p, [p])])
    hand = (206.835 - 1.015 * 4 - 84.6 * 4 / 4) - (206.835 - 1.015 * 3 - 84.6 * 9 / 3)
    assert skipped == 0 and val == pytest.approx(hand) and val > 0


def test_fe_diff_skips_wordless():
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        val, skipped = fe_diff([EvalInstance(["the", "cat"], [".", ","], [["x"]]),
                                EvalInstance(["cat"], ["cat"], [["x"]])])
    assert skipped == 1 and val == 0.0 and w


def test_fe_diff_fewer_syllables_positive():
    s, p = ["elephant", "wandered"], ["dog", "ran"]
    assert fe_diff([EvalInstance(s, p, [p])])[0] > 0


# ---------------------------------------------------------------------------
# report


def _corpus():
    return [EvalInstance(tokenize("the feline sat , gracefully ."), tokenize("the cat sat ."),
                         [tokenize("the cat sat ."), tokenize("a cat sat .")]),
            EvalInstance(tokenize("he departed"), tokenize("he left"), [tokenize("he left")])]


def test_report_matches_individual_calls():
    inst = _corpus()
    rep = evaluate(inst)
    assert rep.sari == sari(inst) and rep.bleu == bleu(inst)
    assert rep.fe_diff == fe_diff(inst)[0] and rep.word_diff == word_diff(inst)
    assert rep.n == 2 and len(rep.rows) == 2


def test_report_identity_prediction():
    inst = [EvalInstance(i.source, i.source, i.references) for i in _corpus()]
    rep = evaluate(inst)
    assert rep.word_diff == 0 and rep.fe_diff == 0


def test_report_roundtrip(tmp_path):
    rep = evaluate(_corpus())
    rep.write(tmp_path / "r.txt")
    assert EvalReport.read(tmp_path / "r.txt") == rep


def test_metrics_invariant_to_order():
    inst = _corpus()
    a, b = evaluate(inst), evaluate(inst[::-1])
    assert a.sari == pytest.approx(b.sari) and a.bleu == pytest.approx(b.bleu)


def test_load_instances(tmp_path):
    (tmp_path / "src").write_text("The cat sat.\nHe left.\n")
    (tmp_path / "pred").write_text("cat sat.\n\n")
    (tmp_path / "ref.0").write_text("The cat sat.\nHe went.\n")
    inst = load_instances(tmp_path / "src", tmp_path / "pred", [tmp_path / "ref.0"])
    assert inst[1].prediction == [] and inst[0].references == [["the", "cat", "sat", "."]]
    (tmp_path / "ref.1").write_text("only one line\n")
    with pytest.raises(ValueError, match="misaligned"):
        load_instances(tmp_path / "src", tmp_path / "pred", [tmp_path / "ref.0", tmp_path / "ref.1"])


def test_flesch_ease_reexported_value():
    assert flesch_ease([tokenize("The cat sat.")]) == pytest.approx(119.19, abs=0.01)
