import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from citeforge.metrics import (
    citation_indices,
    lcs_length,
    lint_citations,
    rouge_l,
    rouge_n,
    score_pair,
    tokenize,
)

# --- independent oracles ------------------------------------------------------
# Kept deliberately naive: greedy gram pairing and exhaustive subsequence
# enumeration, written before the implementations they check.


def oracle_ngram_prf(cand_tokens, ref_tokens, n):
    cand_grams = [tuple(cand_tokens[i : i + n]) for i in range(len(cand_tokens) - n + 1)]
    ref_grams = [tuple(ref_tokens[i : i + n]) for i in range(len(ref_tokens) - n + 1)]
    pool = list(ref_grams)
    matches = 0
    for gram in cand_grams:
        if gram in pool:
            pool.remove(gram)
            matches += 1
    precision = matches / len(cand_grams) if cand_grams else 0.0
    recall = matches / len(ref_grams) if ref_grams else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def _is_subsequence(sub, seq):
    iterator = iter(seq)
    return all(any(x == y for y in iterator) for x in sub)


def oracle_lcs(xs, ys):
    best = 0
    for mask in range(1 << len(xs)):
        sub = [xs[i] for i in range(len(xs)) if (mask >> i) & 1]
        if len(sub) > best and _is_subsequence(sub, ys):
            best = len(sub)
    return best


# --- tokenize -------------------------------------------------------------------


def test_tokenize_casefolds_and_strips_punctuation():
    assert tokenize("The cat, the CAT.") == ["the", "cat", "the", "cat"]


def test_tokenize_empty():
    assert tokenize("") == []


def test_tokenize_hyphen_is_separator():
    assert tokenize("a1-b2") == ["a1", "b2"]


def test_tokenize_underscore_is_separator():
    assert tokenize("a_b") == ["a", "b"]


# --- rouge_n ----------------------------------------------------------------------


def test_rouge_n_identity():
    assert rouge_n("the cat sat", "the cat sat", 1) == (1.0, 1.0, 1.0)
    assert rouge_n("the cat sat", "the cat sat", 2) == (1.0, 1.0, 1.0)


def test_rouge_1_hand_case():
    # cand grams {the, cat, sat}, ref grams {the, cat, was, here}:
    # matches 2, P=2/3, R=2/4, F1=4/7
    score = rouge_n("the cat sat", "the cat was here", 1)
    assert math.isclose(score.precision, 2 / 3, abs_tol=1e-9)
    assert math.isclose(score.recall, 1 / 2, abs_tol=1e-9)
    assert math.isclose(score.f1, 4 / 7, abs_tol=1e-6)
    expected = oracle_ngram_prf(["the", "cat", "sat"], ["the", "cat", "was", "here"], 1)
    assert math.isclose(score.f1, expected[2], abs_tol=1e-12)


def test_rouge_n_empty_candidate():
    assert rouge_n("", "the cat", 1) == (0.0, 0.0, 0.0)
    assert rouge_n("the cat", "", 2) == (0.0, 0.0, 0.0)


def test_rouge_n_rejects_bad_n():
    with pytest.raises(ValueError):
        rouge_n("a", "a", 3)


def test_rouge_n_clipping_matches_oracle():
    rng = random.Random(7)
    vocab = ["a", "b", "c", "d"]
    for _ in range(200):
        cand = [rng.choice(vocab) for _ in range(rng.randrange(0, 9))]
        ref = [rng.choice(vocab) for _ in range(rng.randrange(0, 9))]
        for n in (1, 2):
            got = rouge_n(" ".join(cand), " ".join(ref), n)
            want = oracle_ngram_prf(cand, ref, n)
            assert math.isclose(got.precision, want[0], abs_tol=1e-12)
            assert math.isclose(got.recall, want[1], abs_tol=1e-12)
            assert math.isclose(got.f1, want[2], abs_tol=1e-12)


# --- rouge_l ----------------------------------------------------------------------


def test_rouge_l_identity():
    assert rouge_l("one two three", "one two three") == (1.0, 1.0, 1.0)


def test_rouge_l_hand_case():
    # [a b c d] vs [a c b d]: LCS = 3 (a b d or a c d)
    assert oracle_lcs(list("abcd"), list("acbd")) == 3
    score = rouge_l("a b c d", "a c b d")
    assert score == (3 / 4, 3 / 4, 3 / 4)


def test_rouge_l_disjoint():
    assert rouge_l("aa bb", "cc dd") == (0.0, 0.0, 0.0)


def test_lcs_matches_oracle_small_sequences():
    rng = random.Random(3)
    for _ in range(300):
        xs = [rng.choice("abc") for _ in range(rng.randrange(0, 7))]
        ys = [rng.choice("abc") for _ in range(rng.randrange(0, 7))]
        assert lcs_length(xs, ys) == oracle_lcs(xs, ys)


# --- shared properties -------------------------------------------------------------

token_texts = st.lists(
    st.sampled_from(["alpha", "beta", "gamma", "delta", "eps"]), max_size=12
).map(" ".join)


@settings(max_examples=150)
@given(token_texts, token_texts)
def test_f1_symmetry(a, b):
    for metric in (lambda x, y: rouge_n(x, y, 1), lambda x, y: rouge_n(x, y, 2), rouge_l):
        left = metric(a, b)
        right = metric(b, a)
        assert math.isclose(left.f1, right.f1, abs_tol=1e-12)
        assert math.isclose(left.precision, right.recall, abs_tol=1e-12)


@settings(max_examples=150)
@given(token_texts, token_texts)
def test_scores_bounded(a, b):
    scores = score_pair(a, b)
    for prf in (scores.rouge1, scores.rouge2, scores.rougeL):
        for value in prf:
            assert 0.0 <= value <= 1.0
        assert prf.f1 <= max(prf.precision, prf.recall) + 1e-12


# --- citation lint -----------------------------------------------------------------


def test_lint_counts_in_range_citations():
    report = lint_citations("See [Reference 1] and [Reference 3].", 3)
    assert report.cited == {1, 3}
    assert report.out_of_range == frozenset()
    assert report.coverage == pytest.approx(2 / 3)


def test_lint_flags_out_of_range():
    report = lint_citations("As shown in [Reference 12].", 11)
    assert report.out_of_range == {12}
    assert report.cited == frozenset()
    assert report.cited.isdisjoint(report.out_of_range)


def test_lint_lowercase_is_malformed():
    report = lint_citations("As shown in [reference 2].", 3)
    assert report.cited == frozenset()
    assert "[reference 2]" in report.malformed_spans


def test_lint_near_misses():
    text = "See [Ref 3], also Reference 4 said so, plus [Reference  5]."
    report = lint_citations(text, 5)
    assert report.cited == frozenset()
    assert "[Ref 3]" in report.malformed_spans
    assert "Reference 4" in report.malformed_spans
    assert "[Reference  5]" in report.malformed_spans


def test_lint_exact_tags_not_double_reported():
    report = lint_citations("Only [Reference 2] here.", 2)
    assert report.cited == {2}
    assert report.malformed_spans == ()


def test_lint_requires_positive_n():
    with pytest.raises(ValueError):
        lint_citations("x", 0)


def test_citation_indices_is_exact_form_only():
    assert citation_indices("[Reference 2] [reference 3] [Ref 4]") == {2}
