import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ruledistill.rules import (
    END,
    POS_TAG,
    POST_NGRAM,
    PRE_NGRAM,
    TOKEN_STRING,
    AtomicPredicate,
    LogicalRule,
    RuleError,
    RuleStats,
    canonicalize,
    conj,
    disj,
    matches,
    negate,
)

from util import (
    brute_eval,
    build_sentence,
    make_chunk,
    random_antecedent,
    scramble,
    truth_table_equal,
)


def rule(antecedent, consequent="disease"):
    return LogicalRule(antecedent=antecedent, consequent=consequent)


def test_post_ngram_patients(fig, pd_chunk):
    assert matches(rule(AtomicPredicate(POST_NGRAM, ("patients",))), pd_chunk, fig)


def test_token_string(fig, pd_chunk):
    assert matches(rule(AtomicPredicate(TOKEN_STRING, ("pd",))), pd_chunk, fig)
    assert not matches(rule(AtomicPredicate(TOKEN_STRING, ("pdx",))), pd_chunk, fig)


def test_negated_conjunct(fig, pd_chunk):
    antecedent = conj(
        AtomicPredicate(POS_TAG, ("PROPN",)),
        negate(AtomicPredicate(TOKEN_STRING, ("pd",))),
    )
    assert not matches(rule(antecedent), pd_chunk, fig)


def test_pre_ngram_with_begin_sentinel(fig):
    chunk = make_chunk(fig, (0, 3))  # thirty pd patients, sentence-initial
    assert matches(rule(AtomicPredicate(PRE_NGRAM, ("[BEGIN]",))), chunk, fig)
    # A bigram cannot reach past the single begin pad.
    assert not matches(
        rule(AtomicPredicate(PRE_NGRAM, ("[BEGIN]", "[BEGIN]"))), chunk, fig
    )


def test_end_sentinel_case_study():
    sentence = build_sentence(
        "case",
        [
            ("therapy", "therapy", "NOUN", None, "root"),
            ("for", "for", "ADP", 3, "case"),
            ("rheumatologic", "rheumatologic", "ADJ", 3, "amod"),
            ("disorders", "disorder", "NOUN", 0, "nmod"),
        ],
    )
    chunk = make_chunk(sentence, (2, 4))
    antecedent = conj(
        AtomicPredicate(PRE_NGRAM, ("therapy", "for")),
        AtomicPredicate(POST_NGRAM, (END,)),
    )
    assert matches(rule(antecedent), chunk, sentence)


def test_pos_sequence(fig):
    chunk = make_chunk(fig, (0, 3))
    assert matches(
        rule(AtomicPredicate(POS_TAG, ("NUM", "PROPN", "NOUN"))), chunk, fig
    )


def test_dep_rel(fig, pd_chunk):
    assert matches(
        rule(AtomicPredicate("dep-rel", ("compound", "patient"))), pd_chunk, fig
    )


def test_commutative_rule_id():
    a = AtomicPredicate(TOKEN_STRING, ("pd",))
    b = AtomicPredicate(POS_TAG, ("PROPN",))
    assert (
        canonicalize(rule(conj(a, b))).rule_id == canonicalize(rule(conj(b, a))).rule_id
    )


def test_double_negation():
    a = AtomicPredicate(TOKEN_STRING, ("pd",))
    assert canonicalize(rule(negate(negate(a)))).rule_id == canonicalize(rule(a)).rule_id


def test_consequent_changes_rule_id():
    a = AtomicPredicate(TOKEN_STRING, ("pd",))
    assert rule(a, "disease").rule_id != rule(a, "chemical").rule_id


def test_scrambled_trees_share_rule_id():
    rng = random.Random(5)
    for _ in range(200):
        original = random_antecedent(rng)
        rewritten = scramble(original, rng)
        assert truth_table_equal(original, rewritten)
        assert (
            canonicalize(rule(original)).rule_id
            == canonicalize(rule(rewritten)).rule_id
        )


def test_canonicalize_idempotent():
    rng = random.Random(6)
    for _ in range(200):
        r = rule(random_antecedent(rng))
        once = canonicalize(r)
        assert canonicalize(once) == once


def test_matches_agrees_with_brute_force(fig):
    rng = random.Random(7)
    chunks = [make_chunk(fig, (1, 2)), make_chunk(fig, (0, 3)), make_chunk(fig, (5, 7))]
    for _ in range(500):
        antecedent = random_antecedent(rng)
        chunk = rng.choice(chunks)
        assert matches(rule(antecedent), chunk, fig) == brute_eval(
            antecedent, chunk, fig
        )


def test_canonicalize_preserves_matches(fig):
    rng = random.Random(8)
    chunks = [make_chunk(fig, (1, 2)), make_chunk(fig, (0, 3))]
    for _ in range(300):
        r = rule(random_antecedent(rng))
        canonical = canonicalize(r)
        for chunk in chunks:
            assert matches(r, chunk, fig) == matches(canonical, chunk, fig)


def test_atomic_kind_independence(fig, pd_chunk):
    # Changing context tokens cannot flip a TokenString match.
    other = build_sentence(
        "changed",
        [
            ("Many", "many", "ADJ", 2, "amod"),
            ("PD", "pd", "PROPN", 2, "compound"),
            ("cases", "case", "NOUN", 3, "nsubj"),
            ("emerged", "emerge", "VERB", None, "root"),
        ],
    )
    other_chunk = make_chunk(other, (1, 2))
    token_rule = rule(AtomicPredicate(TOKEN_STRING, ("pd",)))
    assert matches(token_rule, pd_chunk, fig) == matches(token_rule, other_chunk, other)
    # And changing the chunk text cannot flip a context match.
    pre_rule = rule(AtomicPredicate(PRE_NGRAM, ("thirty",)))
    renamed = build_sentence(
        "renamed",
        [
            ("Thirty", "thirty", "NUM", 2, "nummod"),
            ("MS", "ms", "PROPN", 2, "compound"),
            ("patients", "patient", "NOUN", 3, "nsubj"),
            ("participated", "participate", "VERB", None, "root"),
        ],
    )
    assert matches(pre_rule, pd_chunk, fig) == matches(
        pre_rule, make_chunk(renamed, (1, 2)), renamed
    )


def test_atom_validation():
    with pytest.raises(RuleError):
        AtomicPredicate(TOKEN_STRING, ())
    with pytest.raises(RuleError):
        AtomicPredicate(PRE_NGRAM, ("a", "b", "c", "d"))
    with pytest.raises(RuleError):
        AtomicPredicate("dep-rel", ("compound",))
    with pytest.raises(RuleError):
        AtomicPredicate("regex", ("x",))


def test_stats_validation():
    assert RuleStats(n_matched=3, m_correct=3).m_correct == 3
    with pytest.raises(RuleError):
        RuleStats(n_matched=2, m_correct=3)


def test_disjunction(fig, pd_chunk):
    antecedent = disj(
        AtomicPredicate(TOKEN_STRING, ("nothing",)),
        AtomicPredicate(POS_TAG, ("PROPN",)),
    )
    assert matches(rule(antecedent), pd_chunk, fig)


@settings(max_examples=150, deadline=None)
@given(st.integers(min_value=0, max_value=2**62))
def test_random_rule_ids_stable(seed):
    rng_a, rng_b = random.Random(seed), random.Random(seed)
    rule_a = canonicalize(rule(random_antecedent(rng_a)))
    rule_b = canonicalize(rule(random_antecedent(rng_b)))
    assert rule_a.rule_id == rule_b.rule_id
