"""Shared test helpers: corpus builders and independent brute-force oracles.

The oracles here deliberately re-derive results from first principles (plain
indexing, exhaustive enumeration, explicit counting) so the tests do not
share code paths with the implementation they check.
"""

from __future__ import annotations

import itertools
import math
import random
from collections import Counter

from ruledistill.corpus import CandidateChunk, Sentence, Token, UnlabeledPool
from ruledistill.rules import (
    DEP_REL,
    POS_TAG,
    POST_NGRAM,
    PRE_NGRAM,
    TOKEN_STRING,
    AtomicPredicate,
    Expr,
    LogicalRule,
    atoms_of,
    conj,
    negate,
)

# ---------------------------------------------------------------------------
# Corpus builders


def build_sentence(sid, specs, gold=()):
    """specs: list of (surface, lemma, pos, head, deprel) tuples."""
    return Sentence(
        id=sid,
        tokens=tuple(Token(*spec) for spec in specs),
        gold_spans=tuple(gold),
    )


def fig_sentence(sid="fig"):
    """Seven tokens: 'Thirty PD patients participated in the study'."""
    return build_sentence(
        sid,
        [
            ("Thirty", "thirty", "NUM", 2, "nummod"),
            ("PD", "pd", "PROPN", 2, "compound"),
            ("patients", "patient", "NOUN", 3, "nsubj"),
            ("participated", "participate", "VERB", None, "root"),
            ("in", "in", "ADP", 6, "case"),
            ("the", "the", "DET", 6, "det"),
            ("study", "study", "NOUN", 3, "obl"),
        ],
    )


def make_chunk(sentence, span, support=1):
    lower = tuple(t.surface.lower() for t in sentence.tokens)
    start, end = span
    head = end - 1
    for i in range(start, end):
        if sentence.tokens[i].pos in ("NOUN", "PROPN"):
            head = i
    return CandidateChunk(
        sentence_id=sentence.id,
        span=span,
        text=" ".join(lower[start:end]),
        left_context=lower[:start],
        right_context=lower[end:],
        head_token=head,
        support=support,
    )


def pool_of(*sentences):
    return UnlabeledPool(sentences={s.id: s for s in sentences})


# ---------------------------------------------------------------------------
# Brute-force rule evaluation (independent of rules._eval)


def brute_atom(atom, chunk, sentence):
    start, end = chunk.span
    words = [t.surface.lower() for t in sentence.tokens]
    if atom.kind == TOKEN_STRING:
        return " ".join(words[start:end]) == atom.payload[0]
    if atom.kind == PRE_NGRAM:
        seq = ["[BEGIN]"] + words + ["[END]"]
        n = len(atom.payload)
        lo = (start + 1) - n
        return lo >= 0 and tuple(seq[lo : start + 1]) == atom.payload
    if atom.kind == POST_NGRAM:
        seq = ["[BEGIN]"] + words + ["[END]"]
        n = len(atom.payload)
        hi = (end + 1) + n
        return hi <= len(seq) and tuple(seq[end + 1 : hi]) == atom.payload
    if atom.kind == POS_TAG:
        return tuple(t.pos for t in sentence.tokens[start:end]) == atom.payload
    head = sentence.tokens[chunk.head_token]
    governor = "[ROOT]" if head.head is None else sentence.tokens[head.head].lemma.lower()
    return (head.deprel, governor) == atom.payload


def brute_eval(node, chunk, sentence):
    if isinstance(node, AtomicPredicate):
        return brute_atom(node, chunk, sentence)
    if node.op == "and":
        return all(brute_eval(c, chunk, sentence) for c in node.children)
    if node.op == "or":
        return any(brute_eval(c, chunk, sentence) for c in node.children)
    return not brute_eval(node.children[0], chunk, sentence)


def eval_under(node, assignment):
    """Evaluate an antecedent under an atom -> bool assignment."""
    if isinstance(node, AtomicPredicate):
        return assignment[node]
    if node.op == "and":
        return all(eval_under(c, assignment) for c in node.children)
    if node.op == "or":
        return any(eval_under(c, assignment) for c in node.children)
    return not eval_under(node.children[0], assignment)


def truth_table_equal(a, b):
    atoms = sorted(set(atoms_of(a)) | set(atoms_of(b)), key=lambda x: (x.kind, x.payload))
    for bits in itertools.product((False, True), repeat=len(atoms)):
        assignment = dict(zip(atoms, bits))
        if eval_under(a, assignment) != eval_under(b, assignment):
            return False
    return True


# ---------------------------------------------------------------------------
# Random rule trees


ATOM_POOL = [
    AtomicPredicate(TOKEN_STRING, ("pd",)),
    AtomicPredicate(TOKEN_STRING, ("the study",)),
    AtomicPredicate(PRE_NGRAM, ("thirty",)),
    AtomicPredicate(PRE_NGRAM, ("such", "as")),
    AtomicPredicate(POST_NGRAM, ("patients",)),
    AtomicPredicate(POST_NGRAM, ("[END]",)),
    AtomicPredicate(POS_TAG, ("PROPN",)),
    AtomicPredicate(POS_TAG, ("DET", "NOUN")),
    AtomicPredicate(DEP_REL, ("compound", "patient")),
    AtomicPredicate(DEP_REL, ("obl", "participate")),
]


def random_antecedent(rng: random.Random, depth: int = 2):
    if depth == 0 or rng.random() < 0.35:
        return rng.choice(ATOM_POOL)
    op = rng.choice(["and", "or", "not"])
    if op == "not":
        return negate(random_antecedent(rng, depth - 1))
    children = [random_antecedent(rng, depth - 1) for _ in range(rng.choice([2, 2, 3]))]
    return Expr(op, tuple(children))


def scramble(node, rng: random.Random):
    """A logically equivalent rewrite: permuted children, double negations."""
    if isinstance(node, AtomicPredicate):
        out = node
    elif node.op == "not":
        out = negate(scramble(node.children[0], rng))
    else:
        children = [scramble(c, rng) for c in node.children]
        rng.shuffle(children)
        out = Expr(node.op, tuple(children))
    if rng.random() < 0.3:
        out = negate(negate(out))
    return out


# ---------------------------------------------------------------------------
# Similarity stubs


class TableSim:
    """Similarity stub: pairwise values from a sentence-id keyed table."""

    def __init__(self, table):
        self.table = table
        self.radius = 5

    def sim(self, sent_a, span_a, sent_b, span_b):
        if sent_a.id == sent_b.id:
            return 1.0
        return self.table[frozenset((sent_a.id, sent_b.id))]


def toy_instance_pool(n, label="disease"):
    """n two-token sentences; instances on all but the first sentence."""
    from ruledistill.bootstrap import InstancePool, PoolInstance

    sentences = [
        build_sentence(
            "t%d" % i,
            [
                ("word%d" % i, "word%d" % i, "NOUN", 1, "nsubj"),
                ("ran", "run", "VERB", None, "root"),
            ],
        )
        for i in range(n)
    ]
    corpus = pool_of(*sentences)
    pool = InstancePool()
    for i in range(1, n):
        pool.add(
            PoolInstance(
                sentence_id="t%d" % i,
                span=(0, 1),
                label=label,
                confidence=1.0,
                provenance="seed",
            )
        )
    candidate = PoolInstance(
        sentence_id="t0", span=(0, 1), label=label, confidence=1.0, provenance="seed"
    )
    return corpus, pool, candidate


# ---------------------------------------------------------------------------
# Independent TF-IDF cosine


def brute_tfidf_cosine(pool, sent_a, span_a, sent_b, span_b, radius=5):
    n_docs = len(pool.sentences)
    df = Counter()
    for sentence in pool.sentences.values():
        for token in set(t.surface.lower() for t in sentence.tokens):
            df[token] += 1

    def window(sentence, span):
        words = [t.surface.lower() for t in sentence.tokens]
        return words[max(0, span[0] - radius) : min(len(words), span[1] + radius)]

    def vector(words):
        counts = Counter(words)
        return {
            w: c * (math.log((1 + n_docs) / (1 + df[w])) + 1.0)
            for w, c in counts.items()
        }

    va, vb = vector(window(sent_a, span_a)), vector(window(sent_b, span_b))
    dot = sum(va[w] * vb[w] for w in va if w in vb)
    na = math.sqrt(sum(v * v for v in va.values()))
    nb = math.sqrt(sum(v * v for v in vb.values()))
    if na == 0 or nb == 0:
        return 0.0
    return dot / (na * nb)


# ---------------------------------------------------------------------------
# Quadratic compound-mining oracle


def brute_compound_ids(atom_index, min_support):
    """All 2-atom AND rule ids by pairwise occurrence-list intersection."""
    from ruledistill.rules import canonicalize

    ids = set()
    atoms = sorted(atom_index, key=lambda a: (a.kind, a.payload))
    for i, a in enumerate(atoms):
        for b in atoms[i + 1 :]:
            if a.kind == b.kind:
                continue
            if len(set(atom_index[a]) & set(atom_index[b])) >= min_support:
                ids.add(canonicalize(LogicalRule(antecedent=conj(a, b))).rule_id)
    return ids
