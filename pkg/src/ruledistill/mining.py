"""Candidate rule mining: enumerate every atom the corpus instantiates.

One pass collects, for each chunk occurrence, all atomic predicates it
satisfies (n-gram windows of length 1..3, with begin/end sentinels).  Atoms
below a support floor are pruned.  A second pass pairs surviving atoms of
different kinds into 2-atom conjunctions via the inverted index, never
materializing a cross product.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .corpus import CandidateChunk, Sentence, UnlabeledPool
from .rules import (
    BEGIN,
    DEP_REL,
    END,
    MAX_NGRAM,
    POS_TAG,
    POST_NGRAM,
    PRE_NGRAM,
    ROOT_LEMMA,
    TOKEN_STRING,
    AtomicPredicate,
    LogicalRule,
    canonicalize,
    conj,
)

OccKey = tuple[str, int, int]  # (sentence_id, start, end)

DEFAULT_MIN_ATOM_SUPPORT = 2


def chunk_atoms(chunk: CandidateChunk, sentence: Sentence) -> list[AtomicPredicate]:
    """All atomic predicates instantiated by one chunk occurrence."""
    start, end = chunk.span
    padded = (BEGIN,) + sentence.lower_surfaces() + (END,)
    atoms = [AtomicPredicate(TOKEN_STRING, (chunk.text,))]
    for n in range(1, MAX_NGRAM + 1):
        lo = start + 1 - n
        if lo >= 0:
            atoms.append(AtomicPredicate(PRE_NGRAM, padded[lo : start + 1]))
        hi = end + 1 + n
        if hi <= len(padded):
            atoms.append(AtomicPredicate(POST_NGRAM, padded[end + 1 : hi]))
    atoms.append(
        AtomicPredicate(POS_TAG, tuple(t.pos for t in sentence.tokens[start:end]))
    )
    head = sentence.tokens[chunk.head_token]
    governor = (
        ROOT_LEMMA if head.head is None else sentence.tokens[head.head].lemma.lower()
    )
    atoms.append(AtomicPredicate(DEP_REL, (head.deprel, governor)))
    return atoms


def _atom_key(atom: AtomicPredicate) -> tuple:
    return (atom.kind, atom.payload)


@dataclass
class CandidateRuleSet:
    """Mined candidate rules plus an inverted atom -> occurrences index."""

    rules: dict[str, LogicalRule] = field(default_factory=dict)
    index: dict[AtomicPredicate, tuple[OccKey, ...]] = field(default_factory=dict)
    min_atom_support: int = DEFAULT_MIN_ATOM_SUPPORT

    def add_rule(self, rule: LogicalRule) -> None:
        rule = canonicalize(rule)
        self.rules.setdefault(rule.rule_id, rule)

    def occurrences(self, rule: LogicalRule) -> frozenset[OccKey]:
        """Occurrence keys matching a conjunction of indexed atoms."""
        from .rules import atoms_of

        sets = []
        for atom in atoms_of(rule.antecedent):
            sets.append(frozenset(self.index.get(atom, ())))
        if not sets:
            return frozenset()
        out = sets[0]
        for other in sets[1:]:
            out = out & other
        return out

    def __len__(self) -> int:
        return len(self.rules)


def mine_atoms(
    pool: UnlabeledPool,
    chunks: tuple[CandidateChunk, ...],
    min_atom_support: int = DEFAULT_MIN_ATOM_SUPPORT,
) -> CandidateRuleSet:
    """Collect every instantiated atom, pruning those below the support floor."""
    occ_lists: dict[AtomicPredicate, list[OccKey]] = defaultdict(list)
    for chunk in chunks:
        sentence = pool.sentence(chunk.sentence_id)
        key = chunk.key
        for atom in chunk_atoms(chunk, sentence):
            occ_lists[atom].append(key)
    result = CandidateRuleSet(min_atom_support=min_atom_support)
    for atom in sorted(occ_lists, key=_atom_key):
        occs = occ_lists[atom]
        if len(occs) < min_atom_support:
            continue
        result.index[atom] = tuple(sorted(occs))
        result.add_rule(LogicalRule(antecedent=atom))
    return result


def mine_compounds(
    atoms: CandidateRuleSet, pool: UnlabeledPool
) -> CandidateRuleSet:
    """Add 2-atom conjunctions of different kinds with enough joint support.

    Pairs are counted per occurrence through the inverted index, so the
    result only ever contains conjunctions that co-fire somewhere.
    """
    by_occ: dict[OccKey, list[AtomicPredicate]] = defaultdict(list)
    for atom, occs in atoms.index.items():
        for key in occs:
            by_occ[key].append(atom)
    joint: Counter = Counter()
    for key in sorted(by_occ):
        fired = sorted(by_occ[key], key=_atom_key)
        for i, a in enumerate(fired):
            for b in fired[i + 1 :]:
                if a.kind == b.kind:
                    continue
                joint[(_atom_key(a), _atom_key(b))] += 1
    lookup = {_atom_key(a): a for a in atoms.index}
    for (ka, kb), count in sorted(joint.items()):
        if count < atoms.min_atom_support:
            continue
        atoms.add_rule(LogicalRule(antecedent=conj(lookup[ka], lookup[kb])))
    return atoms


def mine(
    pool: UnlabeledPool,
    chunks: tuple[CandidateChunk, ...],
    min_atom_support: int = DEFAULT_MIN_ATOM_SUPPORT,
) -> CandidateRuleSet:
    """Full mining pass: atoms then compounds."""
    return mine_compounds(mine_atoms(pool, chunks, min_atom_support), pool)
