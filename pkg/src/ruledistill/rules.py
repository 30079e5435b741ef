"""The logical rule language: five atomic predicate kinds plus AND/OR/NOT.

A rule is an antecedent expression over atomic predicates and a consequent
entity type.  Antecedents mined from a corpus carry no consequent until
distillation binds one.  Rules are immutable values; matching is pure.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Optional, Union

from .corpus import CandidateChunk, Sentence

BEGIN = "[BEGIN]"
END = "[END]"
ROOT_LEMMA = "[ROOT]"

TOKEN_STRING = "token-string"
PRE_NGRAM = "pre-ngram"
POST_NGRAM = "post-ngram"
POS_TAG = "pos-tag"
DEP_REL = "dep-rel"

ATOM_KINDS = (TOKEN_STRING, PRE_NGRAM, POST_NGRAM, POS_TAG, DEP_REL)

MAX_NGRAM = 3


class RuleError(ValueError):
    pass


@dataclass(frozen=True)
class AtomicPredicate:
    """One atomic condition on a chunk occurrence.

    Payload by kind:
      token-string: (normalized chunk text,)
      pre-ngram:    1..3 lowercased tokens immediately before the span
      post-ngram:   1..3 lowercased tokens immediately after the span
      pos-tag:      the POS sequence over the span
      dep-rel:      (dependency relation, lowercased governor lemma)
    """

    kind: str
    payload: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.kind not in ATOM_KINDS:
            raise RuleError("unknown atom kind %r" % self.kind)
        if not self.payload:
            raise RuleError("empty payload for %s atom" % self.kind)
        if self.kind in (PRE_NGRAM, POST_NGRAM) and not (
            1 <= len(self.payload) <= MAX_NGRAM
        ):
            raise RuleError(
                "%s payload must hold 1..%d tokens" % (self.kind, MAX_NGRAM)
            )
        if self.kind == TOKEN_STRING and len(self.payload) != 1:
            raise RuleError("token-string payload must be a single string")
        if self.kind == DEP_REL and len(self.payload) != 2:
            raise RuleError("dep-rel payload must be (relation, head lemma)")

    def holds(self, chunk: CandidateChunk, sentence: Sentence) -> bool:
        start, end = chunk.span
        if self.kind == TOKEN_STRING:
            return chunk.text == self.payload[0]
        if self.kind == PRE_NGRAM:
            padded = (BEGIN,) + sentence.lower_surfaces() + (END,)
            lo = start + 1 - len(self.payload)
            if lo < 0:
                return False
            return padded[lo : start + 1] == self.payload
        if self.kind == POST_NGRAM:
            padded = (BEGIN,) + sentence.lower_surfaces() + (END,)
            hi = end + 1 + len(self.payload)
            if hi > len(padded):
                return False
            return padded[end + 1 : hi] == self.payload
        if self.kind == POS_TAG:
            return tuple(t.pos for t in sentence.tokens[start:end]) == self.payload
        # dep-rel
        head = sentence.tokens[chunk.head_token]
        governor = (
            ROOT_LEMMA
            if head.head is None
            else sentence.tokens[head.head].lemma.lower()
        )
        return (head.deprel, governor) == self.payload

    def sexpr(self) -> str:
        return "(%s %s)" % (self.kind, " ".join(json.dumps(p) for p in self.payload))


# Expression nodes: an antecedent is an AtomicPredicate or an Expr.
@dataclass(frozen=True)
class Expr:
    op: str  # "and" | "or" | "not"
    children: tuple["Antecedent", ...]

    def __post_init__(self) -> None:
        if self.op not in ("and", "or", "not"):
            raise RuleError("unknown connective %r" % self.op)
        if self.op == "not" and len(self.children) != 1:
            raise RuleError("not takes exactly one child")
        if self.op in ("and", "or") and len(self.children) < 2:
            raise RuleError("%s takes at least two children" % self.op)


Antecedent = Union[AtomicPredicate, Expr]


def _eval(node: Antecedent, chunk: CandidateChunk, sentence: Sentence) -> bool:
    if isinstance(node, AtomicPredicate):
        return node.holds(chunk, sentence)
    if node.op == "and":
        return all(_eval(c, chunk, sentence) for c in node.children)
    if node.op == "or":
        return any(_eval(c, chunk, sentence) for c in node.children)
    return not _eval(node.children[0], chunk, sentence)


def _sexpr(node: Antecedent) -> str:
    if isinstance(node, AtomicPredicate):
        return node.sexpr()
    return "(%s %s)" % (node.op, " ".join(_sexpr(c) for c in node.children))


def _canonical(node: Antecedent) -> Antecedent:
    if isinstance(node, AtomicPredicate):
        return node
    children = tuple(_canonical(c) for c in node.children)
    if node.op == "not":
        child = children[0]
        if isinstance(child, Expr) and child.op == "not":
            return child.children[0]  # double negation
        return Expr("not", (child,))
    ordered = tuple(sorted(children, key=_sexpr))
    return Expr(node.op, ordered)


def atoms_of(node: Antecedent) -> tuple[AtomicPredicate, ...]:
    if isinstance(node, AtomicPredicate):
        return (node,)
    out: list[AtomicPredicate] = []
    for child in node.children:
        out.extend(atoms_of(child))
    return tuple(out)


def depth_of(node: Antecedent) -> int:
    if isinstance(node, AtomicPredicate):
        return 0
    return 1 + max(depth_of(c) for c in node.children)


@dataclass(frozen=True)
class RuleStats:
    """Match counts of a rule against pool instances."""

    n_matched: int  # instances the antecedent matches
    m_correct: int  # matches whose pool label equals the consequent

    def __post_init__(self) -> None:
        if not 0 <= self.m_correct <= self.n_matched:
            raise RuleError(
                "inconsistent stats m=%d n=%d" % (self.m_correct, self.n_matched)
            )


@dataclass(frozen=True)
class LogicalRule:
    antecedent: Antecedent
    consequent: Optional[str] = None  # target entity type; None until bound

    @property
    def rule_id(self) -> str:
        canon = _sexpr(_canonical(self.antecedent))
        digest = hashlib.sha1(
            ("%s -> %s" % (canon, self.consequent or "?")).encode("utf-8")
        ).hexdigest()
        return digest[:16]

    def sexpr(self) -> str:
        return _sexpr(self.antecedent)

    def bind(self, consequent: str) -> "LogicalRule":
        return LogicalRule(antecedent=self.antecedent, consequent=consequent)


def matches(rule: LogicalRule, chunk: CandidateChunk, sentence: Sentence) -> bool:
    """Evaluate a rule's antecedent against one chunk occurrence."""
    return _eval(rule.antecedent, chunk, sentence)


def canonicalize(rule: LogicalRule) -> LogicalRule:
    """Order-normalize AND/OR children and drop double negations.

    Idempotent; logically identical trees under commutativity and double
    negation share a rule_id afterwards.
    """
    return LogicalRule(
        antecedent=_canonical(rule.antecedent), consequent=rule.consequent
    )


def conj(*parts: Antecedent) -> Expr:
    return Expr("and", tuple(parts))


def disj(*parts: Antecedent) -> Expr:
    return Expr("or", tuple(parts))


def negate(part: Antecedent) -> Expr:
    return Expr("not", (part,))


# ---------------------------------------------------------------------------
# Serialization (snapshots and the rule export format)


def antecedent_to_obj(node: Antecedent):
    if isinstance(node, AtomicPredicate):
        return {"kind": node.kind, "payload": list(node.payload)}
    return {"op": node.op, "children": [antecedent_to_obj(c) for c in node.children]}


def antecedent_from_obj(obj) -> Antecedent:
    if "kind" in obj:
        return AtomicPredicate(kind=obj["kind"], payload=tuple(obj["payload"]))
    return Expr(
        op=obj["op"],
        children=tuple(antecedent_from_obj(c) for c in obj["children"]),
    )


def rule_to_obj(rule: LogicalRule) -> dict:
    return {
        "antecedent": antecedent_to_obj(rule.antecedent),
        "consequent": rule.consequent,
    }


def rule_from_obj(obj) -> LogicalRule:
    return LogicalRule(
        antecedent=antecedent_from_obj(obj["antecedent"]),
        consequent=obj.get("consequent"),
    )


def export_record(
    rule: LogicalRule, stats: Optional[RuleStats] = None, score: Optional[float] = None
) -> dict:
    """One line of the rule export format."""
    return {
        "rule_id": rule.rule_id,
        "antecedent": rule.sexpr(),
        "consequent": rule.consequent,
        "stats": {
            "N": None if stats is None else stats.n_matched,
            "M": None if stats is None else stats.m_correct,
            "score": score,
        },
    }
