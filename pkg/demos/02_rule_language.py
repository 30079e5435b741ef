# The logical rule language: five atomic predicate kinds over a chunk
# occurrence, combined with and/or/not, each rule carrying one entity-type
# consequent.

from ruledistill import (
    AtomicPredicate,
    LogicalRule,
    Sentence,
    Token,
    UnlabeledPool,
    canonicalize,
    conj,
    extract_chunks,
    matches,
    negate,
)

sentence = Sentence(
    id="s0",
    tokens=(
        Token("Thirty", "thirty", "NUM", 2, "nummod"),
        Token("PD", "pd", "PROPN", 2, "compound"),
        Token("patients", "patient", "NOUN", 3, "nsubj"),
        Token("participated", "participate", "VERB", None, "root"),
    ),
)
pool = UnlabeledPool(sentences={"s0": sentence})
(chunk,) = extract_chunks(pool)
print("chunk:", chunk.text, chunk.span)

examples = [
    LogicalRule(AtomicPredicate("token-string", ("thirty pd patients",)), "disease"),
    LogicalRule(AtomicPredicate("pre-ngram", ("[BEGIN]",)), "disease"),
    LogicalRule(AtomicPredicate("post-ngram", ("participated",)), "disease"),
    LogicalRule(AtomicPredicate("pos-tag", ("NUM", "PROPN", "NOUN")), "disease"),
    LogicalRule(AtomicPredicate("dep-rel", ("nsubj", "participate")), "disease"),
]
for rule in examples:
    print("%-55s -> %s  matches=%s" % (rule.sexpr(), rule.consequent, matches(rule, chunk, sentence)))

# Compound rules: conjunction with negation.
compound = LogicalRule(
    conj(
        AtomicPredicate("post-ngram", ("participated",)),
        negate(AtomicPredicate("pos-tag", ("NOUN",))),
    ),
    "disease",
)
print("\ncompound:", compound.sexpr(), "->", matches(compound, chunk, sentence))

# Canonicalization makes logically identical antecedents share a rule id.
a = AtomicPredicate("pre-ngram", ("[BEGIN]",))
b = AtomicPredicate("pos-tag", ("NUM", "PROPN", "NOUN"))
left = canonicalize(LogicalRule(conj(a, b), "disease"))
right = canonicalize(LogicalRule(conj(b, a), "disease"))
print("\n(a and b) id:", left.rule_id)
print("(b and a) id:", right.rule_id)
assert left.rule_id == right.rule_id
