# Zero-shot seeding: two prompt templates ask a fill-mask oracle for each
# chunk's type words, agreement between the two readings yields a label,
# and confident well-supported chunk texts become TokenString seed rules.
#
# The oracle here is the lexicon-backed mock, so the run is deterministic
# and needs no model weights.

from ruledistill import MockOracle, build_verdicts, extract_chunks, zero_shot_seeds
from ruledistill.datagen import make_corpus

data = make_corpus(n_sentences=120, seed=9)
chunks = extract_chunks(data.train)
backend = MockOracle(data.lexicon)

verdicts, mapping = build_verdicts(data.train, chunks, backend, data.targets, k=5)

print("label-word mapping induced from top-K co-occurrence:")
for token in sorted(mapping.map):
    print("  %-12s -> %s" % (token, mapping.map[token]))

by_label = {}
for verdict in verdicts:
    by_label[verdict.label] = by_label.get(verdict.label, 0) + 1
print("\nverdicts by label:", dict(sorted(by_label.items())))

for p_t, r_t in [(0.3, 2), (0.3, 4), (0.9, 2), (1.0, 2)]:
    seeds = zero_shot_seeds(verdicts, p_t=p_t, r_t=r_t)
    print("p_t=%.1f r_t=%d -> %d seed rules" % (p_t, r_t, len(seeds)))

seeds = zero_shot_seeds(verdicts, p_t=0.3, r_t=2)
print("\nfirst seeds:")
for rule in seeds[:6]:
    print("  %-35s -> %s" % (rule.sexpr(), rule.consequent))
