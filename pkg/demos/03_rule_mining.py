# Candidate rule mining: every atomic pattern the corpus instantiates,
# plus 2-atom conjunctions of different kinds above a joint support floor.
# The inverted index drives later scoring without re-matching.

from collections import Counter

from ruledistill import extract_chunks, mine
from ruledistill.datagen import make_corpus
from ruledistill.rules import atoms_of

data = make_corpus(n_sentences=120, seed=9)
chunks = extract_chunks(data.train)
candidates = mine(data.train, chunks, min_atom_support=2)

atoms = [r for r in candidates.rules.values() if len(atoms_of(r.antecedent)) == 1]
compounds = [r for r in candidates.rules.values() if len(atoms_of(r.antecedent)) == 2]
print(
    "mined %d candidate rules from %d occurrences (%d atoms, %d compounds)"
    % (len(candidates.rules), len(chunks), len(atoms), len(compounds))
)

kind_counts = Counter(atoms_of(r.antecedent)[0].kind for r in atoms)
for kind, count in sorted(kind_counts.items()):
    print("  %-14s %4d" % (kind, count))

# The widest-coverage context patterns in this corpus:
ranked = sorted(
    ((len(candidates.occurrences(r)), r) for r in atoms),
    key=lambda pair: (-pair[0], pair[1].rule_id),
)
print("\nbroadest atoms:")
for count, rule in ranked[:8]:
    print("  %-45s occurrences=%d" % (rule.sexpr(), count))
