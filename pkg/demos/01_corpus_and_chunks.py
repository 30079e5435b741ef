# Corpus loading and candidate-chunk extraction.
#
# The pipeline consumes dependency-annotated sentences (CoNLL-U or JSON
# lines).  Candidate entity spans are maximal noun chunks: contiguous runs
# of tokens chaining to a NOUN/PROPN head through compound/amod/nummod/
# det/flat edges.

from ruledistill import Sentence, Token, UnlabeledPool, extract_chunks
from ruledistill.datagen import make_corpus

sentence = Sentence(
    id="worked-example",
    tokens=(
        Token("Thirty", "thirty", "NUM", 2, "nummod"),
        Token("PD", "pd", "PROPN", 2, "compound"),
        Token("patients", "patient", "NOUN", 3, "nsubj"),
        Token("participated", "participate", "VERB", None, "root"),
        Token("in", "in", "ADP", 6, "case"),
        Token("the", "the", "DET", 6, "det"),
        Token("study", "study", "NOUN", 3, "obl"),
    ),
)
pool = UnlabeledPool(sentences={sentence.id: sentence})

print("sentence:", " ".join(t.surface for t in sentence.tokens))
for chunk in extract_chunks(pool):
    print(
        "  chunk %-22r span=%s head=%r support=%d"
        % (
            chunk.text,
            chunk.span,
            sentence.tokens[chunk.head_token].surface,
            chunk.support,
        )
    )

# On a generated corpus, support counts aggregate over every occurrence of
# the normalized chunk text.
data = make_corpus(n_sentences=60, seed=5)
chunks = extract_chunks(data.train)
print("\nsynthetic corpus: %d sentences, %d chunk occurrences" % (len(data.train), len(chunks)))
supports = sorted(
    {(c.text, c.support) for c in chunks}, key=lambda pair: (-pair[1], pair[0])
)
for text, support in supports[:5]:
    print("  most frequent: %-18r support=%d" % (text, support))
