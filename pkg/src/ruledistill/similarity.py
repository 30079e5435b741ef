"""Instance similarity: cosine over corpus-level TF-IDF unigram vectors.

Document frequencies come from the whole unlabeled corpus (one document per
sentence); an instance is represented by the token window around its span.
Self-contained and deterministic; swappable behind ``sim``.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence

from .corpus import Sentence, UnlabeledPool

WINDOW_RADIUS = 5


def lower_median(values: Sequence[float]) -> float:
    """Median taking the lower middle value for even-length input."""
    if not values:
        raise ValueError("median of empty sequence")
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


class SimilarityModel:
    """TF-IDF vectors and cosine similarity for span windows."""

    def __init__(self, pool: UnlabeledPool, radius: int = WINDOW_RADIUS) -> None:
        self.radius = radius
        self.n_docs = len(pool.sentences)
        df: dict[str, int] = {}
        for sid in sorted(pool.sentences):
            for token in set(pool.sentences[sid].lower_surfaces()):
                df[token] = df.get(token, 0) + 1
        self._df = df

    def idf(self, token: str) -> float:
        return math.log((1 + self.n_docs) / (1 + self._df.get(token, 0))) + 1.0

    def window(self, sentence: Sentence, span: tuple[int, int]) -> tuple[str, ...]:
        start, end = span
        lower = sentence.lower_surfaces()
        return lower[max(0, start - self.radius) : min(len(lower), end + self.radius)]

    def vector(self, tokens: Sequence[str]) -> dict[str, float]:
        tf: dict[str, int] = {}
        for token in tokens:
            tf[token] = tf.get(token, 0) + 1
        return {t: count * self.idf(t) for t, count in tf.items()}

    @staticmethod
    def cosine(a: Mapping[str, float], b: Mapping[str, float]) -> float:
        if not a or not b:
            return 0.0
        dot = sum(w * b[t] for t, w in a.items() if t in b)
        norm_a = math.sqrt(sum(w * w for w in a.values()))
        norm_b = math.sqrt(sum(w * w for w in b.values()))
        if norm_a == 0.0 or norm_b == 0.0:
            return 0.0
        return min(1.0, dot / (norm_a * norm_b))

    def sim(
        self,
        sentence_a: Sentence,
        span_a: tuple[int, int],
        sentence_b: Sentence,
        span_b: tuple[int, int],
    ) -> float:
        """Symmetric window similarity; 1.0 for identical token windows."""
        wa = self.window(sentence_a, span_a)
        wb = self.window(sentence_b, span_b)
        if wa == wb:
            return 1.0
        return self.cosine(self.vector(wa), self.vector(wb))
