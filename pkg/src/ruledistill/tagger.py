"""Averaged-perceptron sequence tagger with greedy BIO decoding.

Trains on weak span labels projected to BIO tags.  Sentences with partial
coverage can exclude unlabeled tokens from the loss instead of forcing O
supervision on them.  Training order is seeded, so runs are reproducible
and invariant to input order.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .corpus import CandidateChunk, Sentence, UnlabeledPool

OUTSIDE = "O"
START_TAG = "[start]"
PAD_WORD = "[pad]"

CHECKPOINT_VERSION = 1


class TaggerError(ValueError):
    pass


@dataclass(frozen=True)
class TagSequence:
    sentence_id: str
    tags: tuple[str, ...]


@dataclass(frozen=True)
class TypeMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvalReport:
    per_type: dict[str, TypeMetrics]
    micro: TypeMetrics

    def to_obj(self) -> dict:
        def row(m: TypeMetrics) -> dict:
            return {
                "precision": m.precision,
                "recall": m.recall,
                "f1": m.f1,
                "support": m.support,
            }

        return {
            "per_type": {t: row(m) for t, m in sorted(self.per_type.items())},
            "micro": row(self.micro),
        }

    def to_text(self) -> str:
        lines = ["%-12s %9s %9s %9s %9s" % ("type", "P", "R", "F1", "support")]
        for name in sorted(self.per_type):
            m = self.per_type[name]
            lines.append(
                "%-12s %9.4f %9.4f %9.4f %9d"
                % (name, m.precision, m.recall, m.f1, m.support)
            )
        m = self.micro
        lines.append(
            "%-12s %9.4f %9.4f %9.4f %9d"
            % ("micro", m.precision, m.recall, m.f1, m.support)
        )
        return "\n".join(lines)


@dataclass(frozen=True)
class TaggerConfig:
    epochs: int = 5
    seed: int = 0
    # "auto": O supervision only for fully rule-covered seed sentences;
    # "O": always supervise unlabeled tokens as O; "exclude": never do.
    unlabeled_supervision: str = "auto"


@dataclass
class TrainingItem:
    sentence: Sentence
    spans: tuple[tuple[int, int, str], ...]
    supervise_outside: bool


def spans_to_tags(
    n_tokens: int, spans: Iterable[tuple[int, int, str]], outside: Optional[str]
) -> list[Optional[str]]:
    """Project spans to BIO tags; unlabeled positions get ``outside``."""
    tags: list[Optional[str]] = [outside] * n_tokens
    for start, end, label in spans:
        tags[start] = "B-" + label
        for i in range(start + 1, end):
            tags[i] = "I-" + label
    return tags


def tags_to_spans(tags: Sequence[str]) -> list[tuple[int, int, str]]:
    spans = []
    start, label = None, None
    for i, tag in enumerate(tags):
        if tag.startswith("B-"):
            if start is not None:
                spans.append((start, i, label))
            start, label = i, tag[2:]
        elif tag.startswith("I-") and label == tag[2:] and start is not None:
            continue
        elif tag.startswith("I-"):  # stray I- opens a span defensively
            if start is not None:
                spans.append((start, i, label))
            start, label = i, tag[2:]
        else:
            if start is not None:
                spans.append((start, i, label))
            start, label = None, None
    if start is not None:
        spans.append((start, len(tags), label))
    return spans


def _shape(word: str) -> str:
    out = []
    for ch in word:
        if ch.isupper():
            out.append("X")
        elif ch.islower():
            out.append("x")
        elif ch.isdigit():
            out.append("d")
        else:
            out.append(ch)
    return "".join(out)


def token_features(sentence: Sentence, i: int, prev_tag: str) -> list[str]:
    words = sentence.surfaces()
    lowers = sentence.lower_surfaces()
    word = words[i]
    low = lowers[i]

    def ctx(j: int) -> str:
        if 0 <= j < len(words):
            return lowers[j]
        return PAD_WORD

    return [
        "bias",
        "w=" + word,
        "lw=" + low,
        "pre3=" + low[:3],
        "pre4=" + low[:4],
        "suf3=" + low[-3:],
        "suf4=" + low[-4:],
        "pos=" + sentence.tokens[i].pos,
        "prev=" + prev_tag,
        "w-1=" + ctx(i - 1),
        "w-2=" + ctx(i - 2),
        "w+1=" + ctx(i + 1),
        "w+2=" + ctx(i + 2),
        "shape=" + _shape(word),
    ]


class _AveragedWeights:
    """Perceptron weights with lazy averaging over update timestamps."""

    def __init__(self) -> None:
        self.weights: dict[str, dict[str, float]] = {}
        self._totals: dict[tuple[str, str], float] = {}
        self._stamps: dict[tuple[str, str], int] = {}
        self.counter = 0

    def score(self, features: Sequence[str], tag: str) -> float:
        total = 0.0
        for feature in features:
            row = self.weights.get(feature)
            if row:
                total += row.get(tag, 0.0)
        return total

    def _bump(self, feature: str, tag: str, delta: float) -> None:
        key = (feature, tag)
        row = self.weights.setdefault(feature, {})
        current = row.get(tag, 0.0)
        self._totals[key] = (
            self._totals.get(key, 0.0)
            + (self.counter - self._stamps.get(key, 0)) * current
        )
        self._stamps[key] = self.counter
        row[tag] = current + delta

    def update(self, truth: str, guess: str, features: Sequence[str]) -> None:
        self.counter += 1
        if truth == guess:
            return
        for feature in features:
            self._bump(feature, truth, 1.0)
            self._bump(feature, guess, -1.0)

    def averaged(self) -> dict[str, dict[str, float]]:
        if self.counter == 0:
            return {f: dict(row) for f, row in self.weights.items()}
        out: dict[str, dict[str, float]] = {}
        for feature, row in self.weights.items():
            for tag, weight in row.items():
                key = (feature, tag)
                total = self._totals.get(key, 0.0)
                total += (self.counter - self._stamps.get(key, 0)) * weight
                mean = total / self.counter
                if mean:
                    out.setdefault(feature, {})[tag] = mean
        return out


@dataclass
class Tagger:
    labels: tuple[str, ...]  # entity types
    weights: dict[str, dict[str, float]] = field(default_factory=dict)
    config: TaggerConfig = field(default_factory=TaggerConfig)

    @property
    def tags(self) -> tuple[str, ...]:
        out = [OUTSIDE]
        for label in self.labels:
            out.append("B-" + label)
            out.append("I-" + label)
        return tuple(out)

    def _allowed(self, prev_tag: str) -> list[str]:
        allowed = [OUTSIDE]
        for label in self.labels:
            allowed.append("B-" + label)
            if prev_tag in ("B-" + label, "I-" + label):
                allowed.append("I-" + label)
        return allowed

    def _score(self, features: Sequence[str], tag: str) -> float:
        total = 0.0
        for feature in features:
            row = self.weights.get(feature)
            if row:
                total += row.get(tag, 0.0)
        return total

    def decode(self, sentence: Sentence) -> tuple[list[str], list[float]]:
        """Greedy left-to-right decode; returns tags and per-token margins
        (best score minus runner-up score at each position)."""
        tags: list[str] = []
        margins: list[float] = []
        prev = START_TAG
        for i in range(len(sentence.tokens)):
            features = token_features(sentence, i, prev)
            allowed = self._allowed(prev)
            scored = sorted(
                ((self._score(features, t), t) for t in allowed),
                key=lambda st: (-st[0], st[1]),
            )
            best_score, best_tag = scored[0]
            second = scored[1][0] if len(scored) > 1 else best_score
            tags.append(best_tag)
            margins.append(best_score - second)
            prev = best_tag
        return tags, margins

    def tag(self, sentence: Sentence) -> TagSequence:
        tags, _ = self.decode(sentence)
        return TagSequence(sentence_id=sentence.id, tags=tuple(tags))

    def save(self, path: str | Path) -> None:
        obj = {
            "version": CHECKPOINT_VERSION,
            "labels": list(self.labels),
            "config": {
                "epochs": self.config.epochs,
                "seed": self.config.seed,
                "unlabeled_supervision": self.config.unlabeled_supervision,
            },
            "weights": {
                f: {t: w for t, w in sorted(row.items())}
                for f, row in sorted(self.weights.items())
            },
        }
        Path(path).write_text(
            json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "Tagger":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        if obj.get("version") != CHECKPOINT_VERSION:
            raise TaggerError("unsupported checkpoint version %r" % obj.get("version"))
        cfg = obj.get("config", {})
        return cls(
            labels=tuple(obj["labels"]),
            weights={f: dict(row) for f, row in obj["weights"].items()},
            config=TaggerConfig(
                epochs=cfg.get("epochs", 5),
                seed=cfg.get("seed", 0),
                unlabeled_supervision=cfg.get("unlabeled_supervision", "auto"),
            ),
        )


def train(
    items: Sequence[TrainingItem],
    labels: Sequence[str],
    config: TaggerConfig = TaggerConfig(),
) -> Tagger:
    """Train an averaged perceptron on weakly labeled sentences.

    Positions without a projected tag are skipped by the loss; the decode
    still runs over them so the previous-tag feature stays realistic.
    """
    if not items:
        raise TaggerError("cannot train on an empty instance pool")
    label_tuple = tuple(sorted(set(labels)))
    seen = {label for item in items for _, _, label in item.spans}
    if len(seen) < 2 and len(label_tuple) > 1:
        import logging

        logging.getLogger(__name__).warning(
            "instance pool covers a single class (%s); tagger may be degenerate",
            ", ".join(sorted(seen)) or "none",
        )
    model = Tagger(labels=label_tuple, config=config)
    weights = _AveragedWeights()
    ordered = sorted(items, key=lambda item: item.sentence.id)
    rng = random.Random(config.seed)
    for _ in range(config.epochs):
        order = list(range(len(ordered)))
        rng.shuffle(order)
        for index in order:
            item = ordered[index]
            gold = spans_to_tags(
                len(item.sentence.tokens),
                item.spans,
                OUTSIDE if item.supervise_outside else None,
            )
            prev = START_TAG
            for i in range(len(item.sentence.tokens)):
                features = token_features(item.sentence, i, prev)
                allowed = model._allowed(prev)
                guess = min(
                    allowed,
                    key=lambda t: (-weights.score(features, t), t),
                )
                if gold[i] is not None:
                    weights.update(gold[i], guess, features)
                prev = guess
    model.weights = weights.averaged()
    return model


def pseudo_label(
    model: Tagger, pool: UnlabeledPool
) -> list[tuple[CandidateChunk, str, float]]:
    """Predict entity spans and align them to candidate chunks.

    Returns (chunk, predicted label, margin) for every predicted span whose
    boundaries coincide with a candidate chunk.  The margin is the decode
    score gap at the span's first token, normalized by span length.
    """
    by_key = {chunk.key: chunk for chunk in pool.chunks()}
    out = []
    for sid in sorted(pool.sentences):
        sentence = pool.sentences[sid]
        tags, margins = model.decode(sentence)
        for start, end, label in tags_to_spans(tags):
            chunk = by_key.get((sid, start, end))
            if chunk is None:
                continue
            margin = margins[start] / (end - start)
            out.append((chunk, label, margin))
    return out


def evaluate(
    predictions: Sequence[TagSequence], sentences: Sequence[Sentence]
) -> EvalReport:
    """Exact-span micro precision/recall/F1 against gold spans."""
    gold_by_id = {s.id: s for s in sentences}
    tp: dict[str, int] = {}
    fp: dict[str, int] = {}
    fn: dict[str, int] = {}
    support: dict[str, int] = {}
    for pred in predictions:
        if pred.sentence_id not in gold_by_id:
            raise TaggerError(
                "prediction for unknown sentence id %r" % pred.sentence_id
            )
        sentence = gold_by_id[pred.sentence_id]
        predicted = set(tags_to_spans(pred.tags))
        gold = set(sentence.gold_spans)
        for span in gold:
            support[span[2]] = support.get(span[2], 0) + 1
        for span in predicted & gold:
            tp[span[2]] = tp.get(span[2], 0) + 1
        for span in predicted - gold:
            fp[span[2]] = fp.get(span[2], 0) + 1
        for span in gold - predicted:
            fn[span[2]] = fn.get(span[2], 0) + 1

    def metrics(t: int, p: int, n: int, sup: int) -> TypeMetrics:
        precision = t / (t + p) if t + p else 0.0
        recall = t / (t + n) if t + n else 0.0
        f1 = (
            2 * precision * recall / (precision + recall)
            if precision + recall
            else 0.0
        )
        return TypeMetrics(precision=precision, recall=recall, f1=f1, support=sup)

    types = sorted(set(tp) | set(fp) | set(fn) | set(support))
    per_type = {
        name: metrics(
            tp.get(name, 0), fp.get(name, 0), fn.get(name, 0), support.get(name, 0)
        )
        for name in types
    }
    micro = metrics(
        sum(tp.values()), sum(fp.values()), sum(fn.values()), sum(support.values())
    )
    return EvalReport(per_type=per_type, micro=micro)
