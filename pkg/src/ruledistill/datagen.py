"""Synthetic dependency-annotated corpora with planted context rules.

Generates two-type tagging corpora whose entity names are morphologically
separable, plus a matching mock-oracle lexicon covering a subset of the
names.  Entity POS is assigned per name independently of the type, so
form-only patterns stay impure while three planted context patterns are
type-pure, giving a full pipeline run known ground truth to recover.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional

from .corpus import Sentence, Token, UnlabeledPool
from .mock_oracle import MockLexicon
from .oracle import TargetTypeSet
from .rules import (
    POS_TAG,
    POST_NGRAM,
    PRE_NGRAM,
    AtomicPredicate,
    LogicalRule,
    canonicalize,
    conj,
)

SYLLABLES = (
    "bar", "del", "fen", "gor", "lim", "mur", "nel", "pol",
    "rav", "sut", "tam", "vex", "wol", "zan", "kir", "hol",
)
DISEASE_SUFFIXES = ("itis", "osis", "oma")
CHEMICAL_SUFFIXES = ("ine", "olol", "ium")

TARGETS = TargetTypeSet(types=("disease", "chemical"))

TokenSpec = tuple[str, str, str, Optional[int], str]  # surface lemma pos head deprel


def _entity_names(
    rng: random.Random, suffixes: tuple[str, ...], count: int
) -> list[str]:
    names: list[str] = []
    seen = set()
    while len(names) < count:
        name = (
            rng.choice(SYLLABLES)
            + rng.choice(SYLLABLES)
            + suffixes[len(names) % len(suffixes)]
        )
        if name in seen:
            continue
        seen.add(name)
        names.append(name)
    return names


def _disease_templates(
    entity: str, pos: str
) -> list[tuple[list[TokenSpec], tuple[int, int]]]:
    return [
        (
            [
                ("doctors", "doctor", "NOUN", 1, "nsubj"),
                ("studied", "study", "VERB", None, "root"),
                (entity, entity, pos, 1, "obj"),
                ("carefully", "carefully", "ADV", 1, "advmod"),
            ],
            (2, 3),
        ),
        (
            [
                ("she", "she", "PRON", 2, "nsubj"),
                ("was", "be", "AUX", 2, "aux"),
                ("diagnosed", "diagnose", "VERB", None, "root"),
                ("with", "with", "ADP", 4, "case"),
                (entity, entity, pos, 2, "obl"),
            ],
            (4, 5),
        ),
        (
            [
                ("the", "the", "DET", 1, "det"),
                ("symptoms", "symptom", "NOUN", 4, "nsubj"),
                ("of", "of", "ADP", 3, "case"),
                (entity, entity, pos, 1, "nmod"),
                ("worsened", "worsen", "VERB", None, "root"),
            ],
            (3, 4),
        ),
    ]


def _chemical_templates(
    entity: str, pos: str
) -> list[tuple[list[TokenSpec], tuple[int, int]]]:
    return [
        (
            [
                ("the", "the", "DET", 1, "det"),
                ("lab", "lab", "NOUN", 2, "nsubj"),
                ("tested", "test", "VERB", None, "root"),
                (entity, entity, pos, 2, "obj"),
                ("today", "today", "NOUN", 2, "obl"),
            ],
            (3, 4),
        ),
        (
            [
                ("a", "a", "DET", 1, "det"),
                ("dose", "dose", "NOUN", 4, "nsubj"),
                ("of", "of", "ADP", 3, "case"),
                (entity, entity, pos, 1, "nmod"),
                ("helped", "help", "VERB", None, "root"),
            ],
            (3, 4),
        ),
        (
            [
                (entity, entity, pos, 1, "nsubj"),
                ("dissolved", "dissolve", "VERB", None, "root"),
                ("quickly", "quickly", "ADV", 1, "advmod"),
            ],
            (0, 1),
        ),
    ]


NOISE_SENTENCES: list[list[TokenSpec]] = [
    [
        ("the", "the", "DET", 1, "det"),
        ("meeting", "meeting", "NOUN", 2, "nsubj"),
        ("ended", "end", "VERB", None, "root"),
        ("early", "early", "ADV", 2, "advmod"),
    ],
    [
        ("results", "result", "NOUN", 1, "nsubj"),
        ("appeared", "appear", "VERB", None, "root"),
        ("in", "in", "ADP", 3, "case"),
        ("print", "print", "NOUN", 1, "obl"),
    ],
]


def planted_rules() -> list[LogicalRule]:
    """The three context rules the generator plants, in canonical form.

    Only the second one constrains POS; its pre-bigram appears solely in the
    chemical-slot template, and the conjunction narrows it to the PROPN-named
    chemicals.
    """
    return [
        canonicalize(
            LogicalRule(
                antecedent=AtomicPredicate(PRE_NGRAM, ("diagnosed", "with")),
                consequent="disease",
            )
        ),
        canonicalize(
            LogicalRule(
                antecedent=conj(
                    AtomicPredicate(PRE_NGRAM, ("dose", "of")),
                    AtomicPredicate(POS_TAG, ("PROPN",)),
                ),
                consequent="chemical",
            )
        ),
        canonicalize(
            LogicalRule(
                antecedent=AtomicPredicate(POST_NGRAM, ("dissolved",)),
                consequent="chemical",
            )
        ),
    ]


@dataclass
class SyntheticCorpus:
    train: UnlabeledPool
    dev: UnlabeledPool
    lexicon: MockLexicon
    targets: TargetTypeSet
    lexicon_names: dict[str, list[str]]  # type -> names the lexicon covers
    extra_names: dict[str, list[str]]  # type -> names only rules can reach
    name_pos: dict[str, str]


def _build_sentence(sid: str, specs: list[TokenSpec], gold) -> Sentence:
    return Sentence(
        id=sid,
        tokens=tuple(
            Token(surface=s, lemma=l, pos=p, head=h, deprel=d)
            for s, l, p, h, d in specs
        ),
        gold_spans=tuple(gold),
    )


def make_corpus(
    n_sentences: int = 200,
    seed: int = 13,
    lexicon_per_type: int = 15,
    extra_per_type: int = 8,
    dev_sentences: int = 60,
    noise_rate: float = 0.15,
) -> SyntheticCorpus:
    """Generate train/dev pools, a lexicon, and the planted-rule ground truth."""
    rng = random.Random(seed)
    names = {
        "disease": _entity_names(rng, DISEASE_SUFFIXES, lexicon_per_type + extra_per_type),
        "chemical": _entity_names(rng, CHEMICAL_SUFFIXES, lexicon_per_type + extra_per_type),
    }
    lexicon_names = {t: ns[:lexicon_per_type] for t, ns in names.items()}
    extra_names = {t: ns[lexicon_per_type:] for t, ns in names.items()}
    name_pos = {}
    for etype in TARGETS.types:
        for index, name in enumerate(names[etype]):
            name_pos[name] = "NOUN" if index % 2 == 0 else "PROPN"

    def build_pool(prefix: str, count: int, pool_rng: random.Random) -> UnlabeledPool:
        sentences: dict[str, Sentence] = {}
        for index in range(count):
            sid = "%s-%04d" % (prefix, index)
            if pool_rng.random() < noise_rate:
                specs = pool_rng.choice(NOISE_SENTENCES)
                sentences[sid] = _build_sentence(sid, specs, [])
                continue
            etype = pool_rng.choice(TARGETS.types)
            name = pool_rng.choice(names[etype])
            templates = (
                _disease_templates(name, name_pos[name])
                if etype == "disease"
                else _chemical_templates(name, name_pos[name])
            )
            specs, span = pool_rng.choice(templates)
            sentences[sid] = _build_sentence(sid, specs, [(span[0], span[1], etype)])
        return UnlabeledPool(sentences=sentences)

    train = build_pool("train", n_sentences, rng)
    dev = build_pool("dev", dev_sentences, random.Random(seed + 1))

    lexicon = MockLexicon(default_entry=(("thing", 0.5),))
    for name in lexicon_names["disease"]:
        lexicon.entries[name] = (("diseases", 0.6), ("disorders", 0.25))
    for name in lexicon_names["chemical"]:
        lexicon.entries[name] = (("chemicals", 0.6), ("drugs", 0.25))

    return SyntheticCorpus(
        train=train,
        dev=dev,
        lexicon=lexicon,
        targets=TARGETS,
        lexicon_names=lexicon_names,
        extra_names=extra_names,
        name_pos=name_pos,
    )
