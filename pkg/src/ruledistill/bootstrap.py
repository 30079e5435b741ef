"""Pool growth and rule distillation, iterated to convergence.

Each iteration: (1) apply the seed rules to admit instances, (2) train the
tagger on the instance pool, (3) let the tagger propose new instances,
gated by similarity score against same-label pool samples, (4) score every
candidate rule against the pool and admit those above the dynamic
threshold.  The loop stops when neither pool grows.  Distilled rules are
the pipeline's product; they do not label the pool themselves, since the
pool cannot witness a rule's matches outside it.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .corpus import CandidateChunk, UnlabeledPool
from .mining import CandidateRuleSet, OccKey
from .rules import (
    TOKEN_STRING,
    AtomicPredicate,
    LogicalRule,
    RuleStats,
    matches,
    rule_from_obj,
    rule_to_obj,
)
from .similarity import SimilarityModel, lower_median
from .tagger import (
    Tagger,
    TaggerConfig,
    TrainingItem,
    evaluate,
    pseudo_label,
    train,
)

log = logging.getLogger(__name__)

PROVENANCE_SEED = "seed"
PROVENANCE_MODEL = "model"
PROVENANCE_FINETUNED = "finetuned-seed"

SNAPSHOT_VERSION = 1


class BootstrapError(RuntimeError):
    pass


@dataclass(frozen=True)
class Thresholds:
    """Loop hyperparameters; the *_t floors apply while pools are too small
    to yield a median."""

    p_t: float = 0.3
    r_t: int = 4
    s_score_t: float = 0.1
    r_score_t: float = 0.5
    max_iterations: int = 10
    sample_size: int = 20
    probes: int = 50
    # Score alone rewards coverage, so a broad rule that is right barely
    # more often than the majority share would still beat the median; the
    # precision floor keeps such rules out of the pool.
    min_rule_precision: float = 0.8

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_t <= 1.0:
            raise BootstrapError("p_t must lie in [0, 1]")
        if self.r_t < 0:
            raise BootstrapError("r_t must be >= 0")
        if self.max_iterations < 1:
            raise BootstrapError("max_iterations must be >= 1")
        if self.sample_size < 1 or self.probes < 1:
            raise BootstrapError("sample_size and probes must be >= 1")
        if not 0.0 <= self.min_rule_precision <= 1.0:
            raise BootstrapError("min_rule_precision must lie in [0, 1]")

    def to_obj(self) -> dict:
        return {
            "p_t": self.p_t,
            "r_t": self.r_t,
            "s_score_t": self.s_score_t,
            "r_score_t": self.r_score_t,
            "max_iterations": self.max_iterations,
            "sample_size": self.sample_size,
            "probes": self.probes,
            "min_rule_precision": self.min_rule_precision,
        }


@dataclass(frozen=True)
class PoolInstance:
    sentence_id: str
    span: tuple[int, int]
    label: str
    confidence: float
    provenance: str

    @property
    def key(self) -> OccKey:
        return (self.sentence_id, self.span[0], self.span[1])


@dataclass
class InstancePool:
    """The growing set of high-confidence (chunk, label) instances."""

    entries: dict[OccKey, PoolInstance] = field(default_factory=dict)
    generation: int = 0

    def add(self, instance: PoolInstance) -> bool:
        if instance.key in self.entries:
            return False
        self.entries[instance.key] = instance
        return True

    def with_label(self, label: str) -> list[PoolInstance]:
        return [
            self.entries[key]
            for key in sorted(self.entries)
            if self.entries[key].label == label
        ]

    def sorted_entries(self) -> list[PoolInstance]:
        return [self.entries[key] for key in sorted(self.entries)]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class RulePoolEntry:
    rule: LogicalRule
    stats: RuleStats
    score: float


@dataclass
class RulePool:
    """Distilled rules that passed the dynamic score threshold."""

    rules: dict[str, RulePoolEntry] = field(default_factory=dict)

    def sorted_entries(self) -> list[RulePoolEntry]:
        return [self.rules[rid] for rid in sorted(self.rules)]

    def __len__(self) -> int:
        return len(self.rules)


@dataclass(frozen=True)
class SeedRule:
    """A seed rule plus the oracle confidence its instances inherit."""

    rule: LogicalRule
    confidence: float = 1.0
    provenance: str = PROVENANCE_SEED


def derive_seed(base: int, *parts) -> int:
    material = ":".join([str(base)] + [str(p) for p in parts])
    digest = hashlib.sha1(material.encode("utf-8")).hexdigest()
    return int(digest[:12], 16)


# ---------------------------------------------------------------------------
# Scores


def r_score(stats: RuleStats) -> float:
    """Precision-weighted, support-discounted rule quality."""
    if stats.n_matched < 1:
        raise BootstrapError("r_score undefined for zero matches")
    return (stats.m_correct / stats.n_matched) * math.log2(stats.n_matched)


def r_score_threshold(pool: RulePool) -> Optional[float]:
    """Median score of the current rule pool; None when it is empty."""
    if not pool.rules:
        return None
    return lower_median([entry.score for entry in pool.sorted_entries()])


def s_score(
    candidate: PoolInstance,
    pool: InstancePool,
    sim: SimilarityModel,
    corpus: UnlabeledPool,
    sample_size: int,
    rng_seed: int,
    exclude: Optional[OccKey] = None,
) -> Optional[float]:
    """Median similarity of a candidate to sampled same-label pool instances.

    Returns None when the pool holds no other instance with the candidate's
    label (the candidate is deferred, not rejected).
    """
    peers = [
        e
        for e in pool.with_label(candidate.label)
        if e.key != candidate.key and e.key != exclude
    ]
    if not peers:
        return None
    rng = random.Random(rng_seed)
    if len(peers) > sample_size:
        peers = rng.sample(peers, sample_size)
    cand_sentence = corpus.sentence(candidate.sentence_id)
    scores = [
        sim.sim(
            cand_sentence,
            candidate.span,
            corpus.sentence(peer.sentence_id),
            peer.span,
        )
        for peer in peers
    ]
    return lower_median(scores)


def s_score_threshold(
    pool: InstancePool,
    sim: SimilarityModel,
    corpus: UnlabeledPool,
    probes: int,
    sample_size: int,
    rng_seed: int,
) -> Optional[float]:
    """Leave-one-out median of pool members' own s_scores; None if the pool
    is too small to probe."""
    entries = pool.sorted_entries()
    if len(entries) < 2:
        return None
    rng = random.Random(derive_seed(rng_seed, "probe-pick"))
    probed = entries if len(entries) <= probes else rng.sample(entries, probes)
    scores = []
    for entry in sorted(probed, key=lambda e: e.key):
        score = s_score(
            entry,
            pool,
            sim,
            corpus,
            sample_size,
            derive_seed(rng_seed, "probe", *entry.key),
            exclude=entry.key,
        )
        if score is not None:
            scores.append(score)
    if not scores:
        return None
    return lower_median(scores)


# ---------------------------------------------------------------------------
# Distillation


def score_rule(
    candidates: CandidateRuleSet, rule: LogicalRule, pool: InstancePool
) -> Optional[tuple[str, RuleStats, float]]:
    """Bind a consequent by majority pool label and compute match stats.

    Returns (consequent, stats, score), or None when the antecedent matches
    no labeled instance.
    """
    matched = [
        pool.entries[key]
        for key in candidates.occurrences(rule)
        if key in pool.entries
    ]
    if not matched:
        return None
    counts: dict[str, int] = {}
    for instance in matched:
        counts[instance.label] = counts.get(instance.label, 0) + 1
    consequent = min(counts, key=lambda y: (-counts[y], y))
    stats = RuleStats(n_matched=len(matched), m_correct=counts[consequent])
    return consequent, stats, r_score(stats)


def distill_rules(
    candidates: CandidateRuleSet,
    pool_s: InstancePool,
    pool_r: RulePool,
    floor: float,
    min_precision: float = 0.0,
) -> list[RulePoolEntry]:
    """Refresh stored rule stats and admit newly passing candidates.

    The admission threshold is the current rule pool's median score (the
    floor while the pool is empty), fixed before the pass so admission does
    not depend on candidate order.  Admitted rules are never evicted.
    """
    threshold = r_score_threshold(pool_r)
    if threshold is None:
        threshold = floor
    for rule_id in sorted(pool_r.rules):
        entry = pool_r.rules[rule_id]
        refreshed = _stats_for(candidates, entry.rule, pool_s)
        if refreshed is not None:
            entry.stats = refreshed
            entry.score = r_score(refreshed)
    admitted = []
    for rule_id in sorted(candidates.rules):
        scored = score_rule(candidates, candidates.rules[rule_id], pool_s)
        if scored is None:
            continue
        consequent, stats, score = scored
        bound = candidates.rules[rule_id].bind(consequent)
        if bound.rule_id in pool_r.rules:
            continue
        precision = stats.m_correct / stats.n_matched
        if score > threshold and precision >= min_precision:
            entry = RulePoolEntry(rule=bound, stats=stats, score=score)
            pool_r.rules[bound.rule_id] = entry
            admitted.append(entry)
    return admitted


def _stats_for(
    candidates: CandidateRuleSet, rule: LogicalRule, pool_s: InstancePool
) -> Optional[RuleStats]:
    matched = [
        pool_s.entries[key]
        for key in candidates.occurrences(rule)
        if key in pool_s.entries
    ]
    if not matched:
        return None
    m = sum(1 for inst in matched if inst.label == rule.consequent)
    return RuleStats(n_matched=len(matched), m_correct=m)


def recompute_stats(
    pool_r: RulePool, pool_s: InstancePool, candidates: CandidateRuleSet
) -> dict[str, RuleStats]:
    """Recompute every pool rule's stats against the instance pool."""
    out = {}
    for rule_id in sorted(pool_r.rules):
        stats = _stats_for(candidates, pool_r.rules[rule_id].rule, pool_s)
        out[rule_id] = stats if stats is not None else RuleStats(0, 0)
    return out


# ---------------------------------------------------------------------------
# Rule application


def apply_rules(
    pool: UnlabeledPool,
    chunks: Sequence[CandidateChunk],
    seeds: Sequence[SeedRule],
    pool_r: RulePool,
    candidates: Optional[CandidateRuleSet],
    pool_s: InstancePool,
) -> int:
    """Admit every chunk occurrence matched by a seed or distilled rule.

    Conflicting consequents are resolved by majority vote over matching
    rules, ties to the lexicographically smaller label.  Rule-admitted
    instances carry the seed's oracle confidence, or the distilled rule's
    match precision.  Returns the number of newly admitted instances.
    """
    votes: dict[OccKey, list[tuple[str, float, str]]] = {}
    by_text: dict[str, list[CandidateChunk]] = {}
    by_key = {c.key: c for c in chunks}
    for chunk in chunks:
        by_text.setdefault(chunk.text, []).append(chunk)

    for seed in seeds:
        if seed.rule.consequent is None:
            raise BootstrapError("seed rule %s has no consequent" % seed.rule.rule_id)
        ante = seed.rule.antecedent
        if isinstance(ante, AtomicPredicate) and ante.kind == TOKEN_STRING:
            hits = by_text.get(ante.payload[0], [])
        else:
            hits = [
                c
                for c in chunks
                if matches(seed.rule, c, pool.sentence(c.sentence_id))
            ]
        for chunk in hits:
            votes.setdefault(chunk.key, []).append(
                (seed.rule.consequent, seed.confidence, seed.provenance)
            )

    for entry in pool_r.sorted_entries():
        precision = entry.stats.m_correct / entry.stats.n_matched
        if candidates is not None:
            keys = [k for k in candidates.occurrences(entry.rule) if k in by_key]
        else:
            keys = [
                c.key
                for c in chunks
                if matches(entry.rule, c, pool.sentence(c.sentence_id))
            ]
        for key in keys:
            votes.setdefault(key, []).append(
                (entry.rule.consequent, precision, PROVENANCE_SEED)
            )

    added = 0
    for key in sorted(votes):
        if key in pool_s.entries:
            continue
        tally: dict[str, int] = {}
        for label, _, _ in votes[key]:
            tally[label] = tally.get(label, 0) + 1
        label = min(tally, key=lambda y: (-tally[y], y))
        winners = [(c, p) for (y, c, p) in votes[key] if y == label]
        confidence = max(c for c, _ in winners)
        provenance = (
            PROVENANCE_FINETUNED
            if any(p == PROVENANCE_FINETUNED for _, p in winners)
            else PROVENANCE_SEED
        )
        sid, start, end = key
        added += int(
            pool_s.add(
                PoolInstance(
                    sentence_id=sid,
                    span=(start, end),
                    label=label,
                    confidence=confidence,
                    provenance=provenance,
                )
            )
        )
    return added


# ---------------------------------------------------------------------------
# Tagger adapters


def training_items(
    pool: UnlabeledPool,
    chunks: Sequence[CandidateChunk],
    pool_s: InstancePool,
    unlabeled_supervision: str = "auto",
) -> list[TrainingItem]:
    """Project pool instances onto their sentences for tagger training.

    Under "auto" supervision, non-entity tokens count as O only in sentences
    whose instances all came from (fine-tuned) seed rules and align with
    complete candidate chunks; tokens in model-labeled sentences stay out of
    the loss, since pseudo-labels may have missed entities there.
    """
    chunk_keys_by_sentence: dict[str, set[OccKey]] = {}
    for chunk in chunks:
        chunk_keys_by_sentence.setdefault(chunk.sentence_id, set()).add(chunk.key)
    spans_by_sentence: dict[str, list[PoolInstance]] = {}
    for instance in pool_s.sorted_entries():
        spans_by_sentence.setdefault(instance.sentence_id, []).append(instance)
    items = []
    for sid in sorted(spans_by_sentence):
        instances = spans_by_sentence[sid]
        if unlabeled_supervision == "O":
            supervise = True
        elif unlabeled_supervision == "exclude":
            supervise = False
        else:
            from_rules = all(
                inst.provenance in (PROVENANCE_SEED, PROVENANCE_FINETUNED)
                for inst in instances
            )
            aligned = chunk_keys_by_sentence.get(sid, set())
            supervise = from_rules and all(
                inst.key in aligned for inst in instances
            )
        items.append(
            TrainingItem(
                sentence=pool.sentence(sid),
                spans=tuple(
                    (inst.span[0], inst.span[1], inst.label) for inst in instances
                ),
                supervise_outside=supervise,
            )
        )
    return items


def train_tagger(
    pool: UnlabeledPool,
    chunks: Sequence[CandidateChunk],
    pool_s: InstancePool,
    labels: Sequence[str],
    config: TaggerConfig,
) -> Tagger:
    """Train the downstream tagger on the current instance pool."""
    items = training_items(pool, chunks, pool_s, config.unlabeled_supervision)
    return train(items, labels, config)


# ---------------------------------------------------------------------------
# Snapshots


def snapshot_obj(
    iteration: int,
    pool_s: InstancePool,
    pool_r: RulePool,
    thresholds: Thresholds,
    dynamic: dict,
    dev_f1: Optional[float] = None,
) -> dict:
    return {
        "version": SNAPSHOT_VERSION,
        "iteration": iteration,
        "dev_f1": dev_f1,
        "pool_S": [
            {
                "sentence_id": inst.sentence_id,
                "span": list(inst.span),
                "label": inst.label,
                "confidence": inst.confidence,
                "provenance": inst.provenance,
            }
            for inst in pool_s.sorted_entries()
        ],
        "pool_R": [
            {
                "rule_id": entry.rule.rule_id,
                "rule": rule_to_obj(entry.rule),
                "stats": {"N": entry.stats.n_matched, "M": entry.stats.m_correct},
                "score": entry.score,
            }
            for entry in pool_r.sorted_entries()
        ],
        "thresholds": {**thresholds.to_obj(), **dynamic},
    }


def write_snapshot(path: Path, obj: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n",
        encoding="utf-8",
    )


def load_snapshot(path: Path) -> tuple[int, InstancePool, RulePool]:
    """Rebuild loop state from a snapshot file.

    Raises:
        BootstrapError: unreadable or structurally invalid snapshot.
    """
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise BootstrapError("cannot resume: unreadable snapshot %s (%s)" % (path, exc))
    if not isinstance(obj, dict) or obj.get("version") != SNAPSHOT_VERSION:
        raise BootstrapError(
            "cannot resume: snapshot %s has unsupported version %r"
            % (path, obj.get("version") if isinstance(obj, dict) else None)
        )
    try:
        pool_s = InstancePool(generation=obj["iteration"])
        for row in obj["pool_S"]:
            pool_s.add(
                PoolInstance(
                    sentence_id=row["sentence_id"],
                    span=(row["span"][0], row["span"][1]),
                    label=row["label"],
                    confidence=row["confidence"],
                    provenance=row["provenance"],
                )
            )
        pool_r = RulePool()
        for row in obj["pool_R"]:
            rule = rule_from_obj(row["rule"])
            pool_r.rules[row["rule_id"]] = RulePoolEntry(
                rule=rule,
                stats=RuleStats(
                    n_matched=row["stats"]["N"], m_correct=row["stats"]["M"]
                ),
                score=row["score"],
            )
        return obj["iteration"], pool_s, pool_r
    except (KeyError, TypeError, IndexError) as exc:
        raise BootstrapError(
            "cannot resume: snapshot %s is corrupted (%s)" % (path, exc)
        ) from None


# ---------------------------------------------------------------------------
# The loop


@dataclass
class IterationTrace:
    iteration: int
    pool_s_size: int
    pool_r_size: int
    dev_f1: Optional[float]


@dataclass
class LoopResult:
    pool_s: InstancePool
    pool_r: RulePool
    tagger: Tagger
    history: list[IterationTrace]
    iterations_run: int
    converged: bool


def run_loop(
    pool: UnlabeledPool,
    seeds: Sequence[SeedRule],
    candidates: CandidateRuleSet,
    thresholds: Thresholds,
    tagger_config: TaggerConfig,
    labels: Sequence[str],
    rng_seed: int = 0,
    snapshot_dir: Optional[Path] = None,
    dev_pool: Optional[UnlabeledPool] = None,
    resume_from: Optional[Path] = None,
    workers: int = 1,
) -> LoopResult:
    """Iterate rule application, tagging, admission, and distillation.

    Stops when an iteration grows neither pool, or after max_iterations.
    Snapshots land in snapshot_dir per iteration; resume_from restores the
    pools and continues with the next iteration.
    """
    if not seeds:
        raise BootstrapError("run_loop needs at least one seed rule")
    chunks = pool.chunks()
    sim = SimilarityModel(pool)
    pool_s = InstancePool()
    pool_r = RulePool()
    start_iteration = 1
    history: list[IterationTrace] = []
    if resume_from is not None:
        done_iteration, pool_s, pool_r = load_snapshot(resume_from)
        start_iteration = done_iteration + 1
        if start_iteration > thresholds.max_iterations:
            raise BootstrapError(
                "nothing to resume: snapshot %s already covers iteration %d "
                "of %d" % (resume_from, done_iteration, thresholds.max_iterations)
            )
    tagger: Optional[Tagger] = None
    converged = False
    iterations_run = 0
    for iteration in range(start_iteration, thresholds.max_iterations + 1):
        iterations_run = iteration
        pool_s.generation = iteration
        size_s_before = len(pool_s)
        size_r_before = len(pool_r)

        # Only seed rules feed the pool directly.  Distilled rules are
        # outputs: a rule can look perfect against the pool yet still cover
        # non-entity chunks the pool cannot witness, so applying it back
        # would poison the pool unchecked.  Model proposals below go through
        # the similarity gate instead.
        added_rules = apply_rules(pool, chunks, seeds, RulePool(), None, pool_s)

        config = TaggerConfig(
            epochs=tagger_config.epochs,
            seed=derive_seed(rng_seed, "tagger", iteration),
            unlabeled_supervision=tagger_config.unlabeled_supervision,
        )
        tagger = train_tagger(pool, chunks, pool_s, labels, config)

        threshold_s = s_score_threshold(
            pool_s,
            sim,
            pool,
            thresholds.probes,
            thresholds.sample_size,
            derive_seed(rng_seed, "threshold", iteration),
        )
        if threshold_s is None:
            threshold_s = thresholds.s_score_t
        proposals = [
            (chunk, label, margin)
            for chunk, label, margin in pseudo_label(tagger, pool)
            if chunk.key not in pool_s.entries
        ]
        proposals.sort(key=lambda p: p[0].key)

        def admission_score(proposal) -> Optional[float]:
            chunk, label, _ = proposal
            return s_score(
                PoolInstance(
                    sentence_id=chunk.sentence_id,
                    span=chunk.span,
                    label=label,
                    confidence=0.0,
                    provenance=PROVENANCE_MODEL,
                ),
                pool_s,
                sim,
                pool,
                thresholds.sample_size,
                derive_seed(rng_seed, "admit", *chunk.key),
            )

        if workers > 1 and proposals:
            with ThreadPoolExecutor(max_workers=workers) as pool_exec:
                scores = list(pool_exec.map(admission_score, proposals))
        else:
            scores = [admission_score(p) for p in proposals]
        added_model = 0
        for (chunk, label, _), score in zip(proposals, scores):
            if score is None or score <= threshold_s:
                continue
            added_model += int(
                pool_s.add(
                    PoolInstance(
                        sentence_id=chunk.sentence_id,
                        span=chunk.span,
                        label=label,
                        confidence=score,
                        provenance=PROVENANCE_MODEL,
                    )
                )
            )

        admitted = distill_rules(
            candidates,
            pool_s,
            pool_r,
            thresholds.r_score_t,
            thresholds.min_rule_precision,
        )

        dev_f1 = None
        if dev_pool is not None:
            predictions = [
                tagger.tag(dev_pool.sentences[sid]) for sid in sorted(dev_pool.sentences)
            ]
            dev_f1 = evaluate(predictions, list(dev_pool.sentences.values())).micro.f1
        history.append(
            IterationTrace(
                iteration=iteration,
                pool_s_size=len(pool_s),
                pool_r_size=len(pool_r),
                dev_f1=dev_f1,
            )
        )
        log.info(
            "iteration %d: +%d rule instances, +%d model instances, "
            "+%d rules (pool_S=%d, pool_R=%d)",
            iteration,
            added_rules,
            added_model,
            len(admitted),
            len(pool_s),
            len(pool_r),
        )
        if snapshot_dir is not None:
            dynamic = {"s_score_threshold": threshold_s}
            write_snapshot(
                Path(snapshot_dir) / ("iter_%04d.json" % iteration),
                snapshot_obj(iteration, pool_s, pool_r, thresholds, dynamic, dev_f1),
            )
        if len(pool_s) == size_s_before and len(pool_r) == size_r_before:
            converged = True
            break
    assert tagger is not None
    return LoopResult(
        pool_s=pool_s,
        pool_r=pool_r,
        tagger=tagger,
        history=history,
        iterations_run=iterations_run,
        converged=converged,
    )
