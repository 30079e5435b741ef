import json
import random

import pytest

from ruledistill.bootstrap import (
    BootstrapError,
    InstancePool,
    PoolInstance,
    RulePool,
    RulePoolEntry,
    SeedRule,
    Thresholds,
    apply_rules,
    derive_seed,
    distill_rules,
    load_snapshot,
    r_score,
    r_score_threshold,
    recompute_stats,
    run_loop,
    s_score,
    s_score_threshold,
    score_rule,
)
from ruledistill.corpus import extract_chunks
from ruledistill.datagen import make_corpus, planted_rules
from ruledistill.mining import mine
from ruledistill.mock_oracle import MockOracle
from ruledistill.oracle import build_verdicts, seed_confidences, zero_shot_seeds
from ruledistill.rules import (
    POS_TAG,
    PRE_NGRAM,
    TOKEN_STRING,
    AtomicPredicate,
    LogicalRule,
    RuleStats,
)
from ruledistill.similarity import SimilarityModel, lower_median
from ruledistill.tagger import TaggerConfig

from util import TableSim, brute_tfidf_cosine, build_sentence, pool_of
from util import toy_instance_pool as toy_pool


def instance(sid, span, label, confidence=1.0, provenance="seed"):
    return PoolInstance(
        sentence_id=sid,
        span=span,
        label=label,
        confidence=confidence,
        provenance=provenance,
    )


# ---------------------------------------------------------------------------
# Scores


def test_r_score_values():
    assert r_score(RuleStats(n_matched=8, m_correct=6)) == 2.25
    assert r_score(RuleStats(n_matched=1, m_correct=0)) == 0.0
    assert r_score(RuleStats(n_matched=1, m_correct=1)) == 0.0
    assert r_score(RuleStats(n_matched=4, m_correct=4)) == 2.0


def test_r_score_zero_matches_rejected():
    with pytest.raises(BootstrapError):
        r_score(RuleStats(n_matched=0, m_correct=0))


def test_r_score_monotone_in_m():
    for n in range(2, 30):
        scores = [r_score(RuleStats(n, m)) for m in range(n + 1)]
        assert all(a < b for a, b in zip(scores, scores[1:]))


def test_r_score_threshold_median():
    pool = RulePool()
    rule = LogicalRule(AtomicPredicate(TOKEN_STRING, ("x",)), "disease")
    for i, score in enumerate([1.0, 2.0, 3.0]):
        pool.rules["r%d" % i] = RulePoolEntry(rule, RuleStats(4, 4), score)
    assert r_score_threshold(pool) == 2.0
    single = RulePool()
    single.rules["only"] = RulePoolEntry(rule, RuleStats(4, 4), 1.7)
    assert r_score_threshold(single) == 1.7
    assert r_score_threshold(RulePool()) is None


def test_lower_median():
    assert lower_median([0.2, 0.5, 0.9]) == 0.5
    assert lower_median([0.8, 0.2]) == 0.2
    assert lower_median([0.7]) == 0.7
    with pytest.raises(ValueError):
        lower_median([])


def test_s_score_exact_medians():
    corpus, pool, candidate = toy_pool(4)
    table = {
        frozenset(("t0", "t1")): 0.2,
        frozenset(("t0", "t2")): 0.5,
        frozenset(("t0", "t3")): 0.9,
    }
    sim = TableSim(table)
    assert s_score(candidate, pool, sim, corpus, 20, rng_seed=1) == 0.5
    # Even-length list takes the lower middle value.
    corpus, pool, candidate = toy_pool(3)
    sim = TableSim({frozenset(("t0", "t1")): 0.2, frozenset(("t0", "t2")): 0.8})
    assert s_score(candidate, pool, sim, corpus, 20, rng_seed=1) == 0.2


def test_s_score_median_robustness():
    # Replacing any pair score that ranks above the median with any value
    # still at or above the median leaves the s_score unchanged: outliers
    # cannot drag the admission score.
    rng = random.Random(12)
    for _ in range(100):
        n = rng.randint(3, 9)
        scores = [round(rng.random(), 3) for _ in range(n)]
        corpus, pool, candidate = toy_pool(n + 1)
        table = {
            frozenset(("t0", "t%d" % (i + 1))): scores[i] for i in range(n)
        }
        base = s_score(candidate, pool, TableSim(table), corpus, 50, rng_seed=1)
        ordered = sorted(scores)
        median = ordered[(n - 1) // 2]
        above = [i for i, v in enumerate(scores) if v > median]
        if not above:
            continue
        index = rng.choice(above)
        replacement = round(median + rng.random(), 3)
        table[frozenset(("t0", "t%d" % (index + 1)))] = replacement
        perturbed = s_score(candidate, pool, TableSim(table), corpus, 50, rng_seed=1)
        assert perturbed == base


def test_s_score_deferred_without_peers():
    corpus, pool, candidate = toy_pool(4)
    other = instance("t0", (0, 1), "chemical")
    assert s_score(other, pool, TableSim({}), corpus, 20, rng_seed=1) is None


def test_s_score_identity_and_disjoint():
    a = build_sentence(
        "a",
        [("fever", "fever", "NOUN", 1, "nsubj"), ("rose", "rise", "VERB", None, "root")],
    )
    b = build_sentence(
        "b",
        [("fever", "fever", "NOUN", 1, "nsubj"), ("rose", "rise", "VERB", None, "root")],
    )
    c = build_sentence(
        "c",
        [("aspirin", "aspirin", "PROPN", 1, "nsubj"), ("helped", "help", "VERB", None, "root")],
    )
    corpus = pool_of(a, b, c)
    sim = SimilarityModel(corpus)
    pool = InstancePool()
    pool.add(instance("b", (0, 1), "disease"))
    assert s_score(instance("a", (0, 1), "disease"), pool, sim, corpus, 10, 1) == 1.0
    pool_c = InstancePool()
    pool_c.add(instance("c", (0, 1), "disease"))
    assert s_score(instance("a", (0, 1), "disease"), pool_c, sim, corpus, 10, 1) == 0.0


def test_s_score_matches_bruteforce_sampling():
    data = make_corpus(n_sentences=60, seed=3)
    corpus = data.train
    chunks = extract_chunks(corpus)
    sim = SimilarityModel(corpus)
    entity = [c for c in chunks if c.text in data.name_pos]
    pool = InstancePool()
    for chunk in entity[1:40]:
        pool.add(instance(chunk.sentence_id, chunk.span, "disease"))
    candidate = instance(entity[0].sentence_id, entity[0].span, "disease")
    got = s_score(candidate, pool, sim, corpus, sample_size=7, rng_seed=99)
    # Replicate: same sorted peer list, same seeded sample, separate median.
    peers = [e for e in pool.with_label("disease") if e.key != candidate.key]
    sample = random.Random(99).sample(peers, 7)
    scores = sorted(
        brute_tfidf_cosine(
            corpus,
            corpus.sentence(candidate.sentence_id),
            candidate.span,
            corpus.sentence(p.sentence_id),
            p.span,
        )
        for p in sample
    )
    assert got == pytest.approx(scores[(len(scores) - 1) // 2])


def test_sim_matches_bruteforce(synth):
    corpus = synth.train
    chunks = extract_chunks(corpus)
    sim = SimilarityModel(corpus)
    rng = random.Random(11)
    for _ in range(40):
        a, b = rng.sample(chunks, 2)
        got = sim.sim(
            corpus.sentence(a.sentence_id), a.span, corpus.sentence(b.sentence_id), b.span
        )
        want = brute_tfidf_cosine(
            corpus, corpus.sentence(a.sentence_id), a.span,
            corpus.sentence(b.sentence_id), b.span,
        )
        assert got == pytest.approx(min(1.0, want), abs=1e-12)


def test_s_score_threshold_identical_pool():
    sentences = [
        build_sentence(
            "i%d" % i,
            [("fever", "fever", "NOUN", 1, "nsubj"), ("rose", "rise", "VERB", None, "root")],
        )
        for i in range(4)
    ]
    corpus = pool_of(*sentences)
    pool = InstancePool()
    for s in sentences:
        pool.add(instance(s.id, (0, 1), "disease"))
    sim = SimilarityModel(corpus)
    assert s_score_threshold(pool, sim, corpus, probes=10, sample_size=5, rng_seed=3) == 1.0


def test_s_score_threshold_two_instances():
    corpus, pool, candidate = toy_pool(3)
    pool = InstancePool()
    pool.add(instance("t1", (0, 1), "disease"))
    pool.add(instance("t2", (0, 1), "disease"))
    sim = TableSim({frozenset(("t1", "t2")): 0.42})
    got = s_score_threshold(pool, sim, corpus, probes=10, sample_size=5, rng_seed=3)
    assert got == 0.42


def test_s_score_threshold_small_pool_is_none():
    corpus, _, _ = toy_pool(2)
    pool = InstancePool()
    pool.add(instance("t1", (0, 1), "disease"))
    sim = TableSim({})
    assert s_score_threshold(pool, sim, corpus, 10, 5, 3) is None


def test_s_score_threshold_matches_bruteforce():
    data = make_corpus(n_sentences=50, seed=5)
    corpus = data.train
    chunks = extract_chunks(corpus)
    sim = SimilarityModel(corpus)
    pool = InstancePool()
    for chunk in chunks[:20]:
        pool.add(instance(chunk.sentence_id, chunk.span, "disease"))
    got = s_score_threshold(pool, sim, corpus, probes=8, sample_size=6, rng_seed=77)
    entries = pool.sorted_entries()
    rng = random.Random(derive_seed(77, "probe-pick"))
    probed = entries if len(entries) <= 8 else rng.sample(entries, 8)
    scores = []
    for entry in sorted(probed, key=lambda e: e.key):
        score = s_score(
            entry, pool, sim, corpus, 6,
            derive_seed(77, "probe", *entry.key), exclude=entry.key,
        )
        if score is not None:
            scores.append(score)
    scores.sort()
    assert got == scores[(len(scores) - 1) // 2]


# ---------------------------------------------------------------------------
# Distillation


def planted_pool_setup():
    data = make_corpus(n_sentences=120, seed=19)
    corpus = data.train
    chunks = extract_chunks(corpus)
    candidates = mine(corpus, chunks, 2)
    pool = InstancePool()
    gold = {}
    for sid in sorted(corpus.sentences):
        for start, end, label in corpus.sentences[sid].gold_spans:
            gold[(sid, start, end)] = label
    for chunk in chunks:
        label = gold.get(chunk.key)
        if label:
            pool.add(instance(chunk.sentence_id, chunk.span, label))
    return data, corpus, chunks, candidates, pool


def test_score_rule_hand_case():
    sentences = []
    for i in range(4):
        sentences.append(
            build_sentence(
                "h%d" % i,
                [
                    ("with", "with", "ADP", 1, "case"),
                    ("malaria%d" % i, "malaria%d" % i, "NOUN", None, "root"),
                ],
            )
        )
    corpus = pool_of(*sentences)
    chunks = extract_chunks(corpus)
    candidates = mine(corpus, chunks, 2)
    pool = InstancePool()
    for chunk in chunks:
        pool.add(instance(chunk.sentence_id, chunk.span, "disease"))
    rule = LogicalRule(AtomicPredicate(PRE_NGRAM, ("with",)))
    consequent, stats, score = score_rule(candidates, rule, pool)
    assert consequent == "disease"
    assert (stats.n_matched, stats.m_correct) == (4, 4)
    assert score == 2.0


def test_score_rule_unlabeled_matches_skipped():
    _, corpus, chunks, candidates, pool = planted_pool_setup()
    empty = InstancePool()
    any_rule = next(iter(candidates.rules.values()))
    assert score_rule(candidates, any_rule, empty) is None


def test_distill_binds_majority_and_respects_threshold():
    data, corpus, chunks, candidates, pool = planted_pool_setup()
    pool_r = RulePool()
    admitted = distill_rules(candidates, pool, pool_r, floor=0.5, min_precision=0.8)
    assert admitted
    ids = set(pool_r.rules)
    for planted in planted_rules():
        assert planted.rule_id in ids
        entry = pool_r.rules[planted.rule_id]
        assert entry.rule.consequent == planted.consequent
        assert entry.score > 0.5
        assert entry.stats.m_correct / entry.stats.n_matched >= 0.8
    # The threshold was fixed before the pass: nothing below it admitted.
    assert all(entry.score > 0.5 for entry in pool_r.sorted_entries())


def test_distill_precision_floor_blocks_impure_rules():
    data, corpus, chunks, candidates, pool = planted_pool_setup()
    pool_r = RulePool()
    distill_rules(candidates, pool, pool_r, floor=0.5, min_precision=0.8)
    noun_only = LogicalRule(AtomicPredicate(POS_TAG, ("NOUN",)))
    scored = score_rule(candidates, noun_only, pool)
    assert scored is not None
    _, stats, _ = scored
    assert stats.m_correct / stats.n_matched < 0.8  # impure by construction
    assert all(
        entry.rule.antecedent != noun_only.antecedent
        for entry in pool_r.sorted_entries()
    )


def test_recompute_stats_reproduces_stored():
    _, corpus, chunks, candidates, pool = planted_pool_setup()
    pool_r = RulePool()
    distill_rules(candidates, pool, pool_r, floor=0.5, min_precision=0.8)
    recomputed = recompute_stats(pool_r, pool, candidates)
    for rule_id, stats in recomputed.items():
        assert pool_r.rules[rule_id].stats == stats


# ---------------------------------------------------------------------------
# Rule application


def test_apply_rules_admits_and_votes():
    a = build_sentence(
        "a",
        [("pd", "pd", "PROPN", 1, "nsubj"), ("worsened", "worsen", "VERB", None, "root")],
    )
    b = build_sentence(
        "b",
        [("pd", "pd", "PROPN", 1, "nsubj"), ("helped", "help", "VERB", None, "root")],
    )
    corpus = pool_of(a, b)
    chunks = extract_chunks(corpus)
    pool = InstancePool()
    seeds = [
        SeedRule(LogicalRule(AtomicPredicate(TOKEN_STRING, ("pd",)), "disease"), 0.9),
        SeedRule(LogicalRule(AtomicPredicate(TOKEN_STRING, ("pd",)), "chemical"), 0.8),
        SeedRule(LogicalRule(AtomicPredicate(TOKEN_STRING, ("pd",)), "disease"), 0.7),
    ]
    added = apply_rules(corpus, chunks, seeds, RulePool(), None, pool)
    assert added == 2
    for entry in pool.sorted_entries():
        assert entry.label == "disease"  # 2-1 majority
        assert entry.confidence == 0.9
        assert entry.provenance == "seed"
    # Existing entries are never overwritten.
    again = apply_rules(corpus, chunks, seeds, RulePool(), None, pool)
    assert again == 0


def test_apply_rules_generic_antecedent_seed():
    # Non-TokenString seeds go through full matching rather than the
    # text lookup.
    sentences = [
        build_sentence(
            "g%d" % i,
            [
                ("with", "with", "ADP", 1, "case"),
                ("malaria", "malaria", "NOUN", None, "root"),
            ],
        )
        for i in range(3)
    ]
    corpus = pool_of(*sentences)
    chunks = extract_chunks(corpus)
    seed = SeedRule(
        LogicalRule(AtomicPredicate(PRE_NGRAM, ("with",)), "disease"), 0.8
    )
    pool = InstancePool()
    added = apply_rules(corpus, chunks, [seed], RulePool(), None, pool)
    assert added == 3
    assert all(e.label == "disease" for e in pool.sorted_entries())


def test_training_items_supervision_modes():
    from ruledistill.bootstrap import training_items

    data = make_corpus(n_sentences=30, seed=8)
    chunks = extract_chunks(data.train)
    pool_s = InstancePool()
    with_chunk = next(c for c in chunks if c.text in data.name_pos)
    pool_s.add(
        instance(with_chunk.sentence_id, with_chunk.span, "disease", provenance="seed")
    )
    other = next(
        c
        for c in chunks
        if c.text in data.name_pos and c.sentence_id != with_chunk.sentence_id
    )
    pool_s.add(instance(other.sentence_id, other.span, "disease", provenance="model"))
    # A seed-provenance span that does not line up with any candidate chunk.
    chunk_keys = {c.key for c in chunks}
    misaligned_sid = next(
        sid
        for sid in sorted(data.train.sentences)
        if sid not in (with_chunk.sentence_id, other.sentence_id)
        and len(data.train.sentences[sid].tokens) >= 3
        and (sid, 0, 2) not in chunk_keys
    )
    pool_s.add(instance(misaligned_sid, (0, 2), "disease", provenance="seed"))
    for mode, expected in (("O", {True}), ("exclude", {False})):
        items = training_items(data.train, chunks, pool_s, mode)
        assert {item.supervise_outside for item in items} == expected
    auto = {
        item.sentence.id: item.supervise_outside
        for item in training_items(data.train, chunks, pool_s, "auto")
    }
    assert auto[with_chunk.sentence_id] is True  # seed-derived, chunk-aligned
    assert auto[other.sentence_id] is False  # model-provenance
    assert auto[misaligned_sid] is False  # seed-derived but not chunk-aligned


def test_apply_rules_seed_without_consequent_rejected():
    a = build_sentence(
        "a", [("pd", "pd", "PROPN", 1, "nsubj"), ("ran", "run", "VERB", None, "root")]
    )
    corpus = pool_of(a)
    seeds = [SeedRule(LogicalRule(AtomicPredicate(TOKEN_STRING, ("pd",))))]
    with pytest.raises(BootstrapError):
        apply_rules(corpus, extract_chunks(corpus), seeds, RulePool(), None, InstancePool())


def test_thresholds_validation():
    with pytest.raises(BootstrapError):
        Thresholds(p_t=1.5)
    with pytest.raises(BootstrapError):
        Thresholds(r_t=-1)
    with pytest.raises(BootstrapError):
        Thresholds(max_iterations=0)
    with pytest.raises(BootstrapError):
        Thresholds(min_rule_precision=2.0)


# ---------------------------------------------------------------------------
# The loop


def loop_inputs(n_sentences=120, seed=19, r_t=2):
    data = make_corpus(n_sentences=n_sentences, seed=seed)
    corpus = data.train
    chunks = extract_chunks(corpus)
    backend = MockOracle(data.lexicon)
    verdicts, _ = build_verdicts(corpus, chunks, backend, data.targets, k=5)
    rules = zero_shot_seeds(verdicts, p_t=0.3, r_t=r_t)
    confidences = seed_confidences(verdicts)
    seeds = [
        SeedRule(rule=r, confidence=confidences.get(r.antecedent.payload[0], 1.0))
        for r in rules
    ]
    candidates = mine(corpus, chunks, 2)
    return data, corpus, seeds, candidates


def test_run_loop_requires_seeds():
    data, corpus, seeds, candidates = loop_inputs()
    with pytest.raises(BootstrapError):
        run_loop(
            corpus, [], candidates, Thresholds(), TaggerConfig(), labels=data.targets.types
        )


def test_run_loop_fixpoint_with_full_coverage():
    # Seeds that label every chunk occurrence: iteration 1 reaches the
    # fixpoint, iteration 2 just verifies it.
    data, corpus, _, candidates = loop_inputs(n_sentences=40, seed=23)
    chunks = extract_chunks(corpus)
    texts = sorted({c.text for c in chunks})
    seeds = [
        SeedRule(LogicalRule(AtomicPredicate(TOKEN_STRING, (t,)), "disease"), 1.0)
        for t in texts
    ]
    thresholds = Thresholds(p_t=0.3, r_t=1, max_iterations=10, probes=10, sample_size=5)
    result = run_loop(
        corpus, seeds, candidates, thresholds, TaggerConfig(epochs=2),
        labels=data.targets.types, rng_seed=1,
    )
    assert len(result.pool_s) == len(chunks)
    assert result.history[0].pool_s_size == len(chunks)
    assert result.converged
    assert result.iterations_run <= 2


def test_run_loop_monotone_and_resume_equivalence(tmp_path):
    data, corpus, seeds, candidates = loop_inputs()
    thresholds = Thresholds(
        p_t=0.3, r_t=2, max_iterations=6, probes=20, sample_size=8
    )
    config = TaggerConfig(epochs=3)
    full_dir = tmp_path / "full"
    result = run_loop(
        corpus, seeds, candidates, thresholds, config,
        labels=data.targets.types, rng_seed=7, snapshot_dir=full_dir,
    )
    sizes = [t.pool_s_size for t in result.history]
    assert sizes == sorted(sizes)
    assert result.iterations_run <= 6

    # Interrupt after iteration 2 (disk state: the first two snapshots),
    # then resume: the remaining snapshots must come out identical.
    part_dir = tmp_path / "part"
    part_dir.mkdir()
    for name in ("iter_0001.json", "iter_0002.json"):
        (part_dir / name).write_bytes((full_dir / name).read_bytes())
    resumed = run_loop(
        corpus, seeds, candidates, thresholds, config,
        labels=data.targets.types, rng_seed=7, snapshot_dir=part_dir,
        resume_from=part_dir / "iter_0002.json",
    )
    full_files = sorted(p.name for p in full_dir.glob("iter_*.json"))
    part_files = sorted(p.name for p in part_dir.glob("iter_*.json"))
    assert full_files == part_files
    for name in full_files:
        assert (full_dir / name).read_bytes() == (part_dir / name).read_bytes()
    assert len(resumed.pool_s) == len(result.pool_s)
    assert set(resumed.pool_r.rules) == set(result.pool_r.rules)


def test_run_loop_final_stats_consistent():
    data, corpus, seeds, candidates = loop_inputs(n_sentences=80, seed=31)
    thresholds = Thresholds(p_t=0.3, r_t=1, max_iterations=8, probes=15, sample_size=6)
    result = run_loop(
        corpus, seeds, candidates, thresholds, TaggerConfig(epochs=3),
        labels=data.targets.types, rng_seed=3,
    )
    recomputed = recompute_stats(result.pool_r, result.pool_s, candidates)
    for rule_id, stats in recomputed.items():
        assert result.pool_r.rules[rule_id].stats == stats


def test_snapshot_corrupted_rejected(tmp_path):
    path = tmp_path / "iter_0001.json"
    path.write_text("{ not json", encoding="utf-8")
    with pytest.raises(BootstrapError, match="unreadable"):
        load_snapshot(path)
    path.write_text(json.dumps({"version": 99}), encoding="utf-8")
    with pytest.raises(BootstrapError, match="version"):
        load_snapshot(path)
    path.write_text(json.dumps({"version": 1, "iteration": 1, "pool_S": [{}], "pool_R": []}), encoding="utf-8")
    with pytest.raises(BootstrapError, match="corrupted"):
        load_snapshot(path)


def test_resume_beyond_max_iterations_rejected(tmp_path):
    data, corpus, seeds, candidates = loop_inputs(n_sentences=40, seed=2)
    thresholds = Thresholds(p_t=0.3, r_t=1, max_iterations=1, probes=10, sample_size=5)
    run_loop(
        corpus, seeds, candidates, thresholds, TaggerConfig(epochs=2),
        labels=data.targets.types, rng_seed=1, snapshot_dir=tmp_path,
    )
    with pytest.raises(BootstrapError, match="resume"):
        run_loop(
            corpus, seeds, candidates, thresholds, TaggerConfig(epochs=2),
            labels=data.targets.types, rng_seed=1, snapshot_dir=tmp_path,
            resume_from=tmp_path / "iter_0001.json",
        )


def test_workers_do_not_change_results():
    data, corpus, seeds, candidates = loop_inputs(n_sentences=60, seed=4, r_t=1)
    thresholds = Thresholds(p_t=0.3, r_t=1, max_iterations=3, probes=10, sample_size=5)
    one = run_loop(
        corpus, seeds, candidates, thresholds, TaggerConfig(epochs=2),
        labels=data.targets.types, rng_seed=5, workers=1,
    )
    four = run_loop(
        corpus, seeds, candidates, thresholds, TaggerConfig(epochs=2),
        labels=data.targets.types, rng_seed=5, workers=4,
    )
    assert one.pool_s.entries == four.pool_s.entries
    assert set(one.pool_r.rules) == set(four.pool_r.rules)
