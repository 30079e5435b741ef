"""End-to-end pipeline orchestration.

Subcommands: mine, seed, bootstrap, eval, export-rules.  One config file
(JSON or TOML) drives everything; all randomness flows from one rng_seed,
so re-running a subcommand with the same config overwrites its outputs
byte-identically.  Exit codes: 0 ok, 1 config validation, 2 runtime.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .bootstrap import (
    PROVENANCE_FINETUNED,
    PROVENANCE_SEED,
    BootstrapError,
    SeedRule,
    Thresholds,
    run_loop,
)
from .corpus import CorpusError, UnlabeledPool, extract_chunks, load_corpus, normalize_text
from .mining import mine
from .mock_oracle import MockLexicon, MockOracle
from .oracle import (
    NA_LABEL,
    OracleError,
    RemoteOracle,
    TargetTypeSet,
    UNKNOWN_LABEL,
    build_verdicts,
    finetune_dataset,
    finetuned_seeds,
    sample_negatives,
    seed_confidences,
    zero_shot_seeds,
)
from .rules import LogicalRule, export_record, rule_from_obj, rule_to_obj
from .tagger import Tagger, TaggerConfig, TaggerError, evaluate

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    corpus_train: Path
    output_dir: Path
    targets: tuple[str, ...]
    corpus_format: str = "conllu"
    corpus_dev: Optional[Path] = None
    corpus_eval: Optional[Path] = None
    oracle_backend: str = "mock"
    lexicon_path: Optional[Path] = None
    remote_url: Optional[str] = None
    top_k: int = 5
    min_cooccur: int = 2
    min_atom_support: int = 2
    aggregate: str = "max"
    finetuned_p_t: float = 0.99
    finetune_epochs: int = 1
    tagger_epochs: int = 5
    unlabeled_supervision: str = "auto"
    rng_seed: int = 0
    workers: int = 1
    thresholds: Thresholds = field(default_factory=Thresholds)

    def validate(self) -> None:
        if not self.corpus_train.exists():
            raise ConfigError("train corpus %s does not exist" % self.corpus_train)
        for path in (self.corpus_dev, self.corpus_eval):
            if path is not None and not path.exists():
                raise ConfigError("corpus path %s does not exist" % path)
        if self.corpus_format not in ("conllu", "jsonl"):
            raise ConfigError("corpus format must be conllu or jsonl")
        if not self.targets:
            raise ConfigError("targets must list at least one entity type")
        if len(set(self.targets)) != len(self.targets):
            raise ConfigError("targets must be unique")
        if self.oracle_backend == "mock":
            if self.lexicon_path is None or not self.lexicon_path.exists():
                raise ConfigError("mock backend needs an existing lexicon_path")
        elif self.oracle_backend == "remote":
            if not self.remote_url:
                raise ConfigError("remote backend needs remote_url")
        else:
            raise ConfigError("oracle backend must be mock or remote")
        if self.aggregate not in ("max", "mean"):
            raise ConfigError("aggregate must be max or mean")
        if self.unlabeled_supervision not in ("auto", "O", "exclude"):
            raise ConfigError("unlabeled_supervision must be auto, O, or exclude")
        if not 0.0 <= self.finetuned_p_t <= 1.0:
            raise ConfigError("finetuned_p_t must lie in [0, 1]")
        if self.top_k < 1 or self.min_cooccur < 1 or self.min_atom_support < 1:
            raise ConfigError("top_k, min_cooccur, min_atom_support must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


def _read_config_file(path: Path) -> dict:
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        return json.loads(text)
    if path.suffix == ".toml":
        try:
            import tomllib  # Python >= 3.11
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text)
    raise ConfigError("config must be a .json or .toml file, got %s" % path.name)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError("config file %s does not exist" % path)
    try:
        raw = _read_config_file(path)
    except (ValueError, OSError) as exc:
        raise ConfigError("cannot parse config %s: %s" % (path, exc)) from None
    base = path.parent

    def to_path(value) -> Optional[Path]:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else base / p

    corpus = raw.get("corpus", {})
    oracle = raw.get("oracle", {})
    thresholds_raw = raw.get("thresholds", {})
    try:
        thresholds = Thresholds(
            p_t=thresholds_raw.get("p_t", 0.3),
            r_t=thresholds_raw.get("r_t", 4),
            s_score_t=thresholds_raw.get("s_score_t", 0.1),
            r_score_t=thresholds_raw.get("r_score_t", 0.5),
            max_iterations=thresholds_raw.get("max_iterations", 10),
            sample_size=thresholds_raw.get("sample_size", 20),
            probes=thresholds_raw.get("probes", 50),
            min_rule_precision=thresholds_raw.get("min_rule_precision", 0.8),
        )
    except BootstrapError as exc:
        raise ConfigError(str(exc)) from None
    try:
        config = RunConfig(
            corpus_train=to_path(corpus["train"]),
            corpus_format=corpus.get("format", "conllu"),
            corpus_dev=to_path(corpus.get("dev")),
            corpus_eval=to_path(corpus.get("eval")),
            targets=tuple(raw["targets"]),
            oracle_backend=oracle.get("backend", "mock"),
            lexicon_path=to_path(oracle.get("lexicon")),
            remote_url=oracle.get("url"),
            top_k=oracle.get("top_k", 5),
            min_cooccur=raw.get("mapping", {}).get("min_cooccur", 2),
            min_atom_support=raw.get("mining", {}).get("min_atom_support", 2),
            aggregate=raw.get("seeding", {}).get("aggregate", "max"),
            finetuned_p_t=raw.get("seeding", {}).get("finetuned_p_t", 0.99),
            finetune_epochs=raw.get("seeding", {}).get("finetune_epochs", 1),
            tagger_epochs=raw.get("tagger", {}).get("epochs", 5),
            unlabeled_supervision=raw.get("tagger", {}).get(
                "unlabeled_supervision", "auto"
            ),
            rng_seed=raw.get("rng_seed", 0),
            workers=raw.get("workers", 1),
            output_dir=to_path(raw["output_dir"]),
            thresholds=thresholds,
        )
    except KeyError as exc:
        raise ConfigError("config misses required key %s" % exc) from None
    config.validate()
    return config


def _dump_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n",
        encoding="utf-8",
    )


def _dump_jsonl(path: Path, rows: Sequence[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, sort_keys=True, separators=(",", ":")) + "\n")


def _make_backend(config: RunConfig):
    if config.oracle_backend == "mock":
        return MockOracle(MockLexicon.load(config.lexicon_path))
    return RemoteOracle(config.remote_url)


def _load_pool(config: RunConfig, which: str) -> UnlabeledPool:
    path = {
        "train": config.corpus_train,
        "dev": config.corpus_dev,
        "eval": config.corpus_eval,
    }[which]
    if path is None:
        raise ConfigError("config defines no %s corpus" % which)
    return load_corpus(path, config.corpus_format)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_mine(config: RunConfig) -> int:
    from .rules import atoms_of

    pool = _load_pool(config, "train")
    chunks = extract_chunks(pool)
    candidates = mine(pool, chunks, config.min_atom_support)
    rows = [
        export_record(candidates.rules[rid]) for rid in sorted(candidates.rules)
    ]
    out = config.output_dir
    _dump_jsonl(out / "rules_mined.jsonl", rows)
    atoms = sum(
        1
        for rid in candidates.rules
        if len(atoms_of(candidates.rules[rid].antecedent)) == 1
    )
    summary = {
        "sentences": len(pool),
        "chunk_occurrences": len(chunks),
        "atoms": atoms,
        "compounds": len(candidates.rules) - atoms,
        "rules_total": len(candidates.rules),
        "min_atom_support": config.min_atom_support,
    }
    _dump_json(out / "mine_summary.json", summary)
    print(
        "mined %d rules (%d atoms, %d compounds) from %d chunk occurrences"
        % (summary["rules_total"], atoms, summary["compounds"], len(chunks))
    )
    return 0


def _gold_text_types(pool: UnlabeledPool) -> dict[str, dict[str, int]]:
    counts: dict[str, dict[str, int]] = {}
    for sid in sorted(pool.sentences):
        sentence = pool.sentences[sid]
        for start, end, etype in sentence.gold_spans:
            text = normalize_text([t.surface for t in sentence.tokens[start:end]])
            counts.setdefault(text, {}).setdefault(etype, 0)
            counts[text][etype] += 1
    return counts


def _seed_precision(
    seeds: Sequence[LogicalRule], pool: UnlabeledPool
) -> Optional[float]:
    gold = _gold_text_types(pool)
    if not gold:
        return None
    if not seeds:
        return 0.0
    correct = 0
    for rule in seeds:
        text = rule.antecedent.payload[0]
        types = gold.get(text)
        if types is None:
            continue
        majority = min(types, key=lambda y: (-types[y], y))
        if majority == rule.consequent:
            correct += 1
    return correct / len(seeds)


def _verdict_rows(verdicts) -> list[dict]:
    rows = []
    for verdict in verdicts:
        chunk = verdict.chunk
        rows.append(
            {
                "sentence_id": chunk.sentence_id,
                "span": list(chunk.span),
                "text": chunk.text,
                "support": chunk.support,
                "first": [[t, p] for t, p in verdict.first.entries],
                "second": [[t, p] for t, p in verdict.second.entries],
                "mapped_first": [[t, p] for t, p in verdict.mapped_first],
                "mapped_second": [[t, p] for t, p in verdict.mapped_second],
                "label": verdict.label,
                "confidence": verdict.confidence,
            }
        )
    return rows


def _seed_rows(seeds, confidences, provenance: str) -> list[dict]:
    rows = []
    for rule in seeds:
        record = export_record(rule)
        record["rule"] = rule_to_obj(rule)
        record["confidence"] = confidences.get(rule.antecedent.payload[0], 1.0)
        record["provenance"] = provenance
        rows.append(record)
    return rows


def cmd_seed(config: RunConfig, mode: str = "zero_shot") -> int:
    pool = _load_pool(config, "train")
    chunks = extract_chunks(pool)
    backend = _make_backend(config)
    targets = TargetTypeSet(types=config.targets)
    out = config.output_dir
    verdicts, mapping = build_verdicts(
        pool,
        chunks,
        backend,
        targets,
        k=config.top_k,
        templates=("T1", "T2"),
        min_cooccur=config.min_cooccur,
        workers=config.workers,
    )
    if mode == "zero_shot":
        seeds = zero_shot_seeds(
            verdicts, config.thresholds.p_t, config.thresholds.r_t, config.aggregate
        )
        confidences = seed_confidences(verdicts, config.aggregate)
        _dump_jsonl(out / "verdicts.jsonl", _verdict_rows(verdicts))
        _dump_jsonl(
            out / "seeds.jsonl", _seed_rows(seeds, confidences, PROVENANCE_SEED)
        )
        precision = _seed_precision(seeds, pool)
        report = {
            "mode": mode,
            "seed_rules": len(seeds),
            "verdicts": len(verdicts),
            "labeled": sum(
                1 for v in verdicts if v.label not in (NA_LABEL, UNKNOWN_LABEL)
            ),
            "na": sum(1 for v in verdicts if v.label == NA_LABEL),
            "p_t": config.thresholds.p_t,
            "r_t": config.thresholds.r_t,
            "precision_vs_gold": precision,
        }
        _dump_json(out / "seed_report.json", report)
        print(
            "wrote %d seed rules (precision vs gold: %s)"
            % (len(seeds), "n/a" if precision is None else "%.4f" % precision)
        )
        return 0
    # Fine-tuned refresh: positives from the bootstrap pool, negatives from
    # the zero-shot NA verdicts, then re-query with the fine-tune templates.
    snapshot = _latest_snapshot(out)
    if snapshot is None:
        raise ConfigError(
            "seed --mode finetuned needs bootstrap snapshots in %s; run "
            "bootstrap first" % (out / "snapshots")
        )
    from .bootstrap import load_snapshot

    _, pool_s, _ = load_snapshot(snapshot)
    by_key = {c.key: c for c in chunks}
    positives = []
    for instance in pool_s.sorted_entries():
        chunk = by_key.get(instance.key)
        if chunk is not None:
            positives.append((chunk, instance.label))
    positive_texts = {chunk.text for chunk, _ in positives}
    negatives = sample_negatives(
        [v for v in verdicts if v.chunk.text not in positive_texts],
        limit=max(1, len(positives)),
    )
    records = finetune_dataset(positives, negatives, pool)
    backend.finetune(records, epochs=config.finetune_epochs)
    ft_verdicts, _ = build_verdicts(
        pool,
        chunks,
        backend,
        targets,
        k=config.top_k,
        templates=("T3", "T4"),
        min_cooccur=config.min_cooccur,
        mapping=mapping,
        workers=config.workers,
    )
    seeds = finetuned_seeds(
        ft_verdicts, config.finetuned_p_t, config.thresholds.r_t, config.aggregate
    )
    confidences = seed_confidences(ft_verdicts, config.aggregate)
    _dump_jsonl(out / "verdicts_finetuned.jsonl", _verdict_rows(ft_verdicts))
    _dump_jsonl(
        out / "seeds_finetuned.jsonl",
        _seed_rows(seeds, confidences, PROVENANCE_FINETUNED),
    )
    precision = _seed_precision(seeds, pool)
    report = {
        "mode": mode,
        "seed_rules": len(seeds),
        "verdicts": len(ft_verdicts),
        "positives": len(positives),
        "negatives": len(negatives),
        "p_t": config.finetuned_p_t,
        "r_t": config.thresholds.r_t,
        "precision_vs_gold": precision,
    }
    _dump_json(out / "seed_report_finetuned.json", report)
    print(
        "wrote %d fine-tuned seed rules (precision vs gold: %s)"
        % (len(seeds), "n/a" if precision is None else "%.4f" % precision)
    )
    return 0


def _read_seed_file(path: Path) -> list[SeedRule]:
    seeds = []
    with path.open(encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            seeds.append(
                SeedRule(
                    rule=rule_from_obj(row["rule"]),
                    confidence=row.get("confidence", 1.0),
                    provenance=row.get("provenance", PROVENANCE_SEED),
                )
            )
    return seeds


def _latest_snapshot(out: Path) -> Optional[Path]:
    snapshot_dir = out / "snapshots"
    if not snapshot_dir.is_dir():
        return None
    snapshots = sorted(snapshot_dir.glob("iter_*.json"))
    return snapshots[-1] if snapshots else None


def cmd_bootstrap(config: RunConfig, resume: bool = False) -> int:
    out = config.output_dir
    seed_files = [out / "seeds.jsonl", out / "seeds_finetuned.jsonl"]
    seeds: list[SeedRule] = []
    seen_ids = set()
    for path in seed_files:
        if not path.exists():
            continue
        for seed in _read_seed_file(path):
            if seed.rule.rule_id in seen_ids:
                continue
            seen_ids.add(seed.rule.rule_id)
            seeds.append(seed)
    if not seeds:
        raise ConfigError(
            "no seed rules found under %s; run the seed subcommand first" % out
        )
    pool = _load_pool(config, "train")
    chunks = extract_chunks(pool)
    candidates = mine(pool, chunks, config.min_atom_support)
    dev_pool = (
        _load_pool(config, "dev") if config.corpus_dev is not None else None
    )
    resume_from = _latest_snapshot(out) if resume else None
    if resume and resume_from is None:
        raise ConfigError("--resume given but %s holds no snapshots" % (out / "snapshots"))
    result = run_loop(
        pool,
        seeds,
        candidates,
        config.thresholds,
        TaggerConfig(
            epochs=config.tagger_epochs,
            unlabeled_supervision=config.unlabeled_supervision,
        ),
        labels=config.targets,
        rng_seed=config.rng_seed,
        snapshot_dir=out / "snapshots",
        dev_pool=dev_pool,
        resume_from=resume_from,
        workers=config.workers,
    )
    # The growth curve is rebuilt from the snapshots on disk, so a resumed
    # run emits the same file an uninterrupted one would.
    rows = ["iteration,pool_s,pool_r,dev_f1"]
    for snapshot_path in sorted((out / "snapshots").glob("iter_*.json")):
        snap = json.loads(snapshot_path.read_text(encoding="utf-8"))
        dev_f1 = snap.get("dev_f1")
        rows.append(
            "%d,%d,%d,%s"
            % (
                snap["iteration"],
                len(snap["pool_S"]),
                len(snap["pool_R"]),
                "" if dev_f1 is None else "%.6f" % dev_f1,
            )
        )
    growth_path = out / "growth.csv"
    growth_path.parent.mkdir(parents=True, exist_ok=True)
    growth_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    result.tagger.save(out / "tagger.json")
    _dump_jsonl(
        out / "rules_final.jsonl",
        [
            export_record(entry.rule, entry.stats, entry.score)
            for entry in result.pool_r.sorted_entries()
        ],
    )
    print(
        "bootstrap %s after %d iteration(s): pool_S=%d, pool_R=%d"
        % (
            "converged" if result.converged else "stopped",
            result.iterations_run,
            len(result.pool_s),
            len(result.pool_r),
        )
    )
    return 0


def cmd_eval(config: RunConfig) -> int:
    out = config.output_dir
    checkpoint = out / "tagger.json"
    if not checkpoint.exists():
        raise ConfigError("no tagger checkpoint at %s; run bootstrap first" % checkpoint)
    eval_pool = _load_pool(config, "eval")
    if all(not s.gold_spans for s in eval_pool.sentences.values()):
        raise ConfigError(
            "eval corpus %s carries no gold spans; evaluation refused"
            % config.corpus_eval
        )
    model = Tagger.load(checkpoint)
    predictions = [
        model.tag(eval_pool.sentences[sid]) for sid in sorted(eval_pool.sentences)
    ]
    report = evaluate(predictions, list(eval_pool.sentences.values()))
    _dump_json(out / "eval_report.json", report.to_obj())
    (out / "eval_report.txt").write_text(report.to_text() + "\n", encoding="utf-8")
    _write_conll_predictions(out / "predictions.conll", eval_pool, predictions)
    print(report.to_text())
    return 0


def _write_conll_predictions(path: Path, pool: UnlabeledPool, predictions) -> None:
    """Column format for external scorers: FORM, gold BIO, predicted BIO."""
    from .tagger import OUTSIDE, spans_to_tags

    lines = []
    for prediction in predictions:
        sentence = pool.sentences[prediction.sentence_id]
        gold = spans_to_tags(len(sentence.tokens), sentence.gold_spans, OUTSIDE)
        for token, gold_tag, pred_tag in zip(sentence.tokens, gold, prediction.tags):
            lines.append("%s\t%s\t%s" % (token.surface, gold_tag, pred_tag))
        lines.append("")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_export_rules(config: RunConfig) -> int:
    out = config.output_dir
    snapshot = _latest_snapshot(out)
    if snapshot is None:
        raise ConfigError("no snapshots under %s; run bootstrap first" % out)
    from .bootstrap import load_snapshot

    _, _, pool_r = load_snapshot(snapshot)
    _dump_jsonl(
        out / "rules_final.jsonl",
        [
            export_record(entry.rule, entry.stats, entry.score)
            for entry in pool_r.sorted_entries()
        ],
    )
    print("exported %d rules to %s" % (len(pool_r), out / "rules_final.jsonl"))
    return 0


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ruledistill",
        description="Induce logical tagging rules from an unlabeled corpus.",
    )
    parser.add_argument("--config", required=True, help="JSON or TOML run config")
    parser.add_argument("--workers", type=int, default=None, help="override workers")
    parser.add_argument("--seed", type=int, default=None, help="override rng_seed")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("mine", help="dump the mined candidate rule set")
    seed_parser = sub.add_parser("seed", help="generate seed rules via the oracle")
    seed_parser.add_argument(
        "--mode", choices=("zero_shot", "finetuned"), default="zero_shot"
    )
    boot = sub.add_parser("bootstrap", help="run the pool/rule loop to convergence")
    boot.add_argument("--resume", action="store_true", help="resume from snapshots")
    sub.add_parser("eval", help="score the trained tagger against gold spans")
    sub.add_parser("export-rules", help="write the final rule pool")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        if args.workers is not None:
            config.workers = args.workers
        if args.seed is not None:
            config.rng_seed = args.seed
        config.validate()
        if args.command == "mine":
            return cmd_mine(config)
        if args.command == "seed":
            return cmd_seed(config, args.mode)
        if args.command == "bootstrap":
            return cmd_bootstrap(config, args.resume)
        if args.command == "eval":
            return cmd_eval(config)
        if args.command == "export-rules":
            return cmd_export_rules(config)
        parser.error("unknown command %r" % args.command)
    except (ConfigError, CorpusError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except (BootstrapError, OracleError, TaggerError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
