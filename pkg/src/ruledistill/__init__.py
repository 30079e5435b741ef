"""Logical tagging-rule induction from unlabeled dependency-parsed text.

The pipeline bootstraps from prompt-oracle seed labels: extract candidate
noun chunks, mine every rule pattern the corpus instantiates, label
high-confidence chunks through template agreement of a fill-mask oracle,
then iterate pool growth and rule distillation until convergence.
"""

from .bootstrap import (
    InstancePool,
    LoopResult,
    PoolInstance,
    RulePool,
    SeedRule,
    Thresholds,
    distill_rules,
    r_score,
    r_score_threshold,
    run_loop,
    s_score,
    s_score_threshold,
)
from .corpus import (
    CandidateChunk,
    CorpusError,
    Sentence,
    Token,
    UnlabeledPool,
    extract_chunks,
    load_corpus,
    save_jsonl,
)
from .mining import CandidateRuleSet, mine, mine_atoms, mine_compounds
from .mock_oracle import MockLexicon, MockOracle
from .oracle import (
    ChunkVerdict,
    LabelMapping,
    OracleDistribution,
    RemoteOracle,
    TargetTypeSet,
    build_label_mapping,
    build_verdicts,
    consistency_label,
    finetune_dataset,
    finetuned_seeds,
    query_oracle,
    render_template,
    zero_shot_seeds,
)
from .rules import (
    AtomicPredicate,
    LogicalRule,
    RuleStats,
    canonicalize,
    conj,
    disj,
    matches,
    negate,
)
from .similarity import SimilarityModel, lower_median
from .tagger import EvalReport, TagSequence, Tagger, TaggerConfig, evaluate, pseudo_label

__version__ = "0.1.0"

__all__ = [
    "AtomicPredicate",
    "CandidateChunk",
    "CandidateRuleSet",
    "ChunkVerdict",
    "CorpusError",
    "EvalReport",
    "InstancePool",
    "LabelMapping",
    "LogicalRule",
    "LoopResult",
    "MockLexicon",
    "MockOracle",
    "OracleDistribution",
    "PoolInstance",
    "RemoteOracle",
    "RulePool",
    "RuleStats",
    "SeedRule",
    "Sentence",
    "SimilarityModel",
    "TagSequence",
    "Tagger",
    "TaggerConfig",
    "TargetTypeSet",
    "Thresholds",
    "Token",
    "UnlabeledPool",
    "build_label_mapping",
    "build_verdicts",
    "canonicalize",
    "conj",
    "consistency_label",
    "disj",
    "distill_rules",
    "evaluate",
    "extract_chunks",
    "finetune_dataset",
    "finetuned_seeds",
    "load_corpus",
    "lower_median",
    "matches",
    "mine",
    "mine_atoms",
    "mine_compounds",
    "negate",
    "pseudo_label",
    "query_oracle",
    "r_score",
    "r_score_threshold",
    "render_template",
    "run_loop",
    "s_score",
    "s_score_threshold",
    "save_jsonl",
    "zero_shot_seeds",
]
