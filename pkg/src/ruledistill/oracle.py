"""Prompt-oracle protocol: templates, label-word mapping, verdicts, seeds.

An oracle backend answers fill-mask queries for four templates.  T1 and T2
probe a chunk's hypernym from two directions and their agreement yields a
zero-shot label; T3 and T4 are the fine-tuning templates (T3 verbalizes
"is a/an <type>" vs "is not an", T4 surrounds one mask with trainable soft
slots).  Backends are pluggable: a lexicon-backed mock for deterministic
runs and an HTTP client for a real model service.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import httpx

from .corpus import CandidateChunk, Sentence, UnlabeledPool
from .rules import TOKEN_STRING, AtomicPredicate, LogicalRule

log = logging.getLogger(__name__)

MASK = "[mask]"
SOFT_SLOT = "[s]"

#: Conventional token for "agreed, but not a target type" readings.
NA_TOKEN = "none"

NA_LABEL = "NA"
UNKNOWN_LABEL = "unk"

TEMPLATE_IDS = ("T1", "T2", "T3", "T4")
DEFAULT_TOP_K = 5
DEFAULT_SLOT_COUNT = 4

Entry = tuple[str, float]


class OracleError(Exception):
    pass


class OracleTransportError(OracleError):
    """Backend unreachable; the request may be retried."""


class OracleProtocolError(OracleError):
    """Backend answered with something that is not a valid response."""


# ---------------------------------------------------------------------------
# Templates


def render_template(
    template_id: str,
    chunk: CandidateChunk,
    sentence: Sentence,
    slot_count: int = DEFAULT_SLOT_COUNT,
) -> tuple[str, int]:
    """Render a template for one chunk occurrence.

    Returns the masked text and the number of mask positions in it.
    """
    start, end = chunk.span
    words = list(sentence.surfaces())
    span = words[start:end]
    left = words[:start]
    right = words[end:]
    if template_id == "T1":
        toks = left + [MASK, "such", "as"] + span + right
        return " ".join(toks), 1
    if template_id == "T2":
        toks = left + span + ["and", "some", "other", MASK] + right
        return " ".join(toks), 1
    if template_id == "T3":
        toks = words + span + ["is", MASK, MASK, "entity"]
        return " ".join(toks), 2
    if template_id == "T4":
        toks = words + span + [SOFT_SLOT] * slot_count + [MASK, SOFT_SLOT]
        return " ".join(toks), 1
    raise OracleError("unknown template id %r" % template_id)


def article_for(word: str) -> str:
    return "an" if word[:1].lower() in "aeiou" else "a"


# ---------------------------------------------------------------------------
# Distributions and verdicts


@dataclass(frozen=True)
class OracleDistribution:
    """Ranked (token, probability) entries for one template reading."""

    template_id: str
    entries: tuple[Entry, ...]

    def __post_init__(self) -> None:
        prev = 1.0
        for token, prob in self.entries:
            if not 0.0 <= prob <= 1.0:
                raise OracleError("probability %r out of range" % prob)
            if prob > prev + 1e-12:
                raise OracleError("entries must be non-increasing in rank")
            prev = prob

    def tokens(self) -> tuple[str, ...]:
        return tuple(t for t, _ in self.entries)

    def supported_tokens(self) -> tuple[str, ...]:
        """Tokens with nonzero probability; padding does not count."""
        return tuple(t for t, p in self.entries if p > 0.0)

    def top(self) -> Entry:
        return self.entries[0]


@dataclass(frozen=True)
class TargetTypeSet:
    types: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.types:
            raise OracleError("target type set is empty")
        if len(set(self.types)) != len(self.types):
            raise OracleError("target types must be unique")


@dataclass
class LabelMapping:
    """Maps oracle vocabulary tokens onto target categories."""

    map: dict[str, str] = field(default_factory=dict)
    support_counts: dict[str, int] = field(default_factory=dict)

    def target_of(self, token: str) -> Optional[str]:
        return self.map.get(token)


@dataclass(frozen=True)
class ChunkVerdict:
    """Oracle outcome for one chunk occurrence under a template pair."""

    chunk: CandidateChunk
    first: OracleDistribution
    second: OracleDistribution
    mapped_first: tuple[Entry, ...]
    mapped_second: tuple[Entry, ...]
    label: str  # a target type, NA_LABEL, or UNKNOWN_LABEL
    confidence: float


def _is_name_token(token: str, target: str) -> bool:
    return token == target or token == target + "s"


def build_label_mapping(
    verdict_sets: Sequence[tuple[Sequence[str], Sequence[str]]],
    targets: TargetTypeSet,
    min_cooccur: int = 2,
) -> LabelMapping:
    """Induce token -> target mapping from top-K co-occurrence.

    A token maps to the target whose canonical name it shares a top-K set
    with most often, provided that count reaches ``min_cooccur``.  Canonical
    names (and their plural forms) always map to their own target.
    """
    cooccur: dict[str, dict[str, int]] = {}
    for s1, s2 in verdict_sets:
        tokens = sorted(set(s1) | set(s2))
        present = [
            y
            for y in targets.types
            if any(_is_name_token(t, y) for t in tokens)
        ]
        for token in tokens:
            for y in present:
                if _is_name_token(token, y):
                    continue
                cooccur.setdefault(token, {}).setdefault(y, 0)
                cooccur[token][y] += 1
    mapping = LabelMapping()
    for y in targets.types:
        mapping.map[y] = y
        mapping.map[y + "s"] = y
        mapping.support_counts.setdefault(y, 0)
    for token in sorted(cooccur):
        if token in mapping.map:
            continue
        counts = cooccur[token]
        best = max(
            targets.types,
            key=lambda y: (counts.get(y, 0), -targets.types.index(y)),
        )
        if counts.get(best, 0) >= min_cooccur:
            mapping.map[token] = best
            mapping.support_counts[token] = counts[best]
    return mapping


def map_distribution(
    dist: OracleDistribution, mapping: LabelMapping, targets: TargetTypeSet
) -> tuple[Entry, ...]:
    """Project token probabilities onto target types.

    Probabilities of all tokens mapping to the same target are summed; the
    result is not renormalized.
    """
    mass: dict[str, float] = {}
    for token, prob in dist.entries:
        target = mapping.target_of(token)
        if target is not None and prob > 0.0:
            mass[target] = mass.get(target, 0.0) + prob
    ranked = sorted(mass.items(), key=lambda item: (-item[1], item[0]))
    return tuple(ranked)


def consistency_label(
    mapped_first: Sequence[Entry],
    mapped_second: Sequence[Entry],
    raw_first: Sequence[Entry],
    raw_second: Sequence[Entry],
    mapping: LabelMapping,
) -> tuple[str, float]:
    """Label a chunk from two template readings.

    The branches partition all inputs: agreeing top mapped types give that
    type with confidence min of the pair; otherwise agreeing top raw tokens
    that map nowhere give NA; anything else is unknown.
    """
    if mapped_first and mapped_second and mapped_first[0][0] == mapped_second[0][0]:
        return mapped_first[0][0], min(mapped_first[0][1], mapped_second[0][1])
    if (
        raw_first
        and raw_second
        and raw_first[0][0] == raw_second[0][0]
        and mapping.target_of(raw_first[0][0]) is None
    ):
        return NA_LABEL, min(raw_first[0][1], raw_second[0][1])
    return UNKNOWN_LABEL, 0.0


# ---------------------------------------------------------------------------
# Backends


@dataclass(frozen=True)
class FineTuneRecord:
    """One training instance for the oracle fine-tune round."""

    chunk_text: str
    label: str  # target type, or NA_LABEL for negatives
    t3_text: str
    t3_answer: tuple[str, ...]
    t4_text: str
    t4_answer: tuple[str, ...]


class OracleBackend(Protocol):
    def fill(
        self,
        template_id: str,
        text: str,
        mask_count: int,
        top_k: int,
        chunk_text: Optional[str] = None,
        slot_count: int = DEFAULT_SLOT_COUNT,
    ) -> list[list[Entry]]:
        """Return one ranked (token, prob) list per mask position."""
        ...

    def finetune(self, records: Sequence[FineTuneRecord], epochs: int = 1) -> None:
        ...


def query_oracle(
    backend: OracleBackend,
    template_id: str,
    chunk: CandidateChunk,
    sentence: Sentence,
    k: int = DEFAULT_TOP_K,
    slot_count: int = DEFAULT_SLOT_COUNT,
) -> OracleDistribution:
    """Render a template, query the backend, and reduce to a type reading.

    T1/T2/T4 pass through their single mask distribution.  T3's two masks
    ("is [mask] [mask] entity") are folded into one reading: an article in
    the first slot selects the second slot's tokens, a "not" in the first
    slot reads as the NA token; either way the confidence is the minimum of
    the two slots.
    """
    text, mask_count = render_template(template_id, chunk, sentence, slot_count)
    masks = backend.fill(
        template_id,
        text,
        mask_count,
        k,
        chunk_text=chunk.text,
        slot_count=slot_count,
    )
    if len(masks) != mask_count:
        raise OracleProtocolError(
            "expected %d mask distributions, got %d" % (mask_count, len(masks))
        )
    if template_id != "T3":
        return OracleDistribution(template_id, tuple(masks[0][:k]))
    first, second = masks[0], masks[1]
    if not first or not second:
        return OracleDistribution("T3", ())
    head_token, head_prob = first[0]
    if head_token == "not":
        entries: tuple[Entry, ...] = (
            (NA_TOKEN, min(head_prob, second[0][1])),
        )
    else:
        entries = tuple(
            (token, min(head_prob, prob)) for token, prob in second[:k]
        )
    return OracleDistribution("T3", entries)


def build_verdicts(
    pool: UnlabeledPool,
    chunks: Sequence[CandidateChunk],
    backend: OracleBackend,
    targets: TargetTypeSet,
    k: int = DEFAULT_TOP_K,
    templates: tuple[str, str] = ("T1", "T2"),
    min_cooccur: int = 2,
    mapping: Optional[LabelMapping] = None,
    workers: int = 1,
) -> tuple[list[ChunkVerdict], LabelMapping]:
    """Query a template pair for every chunk and label by consistency.

    When no mapping is supplied it is induced from the collected top-K sets
    before labels are assigned.  ``workers`` caps in-flight oracle queries;
    results are collected in chunk order either way.
    """

    def read(chunk: CandidateChunk):
        sentence = pool.sentence(chunk.sentence_id)
        d1 = query_oracle(backend, templates[0], chunk, sentence, k)
        d2 = query_oracle(backend, templates[1], chunk, sentence, k)
        return chunk, d1, d2

    readings: list[tuple[CandidateChunk, OracleDistribution, OracleDistribution]]
    if workers > 1 and len(chunks) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as executor:
            readings = list(executor.map(read, chunks))
    else:
        readings = [read(chunk) for chunk in chunks]
    if mapping is None:
        mapping = build_label_mapping(
            [(d1.supported_tokens(), d2.supported_tokens()) for _, d1, d2 in readings],
            targets,
            min_cooccur,
        )
    verdicts = []
    for chunk, d1, d2 in readings:
        py1 = map_distribution(d1, mapping, targets)
        py2 = map_distribution(d2, mapping, targets)
        label, confidence = consistency_label(
            py1, py2, d1.entries, d2.entries, mapping
        )
        verdicts.append(
            ChunkVerdict(
                chunk=chunk,
                first=d1,
                second=d2,
                mapped_first=py1,
                mapped_second=py2,
                label=label,
                confidence=confidence,
            )
        )
    return verdicts, mapping


# ---------------------------------------------------------------------------
# Seed rules


def _seed_rules(
    verdicts: Sequence[ChunkVerdict],
    p_t: float,
    r_t: int,
    aggregate: str,
) -> list[LogicalRule]:
    by_text: dict[str, list[ChunkVerdict]] = {}
    for verdict in verdicts:
        if verdict.label in (NA_LABEL, UNKNOWN_LABEL):
            continue
        by_text.setdefault(verdict.chunk.text, []).append(verdict)
    rules = []
    for text in sorted(by_text):
        group = by_text[text]
        labels = sorted({v.label for v in group})
        label = min(
            labels,
            key=lambda y: (-sum(1 for v in group if v.label == y), y),
        )
        confs = [v.confidence for v in group if v.label == label]
        conf = max(confs) if aggregate == "max" else sum(confs) / len(confs)
        support = group[0].chunk.support
        if conf > p_t and support > r_t:
            rules.append(
                LogicalRule(
                    antecedent=AtomicPredicate(TOKEN_STRING, (text,)),
                    consequent=label,
                )
            )
    if not rules:
        log.warning(
            "no seed rules passed p_t=%.3g, r_t=%d; consider lowering thresholds",
            p_t,
            r_t,
        )
    return rules


def zero_shot_seeds(
    verdicts: Sequence[ChunkVerdict],
    p_t: float,
    r_t: int,
    aggregate: str = "max",
) -> list[LogicalRule]:
    """Turn consistent, confident, well-supported chunks into seed rules."""
    return _seed_rules(verdicts, p_t, r_t, aggregate)


def finetuned_seeds(
    verdicts: Sequence[ChunkVerdict],
    p_t: float = 0.99,
    r_t: int = 4,
    aggregate: str = "max",
) -> list[LogicalRule]:
    """Seed rules from fine-tuned-oracle verdicts (stricter confidence)."""
    return _seed_rules(verdicts, p_t, r_t, aggregate)


def seed_confidences(verdicts: Sequence[ChunkVerdict], aggregate: str = "max") -> dict[str, float]:
    """Best oracle confidence per chunk text, for seed-admitted instances."""
    best: dict[str, float] = {}
    for verdict in verdicts:
        if verdict.label in (NA_LABEL, UNKNOWN_LABEL):
            continue
        text = verdict.chunk.text
        if aggregate == "max":
            best[text] = max(best.get(text, 0.0), verdict.confidence)
        else:
            best.setdefault(text, verdict.confidence)
    return best


# ---------------------------------------------------------------------------
# Fine-tune dataset


def finetune_dataset(
    positives: Sequence[tuple[CandidateChunk, str]],
    negatives: Sequence[ChunkVerdict],
    pool: UnlabeledPool,
    slot_count: int = DEFAULT_SLOT_COUNT,
) -> list[FineTuneRecord]:
    """Build the oracle fine-tuning set from pool positives and NA negatives.

    Each record renders both fine-tune templates for one instance; the
    resulting list has exactly len(positives) + len(negatives) records.

    Raises:
        OracleError: when no negatives are supplied; fine-tuning cannot run
            on positives alone, widen NA sampling first.
    """
    if not negatives:
        raise OracleError(
            "fine-tuning needs NA-labeled negatives; widen NA sampling "
            "(raise top-k or relax the consistency filter) and retry"
        )
    records = []
    for chunk, label in positives:
        sentence = pool.sentence(chunk.sentence_id)
        t3_text, _ = render_template("T3", chunk, sentence)
        t4_text, _ = render_template("T4", chunk, sentence, slot_count)
        records.append(
            FineTuneRecord(
                chunk_text=chunk.text,
                label=label,
                t3_text=t3_text,
                t3_answer=(article_for(label), label),
                t4_text=t4_text,
                t4_answer=(label,),
            )
        )
    for verdict in negatives:
        chunk = verdict.chunk
        sentence = pool.sentence(chunk.sentence_id)
        t3_text, _ = render_template("T3", chunk, sentence)
        t4_text, _ = render_template("T4", chunk, sentence, slot_count)
        records.append(
            FineTuneRecord(
                chunk_text=chunk.text,
                label=NA_LABEL,
                t3_text=t3_text,
                t3_answer=("not", "an"),
                t4_text=t4_text,
                t4_answer=(NA_TOKEN,),
            )
        )
    return records


def sample_negatives(
    verdicts: Sequence[ChunkVerdict], limit: int
) -> list[ChunkVerdict]:
    """Pick the highest-confidence NA verdicts, one per chunk text."""
    na = [v for v in verdicts if v.label == NA_LABEL]
    na.sort(key=lambda v: (-v.confidence, v.chunk.text, v.chunk.key))
    seen: set[str] = set()
    out = []
    for verdict in na:
        if verdict.chunk.text in seen:
            continue
        seen.add(verdict.chunk.text)
        out.append(verdict)
        if len(out) >= limit:
            break
    return out


# ---------------------------------------------------------------------------
# Remote backend


class RemoteOracle:
    """HTTP client for the fill-mask service.

    Wire protocol:
      POST /fill-mask {template_id, text, mask_count, top_k[, slot_count]}
        -> {masks: [[{token, prob}, ...], ...]}
      POST /fine-tune {pairs: [{text, answer_tokens}, ...], epochs}
        -> {job_id}
      GET /fine-tune/{job_id} -> {status}
    """

    def __init__(
        self,
        base_url: str,
        *,
        client: Optional[httpx.Client] = None,
        retries: int = 2,
        timeout: float = 30.0,
        poll_interval: float = 0.2,
        poll_timeout: float = 600.0,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self._client = client or httpx.Client(timeout=timeout)
        self.retries = retries
        self.poll_interval = poll_interval
        self.poll_timeout = poll_timeout

    @staticmethod
    def encode_fill_request(
        template_id: str,
        text: str,
        mask_count: int,
        top_k: int,
        slot_count: int = DEFAULT_SLOT_COUNT,
    ) -> bytes:
        body = {
            "template_id": template_id,
            "text": text,
            "mask_count": mask_count,
            "top_k": top_k,
        }
        if template_id == "T4":
            body["slot_count"] = slot_count
        return json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")

    @staticmethod
    def encode_finetune_request(
        records: Sequence[FineTuneRecord], epochs: int
    ) -> bytes:
        pairs = []
        for record in records:
            pairs.append({"text": record.t3_text, "answer_tokens": list(record.t3_answer)})
            pairs.append({"text": record.t4_text, "answer_tokens": list(record.t4_answer)})
        body = {"pairs": pairs, "epochs": epochs}
        return json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")

    def _post(self, path: str, payload: bytes) -> dict:
        last: Optional[Exception] = None
        for _ in range(self.retries + 1):
            try:
                response = self._client.post(
                    self.base_url + path,
                    content=payload,
                    headers={"content-type": "application/json"},
                )
            except httpx.TransportError as exc:
                last = exc
                continue
            return self._decode(response)
        raise OracleTransportError(
            "backend unreachable after %d attempts: %s" % (self.retries + 1, last)
        )

    def _decode(self, response: httpx.Response) -> dict:
        if response.status_code >= 400:
            raise OracleProtocolError(
                "backend returned %d: %s" % (response.status_code, response.text[:200])
            )
        try:
            obj = response.json()
        except ValueError:
            raise OracleProtocolError("backend returned non-JSON body") from None
        if not isinstance(obj, dict):
            raise OracleProtocolError("backend returned a non-object body")
        return obj

    def fill(
        self,
        template_id: str,
        text: str,
        mask_count: int,
        top_k: int,
        chunk_text: Optional[str] = None,
        slot_count: int = DEFAULT_SLOT_COUNT,
    ) -> list[list[Entry]]:
        del chunk_text  # only the lexicon mock keys on it
        payload = self.encode_fill_request(template_id, text, mask_count, top_k, slot_count)
        obj = self._post("/fill-mask", payload)
        masks = obj.get("masks")
        if not isinstance(masks, list):
            raise OracleProtocolError("response lacks a 'masks' list")
        out: list[list[Entry]] = []
        for mask in masks:
            try:
                out.append([(str(e["token"]), float(e["prob"])) for e in mask])
            except (TypeError, KeyError):
                raise OracleProtocolError("malformed mask entry in response") from None
        return out

    def finetune(self, records: Sequence[FineTuneRecord], epochs: int = 1) -> None:
        payload = self.encode_finetune_request(records, epochs)
        obj = self._post("/fine-tune", payload)
        job_id = obj.get("job_id")
        if not isinstance(job_id, str):
            raise OracleProtocolError("fine-tune response lacks a job_id")
        deadline = time.monotonic() + self.poll_timeout
        while True:
            status = self.job_status(job_id)
            if status == "done":
                return
            if status == "failed":
                raise OracleError("fine-tune job %s failed" % job_id)
            if time.monotonic() >= deadline:
                raise OracleTransportError(
                    "fine-tune job %s still %s after %.0fs"
                    % (job_id, status, self.poll_timeout)
                )
            time.sleep(self.poll_interval)

    def job_status(self, job_id: str) -> str:
        try:
            response = self._client.get(self.base_url + "/fine-tune/" + job_id)
        except httpx.TransportError as exc:
            raise OracleTransportError(str(exc)) from exc
        obj = self._decode(response)
        status = obj.get("status")
        if status not in ("queued", "running", "done", "failed"):
            raise OracleProtocolError("unknown job status %r" % status)
        return status
