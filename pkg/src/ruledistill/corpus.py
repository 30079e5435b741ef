"""Corpus ingestion: dependency-annotated sentences and candidate noun chunks.

Input formats are CoNLL-U (FORM, LEMMA, UPOS, HEAD, DEPREL columns honored)
and JSON lines with the same fields.  Gold entity spans, when present, travel
with the sentences but are reserved for evaluation; no training code path
reads them.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

#: Dependency relations that chain a token into the noun chunk of its head.
CHUNK_RELATIONS = frozenset({"compound", "amod", "nummod", "det", "flat"})

#: POS tags that may head a candidate chunk.
CHUNK_HEAD_TAGS = frozenset({"NOUN", "PROPN"})


class CorpusError(ValueError):
    """Raised when an input file violates the corpus contracts."""


def normalize_text(tokens: Sequence[str]) -> str:
    """Chunk text normalization: lowercase, internal hyphens/digits kept."""
    return " ".join(tokens).lower()


@dataclass(frozen=True)
class Token:
    surface: str
    lemma: str
    pos: str
    head: Optional[int]  # 0-based index of governor; None marks the root
    deprel: str

    def __post_init__(self) -> None:
        if not self.pos:
            raise CorpusError("token %r has an empty POS tag" % self.surface)


@dataclass(frozen=True)
class Sentence:
    id: str
    tokens: tuple[Token, ...]
    gold_spans: tuple[tuple[int, int, str], ...] = ()

    def __post_init__(self) -> None:
        n = len(self.tokens)
        for i, tok in enumerate(self.tokens):
            if tok.head is None:
                continue
            if tok.head == i:
                raise CorpusError(
                    "sentence %s: token %d is its own head" % (self.id, i)
                )
            if not 0 <= tok.head < n:
                raise CorpusError(
                    "sentence %s: token %d has out-of-range head %d"
                    % (self.id, i, tok.head)
                )
        self._check_tree()

    def _check_tree(self) -> None:
        # Every token must reach the root without revisiting a node.
        for start in range(len(self.tokens)):
            seen = set()
            i: Optional[int] = start
            while i is not None:
                if i in seen:
                    raise CorpusError(
                        "sentence %s: cyclic dependency graph" % self.id
                    )
                seen.add(i)
                i = self.tokens[i].head

    def surfaces(self) -> tuple[str, ...]:
        return tuple(t.surface for t in self.tokens)

    def lower_surfaces(self) -> tuple[str, ...]:
        return tuple(t.surface.lower() for t in self.tokens)


@dataclass(frozen=True)
class CandidateChunk:
    """One occurrence of a candidate entity span.

    ``support`` counts occurrences of the normalized text across the whole
    corpus, not just this sentence.
    """

    sentence_id: str
    span: tuple[int, int]  # token indices, end exclusive
    text: str
    left_context: tuple[str, ...]  # lowercased surfaces before the span
    right_context: tuple[str, ...]  # lowercased surfaces after the span
    head_token: int
    support: int = 1

    def __post_init__(self) -> None:
        start, end = self.span
        if end - start < 1:
            raise CorpusError("empty chunk span %r" % (self.span,))
        if self.support < 1:
            raise CorpusError("chunk support must be >= 1")

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.sentence_id, self.span[0], self.span[1])


@dataclass
class UnlabeledPool:
    """The unlabeled training corpus: sentences plus their candidate chunks."""

    sentences: dict[str, Sentence]
    _chunks: Optional[tuple[CandidateChunk, ...]] = field(
        default=None, repr=False
    )

    def sentence(self, sentence_id: str) -> Sentence:
        return self.sentences[sentence_id]

    def chunks(self) -> tuple[CandidateChunk, ...]:
        if self._chunks is None:
            self._chunks = tuple(_extract_all(self))
        return self._chunks

    def __len__(self) -> int:
        return len(self.sentences)


# ---------------------------------------------------------------------------
# Loading


def load_corpus(path: str | Path, format: str = "conllu") -> UnlabeledPool:
    """Load a corpus file into an UnlabeledPool.

    Args:
        path: file to read.
        format: "conllu" or "jsonl".

    Raises:
        CorpusError: malformed line (named by line number) or invalid
            dependency structure (named by sentence id).
    """
    path = Path(path)
    if format == "conllu":
        sentences = list(_read_conllu(path))
    elif format == "jsonl":
        sentences = list(_read_jsonl(path))
    else:
        raise CorpusError("unknown corpus format %r" % format)
    by_id: dict[str, Sentence] = {}
    for sent in sentences:
        if sent.id in by_id:
            raise CorpusError("duplicate sentence id %r" % sent.id)
        by_id[sent.id] = sent
    return UnlabeledPool(sentences=by_id)


def _read_conllu(path: Path) -> Iterable[Sentence]:
    rows: list[tuple[int, list[str]]] = []
    sent_id: Optional[str] = None
    gold: tuple[tuple[int, int, str], ...] = ()
    counter = 0

    def flush() -> Optional[Sentence]:
        nonlocal rows, sent_id, gold, counter
        if not rows:
            sent_id, gold = None, ()
            return None
        counter += 1
        sid = sent_id if sent_id is not None else "s%d" % counter
        tokens = []
        for lineno, cols in rows:
            try:
                head_col = int(cols[6])
            except ValueError:
                raise CorpusError(
                    "%s:%d: HEAD column is not an integer" % (path.name, lineno)
                ) from None
            head = None if head_col == 0 else head_col - 1
            tokens.append(
                Token(
                    surface=cols[1],
                    lemma=cols[2] if cols[2] != "_" else cols[1].lower(),
                    pos=cols[3],
                    head=head,
                    deprel=cols[7],
                )
            )
        sent = Sentence(id=sid, tokens=tuple(tokens), gold_spans=gold)
        rows, sent_id, gold = [], None, ()
        return sent

    with path.open(encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                sent = flush()
                if sent is not None:
                    yield sent
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("sent_id"):
                    sent_id = body.split("=", 1)[1].strip()
                elif body.startswith("gold_spans"):
                    payload = body.split("=", 1)[1].strip()
                    try:
                        gold = tuple(
                            (int(s), int(e), str(t))
                            for s, e, t in json.loads(payload)
                        )
                    except (ValueError, TypeError):
                        raise CorpusError(
                            "%s:%d: unparseable gold_spans comment"
                            % (path.name, lineno)
                        ) from None
                continue
            cols = line.split("\t")
            if len(cols) < 8:
                raise CorpusError(
                    "%s:%d: expected >= 8 tab-separated columns, got %d"
                    % (path.name, lineno, len(cols))
                )
            # Multiword ranges (1-2) and empty nodes (1.1) carry no tree edges.
            if "-" in cols[0] or "." in cols[0]:
                continue
            rows.append((lineno, cols))
    sent = flush()
    if sent is not None:
        yield sent


def _read_jsonl(path: Path) -> Iterable[Sentence]:
    with path.open(encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                raise CorpusError(
                    "%s:%d: invalid JSON" % (path.name, lineno)
                ) from None
            try:
                tokens = tuple(
                    Token(
                        surface=t["surface"],
                        lemma=t["lemma"],
                        pos=t["pos"],
                        head=t["head"],
                        deprel=t["deprel"],
                    )
                    for t in obj["tokens"]
                )
                gold = tuple(
                    (int(s), int(e), str(y))
                    for s, e, y in obj.get("gold_spans") or []
                )
                yield Sentence(id=str(obj["id"]), tokens=tokens, gold_spans=gold)
            except (KeyError, TypeError):
                raise CorpusError(
                    "%s:%d: missing or malformed sentence fields"
                    % (path.name, lineno)
                ) from None


def save_jsonl(pool: UnlabeledPool, path: str | Path) -> None:
    """Serialize a pool to JSON lines; load_corpus(..., "jsonl") inverts it."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for sid in sorted(pool.sentences):
            sent = pool.sentences[sid]
            obj = {
                "id": sent.id,
                "tokens": [
                    {
                        "surface": t.surface,
                        "lemma": t.lemma,
                        "pos": t.pos,
                        "head": t.head,
                        "deprel": t.deprel,
                    }
                    for t in sent.tokens
                ],
                "gold_spans": [list(span) for span in sent.gold_spans],
            }
            handle.write(json.dumps(obj, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Chunk extraction


def _chain_target(sentence: Sentence, index: int) -> int:
    """Follow chunk relations upward; return the index where the chain stops."""
    seen = {index}
    current = index
    while True:
        tok = sentence.tokens[current]
        if tok.deprel not in CHUNK_RELATIONS or tok.head is None:
            return current
        if tok.head in seen:  # defensive; Sentence already rejects cycles
            return current
        seen.add(tok.head)
        current = tok.head


def _sentence_chunk_spans(sentence: Sentence) -> list[tuple[int, int, int]]:
    """Return (start, end, head_index) spans for one sentence.

    A chunk is the maximal contiguous run of tokens whose heads chain to a
    NOUN/PROPN head through CHUNK_RELATIONS, the head included.  Nouns whose
    chain ends elsewhere fall back to singleton chunks.
    """
    n = len(sentence.tokens)
    target = [_chain_target(sentence, i) for i in range(n)]
    spans: list[tuple[int, int, int]] = []
    covered = [False] * n
    for head in range(n):
        if sentence.tokens[head].pos not in CHUNK_HEAD_TAGS:
            continue
        if target[head] != head:
            continue  # absorbed into another token's chunk
        start = head
        while start > 0 and target[start - 1] == head:
            start -= 1
        end = head + 1
        while end < n and target[end] == head:
            end += 1
        spans.append((start, end, head))
        for i in range(start, end):
            covered[i] = True
    # A noun absorbed by a non-noun chain target would otherwise vanish.
    for i in range(n):
        if sentence.tokens[i].pos in CHUNK_HEAD_TAGS and not covered[i]:
            if sentence.tokens[target[i]].pos not in CHUNK_HEAD_TAGS:
                spans.append((i, i + 1, i))
                covered[i] = True
    spans.sort()
    return spans


def _extract_all(pool: UnlabeledPool) -> list[CandidateChunk]:
    occurrences: list[tuple[str, tuple[int, int], str, int]] = []
    for sid in sorted(pool.sentences):
        sent = pool.sentences[sid]
        for start, end, head in _sentence_chunk_spans(sent):
            text = normalize_text([t.surface for t in sent.tokens[start:end]])
            occurrences.append((sid, (start, end), text, head))
    support = Counter(text for _, _, text, _ in occurrences)
    chunks = []
    for sid, span, text, head in occurrences:
        sent = pool.sentences[sid]
        lower = sent.lower_surfaces()
        chunks.append(
            CandidateChunk(
                sentence_id=sid,
                span=span,
                text=text,
                left_context=lower[: span[0]],
                right_context=lower[span[1] :],
                head_token=head,
                support=support[text],
            )
        )
    return chunks


def extract_chunks(pool: UnlabeledPool) -> tuple[CandidateChunk, ...]:
    """Extract all candidate chunks with corpus-wide support counts."""
    return pool.chunks()
