"""Lexicon-backed oracle: deterministic fill-mask answers without a model.

The lexicon maps chunk texts to ranked (type token, probability) entries.
Unknown chunks fall back to a default entry; distributions are padded with
fixed filler tokens so every response has exactly top_k entries.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .oracle import (
    DEFAULT_SLOT_COUNT,
    NA_LABEL,
    NA_TOKEN,
    Entry,
    FineTuneRecord,
    OracleError,
    article_for,
)

FILLER_TOKENS = (
    "item",
    "case",
    "example",
    "instance",
    "object",
    "form",
    "unit",
    "element",
    "kind",
    "sort",
)

FINETUNED_PROB = 0.995


@dataclass
class MockLexicon:
    """Chunk text -> ranked entries, plus a default for unknown chunks."""

    entries: dict[str, tuple[Entry, ...]] = field(default_factory=dict)
    default_entry: tuple[Entry, ...] = ()
    template_bias: dict[str, float] = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path) -> "MockLexicon":
        """Read a JSON-lines lexicon.

        Accepted line shapes:
          {"chunk_text": ..., "entries": [[token, prob], ...]}
          {"chunk_text": ..., "type_token": ..., "prob": ...}
          {"chunk_text": "*", ...}           default entry for unknown chunks
          {"template_bias": {"T2": 0.05}}    per-template probability delta
        """
        lexicon = cls()
        with Path(path).open(encoding="utf-8") as handle:
            for lineno, raw in enumerate(handle, start=1):
                line = raw.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError:
                    raise OracleError(
                        "%s:%d: invalid JSON in lexicon" % (path, lineno)
                    ) from None
                if "template_bias" in obj:
                    lexicon.template_bias.update(
                        {str(k): float(v) for k, v in obj["template_bias"].items()}
                    )
                    continue
                text = obj["chunk_text"]
                if "entries" in obj:
                    entries = tuple(
                        (str(t), float(p)) for t, p in obj["entries"]
                    )
                else:
                    entries = ((str(obj["type_token"]), float(obj["prob"])),)
                entries = tuple(sorted(entries, key=lambda e: (-e[1], e[0])))
                if text == "*":
                    lexicon.default_entry = entries
                else:
                    lexicon.entries[text] = entries
        return lexicon

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as handle:
            if self.template_bias:
                handle.write(
                    json.dumps({"template_bias": self.template_bias}, sort_keys=True)
                    + "\n"
                )
            if self.default_entry:
                handle.write(
                    json.dumps(
                        {"chunk_text": "*", "entries": [list(e) for e in self.default_entry]}
                    )
                    + "\n"
                )
            for text in sorted(self.entries):
                handle.write(
                    json.dumps(
                        {
                            "chunk_text": text,
                            "entries": [list(e) for e in self.entries[text]],
                        }
                    )
                    + "\n"
                )


class MockOracle:
    """Oracle backend over a MockLexicon; a pure function of its inputs."""

    def __init__(self, lexicon: MockLexicon) -> None:
        self.lexicon = lexicon

    def _entry(self, chunk_text: Optional[str]) -> tuple[Entry, ...]:
        if chunk_text is not None and chunk_text in self.lexicon.entries:
            return self.lexicon.entries[chunk_text]
        return self.lexicon.default_entry

    def _biased(self, entries: tuple[Entry, ...], template_id: str) -> list[Entry]:
        delta = self.lexicon.template_bias.get(template_id, 0.0)
        if not delta:
            return list(entries)
        return [(t, min(1.0, max(0.0, p + delta))) for t, p in entries]

    @staticmethod
    def _pad(entries: list[Entry], top_k: int) -> list[Entry]:
        # Fillers carry zero probability: they keep the distribution at
        # length top_k without injecting co-occurrence signal.
        if len(entries) >= top_k:
            return entries[:top_k]
        out = list(entries)
        present = {t for t, _ in entries}
        for token in FILLER_TOKENS:
            if len(out) >= top_k:
                break
            if token in present:
                continue
            out.append((token, 0.0))
        index = 0
        while len(out) < top_k:  # lexicon plus fillers still short
            out.append(("filler-%d" % index, 0.0))
            index += 1
        return out

    def fill(
        self,
        template_id: str,
        text: str,
        mask_count: int,
        top_k: int,
        chunk_text: Optional[str] = None,
        slot_count: int = DEFAULT_SLOT_COUNT,
    ) -> list[list[Entry]]:
        del text, slot_count  # the mock keys on the chunk text alone
        entries = self._biased(self._entry(chunk_text), template_id)
        if template_id == "T3" and mask_count == 2:
            return self._t3_masks(entries, top_k)
        return [self._pad(entries, top_k) for _ in range(mask_count)]

    def _t3_masks(self, entries: list[Entry], top_k: int) -> list[list[Entry]]:
        # Verbalize the lexicon entry as the two-slot "is [mask] [mask] entity"
        # reading: negatives answer ("not", "an"), positives ("a/an", type).
        if entries and entries[0][0] == NA_TOKEN:
            prob = entries[0][1]
            first = [("not", prob)]
            second = [("an", prob)]
        elif entries:
            token, prob = entries[0]
            first = [(article_for(token), prob)]
            second = list(entries)
        else:
            first, second = [], []
        return [self._pad(first, top_k), self._pad(second, top_k)]

    def finetune(self, records: Sequence[FineTuneRecord], epochs: int = 1) -> None:
        """Overwrite trained chunks' top entries with near-certain answers."""
        del epochs
        for record in sorted(records, key=lambda r: (r.chunk_text, r.label)):
            token = NA_TOKEN if record.label == NA_LABEL else record.label
            self.lexicon.entries[record.chunk_text] = ((token, FINETUNED_PROB),)
