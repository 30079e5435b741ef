"""Masked-LM backends: a deterministic trainable toy model and a
transformers-backed real model.

The toy model is a per-mask-position softmax regression over hashed
bag-of-words features.  It knows nothing about language but it is fast,
dependency-light, and its fine-tuning demonstrably raises answer-token
probabilities, which is all the protocol and loop tests need.  The real
backend serves an actual pre-trained masked LM and implements soft-slot
prompt tuning for the [s] markers.
"""

from __future__ import annotations

import zlib
from typing import Sequence

import numpy as np

from .schemas import MASK_MARKER, SLOT_MARKER

Entry = tuple[str, float]
Pair = tuple[str, Sequence[str]]  # (masked text, answer token per mask)

BASE_VOCAB = (
    "none", "a", "an", "not", "the", "entity", "thing", "item", "case",
    "diseases", "disorders", "conditions", "chemicals", "drugs", "substances",
    "people", "places", "companies", "numbers", "results",
)


class ToyMaskedLM:
    """Hashed bag-of-words softmax model, one weight matrix per mask slot."""

    name = "toy"

    def __init__(self, n_buckets: int = 256, max_tokens: int = 128, lr: float = 1.0):
        self.n_buckets = n_buckets
        self.max_tokens = max_tokens
        self.lr = lr
        self.vocab: list[str] = list(BASE_VOCAB)
        self.vocab_index = {t: i for i, t in enumerate(self.vocab)}
        self._weights: dict[int, np.ndarray] = {}

    def _ensure_token(self, token: str) -> int:
        if token not in self.vocab_index:
            self.vocab_index[token] = len(self.vocab)
            self.vocab.append(token)
            for position, matrix in self._weights.items():
                self._weights[position] = np.vstack(
                    [matrix, np.zeros((1, self.n_buckets))]
                )
        return self.vocab_index[token]

    def _matrix(self, position: int) -> np.ndarray:
        if position not in self._weights:
            self._weights[position] = np.zeros((len(self.vocab), self.n_buckets))
        return self._weights[position]

    def _tokenize(self, text: str) -> tuple[list[str], bool]:
        tokens = [
            t for t in text.split() if t not in (MASK_MARKER, SLOT_MARKER)
        ]
        truncated = len(tokens) > self.max_tokens
        return tokens[: self.max_tokens], truncated

    def _features(self, tokens: Sequence[str]) -> np.ndarray:
        phi = np.zeros(self.n_buckets)
        for token in tokens:
            phi[zlib.crc32(token.lower().encode("utf-8")) % self.n_buckets] += 1.0
        total = phi.sum()
        return phi / total if total else phi

    def _probs(self, position: int, phi: np.ndarray) -> np.ndarray:
        logits = self._matrix(position) @ phi
        logits = logits - logits.max()
        exp = np.exp(logits)
        return exp / exp.sum()

    def fill(
        self, text: str, mask_count: int, top_k: int
    ) -> tuple[list[list[Entry]], bool]:
        tokens, truncated = self._tokenize(text)
        phi = self._features(tokens)
        masks: list[list[Entry]] = []
        for position in range(mask_count):
            probs = self._probs(position, phi)
            order = np.argsort(-probs, kind="stable")[:top_k]
            masks.append([(self.vocab[i], float(probs[i])) for i in order])
        return masks, truncated

    def finetune(self, pairs: Sequence[Pair], epochs: int = 1) -> None:
        """Gradient steps on softmax cross-entropy of the answer tokens."""
        for pair_text, answers in pairs:
            for answer in answers:
                self._ensure_token(answer)
        for _ in range(epochs):
            for pair_text, answers in pairs:
                tokens, _ = self._tokenize(pair_text)
                phi = self._features(tokens)
                for position, answer in enumerate(answers):
                    matrix = self._matrix(position)
                    probs = self._probs(position, phi)
                    gradient = probs.copy()
                    gradient[self.vocab_index[answer]] -= 1.0
                    matrix -= self.lr * np.outer(gradient, phi)

    def answer_probability(self, text: str, answers: Sequence[str]) -> float:
        """Mean probability assigned to the answer tokens at their slots."""
        tokens, _ = self._tokenize(text)
        phi = self._features(tokens)
        values = []
        for position, answer in enumerate(answers):
            probs = self._probs(position, phi)
            index = self.vocab_index.get(answer)
            values.append(float(probs[index]) if index is not None else 0.0)
        return sum(values) / len(values)


class HFMaskedLM:
    """transformers-backed backend with soft-slot prompt embeddings.

    [mask] markers map to the tokenizer's mask token; the i-th [s] marker
    maps to an extra trainable token [slot<i>].  Slot embeddings reset at
    the start of every fine-tune job.
    """

    MAX_SLOTS = 16

    def __init__(self, model_name: str = "roberta-base", device: str = "cpu"):
        import torch
        from transformers import AutoModelForMaskedLM, AutoTokenizer

        self._torch = torch
        self.name = model_name
        self.device = device
        self.tokenizer = AutoTokenizer.from_pretrained(model_name)
        self.model = AutoModelForMaskedLM.from_pretrained(model_name)
        self.slot_tokens = ["[slot%d]" % i for i in range(self.MAX_SLOTS)]
        self.tokenizer.add_special_tokens(
            {"additional_special_tokens": self.slot_tokens}
        )
        self.model.resize_token_embeddings(len(self.tokenizer))
        self.model.to(device)
        self.model.eval()
        embeddings = self.model.get_input_embeddings().weight
        self._slot_ids = self.tokenizer.convert_tokens_to_ids(self.slot_tokens)
        self._initial_slot_embeddings = embeddings[self._slot_ids].detach().clone()

    @classmethod
    def available(cls, model_name: str = "roberta-base") -> bool:
        """True when the model is loadable: cached locally, or fetchable
        and downloads are allowed via PROMPT_SERVICE_FETCH=1."""
        import os
        from pathlib import Path

        hub_cache = Path(
            os.environ.get(
                "HF_HOME", os.path.expanduser("~/.cache/huggingface")
            )
        )
        fetch_allowed = os.environ.get("PROMPT_SERVICE_FETCH") == "1"
        if not hub_cache.exists() and not fetch_allowed:
            return False  # no cache and no download permission; skip the
            # costly transformers import outright
        try:
            from transformers import AutoTokenizer
        except ImportError:
            return False
        try:
            AutoTokenizer.from_pretrained(model_name, local_files_only=True)
            return True
        except Exception:
            pass
        if os.environ.get("PROMPT_SERVICE_FETCH") != "1":
            return False
        try:
            AutoTokenizer.from_pretrained(model_name)
            return True
        except Exception:
            return False

    def _prepare(self, text: str) -> str:
        out = text.replace(MASK_MARKER, self.tokenizer.mask_token)
        index = 0
        while SLOT_MARKER in out:
            out = out.replace(
                SLOT_MARKER, self.slot_tokens[min(index, self.MAX_SLOTS - 1)], 1
            )
            index += 1
        return out

    def _clean(self, token_id: int) -> str:
        return self.tokenizer.decode([token_id]).strip()

    def fill(
        self, text: str, mask_count: int, top_k: int
    ) -> tuple[list[list[Entry]], bool]:
        torch = self._torch
        prepared = self._prepare(text)
        max_length = self.tokenizer.model_max_length
        full = self.tokenizer(prepared, return_tensors="pt")
        truncated = full["input_ids"].shape[1] > max_length
        encoded = self.tokenizer(
            prepared, return_tensors="pt", truncation=True, max_length=max_length
        ).to(self.device)
        with torch.no_grad():
            logits = self.model(**encoded).logits[0]
        mask_id = self.tokenizer.mask_token_id
        positions = (encoded["input_ids"][0] == mask_id).nonzero(as_tuple=True)[0]
        masks: list[list[Entry]] = []
        for position in positions.tolist()[:mask_count]:
            probs = torch.softmax(logits[position], dim=-1)
            top = torch.topk(probs, k=top_k)
            masks.append(
                [
                    (self._clean(int(idx)), float(p))
                    for idx, p in zip(top.indices, top.values)
                ]
            )
        while len(masks) < mask_count:  # masks lost to truncation
            masks.append([])
        return masks, truncated

    def _answer_ids(self, answers: Sequence[str]) -> list[int]:
        ids = []
        for answer in answers:
            encoded = self.tokenizer(" " + answer, add_special_tokens=False)[
                "input_ids"
            ]
            ids.append(encoded[0])
        return ids

    def _reset_slots(self) -> None:
        with self._torch.no_grad():
            weight = self.model.get_input_embeddings().weight
            for row, initial in zip(self._slot_ids, self._initial_slot_embeddings):
                weight[row] = initial

    def finetune(
        self, pairs: Sequence[Pair], epochs: int = 1, lr: float = 3e-5
    ) -> None:
        torch = self._torch
        self._reset_slots()
        self.model.train()
        optimizer = torch.optim.AdamW(self.model.parameters(), lr=lr)
        mask_id = self.tokenizer.mask_token_id
        max_length = self.tokenizer.model_max_length
        try:
            for _ in range(epochs):
                for pair_text, answers in pairs:
                    prepared = self._prepare(pair_text)
                    encoded = self.tokenizer(
                        prepared,
                        return_tensors="pt",
                        truncation=True,
                        max_length=max_length,
                    ).to(self.device)
                    labels = torch.full_like(encoded["input_ids"], -100)
                    positions = (encoded["input_ids"][0] == mask_id).nonzero(
                        as_tuple=True
                    )[0]
                    answer_ids = self._answer_ids(answers)
                    for position, answer_id in zip(positions.tolist(), answer_ids):
                        labels[0, position] = answer_id
                    loss = self.model(**encoded, labels=labels).loss
                    optimizer.zero_grad()
                    loss.backward()
                    optimizer.step()
        finally:
            self.model.eval()

    def answer_probability(self, text: str, answers: Sequence[str]) -> float:
        torch = self._torch
        prepared = self._prepare(text)
        encoded = self.tokenizer(
            prepared,
            return_tensors="pt",
            truncation=True,
            max_length=self.tokenizer.model_max_length,
        ).to(self.device)
        with torch.no_grad():
            logits = self.model(**encoded).logits[0]
        mask_id = self.tokenizer.mask_token_id
        positions = (encoded["input_ids"][0] == mask_id).nonzero(as_tuple=True)[0]
        answer_ids = self._answer_ids(answers)
        values = []
        for position, answer_id in zip(positions.tolist(), answer_ids):
            probs = torch.softmax(logits[position], dim=-1)
            values.append(float(probs[answer_id]))
        return sum(values) / len(values) if values else 0.0


def backend_from_name(name: str, device: str = "cpu"):
    if name == "toy":
        return ToyMaskedLM()
    return HFMaskedLM(model_name=name, device=device)
