"""Wire-format models for the fill-mask service.

Field order here fixes the JSON key order of responses, which the protocol
contract fixtures pin byte-for-byte.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field

TEMPLATE_IDS = ("T1", "T2", "T3", "T4")

MASK_MARKER = "[mask]"
SLOT_MARKER = "[s]"

#: Answer verbalizations that mark a training pair as negative.
NEGATIVE_ANSWERS = (("not", "an"), ("none",))


class FillMaskRequest(BaseModel):
    template_id: Literal["T1", "T2", "T3", "T4"]
    text: str = Field(min_length=1)
    mask_count: int = Field(ge=1, le=8)
    top_k: int = Field(ge=1, le=200)
    slot_count: int = Field(default=4, ge=1, le=16)


class MaskEntry(BaseModel):
    token: str
    prob: float


class FillMaskResponse(BaseModel):
    masks: list[list[MaskEntry]]
    truncated: bool = False


class FineTunePair(BaseModel):
    text: str = Field(min_length=1)
    answer_tokens: list[str] = Field(min_length=1)

    def is_negative(self) -> bool:
        return tuple(self.answer_tokens) in NEGATIVE_ANSWERS


class FineTuneRequest(BaseModel):
    pairs: list[FineTunePair] = Field(min_length=1)
    epochs: int = Field(default=1, ge=1, le=50)


class FineTuneSubmitResponse(BaseModel):
    job_id: str


class JobStatusResponse(BaseModel):
    status: Literal["queued", "running", "done", "failed"]


class HealthResponse(BaseModel):
    status: str
    backend: str
