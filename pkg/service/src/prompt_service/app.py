"""HTTP surface of the fill-mask service.

Endpoints:
  POST /fill-mask  {template_id, text, mask_count, top_k[, slot_count]}
                   -> {masks: [[{token, prob}, ...], ...], truncated}
  POST /fine-tune  {pairs: [{text, answer_tokens}, ...], epochs} -> {job_id}
  GET  /fine-tune/{job_id} -> {status}
  GET  /health -> {status, backend}

Environment: PROMPT_SERVICE_MODEL ("toy" or a HF model name, default
roberta-base), PROMPT_SERVICE_DEVICE, PROMPT_SERVICE_PORT.
"""

from __future__ import annotations

import os

from fastapi import FastAPI, HTTPException

from .jobs import JobRunner
from .models import backend_from_name
from .schemas import (
    MASK_MARKER,
    FillMaskRequest,
    FillMaskResponse,
    FineTuneRequest,
    FineTuneSubmitResponse,
    HealthResponse,
    JobStatusResponse,
    MaskEntry,
)

DEFAULT_MODEL = "roberta-base"


def create_app(backend=None) -> FastAPI:
    if backend is None:
        backend = backend_from_name(
            os.environ.get("PROMPT_SERVICE_MODEL", DEFAULT_MODEL),
            device=os.environ.get("PROMPT_SERVICE_DEVICE", "cpu"),
        )
    app = FastAPI(title="prompt-service", version="0.1.0")
    runner = JobRunner(backend.finetune)
    app.state.backend = backend
    app.state.runner = runner

    @app.post("/fill-mask", response_model=FillMaskResponse)
    def fill_mask(request: FillMaskRequest) -> FillMaskResponse:
        marker_count = request.text.count(MASK_MARKER)
        if marker_count != request.mask_count:
            raise HTTPException(
                status_code=400,
                detail="text contains %d mask markers but mask_count is %d"
                % (marker_count, request.mask_count),
            )
        masks, truncated = backend.fill(
            request.text, request.mask_count, request.top_k
        )
        return FillMaskResponse(
            masks=[
                [MaskEntry(token=t, prob=p) for t, p in mask] for mask in masks
            ],
            truncated=truncated,
        )

    @app.post("/fine-tune", response_model=FineTuneSubmitResponse)
    def fine_tune(request: FineTuneRequest) -> FineTuneSubmitResponse:
        if all(not pair.is_negative() for pair in request.pairs):
            raise HTTPException(
                status_code=400,
                detail="fine-tuning needs negative pairs; a positives-only "
                "payload would collapse the mask distribution",
            )
        pairs = [(pair.text, tuple(pair.answer_tokens)) for pair in request.pairs]
        job = runner.submit(pairs, request.epochs)
        return FineTuneSubmitResponse(job_id=job.job_id)

    @app.get("/fine-tune/{job_id}", response_model=JobStatusResponse)
    def job_status(job_id: str) -> JobStatusResponse:
        job = runner.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail="unknown job id %s" % job_id)
        return JobStatusResponse(status=job.status)

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", backend=getattr(backend, "name", "?"))

    return app


def main() -> None:
    import uvicorn

    port = int(os.environ.get("PROMPT_SERVICE_PORT", "8756"))
    uvicorn.run(create_app(), host="0.0.0.0", port=port)


if __name__ == "__main__":
    main()
