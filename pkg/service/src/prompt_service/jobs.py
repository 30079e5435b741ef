"""Fine-tune job registry: sequential ids, one worker, monotone statuses."""

from __future__ import annotations

import logging
import queue
import threading
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

log = logging.getLogger(__name__)

QUEUED = "queued"
RUNNING = "running"
DONE = "done"
FAILED = "failed"


@dataclass
class FineTuneJob:
    job_id: str
    status: str
    pair_count: int
    epochs: int
    error: Optional[str] = None


class JobRunner:
    """Runs fine-tune jobs one at a time so model weights stay well-defined."""

    def __init__(self, train: Callable[[Sequence, int], None]):
        self._train = train
        self._jobs: dict[str, FineTuneJob] = {}
        self._queue: "queue.Queue" = queue.Queue()
        self._lock = threading.Lock()
        self._counter = 0
        self._worker: Optional[threading.Thread] = None

    def _ensure_worker(self) -> None:
        if self._worker is None or not self._worker.is_alive():
            self._worker = threading.Thread(target=self._loop, daemon=True)
            self._worker.start()

    def submit(self, pairs: Sequence, epochs: int) -> FineTuneJob:
        with self._lock:
            self._counter += 1
            job = FineTuneJob(
                job_id="job-%04d" % self._counter,
                status=QUEUED,
                pair_count=len(pairs),
                epochs=epochs,
            )
            self._jobs[job.job_id] = job
        self._queue.put((job, pairs, epochs))
        self._ensure_worker()
        return job

    def get(self, job_id: str) -> Optional[FineTuneJob]:
        with self._lock:
            return self._jobs.get(job_id)

    def _loop(self) -> None:
        while True:
            job, pairs, epochs = self._queue.get()
            with self._lock:
                job.status = RUNNING
            try:
                self._train(pairs, epochs)
            except Exception as exc:  # surface through the status endpoint
                log.exception("fine-tune job %s failed", job.job_id)
                with self._lock:
                    job.status = FAILED
                    job.error = str(exc)
            else:
                with self._lock:
                    job.status = DONE
            finally:
                self._queue.task_done()
