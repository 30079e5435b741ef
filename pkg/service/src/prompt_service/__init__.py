"""Fill-mask and fine-tune HTTP service backing the rule-induction oracle."""

from .app import create_app
from .jobs import FineTuneJob, JobRunner
from .models import HFMaskedLM, ToyMaskedLM, backend_from_name

__version__ = "0.1.0"

__all__ = [
    "FineTuneJob",
    "HFMaskedLM",
    "JobRunner",
    "ToyMaskedLM",
    "backend_from_name",
    "create_app",
]
