from .config import ExperimentConfig, ValidationError
from .runner import ResultRecord, run, summarize

__all__ = ["ExperimentConfig", "ResultRecord", "ValidationError", "run", "summarize"]
