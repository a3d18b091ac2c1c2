"""Batch evaluation: job model and the thread-pool orchestrator."""

from haar_averager.core.job import EvaluationJob, JobResult, JobStatus
from haar_averager.core.orchestrator import Orchestrator, RunSummary, resolve_threads

__all__ = ["EvaluationJob", "JobResult", "JobStatus", "Orchestrator", "RunSummary", "resolve_threads"]
