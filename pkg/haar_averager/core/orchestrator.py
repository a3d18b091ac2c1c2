"""Runs batches of evaluation jobs over a thread pool.

Error lifecycle:
1. Each job runs inside its own try/except; an exception marks that job
   FAILED, is logged with its traceback, and the batch goes on.
2. Results come back in submission order whatever order the workers finish in.
3. A summary block is logged after every batch and kept as ``last_run_summary``.
"""

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

from haar_averager.core.job import EvaluationJob, JobResult, JobStatus

logger = logging.getLogger(__name__)

THREADS_ENV = "HAAR_AVERAGER_THREADS"


def resolve_threads(cli_value: Optional[int] = None) -> int:
    """Worker count: the CLI flag, else HAAR_AVERAGER_THREADS, else the CPU count."""
    if cli_value is not None:
        if cli_value < 1:
            raise ValueError(f"--threads must be >= 1, got {cli_value}")
        return cli_value
    env_value = os.environ.get(THREADS_ENV)
    if env_value:
        try:
            threads = int(env_value)
        except ValueError:
            logger.warning(f"Ignoring {THREADS_ENV}={env_value!r}: not an integer")
        else:
            if threads >= 1:
                return threads
            logger.warning(f"Ignoring {THREADS_ENV}={env_value!r}: must be >= 1")
    return os.cpu_count() or 1


@dataclass
class RunSummary:
    """Counts and failures of one batch."""
    name: str
    total_jobs: int
    jobs_succeeded: int
    jobs_failed: int
    duration_seconds: float
    failed_jobs: Dict[str, str] = field(default_factory=dict)


class Orchestrator:
    """Runs jobs with fault isolation and logs a summary per batch."""

    def __init__(self, threads: Optional[int] = None, name: str = "haar-averager"):
        self.threads = resolve_threads(threads)
        self.name = name
        self.last_run_summary: Optional[RunSummary] = None

    def run(self, jobs: Sequence[EvaluationJob], task: Callable[[EvaluationJob], Any],
            describe: Optional[Callable[[JobResult], str]] = None) -> List[JobResult]:
        """Run ``task`` on every job and return the results in job order.

        Args:
            jobs: The batch.
            task: Called with each job; its return value becomes the result value.
            describe: Optional one-line rendering of a successful result for
                the summary block.
        """
        start = time.perf_counter()
        logger.info(f"Running {len(jobs)} job(s) for {self.name} on {self.threads} thread(s)")
        if self.threads == 1 or len(jobs) <= 1:
            results = [self._execute_job(job, task) for job in jobs]
        else:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                results = list(pool.map(lambda job: self._execute_job(job, task), jobs))
        self._generate_and_log_summary(results, time.perf_counter() - start, describe)
        return results

    def _execute_job(self, job: EvaluationJob, task: Callable[[EvaluationJob], Any]) -> JobResult:
        logger.debug(f"Executing job: {job.job_id}")
        running = job.with_status(JobStatus.RUNNING)
        start = time.perf_counter()
        try:
            value = task(running)
        except Exception as exc:
            error_msg = f"Job {job.job_id} failed: {type(exc).__name__}: {exc}"
            logger.error(error_msg, exc_info=True)
            return JobResult(running.with_status(JobStatus.FAILED), None, error_msg, time.perf_counter() - start)
        return JobResult(running.with_status(JobStatus.COMPLETED), value, None, time.perf_counter() - start)

    def _generate_and_log_summary(self, results: List[JobResult], duration: float,
                                  describe: Optional[Callable[[JobResult], str]]) -> None:
        succeeded = sum(1 for r in results if r.ok)
        summary = RunSummary(
            name=self.name,
            total_jobs=len(results),
            jobs_succeeded=succeeded,
            jobs_failed=len(results) - succeeded,
            duration_seconds=duration,
            failed_jobs={r.job.job_id: r.error for r in results if not r.ok},
        )

        lines = [
            f"========== {self.name} Run Summary ==========",
            f"Duration:       {duration:.1f}s",
            f"Jobs Attempted: {summary.total_jobs}",
            f"Jobs Succeeded: {summary.jobs_succeeded}",
            f"Jobs Failed:    {summary.jobs_failed}",
        ]
        if describe is not None or summary.jobs_failed:
            lines += ["", "Per-Job Results:"]
            for r in results:
                if not r.ok:
                    lines.append(f"    ✗ {r.job.job_id} : {r.error}")
                elif describe is not None:
                    lines.append(f"    ✓ {r.job.job_id} : {describe(r)}")
        lines.append("=" * len(lines[0]))

        logger.info("\n".join(lines))
        self.last_run_summary = summary
