"""Job data model for batch evaluations.

A job is one parameter point to evaluate (a kernel constant, a suite check,
a Monte-Carlo comparison). The orchestrator runs jobs and records their
outcome as a :class:`JobResult`.
"""

from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Dict, Optional


class JobStatus(Enum):
    """Status of an evaluation job."""
    PENDING = "PENDING"
    RUNNING = "RUNNING"
    COMPLETED = "COMPLETED"
    FAILED = "FAILED"
    CANCELLED = "CANCELLED"


@dataclass(frozen=True)
class EvaluationJob:
    """One evaluation in a batch.

    Two jobs are equal if their job_id values match. The id defaults to the
    label followed by the sorted parameters.
    """
    label: str
    params: Dict[str, Any]
    job_id: str = ""
    priority: int = 10
    status: JobStatus = JobStatus.PENDING
    created_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))
    updated_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))

    def __post_init__(self):
        if not self.job_id:
            rendered = ",".join(f"{k}={self.params[k]!r}" for k in sorted(self.params))
            object.__setattr__(self, "job_id", f"{self.label}[{rendered}]")

    def __eq__(self, other):
        if not isinstance(other, EvaluationJob):
            return False
        return self.job_id == other.job_id

    def __hash__(self):
        return hash(self.job_id)

    def to_dict(self) -> Dict[str, Any]:
        """Serialize the job to a dictionary."""
        return {
            "job_id": self.job_id,
            "label": self.label,
            "params": dict(self.params),
            "priority": self.priority,
            "status": self.status.value,
            "created_at": self.created_at.isoformat(),
            "updated_at": self.updated_at.isoformat(),
        }

    def with_status(self, status: JobStatus) -> "EvaluationJob":
        """Return a new job with the updated status."""
        return EvaluationJob(
            label=self.label,
            params=self.params,
            job_id=self.job_id,
            priority=self.priority,
            status=status,
            created_at=self.created_at,
            updated_at=datetime.now(timezone.utc),
        )


@dataclass(frozen=True)
class JobResult:
    """Outcome of one job: its value on success, an error message on failure."""
    job: EvaluationJob
    value: Any = None
    error: Optional[str] = None
    duration_seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.job.status is JobStatus.COMPLETED
