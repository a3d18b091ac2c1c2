"""Provenance record embedded in every output file."""

from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, Mapping, Optional

from haar_averager import __version__


@dataclass(frozen=True)
class RunManifest:
    """What produced an output file.

    Re-running with the same subcommand, flags and seeds reproduces the file
    except for the timestamp.
    """
    subcommand: str
    flags: Dict[str, Any] = field(default_factory=dict)
    version: str = __version__
    seeds: Dict[str, int] = field(default_factory=dict)
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    @classmethod
    def create(cls, subcommand: str, flags: Mapping[str, Any],
               seeds: Optional[Mapping[str, int]] = None) -> "RunManifest":
        """Build a manifest, dropping flags that were not given."""
        return cls(
            subcommand=subcommand,
            flags={k: _plain(v) for k, v in sorted(flags.items()) if v is not None},
            seeds=dict(seeds or {}),
        )

    def to_dict(self, include_timestamp: bool = True) -> Dict[str, Any]:
        data = {
            "subcommand": self.subcommand,
            "flags": dict(self.flags),
            "version": self.version,
            "seeds": dict(self.seeds),
        }
        if include_timestamp:
            data["timestamp"] = self.timestamp
        return data


def _plain(value: Any) -> Any:
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, complex):
        return str(value)
    return value
