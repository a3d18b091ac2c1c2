import math
import sys
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, IO, List, Optional, Sequence, Union

import numpy as np

from haar_averager.output.manifest import RunManifest

Destination = Union[str, Path, IO[str]]

SIGNIFICANT_DIGITS = 12


def format_float(value: float) -> str:
    """Render a float with 12 significant digits."""
    return f"{value:.{SIGNIFICANT_DIGITS}g}"


def normalize(value: Any) -> Any:
    """Convert numpy scalars, complex numbers and tuples to plain JSON-ready values.

    Finite floats are rounded to 12 significant digits.
    """
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if isinstance(value, float):
        return float(format_float(value)) if math.isfinite(value) else value
    if isinstance(value, complex):
        return {"re": normalize(value.real), "im": normalize(value.imag)}
    if isinstance(value, dict):
        return {str(k): normalize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [normalize(v) for v in value]
    return str(value)


class BaseWriter(ABC):
    """
    Abstract base class for output writers.

    A writer is opened on a path or an open text stream (``-`` means stdout),
    receives the run manifest, then one or more batches of records.
    """

    def __init__(self):
        self._stream: Optional[IO[str]] = None
        self._owns_stream = False
        self.path: Optional[Path] = None

    def _open_stream(self, destination: Destination) -> None:
        if isinstance(destination, (str, Path)) and str(destination) != "-":
            self.path = Path(destination)
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._stream = open(self.path, "w", encoding="utf-8", newline="")
            self._owns_stream = True
        elif isinstance(destination, (str, Path)):
            self._stream = sys.stdout
        else:
            self._stream = destination

    @abstractmethod
    def open(self, destination: Destination, fieldnames: Optional[Sequence[str]] = None) -> None:
        """
        Prepare the destination.

        Args:
            destination: File path, ``-`` for stdout, or a text stream.
            fieldnames: Column order for tabular formats; records may add
                further keys.
        """
        pass

    @abstractmethod
    def write_manifest(self, manifest: RunManifest) -> None:
        """Record the provenance of the file; called once, before any records."""
        pass

    @abstractmethod
    def write_records(self, records: List[Dict[str, Any]]) -> int:
        """
        Write a batch of result records.

        Returns:
            int: The count of records written.
        """
        pass

    @abstractmethod
    def close(self) -> None:
        """
        Flush and release the file handle.
        """
        pass

    def write_document(self, destination: Destination, manifest: RunManifest,
                       records: List[Dict[str, Any]], fieldnames: Optional[Sequence[str]] = None) -> int:
        """
        Open, write the manifest and the records, and close.

        Returns:
            int: The count of records written.
        """
        self.open(destination, fieldnames)
        try:
            self.write_manifest(manifest)
            return self.write_records(records)
        finally:
            self.close()
