import csv
import json
from typing import Any, Dict, List, Optional, Sequence

from haar_averager.output.base import BaseWriter, Destination, format_float, normalize
from haar_averager.output.manifest import RunManifest


def manifest_line(manifest: RunManifest) -> str:
    """The ``# {...}`` comment line that opens every CSV file."""
    return "# " + json.dumps(manifest.to_dict(), separators=(",", ":"), sort_keys=True) + "\n"


class WriterClosedError(Exception):
    """Raised when attempting to write to a closed writer."""
    pass


class CsvWriter(BaseWriter):
    """
    CSV output writer.

    The first line is ``# `` followed by the compact JSON manifest, then the
    header row. Comma separated, '.' decimal point, '\\n' line ends, UTF-8.
    The header is written even when no records follow.
    """

    def __init__(self):
        super().__init__()
        self._fieldnames: List[str] = []
        self._writer = None
        self._header_written = False

    def open(self, destination: Destination, fieldnames: Optional[Sequence[str]] = None) -> None:
        self._open_stream(destination)
        self._fieldnames = list(fieldnames or [])
        self._writer = None
        self._header_written = False

    def write_manifest(self, manifest: RunManifest) -> None:
        if self._stream is None:
            raise WriterClosedError("Cannot write to a closed CsvWriter")
        self._stream.write(manifest_line(manifest))

    def _ensure_header(self, records: List[Dict[str, Any]]) -> None:
        if self._header_written:
            return
        for record in records:
            for key in record:
                if key not in self._fieldnames:
                    self._fieldnames.append(key)
        self._writer = csv.DictWriter(self._stream, fieldnames=self._fieldnames, lineterminator="\n",
                                      extrasaction="ignore")
        self._writer.writeheader()
        self._header_written = True

    def write_records(self, records: List[Dict[str, Any]]) -> int:
        """
        Write records as rows; floats get 12 significant digits and nested
        values are JSON-encoded.

        Raises:
            WriterClosedError: If the writer is closed.
        """
        if self._stream is None:
            raise WriterClosedError("Cannot write to a closed CsvWriter")
        self._ensure_header(records)
        for record in records:
            self._writer.writerow({k: self._cell(v) for k, v in record.items()})
        return len(records)

    @staticmethod
    def _cell(value: Any) -> Any:
        value = normalize(value)
        if isinstance(value, float):
            return format_float(value)
        if isinstance(value, (dict, list)):
            return json.dumps(value, separators=(",", ":"))
        return value

    def close(self) -> None:
        if self._stream is None:
            return
        if not self._header_written:
            self._ensure_header([])
        self._stream.flush()
        if self._owns_stream:
            self._stream.close()
        self._stream = None
        self._owns_stream = False
