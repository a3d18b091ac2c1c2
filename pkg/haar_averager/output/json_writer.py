import json
from typing import Any, Dict, List, Optional, Sequence

from haar_averager.output.base import BaseWriter, Destination, normalize
from haar_averager.output.csv_writer import WriterClosedError
from haar_averager.output.manifest import RunManifest


class JsonWriter(BaseWriter):
    """
    JSON output writer: ``{"manifest": ..., "data": ...}`` plus a trailing newline.

    ``data`` is the list of written records, or the single object passed to
    :meth:`write_object`.
    """

    def __init__(self):
        super().__init__()
        self._manifest: Optional[Dict[str, Any]] = None
        self._data: Any = None

    def open(self, destination: Destination, fieldnames: Optional[Sequence[str]] = None) -> None:
        self._open_stream(destination)
        self._manifest = None
        self._data = []

    def write_manifest(self, manifest: RunManifest) -> None:
        self._manifest = manifest.to_dict()

    def write_records(self, records: List[Dict[str, Any]]) -> int:
        if self._stream is None:
            raise WriterClosedError("Cannot write to a closed JsonWriter")
        if not isinstance(self._data, list):
            raise ValueError("write_records cannot follow write_object")
        self._data.extend(records)
        return len(records)

    def write_object(self, data: Dict[str, Any]) -> None:
        """Use ``data`` as the document body instead of a record list."""
        if self._stream is None:
            raise WriterClosedError("Cannot write to a closed JsonWriter")
        self._data = data

    def close(self) -> None:
        if self._stream is None:
            return
        document = {"manifest": self._manifest, "data": normalize(self._data)}
        self._stream.write(json.dumps(document, indent=2) + "\n")
        self._stream.flush()
        if self._owns_stream:
            self._stream.close()
        self._stream = None
        self._owns_stream = False
