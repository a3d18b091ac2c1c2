from typing import Dict, Type

from .base import BaseWriter, format_float, normalize
from .csv_writer import CsvWriter, WriterClosedError
from .json_writer import JsonWriter
from .manifest import RunManifest


class UnsupportedFormatError(Exception):
    """Raised when an unsupported output format is requested."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(message)


# Registry of available writers
_WRITERS: Dict[str, Type[BaseWriter]] = {
    "csv": CsvWriter,
    "json": JsonWriter,
}


def register_writer(format_name: str, writer_class: Type[BaseWriter]) -> None:
    """
    Registers a new output writer class for a specific format.

    Args:
        format_name: The name of the format (e.g., 'json', 'csv').
        writer_class: The BaseWriter subclass to register.
    """
    _WRITERS[format_name] = writer_class


def get_writer(fmt: str) -> BaseWriter:
    """
    Factory function for the writer of a format.

    Raises:
        UnsupportedFormatError: If the requested format is not registered.
    """
    if fmt not in _WRITERS:
        raise UnsupportedFormatError(f"Unsupported output format: {fmt}")
    return _WRITERS[fmt]()


__all__ = [
    "BaseWriter", "CsvWriter", "JsonWriter", "RunManifest", "WriterClosedError",
    "UnsupportedFormatError", "format_float", "get_writer", "normalize", "register_writer",
]
