"""Dense CSV grids of complex step-function values.

Layout, after optional ``#`` comment lines::

    nx,ny,x0,y0,h
    4,4,0,0,0.25
    1.5,0
    -2,0.25
    ...

The second line gives the grid size, the lower-left corner and the cell
side in lattice coordinates. The ``nx * ny`` rows that follow are ``re,im``
pairs in row-major order (``ix`` varies fastest). The names line may be
omitted on input; it is always written.
"""

import csv
from pathlib import Path
from typing import IO, Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from haar_averager.engine.basis import StepFunction
from haar_averager.output.base import BaseWriter, Destination, format_float
from haar_averager.output.csv_writer import WriterClosedError, manifest_line
from haar_averager.output.manifest import RunManifest

GRID_HEADER = ("nx", "ny", "x0", "y0", "h")


class GridFormatError(ValueError):
    """A grid file that does not follow the dense layout."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.message = message
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


def _rows(stream: IO[str]) -> Iterator[Tuple[int, List[str]]]:
    for number, line in enumerate(stream, start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        yield number, [cell.strip() for cell in next(csv.reader([line], skipinitialspace=True))]


def _number(cell: str, line: int, integer: bool = False) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise GridFormatError(f"expected a number, got {cell!r}", line) from None
    if integer:
        if value != int(value):
            raise GridFormatError(f"expected an integer, got {cell!r}", line)
        return int(value)
    return value


def _parse(stream: IO[str]) -> StepFunction:
    rows = list(_rows(stream))
    if rows and tuple(c.lower() for c in rows[0][1]) == GRID_HEADER:
        rows = rows[1:]
    if not rows:
        raise GridFormatError("missing the nx,ny,x0,y0,h line")
    line, layout = rows[0]
    if len(layout) != len(GRID_HEADER):
        raise GridFormatError(f"expected {','.join(GRID_HEADER)}, got {len(layout)} fields", line)
    nx, ny = (_number(c, line, integer=True) for c in layout[:2])
    x0, y0, h = (_number(c, line) for c in layout[2:])
    if nx != ny:
        raise GridFormatError(f"grids must be square, got nx={nx} ny={ny}", line)

    data = rows[1:]
    if len(data) != nx * ny:
        raise GridFormatError(f"expected {nx * ny} re,im rows, got {len(data)}")
    values = np.empty(nx * ny, dtype=complex)
    for k, (line, cells) in enumerate(data):
        if len(cells) != 2:
            raise GridFormatError(f"expected re,im, got {len(cells)} fields", line)
        values[k] = complex(_number(cells[0], line), _number(cells[1], line))
    try:
        return StepFunction(values.reshape(ny, nx), (x0, y0), h)
    except ValueError as e:
        raise GridFormatError(str(e)) from None


def read_grid(source: Union[str, Path, IO[str]]) -> StepFunction:
    """Parse a dense grid file (or open text stream) into a box step function.

    Raises:
        GridFormatError: the layout line or a value row is malformed, the
            row count is off, or the grid is not square with a power-of-2 side.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8", newline="") as f:
            return _parse(f)
    return _parse(source)


class GridWriter(BaseWriter):
    """Writes one step function in the dense layout, after the manifest line."""

    def __init__(self):
        super().__init__()
        self._csv = None

    def open(self, destination: Destination, fieldnames: Optional[Sequence[str]] = None) -> None:
        self._open_stream(destination)
        self._csv = csv.writer(self._stream, lineterminator="\n")

    def write_manifest(self, manifest: RunManifest) -> None:
        if self._stream is None:
            raise WriterClosedError("Cannot write to a closed GridWriter")
        self._stream.write(manifest_line(manifest))

    def write_layout(self, f: StepFunction) -> None:
        if self._stream is None:
            raise WriterClosedError("Cannot write to a closed GridWriter")
        if f.dim != 2 or f.triangular:
            raise ValueError(f"dense grids hold planar box step functions, got a {f.dim}-D grid")
        x0, y0 = f.origin
        self._csv.writerow(GRID_HEADER)
        self._csv.writerow([f.n, f.n, format_float(x0), format_float(y0), format_float(f.h)])

    def write_records(self, records: List[Dict[str, Any]]) -> int:
        if self._stream is None:
            raise WriterClosedError("Cannot write to a closed GridWriter")
        for record in records:
            self._csv.writerow([format_float(float(record["re"])), format_float(float(record["im"]))])
        return len(records)

    def close(self) -> None:
        if self._stream is None:
            return
        self._stream.flush()
        if self._owns_stream:
            self._stream.close()
        self._stream = None
        self._owns_stream = False
        self._csv = None


def write_grid(destination: Destination, manifest: RunManifest, f: StepFunction) -> int:
    """Write ``f`` in the dense layout; returns the number of value rows."""
    writer = GridWriter()
    writer.open(destination)
    try:
        writer.write_manifest(manifest)
        writer.write_layout(f)
        return writer.write_records([{"re": v.real, "im": v.imag} for v in f.values.ravel()])
    finally:
        writer.close()
