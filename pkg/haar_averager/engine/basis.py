"""Haar systems on intervals, squares, parallelograms, triangles and cubes.

A system is a reference cell (interval, square, triangle or cube) with its
dyadic children, a list of atom kinds given by their constant values on the
children, and an affine transport taking reference coordinates to the
physical plane. Cells of the lattice are addressed by :class:`LatticeId`;
a cell of scale ``n`` has reference step ``2**n``. Triangle cells come in two
orientations, a "down" cell being the point reflection of an "up" one.

Step functions are stored on grids in *reference* coordinates; the transport
only enters point evaluation and measures. All inner products are exact sums
over grid leaves, which all carry the same measure.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable, Dict, Iterator, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
TRIANGULAR_TAGS = frozenset({"triangle"})


class UnsupportedParams(ValueError):
    """Raised when a system or kernel is requested outside its parameter domain."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(message)


class ResolutionMismatch(Exception):
    """Raised when a step function does not fit the lattice it is decomposed on."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(message)


class Orientation(Enum):
    UP = "up"
    DOWN = "down"


@dataclass(frozen=True)
class ReferenceCell:
    """Reference cell with its dyadic children.

    Child ``c`` is the image of the reference cell under
    ``xi -> child_offsets[c] + child_signs[c] / 2 * xi``.
    """
    name: str
    dim: int
    measure: float
    child_offsets: Tuple[Tuple[float, ...], ...]
    child_signs: Tuple[int, ...]
    triangular: bool = False

    @property
    def n_children(self) -> int:
        return len(self.child_signs)

    @property
    def centroid(self) -> np.ndarray:
        if self.triangular:
            return np.array([1.0 / 3.0, 1.0 / 3.0])
        return np.full(self.dim, 0.5)

    @property
    def vertices(self) -> np.ndarray:
        if self.triangular:
            return np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        if self.dim == 2:
            return np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        raise ValueError(f"{self.name} cells have no polygon outline")

    def locate_child(self, eta: np.ndarray) -> np.ndarray:
        """Index of the child holding each point, -1 outside the half-open cell.

        Args:
            eta: Points in reference coordinates, shape (n, dim).
        """
        eta = np.asarray(eta, dtype=float).reshape(-1, self.dim)
        if self.triangular:
            x, y = eta[:, 0], eta[:, 1]
            inside = (x >= 0) & (y >= 0) & (x + y < 1)
            child = np.where(x + y < 0.5, 0, np.where(x >= 0.5, 1, np.where(y >= 0.5, 2, 3)))
        else:
            inside = np.all((eta >= 0) & (eta < 1), axis=1)
            child = (eta >= 0.5).astype(int) @ (1 << np.arange(self.dim))
        return np.where(inside, child, -1)

    def child_polygons(self) -> List[np.ndarray]:
        """Outlines of the children in reference coordinates (planar cells only)."""
        base = self.vertices
        return [np.asarray(off) + sign / 2.0 * base
                for off, sign in zip(self.child_offsets, self.child_signs)]


INTERVAL = ReferenceCell("interval", 1, 1.0, ((0.0,), (0.5,)), (1, 1))
SQUARE = ReferenceCell(
    "square", 2, 1.0,
    ((0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5)),
    (1, 1, 1, 1),
)
# children: corner at the origin, at (1/2, 0), at (0, 1/2), and the middle one turned down
TRIANGLE = ReferenceCell(
    "triangle", 2, 0.5,
    ((0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5)),
    (1, 1, 1, -1),
    triangular=True,
)
# subcube k = 4 z + 2 y + x
CUBE = ReferenceCell(
    "cube", 3, 1.0,
    tuple((float(k & 1) / 2, float((k >> 1) & 1) / 2, float((k >> 2) & 1) / 2) for k in range(8)),
    (1,) * 8,
)


@dataclass(frozen=True)
class LatticeId:
    """A cell of a dyadic lattice.

    Attributes:
        system: Tag of the owning system.
        scale: n, the cell has reference step 2**n.
        index: Integer position; an up cell has origin ``index * 2**n``, a
            down cell is the reflection of the cell ending at ``(index + 1) * 2**n``.
        orientation: Required for triangle systems, forbidden otherwise.
    """
    system: str
    scale: int
    index: Tuple[int, ...]
    orientation: Optional[Orientation] = None

    def __post_init__(self):
        object.__setattr__(self, "index", tuple(int(i) for i in self.index))
        if self.system in TRIANGULAR_TAGS and self.orientation is None:
            raise ValueError(f"{self.system} cells require an orientation")
        if self.system not in TRIANGULAR_TAGS and self.orientation is not None:
            raise ValueError(f"{self.system} cells do not take an orientation")

    def frame(self) -> Tuple[np.ndarray, float]:
        """Origin and signed step of the map from the reference cell."""
        step = 2.0 ** self.scale
        idx = np.asarray(self.index, dtype=float)
        if self.orientation is Orientation.DOWN:
            return (idx + 1.0) * step, -step
        return idx * step, step


def _cell_from_frame(tag: str, origin: np.ndarray, signed_step: float, scale: int) -> LatticeId:
    size = abs(signed_step)
    index = np.rint(origin / size).astype(int)
    if signed_step < 0:
        return LatticeId(tag, scale, tuple(index - 1), Orientation.DOWN)
    orientation = Orientation.UP if tag in TRIANGULAR_TAGS else None
    return LatticeId(tag, scale, tuple(index), orientation)


@dataclass(frozen=True)
class HaarSystem:
    """A Haar system: reference cell, atom kinds, filtration stages, transport.

    ``patterns[j][c]`` is the value of kind ``kinds[j]`` on child ``c`` of a
    reference cell, normalized to unit L2 norm on that cell.
    """
    tag: str
    reference: ReferenceCell
    kinds: Tuple[str, ...]
    patterns: Tuple[Tuple[float, ...], ...]
    stages: Tuple[Tuple[str, ...], ...]
    transport: Tuple[Tuple[float, ...], ...]
    params: Tuple[Tuple[str, float], ...] = ()

    @property
    def dim(self) -> int:
        return self.reference.dim

    @property
    def n_children(self) -> int:
        return self.reference.n_children

    @property
    def pattern_matrix(self) -> np.ndarray:
        return np.asarray(self.patterns, dtype=float)

    @property
    def transport_matrix(self) -> np.ndarray:
        return np.asarray(self.transport, dtype=float)

    @property
    def inverse_transport(self) -> np.ndarray:
        return np.linalg.inv(self.transport_matrix)

    @property
    def jacobian(self) -> float:
        return abs(float(np.linalg.det(self.transport_matrix)))

    def kind_index(self, kind: str) -> int:
        try:
            return self.kinds.index(kind)
        except ValueError:
            raise KeyError(f"{self.tag} has no atom kind {kind!r}; kinds: {self.kinds}") from None

    def root_cell(self, scale: int = 0, index: Optional[Sequence[int]] = None,
                  orientation: Optional[Orientation] = None) -> LatticeId:
        """A lattice cell; by default the unit reference cell at the origin."""
        if orientation is None and self.reference.triangular:
            orientation = Orientation.UP
        return LatticeId(self.tag, scale, tuple(index or (0,) * self.dim), orientation)

    def cell_measure(self, cell: LatticeId) -> float:
        return self.reference.measure * self.jacobian * (2.0 ** cell.scale) ** self.dim

    def to_physical(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.transport_matrix.T

    def to_reference(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.inverse_transport.T

    def describe(self) -> Dict[str, float]:
        return dict(self.params)


@dataclass(frozen=True)
class HaarAtom:
    """One normalized Haar function: a lattice cell and a kind."""
    cell: LatticeId
    kind: str
    system: HaarSystem = field(repr=False)

    @property
    def transport(self) -> Tuple[Tuple[float, ...], ...]:
        return self.system.transport

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return eval_atom(self, points)


# ---------------------------------------------------------------------------
# System factories
# ---------------------------------------------------------------------------

_NEW_PATTERNS = (
    (-1.0, -1.0, 1.0, 1.0),
    (0.0, 0.0, -SQRT2, SQRT2),
    (-SQRT2, SQRT2, 0.0, 0.0),
)
_IDENTITY_2D = ((1.0, 0.0), (0.0, 1.0))


def _check_parallelogram(b: float, phi: float) -> None:
    if not b > 0:
        raise UnsupportedParams(f"b must be > 0, got {b}")
    if not 0 < phi < math.pi:
        raise UnsupportedParams(f"phi must lie in (0, pi), got {phi}")


def _shear(b: float, phi: float) -> Tuple[Tuple[float, ...], ...]:
    if phi == math.pi / 2:
        return ((1.0, 0.0), (0.0, b))
    return ((1.0, b * math.cos(phi)), (0.0, b * math.sin(phi)))


def one_d() -> HaarSystem:
    return HaarSystem("one-d", INTERVAL, ("interval",), ((-1.0, 1.0),), (("interval",),), ((1.0,),))


def h_orig() -> HaarSystem:
    """Tensor Haar system with the three functions h1, h2, h3 per square."""
    return HaarSystem(
        "orig", SQUARE, ("1", "2", "3"),
        ((-1.0, -1.0, 1.0, 1.0), (-1.0, 1.0, -1.0, 1.0), (1.0, -1.0, -1.0, 1.0)),
        (("1", "2", "3"),),
        _IDENTITY_2D,
    )


def h_new() -> HaarSystem:
    """h0 splits the square into halves, h+ and h- live on the upper and lower halves."""
    return HaarSystem("new", SQUARE, ("0", "+", "-"), _NEW_PATTERNS, (("0",), ("+", "-")), _IDENTITY_2D)


def parallelogram(b: float = SQRT2, phi: float = math.pi / 2) -> HaarSystem:
    """The ℋ_new pattern on parallelograms with sides 1 and b and inclination phi."""
    _check_parallelogram(b, phi)
    return HaarSystem("parallelogram", SQUARE, ("0", "+", "-"), _NEW_PATTERNS, (("0",), ("+", "-")),
                      _shear(b, phi), (("b", float(b)), ("phi", float(phi))))


def diagonal(b: float = 1.0, phi: float = math.pi / 2) -> HaarSystem:
    """Diagonal system: h0 = h3, h± = (h1 ± h2)/√2, carried by the same shear."""
    _check_parallelogram(b, phi)
    return HaarSystem(
        "diagonal", SQUARE, ("0", "+", "-"),
        ((1.0, -1.0, -1.0, 1.0), (-SQRT2, 0.0, 0.0, SQRT2), (0.0, -SQRT2, SQRT2, 0.0)),
        (("0",), ("+", "-")),
        _shear(b, phi), (("b", float(b)), ("phi", float(phi))),
    )


def triangle(a: float = 0.0, b: float = 1.0) -> HaarSystem:
    """Triangle system transported by U(x, y) = (x + a y, b y).

    h0 is +√2 on the corner child and the middle child, -√2 on the two
    outer children; h+ and h- take the values ±2.
    """
    if not b > 0:
        raise UnsupportedParams(f"b must be > 0, got {b}")
    return HaarSystem(
        "triangle", TRIANGLE, ("0", "+", "-"),
        ((SQRT2, -SQRT2, -SQRT2, SQRT2), (0.0, -2.0, 2.0, 0.0), (2.0, 0.0, 0.0, -2.0)),
        (("0",), ("+", "-")),
        ((1.0, float(a)), (0.0, float(b))), (("a", float(a)), ("b", float(b))),
    )


def cube() -> HaarSystem:
    """Seven functions per cube: the z halves, the y quarters, the x eighths."""
    r2 = SQRT2
    return HaarSystem(
        "cube", CUBE, ("1", "2", "3", "4", "5", "6", "7"),
        (
            (1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0),
            (r2, r2, -r2, -r2, 0.0, 0.0, 0.0, 0.0),
            (0.0, 0.0, 0.0, 0.0, r2, r2, -r2, -r2),
            (2.0, -2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
            (0.0, 0.0, 2.0, -2.0, 0.0, 0.0, 0.0, 0.0),
            (0.0, 0.0, 0.0, 0.0, 2.0, -2.0, 0.0, 0.0),
            (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0, -2.0),
        ),
        (("1",), ("2", "3"), ("4", "5", "6", "7")),
        ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)),
    )


_SYSTEMS: Dict[str, Callable[..., HaarSystem]] = {
    "one-d": one_d,
    "orig": h_orig,
    "new": h_new,
    "parallelogram": parallelogram,
    "diagonal": diagonal,
    "triangle": triangle,
    "cube": cube,
}

SYSTEM_TAGS = tuple(_SYSTEMS)


def get_system(tag: str, **params: float) -> HaarSystem:
    """Build a system by tag; extra keyword parameters go to its factory."""
    if tag not in _SYSTEMS:
        raise KeyError(f"Unknown Haar system {tag!r}; known: {list(_SYSTEMS)}")
    return _SYSTEMS[tag](**params)


# ---------------------------------------------------------------------------
# Atoms
# ---------------------------------------------------------------------------

def child_cells(system: HaarSystem, cell: LatticeId) -> List[LatticeId]:
    origin, step = cell.frame()
    ref = system.reference
    return [
        _cell_from_frame(system.tag, origin + step * np.asarray(off), step * sign / 2.0, cell.scale - 1)
        for off, sign in zip(ref.child_offsets, ref.child_signs)
    ]


def _generations(system: HaarSystem, root_cell: LatticeId, depth: int) -> Iterator[List[LatticeId]]:
    generation = [root_cell]
    for _ in range(depth):
        yield generation
        generation = [child for cell in generation for child in child_cells(system, cell)]


def atoms_in(system: HaarSystem, root_cell: LatticeId, depth: int) -> List[HaarAtom]:
    """All atoms supported in ``root_cell`` down to ``depth`` generations.

    Atoms are ordered by generation, then by cell in child-path order, then
    by kind. Generation g holds ``len(kinds) * n_children**g`` atoms.
    """
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    return [HaarAtom(cell, kind, system)
            for generation in _generations(system, root_cell, depth)
            for cell in generation
            for kind in system.kinds]


def eval_atom(atom: HaarAtom, x: np.ndarray):
    """Value of a normalized atom at physical point(s) ``x``; 0 outside its cell.

    Accepts one point (float for 1-D systems, length-``dim`` sequence
    otherwise) or an array of shape (n, dim) and returns a float or an array.
    """
    system = atom.system
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 0 or (system.dim > 1 and arr.ndim == 1)
    pts = system.to_reference(arr.reshape(-1, system.dim))
    origin, step = atom.cell.frame()
    child = system.reference.locate_child((pts - origin) / step)
    row = system.pattern_matrix[system.kind_index(atom.kind)]
    scale = system.jacobian * abs(step) ** system.dim
    values = np.where(child >= 0, row[np.clip(child, 0, None)], 0.0) / math.sqrt(scale)
    return float(values[0]) if single else values


# ---------------------------------------------------------------------------
# Step functions and leaves
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StepFunction:
    """Complex values on a uniform dyadic grid.

    Box grids are indexed ``values[iy, ix]`` (``values[iz, iy, ix]`` in 3-D);
    triangular grids carry a trailing axis of size 2 for the lower-left and
    upper-right half of each square. The function is 0 outside the grid.
    """
    values: np.ndarray
    origin: Tuple[float, ...]
    h: float
    triangular: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "origin", tuple(float(o) for o in np.atleast_1d(self.origin)))
        spatial = values.shape[:-1] if self.triangular else values.shape
        if self.triangular and (values.ndim != 3 or values.shape[-1] != 2):
            raise ValueError(f"triangular grids need shape (n, n, 2), got {values.shape}")
        if not spatial or len(set(spatial)) != 1:
            raise ValueError(f"grid must have the same size on every axis, got {values.shape}")
        n = spatial[0]
        if n < 1 or n & (n - 1):
            raise ValueError(f"grid size must be a power of 2, got {n}")
        if len(self.origin) != len(spatial):
            raise ValueError(f"origin {self.origin} does not match a {len(spatial)}-D grid")
        if not self.h > 0:
            raise ValueError(f"cell size must be > 0, got {self.h}")

    @property
    def dim(self) -> int:
        return len(self.origin)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def resolution(self) -> int:
        return self.n.bit_length() - 1

    @property
    def cell_measure(self) -> float:
        return self.h ** self.dim * (0.5 if self.triangular else 1.0)

    def with_values(self, values: np.ndarray) -> "StepFunction":
        return StepFunction(values, self.origin, self.h, self.triangular)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Values at points given in grid coordinates, shape (n, dim)."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        rel = (pts - np.asarray(self.origin)) / self.h
        idx = np.floor(rel).astype(int)
        inside = np.all((idx >= 0) & (idx < self.n), axis=1)
        safe = np.clip(idx, 0, self.n - 1)
        out = np.zeros(len(pts), dtype=complex)
        if self.triangular:
            frac = rel - idx
            half = (frac[:, 0] + frac[:, 1] >= 1.0).astype(int)
            out[inside] = self.values[safe[inside, 1], safe[inside, 0], half[inside]]
        else:
            out[inside] = self.values[tuple(safe[inside][:, ::-1].T)]
        return out

    def lp_norm(self, p: float) -> float:
        """Exact L^p norm as a finite sum over grid cells."""
        return float((self.cell_measure * np.sum(np.abs(self.values) ** p)) ** (1.0 / p))


class LeafLayout(NamedTuple):
    """Where the leaves of a root cell sit in a step-function grid.

    ``flat_index[i]`` is the position, in the raveled grid, of leaf ``i`` in
    child-path order. ``origins`` and ``steps`` are the leaf frames.
    """
    flat_index: np.ndarray
    shape: Tuple[int, ...]
    origin: Tuple[float, ...]
    h: float
    origins: np.ndarray
    steps: np.ndarray


@lru_cache(maxsize=64)
def leaf_layout(system: HaarSystem, root_cell: LatticeId, resolution: int) -> LeafLayout:
    ref = system.reference
    origin, step = root_cell.frame()
    origins = origin[None, :]
    steps = np.array([step])
    offsets = np.asarray(ref.child_offsets, dtype=float)
    signs = np.asarray(ref.child_signs, dtype=float)
    for _ in range(resolution):
        origins = (origins[:, None, :] + steps[:, None, None] * offsets[None, :, :]).reshape(-1, ref.dim)
        steps = (steps[:, None] * signs[None, :] / 2.0).reshape(-1)
    size = abs(step) / 2 ** resolution
    box_origin = origin if step > 0 else origin - abs(step)
    corners = np.where(steps[:, None] > 0, origins, origins - size)
    idx = np.rint((corners - box_origin) / size).astype(int)
    n = 2 ** resolution
    if ref.triangular:
        shape: Tuple[int, ...] = (n, n, 2)
        flat = np.ravel_multi_index((idx[:, 1], idx[:, 0], (steps < 0).astype(int)), shape)
    else:
        shape = (n,) * ref.dim
        flat = np.ravel_multi_index(tuple(idx[:, ::-1].T), shape)
    return LeafLayout(flat, shape, tuple(float(o) for o in box_origin), size, origins, steps)


def grid_for(system: HaarSystem, root_cell: Optional[LatticeId] = None, resolution: int = 0) -> StepFunction:
    """The zero step function on the grid of ``root_cell`` at ``resolution``."""
    root_cell = root_cell or system.root_cell()
    layout = leaf_layout(system, root_cell, resolution)
    return StepFunction(np.zeros(layout.shape, dtype=complex), layout.origin, layout.h,
                        system.reference.triangular)


def cell_for_grid(system: HaarSystem, f: StepFunction) -> LatticeId:
    """The box-lattice cell that the grid of ``f`` covers exactly.

    Raises:
        ResolutionMismatch: the side ``n * h`` is not a power of 2, or the
            corner is not a multiple of it.
    """
    if system.reference.triangular or f.triangular or f.dim != system.dim:
        raise ResolutionMismatch(f"a {f.dim}-D box grid cannot cover a {system.tag} cell")
    side = f.n * f.h
    scale = round(math.log2(side))
    index = np.asarray(f.origin) / side
    if not math.isclose(2.0 ** scale, side, rel_tol=1e-12) or not np.allclose(index, np.rint(index), atol=1e-9):
        raise ResolutionMismatch(
            f"grid with corner {f.origin} and side {side:g} is not a dyadic cell of {system.tag}")
    return system.root_cell(scale, tuple(int(i) for i in np.rint(index)))


def leaf_values(f: StepFunction, system: HaarSystem, root_cell: LatticeId) -> np.ndarray:
    """Values of ``f`` on the leaves of ``root_cell``, in child-path order.

    Raises:
        ResolutionMismatch: ``f`` is not laid out on a dyadic grid of ``root_cell``.
    """
    layout = leaf_layout(system, root_cell, f.resolution)
    if f.triangular != system.reference.triangular or f.values.shape != layout.shape:
        raise ResolutionMismatch(
            f"grid of shape {f.values.shape} does not fit a {system.tag} cell at resolution {f.resolution}")
    if not math.isclose(f.h, layout.h, rel_tol=1e-12) or not np.allclose(f.origin, layout.origin, atol=1e-12 * f.h):
        raise ResolutionMismatch(
            f"grid origin {f.origin} / step {f.h} does not match cell {root_cell} "
            f"(expected {layout.origin} / {layout.h})")
    return f.values.ravel()[layout.flat_index]


def from_leaves(leaves: np.ndarray, system: HaarSystem, root_cell: LatticeId, resolution: int) -> StepFunction:
    layout = leaf_layout(system, root_cell, resolution)
    values = np.zeros(int(np.prod(layout.shape)), dtype=complex)
    values[layout.flat_index] = leaves
    return StepFunction(values.reshape(layout.shape), layout.origin, layout.h, system.reference.triangular)


def random_step_function(system: HaarSystem, rng: np.random.Generator, resolution: int,
                         root_cell: Optional[LatticeId] = None, zero_mean: bool = True,
                         real: bool = False) -> StepFunction:
    """Cellwise i.i.d. standard (complex) Gaussians on the leaves of ``root_cell``."""
    root_cell = root_cell or system.root_cell()
    count = system.n_children ** resolution
    leaves = rng.standard_normal(count).astype(complex)
    if not real:
        leaves = leaves + 1j * rng.standard_normal(count)
    if zero_mean:
        leaves -= leaves.mean()
    return from_leaves(leaves, system, root_cell, resolution)


# ---------------------------------------------------------------------------
# Coefficients
# ---------------------------------------------------------------------------

def _generation_scale(system: HaarSystem, root_cell: LatticeId, generation: int) -> float:
    """Measure of a generation-g cell divided by the reference measure."""
    return system.cell_measure(root_cell) / system.reference.measure / system.n_children ** generation


def coefficient_arrays(leaves: np.ndarray, system: HaarSystem, root_cell: LatticeId,
                       depth: int) -> List[np.ndarray]:
    """Coefficients per generation as arrays of shape (n_children**g, n_kinds)."""
    k = system.n_children
    resolution = round(math.log(len(leaves), k)) if len(leaves) > 1 else 0
    if depth > resolution:
        raise ResolutionMismatch(f"depth {depth} exceeds the grid resolution {resolution}")
    patterns = system.pattern_matrix
    leaf_measure = system.cell_measure(root_cell) / len(leaves)
    out = []
    for g in range(depth):
        sums = leaves.reshape(k ** g, k, -1).sum(axis=2)
        out.append(sums @ patterns.T * (leaf_measure / math.sqrt(_generation_scale(system, root_cell, g))))
    return out


def synthesize(coefficients: Sequence[np.ndarray], system: HaarSystem, root_cell: LatticeId,
               resolution: int) -> np.ndarray:
    """Leaf values of the sum of coefficient-weighted atoms."""
    k = system.n_children
    leaves = np.zeros(k ** resolution, dtype=complex)
    patterns = system.pattern_matrix
    for g, coef in enumerate(coefficients):
        block = (np.asarray(coef) @ patterns) / math.sqrt(_generation_scale(system, root_cell, g))
        view = leaves.reshape(k ** g, k, -1)
        view += block[:, :, None]
    return leaves


@lru_cache(maxsize=32)
def atom_positions(system: HaarSystem, root_cell: LatticeId, depth: int) -> Dict[HaarAtom, Tuple[int, int, int]]:
    """Map each atom to (generation, cell block, kind index)."""
    positions: Dict[HaarAtom, Tuple[int, int, int]] = {}
    for g, generation in enumerate(_generations(system, root_cell, depth)):
        for block, cell in enumerate(generation):
            for j, kind in enumerate(system.kinds):
                positions[HaarAtom(cell, kind, system)] = (g, block, j)
    return positions


def decompose(f: StepFunction, system: HaarSystem, root_cell: Optional[LatticeId] = None,
              depth: Optional[int] = None) -> Dict[HaarAtom, complex]:
    """Exact coefficients <f, h> for every atom of ``root_cell`` down to ``depth``.

    Raises:
        ResolutionMismatch: ``f`` does not fit the lattice or is coarser than ``depth``.
    """
    root_cell = root_cell or system.root_cell()
    depth = f.resolution if depth is None else depth
    arrays = coefficient_arrays(leaf_values(f, system, root_cell), system, root_cell, depth)
    atoms = atoms_in(system, root_cell, depth)
    flat = np.concatenate([a.ravel() for a in arrays]) if arrays else np.zeros(0, dtype=complex)
    return {atom: complex(c) for atom, c in zip(atoms, flat)}


def reconstruct(coefficients: Mapping[HaarAtom, complex], system: HaarSystem, resolution: int,
                root_cell: Optional[LatticeId] = None) -> StepFunction:
    """Sum of coefficient-weighted atoms as a step function at ``resolution``."""
    root_cell = root_cell or system.root_cell()
    positions = atom_positions(system, root_cell, resolution)
    k = system.n_children
    arrays = [np.zeros((k ** g, len(system.kinds)), dtype=complex) for g in range(resolution)]
    for atom, value in coefficients.items():
        if atom not in positions:
            raise ResolutionMismatch(f"atom {atom.cell} is finer than resolution {resolution}")
        g, block, j = positions[atom]
        arrays[g][block, j] = value
    return from_leaves(synthesize(arrays, system, root_cell, resolution), system, root_cell, resolution)


class GramReport(NamedTuple):
    max_offdiag: float
    max_norm_error: float
    max_mean: float


def leaf_centroids(system: HaarSystem, root_cell: LatticeId, resolution: int) -> np.ndarray:
    """Physical centroids of the leaves in child-path order."""
    layout = leaf_layout(system, root_cell, resolution)
    ref_points = layout.origins + layout.steps[:, None] * system.reference.centroid[None, :]
    return system.to_physical(ref_points)


def gram_check(system: HaarSystem, root_cell: Optional[LatticeId] = None, depth: int = 2) -> GramReport:
    """Orthonormality and zero mean of the atoms of ``root_cell``.

    Atoms are sampled with :func:`eval_atom` at the leaf centroids of the
    finest generation, where each atom is constant, so the inner products
    are exact sums.
    """
    root_cell = root_cell or system.root_cell()
    atoms = atoms_in(system, root_cell, depth)
    if len(atoms) > 10_000:
        raise ValueError(f"{len(atoms)} atoms is too many for a Gram check")
    points = leaf_centroids(system, root_cell, depth)
    leaf_measure = system.cell_measure(root_cell) / len(points)
    samples = np.array([eval_atom(atom, points) for atom in atoms]).reshape(len(atoms), -1)
    gram = samples @ samples.T * leaf_measure
    diagonal_part = np.diag(gram).copy()
    np.fill_diagonal(gram, 0.0)
    report = GramReport(
        max_offdiag=float(np.abs(gram).max()) if len(atoms) > 1 else 0.0,
        max_norm_error=float(np.abs(diagonal_part - 1.0).max()) if atoms else 0.0,
        max_mean=float(np.abs(samples.sum(axis=1) * leaf_measure).max()) if atoms else 0.0,
    )
    logger.debug(f"gram_check {system.tag} depth={depth}: {report}")
    return report
