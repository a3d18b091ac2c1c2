"""Closed-form profiles and piecewise kernels, with exact overlap oracles.

The averaged kernels of every square-type system are tensor products of three
piecewise-linear profiles on [-1, 1]:

* ``alpha = h0 * h0`` (nodes 0, 1/2, -1, 1/2, 0),
* ``beta = chi0 * chi0`` (the hat function),
* ``gamma = h0 * chi0`` (odd, nodes 0, -1/2, 0, 1/2, 0),

where ``h0 = -chi[-1/2, 0) + chi[0, 1/2)`` and ``chi0 = chi[-1/2, 1/2)``.
The triangle system needs the autocorrelations G0, G+, G- of its three Haar
functions; they are degree-2 polynomials on the regions A-G of the wedge
``x >= |y|`` and are extended to the plane by their symmetries.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import shapely
import shapely.affinity
from shapely.geometry import Polygon as ShapelyPolygon
from shapely.ops import unary_union

from haar_averager.engine.basis import HaarSystem
from haar_averager.engine.quad import Polygon

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PiecewiseLinearFn:
    """Linear interpolation between nodes, zero outside the first and last breakpoint."""
    breakpoints: Tuple[float, ...]
    node_values: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))
        object.__setattr__(self, "node_values", tuple(float(v) for v in self.node_values))
        if len(self.breakpoints) != len(self.node_values):
            raise ValueError("breakpoints and node_values must have the same length")
        if len(self.breakpoints) < 2 or np.any(np.diff(self.breakpoints) <= 0):
            raise ValueError(f"breakpoints must be strictly increasing, got {self.breakpoints}")

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        values = np.interp(arr, self.breakpoints, self.node_values, left=0.0, right=0.0)
        return float(values) if arr.ndim == 0 else values

    @property
    def support(self) -> Tuple[float, float]:
        return self.breakpoints[0], self.breakpoints[-1]

    def integral(self) -> float:
        """Exact integral over the support (trapezoid rule is exact)."""
        x, v = np.asarray(self.breakpoints), np.asarray(self.node_values)
        return float(np.sum(0.5 * (v[1:] + v[:-1]) * np.diff(x)))


_NODES = (-1.0, -0.5, 0.0, 0.5, 1.0)

ALPHA = PiecewiseLinearFn(_NODES, (0.0, 0.5, -1.0, 0.5, 0.0))
BETA = PiecewiseLinearFn(_NODES, (0.0, 0.5, 1.0, 0.5, 0.0))
GAMMA = PiecewiseLinearFn(_NODES, (0.0, -0.5, 0.0, 0.5, 0.0))


def alpha(x):
    return ALPHA(x)


def beta(x):
    return BETA(x)


def gamma(x):
    return GAMMA(x)


@dataclass(frozen=True)
class StepProfile:
    """Step function with value ``values[i]`` on ``[edges[i], edges[i+1])``."""
    edges: Tuple[float, ...]
    values: Tuple[float, ...]

    def __post_init__(self):
        if len(self.edges) != len(self.values) + 1:
            raise ValueError("a step profile needs one more edge than values")
        if np.any(np.diff(self.edges) <= 0):
            raise ValueError(f"edges must be strictly increasing, got {self.edges}")


H0 = StepProfile((-0.5, 0.0, 0.5), (-1.0, 1.0))
CHI0 = StepProfile((-0.5, 0.5), (1.0,))


def conv1d_oracle(f: StepProfile, g: StepProfile, x: float) -> float:
    """Exact ``(f * g)(x) = ∫ f(t) g(x - t) dt`` from interval overlaps."""
    total = 0.0
    for a, b, fv in zip(f.edges[:-1], f.edges[1:], f.values):
        for c, d, gv in zip(g.edges[:-1], g.edges[1:], g.values):
            # g(x - t) is gv for t in (x - d, x - c]
            overlap = min(b, x - c) - max(a, x - d)
            if overlap > 0:
                total += fv * gv * overlap
    return total


# ---------------------------------------------------------------------------
# Piecewise polynomials
# ---------------------------------------------------------------------------

Coefficients = Tuple[float, float, float, float, float, float]


def eval_quadratic(coef: Sequence[float], x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``c0 + cx x + cy y + cxx x^2 + cxy x y + cyy y^2``."""
    c0, cx, cy, cxx, cxy, cyy = coef
    return c0 + cx * x + cy * y + cxx * x * x + cxy * x * y + cyy * y * y


@dataclass(frozen=True)
class PiecewisePoly2D:
    """Quadratic polynomials on polygonal regions with disjoint interiors.

    ``locate`` maps points to a region index (-1 for zero); without it the
    first region whose closure holds the point wins. ``fold`` maps the plane
    onto the union of the regions before lookup.
    """
    regions: Tuple[Tuple[str, Polygon, Coefficients], ...]
    locate: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    fold: Optional[Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]] = None

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(label for label, _, _ in self.regions)

    def _locate(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.locate is not None:
            return self.locate(x, y)
        index = np.full(x.shape, -1)
        for i, (_, polygon, _) in enumerate(self.regions):
            hit = (index < 0) & shapely.intersects_xy(polygon.to_shapely(), x, y)
            index[hit] = i
        return index

    def __call__(self, x, y):
        xa, ya = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        scalar = xa.ndim == 0
        xa, ya = np.atleast_1d(xa), np.atleast_1d(ya)
        if self.fold is not None:
            xa, ya = self.fold(xa, ya)
        index = self._locate(xa, ya)
        out = np.zeros(xa.shape)
        for i, (_, _, coef) in enumerate(self.regions):
            hit = index == i
            if np.any(hit):
                out[hit] = eval_quadratic(coef, xa[hit], ya[hit])
        return float(out[0]) if scalar else out

    def support(self) -> ShapelyPolygon:
        return unary_union([p.to_shapely() for _, p, _ in self.regions])


def fold_to_wedge(x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Map the plane onto ``x >= |y|`` using the swap and point symmetries."""
    swap = x < y
    x, y = np.where(swap, y, x), np.where(swap, x, y)
    flip = x + y < 0
    return np.where(flip, -y, x), np.where(flip, -x, y)


_WEDGE_LABELS = ("A", "B", "C", "D", "E", "F", "G")

WEDGE_REGIONS: Dict[str, Polygon] = {
    "A": Polygon(((0.0, 0.0), (0.5, 0.0), (0.25, 0.25))),
    "B": Polygon(((0.25, 0.25), (0.5, 0.0), (0.5, 0.5))),
    "C": Polygon(((0.5, 0.0), (1.0, 0.0), (0.5, 0.5))),
    "D": Polygon(((0.0, 0.0), (0.5, -0.5), (0.5, 0.0))),
    "E": Polygon(((0.5, 0.0), (0.5, -0.5), (1.0, -0.5))),
    "F": Polygon(((0.5, 0.0), (1.0, -0.5), (1.0, 0.0))),
    "G": Polygon(((0.5, -0.5), (1.0, -1.0), (1.0, -0.5))),
}


def locate_wedge_region(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Index into A..G for points of the wedge ``x >= |y|``; -1 off the support."""
    upper = np.where(x + y < 0.5, 0, np.where(x < 0.5, 1, 2))
    lower = np.where(x < 0.5, 3, np.where(y < -0.5, 6, np.where(x + y < 0.5, 4, 5)))
    index = np.where(y >= 0, upper, lower)
    return np.where((x > 1.0) | (x + y > 1.0), -1, index)


G_COEFFICIENTS: Dict[str, Dict[str, Coefficients]] = {
    "0": {
        "A": (1.0, -4.0, -4.0, 3.0, 10.0, 3.0),
        "B": (0.0, 0.0, 0.0, -1.0, 2.0, -1.0),
        "C": (-1.0, 2.0, 2.0, -1.0, -2.0, -1.0),
        "D": (1.0, -4.0, 2.0, 3.0, -4.0, 2.0),
        "E": (-0.5, 0.0, -2.0, 1.0, 4.0, 2.0),
        "F": (-1.0, 2.0, 0.0, -1.0, 0.0, 0.0),
        "G": (1.0, -2.0, 0.0, 1.0, 0.0, 0.0),
    },
    # regions missing from the two tables below are identically zero
    "+": {
        "A": (1.0, -4.0, -4.0, 4.0, 8.0, 4.0),
        "D": (1.0, -4.0, 0.0, 4.0, 0.0, -2.0),
        "E": (-0.5, 2.0, 2.0, -2.0, -4.0, -2.0),
        "G": (-2.0, 4.0, 0.0, -2.0, 0.0, 0.0),
    },
    "-": {
        "A": (1.0, -6.0, -6.0, 8.0, 12.0, 8.0),
        "B": (-1.0, 2.0, 2.0, 0.0, -4.0, 0.0),
        "D": (1.0, -6.0, -2.0, 8.0, 4.0, 0.0),
    },
}

_ZERO: Coefficients = (0.0,) * 6

TRIANGLE_G: Dict[str, PiecewisePoly2D] = {
    kind: PiecewisePoly2D(
        tuple((label, WEDGE_REGIONS[label], table.get(label, _ZERO)) for label in _WEDGE_LABELS),
        locate=locate_wedge_region,
        fold=fold_to_wedge,
    )
    for kind, table in G_COEFFICIENTS.items()
}

# hexagonal support of G0 in reference coordinates
TRIANGLE_KERNEL_SUPPORT = Polygon(((1.0, 0.0), (0.0, 1.0), (-1.0, 1.0), (-1.0, 0.0), (0.0, -1.0), (1.0, -1.0)))


def triangle_G(kind: str, x, y):
    """Autocorrelation of the triangle Haar function of ``kind`` ("0", "+", "-")."""
    try:
        return TRIANGLE_G[kind](x, y)
    except KeyError:
        raise KeyError(f"Unknown triangle kind {kind!r}; expected one of {list(TRIANGLE_G)}") from None


# ---------------------------------------------------------------------------
# Overlap oracle for averaged kernels
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _child_geometry(system: HaarSystem) -> Tuple[List[List[ShapelyPolygon]], float]:
    ref = system.reference
    children = [ShapelyPolygon(p) for p in ref.child_polygons()]
    orientations = [children]
    if ref.triangular:
        orientations.append([ShapelyPolygon(-np.asarray(p.exterior.coords)) for p in children])
    # fundamental domain: one cell per orientation
    area = ref.measure * len(orientations)
    return orientations, area


def conv2d_oracle(system: HaarSystem, sigma: Mapping[str, complex], z: Sequence[float]) -> complex:
    """Averaged kernel at ``z`` in reference coordinates, from exact overlap areas.

    Sums ``sigma_k ∫ h_k(v) h_k(v - z) dv`` over the kinds and over both cell
    orientations (triangles), divided by the area of the fundamental domain.
    The result carries no transport; the physical kernel is
    ``F(T^-1 z) / |det T|``.
    """
    if system.dim != 2:
        raise ValueError(f"conv2d_oracle needs a planar system, got {system.tag}")
    orientations, area = _child_geometry(system)
    dz = (float(z[0]), float(z[1]))
    # unit-scale atoms on the reference cell take the pattern values directly
    patterns = system.pattern_matrix
    overlaps = np.zeros((system.n_children, system.n_children))
    for children in orientations:
        shifted = [shapely.affinity.translate(c, *dz) for c in children]
        for i, ci in enumerate(children):
            for j, cj in enumerate(shifted):
                if ci.intersects(cj):
                    overlaps[i, j] += ci.intersection(cj).area
    total = 0j
    for kind, row in zip(system.kinds, patterns):
        weight = complex(sigma.get(kind, 1.0))
        total += weight * float(row @ overlaps @ row)
    return total / area
