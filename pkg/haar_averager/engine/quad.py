"""Deterministic and Monte-Carlo integration engines.

Every integrand handed to this module is vectorized: it receives numpy arrays
of coordinates and returns an array of the same shape (real or complex).
All tolerances are owned by :class:`QuadConfig`.

The kernels integrated elsewhere in the package are piecewise polynomials on
a lattice of lines times a weight that is homogeneous of degree zero. The
planar engine therefore

1. splits the region into convex pieces along the supplied line families,
2. fans each piece into triangles from the vertex nearest the origin,
3. integrates each triangle with a collapsed-square Gauss-Legendre rule
   (the origin vertex maps to a collapsed edge, so a degree-zero weight
   only depends on the angular variable), and
4. refines adaptively by midpoint subdivision until the tolerance budget,
   distributed by area, is met.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Callable, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import shapely
from shapely.geometry import Polygon as ShapelyPolygon

logger = logging.getLogger(__name__)

Integrand1D = Callable[[np.ndarray], Any]
Integrand2D = Callable[[np.ndarray, np.ndarray], Any]
Point = Tuple[float, float]

AXIS_DIRECTIONS: Tuple[Point, ...] = ((1.0, 0.0), (0.0, 1.0))

_AREA_EPS = 1e-14
_MAX_ACTIVE = 250_000
_MC_BATCH = 1 << 20


class NonConvergence(Exception):
    """Raised when adaptive refinement exhausts ``max_subdiv`` levels.

    Attributes:
        message: Human-readable error message
        estimate: Best estimate reached before giving up
        error: Error estimate achieved by that estimate
    """

    def __init__(self, message: str, estimate: complex, error: float):
        self.message = message
        self.estimate = estimate
        self.error = error
        super().__init__(f"{message} (best estimate {estimate!r}, achieved error {error:.3g})")


class DegenerateRegion(ValueError):
    """Raised for integration regions without positive area."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(message)


@dataclass(frozen=True)
class QuadConfig:
    """Tolerances for the deterministic engines.

    Attributes:
        abs_tol: Absolute tolerance of a whole integral.
        rel_tol: Relative tolerance of a whole integral.
        max_subdiv: Maximum number of adaptive refinement levels.
        gl_order: Gauss-Legendre nodes per axis.
    """
    abs_tol: float = 1e-10
    rel_tol: float = 1e-9
    max_subdiv: int = 20
    gl_order: int = 16

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError(f"abs_tol must be > 0, got {self.abs_tol}")
        if not self.rel_tol > 0:
            raise ValueError(f"rel_tol must be > 0, got {self.rel_tol}")
        if int(self.gl_order) != self.gl_order or self.gl_order < 2:
            raise ValueError(f"gl_order must be an integer >= 2, got {self.gl_order}")
        if int(self.max_subdiv) != self.max_subdiv or self.max_subdiv < 1:
            raise ValueError(f"max_subdiv must be an integer >= 1, got {self.max_subdiv}")

    def replace(self, **changes: Any) -> "QuadConfig":
        """Return a copy with the given fields replaced (``None`` values are ignored)."""
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "QuadConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known and v is not None})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class McConfig:
    """Sample count and seed of a Monte-Carlo estimate."""
    samples: int
    seed: int = 0

    def __post_init__(self):
        if int(self.samples) != self.samples or self.samples < 1:
            raise ValueError(f"samples must be an integer >= 1, got {self.samples}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


class QuadResult(NamedTuple):
    """Value of an integral together with its diagnostics."""
    value: complex
    error: float
    cells: int


def _signed_area(xy: np.ndarray) -> float:
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True)
class Polygon:
    """A simple polygon with positive area, stored counterclockwise.

    A repeated closing vertex is dropped; clockwise input is reversed.

    Raises:
        DegenerateRegion: fewer than three vertices or zero area.
        ValueError: the boundary intersects itself.
    """
    vertices: Tuple[Point, ...]

    def __post_init__(self):
        pts = [(float(x), float(y)) for x, y in self.vertices]
        if len(pts) > 1 and pts[0] == pts[-1]:
            pts = pts[:-1]
        if len(pts) < 3:
            raise DegenerateRegion(f"A polygon needs at least 3 vertices, got {len(pts)}")
        xy = np.asarray(pts)
        extent = float(np.ptp(xy, axis=0).max())
        area = _signed_area(xy)
        if abs(area) <= _AREA_EPS * max(extent, 1e-300) ** 2 or extent == 0.0:
            raise DegenerateRegion("Polygon has zero area")
        if area < 0:
            pts.reverse()
        if not ShapelyPolygon(pts).is_valid:
            raise ValueError("Polygon boundary is not simple")
        object.__setattr__(self, "vertices", tuple(pts))

    @classmethod
    def box(cls, x0: float, y0: float, x1: float, y1: float) -> "Polygon":
        return cls(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    @property
    def area(self) -> float:
        return _signed_area(self.array)

    @property
    def bounds(self) -> Tuple[float, float, float, float]:
        xy = self.array
        return (float(xy[:, 0].min()), float(xy[:, 1].min()),
                float(xy[:, 0].max()), float(xy[:, 1].max()))

    def is_convex(self) -> bool:
        return _is_convex(self.array)

    def to_shapely(self) -> ShapelyPolygon:
        return ShapelyPolygon(self.vertices)

    def contains(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Interior test for arrays of points (the boundary counts as outside)."""
        return shapely.contains_xy(self.to_shapely(), np.asarray(x, float), np.asarray(y, float))

    def mapped(self, matrix: Sequence[Sequence[float]], offset: Point = (0.0, 0.0)) -> "Polygon":
        """Image under p -> matrix @ p + offset."""
        m = np.asarray(matrix, dtype=float)
        xy = self.array @ m.T + np.asarray(offset, dtype=float)
        return Polygon(tuple(map(tuple, xy)))

    def translated(self, dx: float, dy: float) -> "Polygon":
        return self.mapped(np.eye(2), (dx, dy))


RegionLike = Union[Polygon, Sequence[Point]]


def _as_polygon(region: RegionLike) -> Polygon:
    return region if isinstance(region, Polygon) else Polygon(tuple(region))


# ---------------------------------------------------------------------------
# Rules
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _gauss_legendre(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return (x + 1.0) / 2.0, w / 2.0


@lru_cache(maxsize=None)
def _collapsed_rule(order: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tensor rule on the unit square with the collapse Jacobian folded in.

    A triangle (v0, v1, v2) is parametrized as
    p = v0 + s (v1 - v0) + s t (v2 - v1), dA = s |det| ds dt.
    """
    x, w = _gauss_legendre(order)
    s, t = np.meshgrid(x, x, indexing="ij")
    weights = np.outer(w, w) * s
    return s.ravel(), t.ravel(), weights.ravel()


def _evaluate(f: Callable[..., Any], *coords: np.ndarray) -> np.ndarray:
    values = np.asarray(f(*coords))
    return np.broadcast_to(values, coords[0].shape).astype(complex)


# ---------------------------------------------------------------------------
# Polygon decomposition
# ---------------------------------------------------------------------------

def _is_convex(xy: np.ndarray) -> bool:
    d1 = np.roll(xy, -1, axis=0) - xy
    d2 = np.roll(d1, -1, axis=0)
    cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    scale = float(np.abs(d1).max()) ** 2
    return bool(np.all(cross >= -1e-12 * scale))


def _ear_clip(xy: np.ndarray) -> List[np.ndarray]:
    """Triangulate a simple counterclockwise polygon by ear clipping."""
    idx = list(range(len(xy)))
    triangles: List[np.ndarray] = []
    guard = 0
    while len(idx) > 3 and guard < 10 * len(xy) ** 2:
        guard += 1
        for pos in range(len(idx)):
            i0, i1, i2 = idx[pos - 1], idx[pos], idx[(pos + 1) % len(idx)]
            a, b, c = xy[i0], xy[i1], xy[i2]
            if (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]) <= 0:
                continue
            others = [xy[j] for j in idx if j not in (i0, i1, i2)]
            if any(_point_in_triangle(p, a, b, c) for p in others):
                continue
            triangles.append(np.array([a, b, c]))
            idx.pop(pos)
            break
        else:
            break
    triangles.append(np.array([xy[j] for j in idx]))
    return triangles


def _point_in_triangle(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> bool:
    def side(u, v, w):
        return (v[0] - u[0]) * (w[1] - u[1]) - (v[1] - u[1]) * (w[0] - u[0])
    return side(a, b, p) >= 0 and side(b, c, p) >= 0 and side(c, a, p) >= 0


def _clip_halfplane(xy: np.ndarray, normal: np.ndarray, offset: float) -> Optional[np.ndarray]:
    """Part of a convex polygon where normal . p <= offset."""
    dist = xy @ normal - offset
    out = []
    n = len(xy)
    for ck in range(n):
        cn = (ck + 1) % n
        if dist[ck] * dist[cn] < 0:
            w = dist[cn] / (dist[cn] - dist[ck])
            out.append(w * xy[ck] + (1.0 - w) * xy[cn])
        if dist[cn] <= 0:
            out.append(xy[cn])
    if len(out) < 3:
        return None
    poly = np.asarray(out)
    keep = np.ones(len(poly), dtype=bool)
    keep[1:] = np.linalg.norm(np.diff(poly, axis=0), axis=1) > 1e-15
    poly = poly[keep]
    if len(poly) >= 2 and np.linalg.norm(poly[0] - poly[-1]) <= 1e-15:
        poly = poly[:-1]
    if len(poly) < 3 or abs(_signed_area(poly)) <= _AREA_EPS * float(np.ptp(poly, axis=0).max() ** 2 + 1e-300):
        return None
    return poly


def _split_along(pieces: List[np.ndarray], normal: np.ndarray, spacing: float) -> List[np.ndarray]:
    """Cut convex pieces along the lines normal . p = k * spacing."""
    result: List[np.ndarray] = []
    for piece in pieces:
        levels = piece @ normal / spacing
        lo, hi = float(levels.min()), float(levels.max())
        eps = 1e-11 * max(1.0, abs(lo), abs(hi))
        cuts = range(math.floor(lo + eps) + 1, math.ceil(hi - eps))
        remaining: Optional[np.ndarray] = piece
        for k in cuts:
            if remaining is None:
                break
            offset = k * spacing
            below = _clip_halfplane(remaining, normal, offset)
            above = _clip_halfplane(remaining, -normal, -offset)
            if below is not None:
                result.append(below)
            remaining = above
        if remaining is not None:
            result.append(remaining)
    return result


def _fan(piece: np.ndarray) -> List[np.ndarray]:
    """Triangles of a convex piece, fanned from the origin when it lies in the
    closed piece and from the vertex nearest the origin otherwise."""
    scale = float(np.ptp(piece, axis=0).max())
    n = len(piece)
    edges = np.roll(piece, -1, axis=0) - piece
    cross = edges[:, 0] * (-piece[:, 1]) - edges[:, 1] * (-piece[:, 0])
    origin_inside = bool(np.all(cross >= -1e-12 * scale ** 2))
    at_vertex = float(np.linalg.norm(piece, axis=1).min()) <= 1e-13 * scale
    triangles = []
    if origin_inside and not at_vertex:
        for k in range(n):
            triangles.append(np.array([[0.0, 0.0], piece[k], piece[(k + 1) % n]]))
    else:
        start = int(np.argmin(np.linalg.norm(piece, axis=1)))
        rolled = np.roll(piece, -start, axis=0)
        for k in range(1, n - 1):
            triangles.append(np.array([rolled[0], rolled[k], rolled[k + 1]]))
    return [t for t in triangles if abs(_signed_area(t)) > _AREA_EPS * scale ** 2]


def _triangulate(region: Polygon, spacing: Optional[float],
                 directions: Optional[Sequence[Sequence[float]]]) -> np.ndarray:
    xy = region.array
    pieces = [xy] if _is_convex(xy) else _ear_clip(xy)
    if spacing:
        for direction in directions or AXIS_DIRECTIONS:
            pieces = _split_along(pieces, np.asarray(direction, dtype=float), spacing)
    triangles = [t for piece in pieces for t in _fan(piece)]
    return np.asarray(triangles, dtype=float).reshape(-1, 3, 2)


# ---------------------------------------------------------------------------
# Adaptive drivers
# ---------------------------------------------------------------------------

def _triangle_estimates(f: Integrand2D, tris: np.ndarray, order: int) -> np.ndarray:
    s, t, w = _collapsed_rule(order)
    v0 = tris[:, 0, :]
    e1 = tris[:, 1, :] - v0
    e2 = tris[:, 2, :] - tris[:, 1, :]
    st = s * t
    px = v0[:, None, 0] + s[None, :] * e1[:, None, 0] + st[None, :] * e2[:, None, 0]
    py = v0[:, None, 1] + s[None, :] * e1[:, None, 1] + st[None, :] * e2[:, None, 1]
    jac = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    return (_evaluate(f, px, py) @ w) * jac


def _subdivide(tris: np.ndarray) -> np.ndarray:
    """Four midpoint children per triangle; the child at v0 keeps v0 first."""
    v0, v1, v2 = tris[:, 0], tris[:, 1], tris[:, 2]
    m01, m12, m02 = (v0 + v1) / 2, (v1 + v2) / 2, (v0 + v2) / 2
    children = np.stack([
        np.stack([v0, m01, m02], axis=1),
        np.stack([m01, v1, m12], axis=1),
        np.stack([m02, m12, v2], axis=1),
        np.stack([m12, m02, m01], axis=1),
    ], axis=1)
    return children.reshape(-1, 3, 2)


def _refine(estimate: Callable[[np.ndarray], np.ndarray], split: Callable[[np.ndarray], np.ndarray],
            cells: np.ndarray, sizes: np.ndarray, n_children: int, cfg: QuadConfig,
            what: str) -> QuadResult:
    """Level-synchronous adaptive refinement shared by the 1-D and 2-D engines."""
    total_size = float(sizes.sum())
    parent = estimate(cells)
    budget = max(cfg.abs_tol, cfg.rel_tol * abs(parent.sum()))
    value = 0j
    error = 0.0
    used = 0
    for level in range(cfg.max_subdiv + 1):
        children = split(cells)
        child_est = estimate(children).reshape(-1, n_children)
        refined = child_est.sum(axis=1)
        err = np.abs(refined - parent)
        done = err <= budget * sizes / total_size
        value += refined[done].sum()
        error += float(err[done].sum())
        used += n_children * int(done.sum())
        if done.all():
            logger.debug(f"{what}: converged after {level + 1} levels, {used} cells")
            return QuadResult(complex(value), error, used)
        keep = ~done
        if level == cfg.max_subdiv or n_children * int(keep.sum()) > _MAX_ACTIVE:
            break
        cells = children.reshape((-1, n_children) + children.shape[1:])[keep]
        cells = cells.reshape((-1,) + children.shape[1:])
        parent = child_est[keep].ravel()
        sizes = np.repeat(sizes[keep] / n_children, n_children)
    pending = ~done
    estimate_total = complex(value + refined[pending].sum())
    raise NonConvergence(
        f"{what} did not reach tolerance {budget:.3g} within {cfg.max_subdiv} subdivisions",
        estimate_total, error + float(err[pending].sum()),
    )


def polygon_quadrature(
    f: Integrand2D,
    region: RegionLike,
    breaklines: Optional[float] = None,
    cfg: Optional[QuadConfig] = None,
    directions: Optional[Sequence[Sequence[float]]] = None,
) -> QuadResult:
    """Integrate ``f`` over a polygon and report diagnostics.

    Args:
        f: Vectorized integrand ``f(x, y)``.
        region: Integration polygon (or its vertex list).
        breaklines: Spacing ``h`` of the lines ``n . p = k h`` along which the
            region is cut before integration; ``None`` disables cutting.
        cfg: Tolerances.
        directions: Normals ``n`` of the line families (default: the axes).

    Returns:
        QuadResult with the integral, its error estimate and the number of
        triangles accepted.

    Raises:
        DegenerateRegion: the region has zero area.
        NonConvergence: the tolerance was not met within ``max_subdiv`` levels.
    """
    cfg = cfg or QuadConfig()
    polygon = _as_polygon(region)
    if breaklines is not None and not breaklines > 0:
        raise ValueError(f"breakline spacing must be > 0, got {breaklines}")
    tris = _triangulate(polygon, breaklines, directions)
    if len(tris) == 0:
        raise DegenerateRegion("Region has no triangles of positive area")
    sizes = 0.5 * np.abs(
        (tris[:, 1, 0] - tris[:, 0, 0]) * (tris[:, 2, 1] - tris[:, 0, 1])
        - (tris[:, 1, 1] - tris[:, 0, 1]) * (tris[:, 2, 0] - tris[:, 0, 0])
    )
    return _refine(lambda t: _triangle_estimates(f, t, cfg.gl_order), _subdivide,
                   tris, sizes, 4, cfg, "polygon quadrature")


def integrate_polygon(
    f: Integrand2D,
    region: RegionLike,
    breaklines: Optional[float] = None,
    cfg: Optional[QuadConfig] = None,
    directions: Optional[Sequence[Sequence[float]]] = None,
) -> complex:
    """Return the integral of ``f`` over ``region``; see :func:`polygon_quadrature`."""
    return polygon_quadrature(f, region, breaklines, cfg, directions).value


def _interval_estimates(f: Integrand1D, intervals: np.ndarray, order: int) -> np.ndarray:
    x, w = _gauss_legendre(order)
    lo, hi = intervals[:, 0], intervals[:, 1]
    pts = lo[:, None] + (hi - lo)[:, None] * x[None, :]
    return (_evaluate(f, pts) @ w) * (hi - lo)


def _halve(intervals: np.ndarray) -> np.ndarray:
    mid = intervals.mean(axis=1)
    return np.stack([
        np.stack([intervals[:, 0], mid], axis=1),
        np.stack([mid, intervals[:, 1]], axis=1),
    ], axis=1).reshape(-1, 2)


def quad1d(f: Integrand1D, a: float, b: float, breakpoints: Sequence[float] = (),
           cfg: Optional[QuadConfig] = None) -> QuadResult:
    """Adaptive Gauss-Legendre on [a, b], split first at every breakpoint."""
    cfg = cfg or QuadConfig()
    if a > b:
        raise ValueError(f"integrate_1d expects a <= b, got a={a}, b={b}")
    if a == b:
        return QuadResult(0j, 0.0, 0)
    inner = sorted({float(p) for p in breakpoints if a < p < b})
    nodes = np.array([a] + inner + [b], dtype=float)
    intervals = np.stack([nodes[:-1], nodes[1:]], axis=1)
    intervals = intervals[intervals[:, 1] > intervals[:, 0]]
    return _refine(lambda iv: _interval_estimates(f, iv, cfg.gl_order), _halve,
                   intervals, intervals[:, 1] - intervals[:, 0], 2, cfg, "1-D quadrature")


def integrate_1d(f: Integrand1D, a: float, b: float, breakpoints: Sequence[float] = (),
                 cfg: Optional[QuadConfig] = None) -> Union[float, complex]:
    """Return the integral of ``f`` over [a, b].

    The result is a float when the integrand is real-valued.

    Raises:
        NonConvergence: the tolerance was not met within ``max_subdiv`` levels.
    """
    result = quad1d(f, a, b, breakpoints, cfg)
    sample = np.asarray(f(np.array([0.5 * (a + b)])))
    return result.value if np.iscomplexobj(sample) else float(result.value.real)


def mc_integrate(f: Integrand2D, region: RegionLike, cfg: McConfig) -> Tuple[complex, float]:
    """Monte-Carlo estimate of the integral of ``f`` over a polygon.

    Points are drawn uniformly in the bounding box and rejected outside the
    polygon until ``cfg.samples`` are accepted. The same (seed, samples)
    reproduces the same estimate bit for bit.

    Returns:
        ``(estimate, standard_error)``.
    """
    polygon = _as_polygon(region)
    geom = polygon.to_shapely()
    shapely.prepare(geom)
    xmin, ymin, xmax, ymax = polygon.bounds
    fill = polygon.area / ((xmax - xmin) * (ymax - ymin))
    rng = np.random.default_rng(cfg.seed)

    xs, ys = [], []
    accepted = 0
    while accepted < cfg.samples:
        batch = min(_MC_BATCH, max(1024, int(math.ceil(1.1 * (cfg.samples - accepted) / fill))))
        u = rng.random((batch, 2))
        px = xmin + (xmax - xmin) * u[:, 0]
        py = ymin + (ymax - ymin) * u[:, 1]
        inside = shapely.contains_xy(geom, px, py)
        xs.append(px[inside])
        ys.append(py[inside])
        accepted += int(inside.sum())
    x = np.concatenate(xs)[:cfg.samples]
    y = np.concatenate(ys)[:cfg.samples]

    values = _evaluate(f, x, y)
    n = len(values)
    variance = float(values.real.var(ddof=1) + values.imag.var(ddof=1)) if n > 1 else 0.0
    estimate = polygon.area * complex(values.mean())
    stderr = polygon.area * math.sqrt(variance / n)
    logger.debug(f"mc_integrate: {n} samples, estimate={estimate:.6g}, stderr={stderr:.3g}")
    return estimate, stderr
