"""Averaging the single-grid transforms over translations and dilations.

Averaging ``P_t f = Σ σ_h <f, h> h`` over translations ``t`` of a unit grid
gives a convolution with the kernel F of :mod:`haar_averager.engine.kernels`.
Dilating by calibres ``r 2^n`` and summing gives ``k^r``; averaging ``k^r``
over ``r ∈ [1, 2]`` against ``dr / r`` gives the kernel ``k``. This kernel is
homogeneous of degree -2 and determined by its values on the unit circle.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Sequence, Tuple

import numpy as np
from shapely.geometry import Polygon as ShapelyPolygon

from haar_averager.engine.basis import HaarSystem, StepFunction
from haar_averager.engine.kernels import KernelSpec, breaklines, eval_kernel, reference_kernel, support
from haar_averager.engine.martingale import SignChoice
from haar_averager.engine.quad import McConfig, Polygon, QuadConfig, integrate_polygon, quad1d

logger = logging.getLogger(__name__)

LOG2 = math.log(2.0)


class OriginNotAllowed(ValueError):
    """Raised when a degree -2 kernel is evaluated at the origin."""

    def __init__(self, message: str = "the kernel is singular at the origin"):
        self.message = message
        super().__init__(message)


class McEstimate(NamedTuple):
    estimate: complex
    stderr: float
    samples: int


def _uniform_in_triangle(rng: np.random.Generator, n: int) -> np.ndarray:
    u = rng.random((n, 2))
    flip = u.sum(axis=1) > 1.0
    u[flip] = 1.0 - u[flip]
    return u


def _fundamental_domain_sample(system: HaarSystem, rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform translations: [0,1)^2 for box lattices, Ω+ ∪ -Ω+ for triangles."""
    if not system.reference.triangular:
        return rng.random((n, 2))
    tau = _uniform_in_triangle(rng, n)
    negate = rng.random(n) < 0.5
    tau[negate] = -tau[negate]
    return tau


def _unit_cells(system: HaarSystem, xi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Frame (origin, signed step) of the unit cell holding each reference point."""
    corner = np.floor(xi)
    if not system.reference.triangular:
        return corner, np.ones(len(xi))
    down = (xi - corner).sum(axis=1) >= 1.0
    origin = np.where(down[:, None], corner + 1.0, corner)
    return origin, np.where(down, -1.0, 1.0)


def mc_average_translations(system: HaarSystem, sigma: SignChoice, f: StepFunction,
                            x: Sequence[float], cfg: McConfig) -> McEstimate:
    """Monte-Carlo estimate of ``E_t[P_t f](x)`` for the unit grid of ``system``.

    A sample draws a translation ``τ`` of the reference lattice, finds the cell
    holding ``x`` and a uniform point ``y`` of that cell; the product of the
    atom values at ``x`` and ``y`` times ``f(y)`` times the cell measure is an
    unbiased estimate of the atom sum. ``f`` is a box step function in
    physical coordinates.
    """
    if system.dim != 2:
        raise ValueError(f"translation averages are planar, got {system.tag}")
    rng = np.random.default_rng(cfg.seed)
    n = cfg.samples
    ref = system.reference
    patterns = system.pattern_matrix
    weights = np.array([complex(sigma.for_kind(k)) for k in system.kinds])

    tau = _fundamental_domain_sample(system, rng, n)
    xi = system.to_reference(np.asarray(x, dtype=float)[None, :]) - tau
    origin, step = _unit_cells(system, xi)
    child_x = ref.locate_child((xi - origin) / step[:, None])
    eta = _uniform_in_triangle(rng, n) if ref.triangular else rng.random((n, 2))
    child_y = ref.locate_child(eta)
    y = system.to_physical(tau + origin + step[:, None] * eta)

    valid = (child_x >= 0) & (child_y >= 0)
    cx, cy = np.clip(child_x, 0, None), np.clip(child_y, 0, None)
    products = (weights[:, None] * patterns[:, cx] * patterns[:, cy]).sum(axis=0)
    values = np.where(valid, ref.measure * products * f.evaluate(y), 0.0)

    variance = float(values.real.var(ddof=1) + values.imag.var(ddof=1)) if n > 1 else 0.0
    estimate = McEstimate(complex(values.mean()), math.sqrt(variance / n), n)
    logger.debug(f"mc_average_translations {system.tag} at {tuple(x)}: {estimate.estimate:.6g} ± {estimate.stderr:.2g}")
    return estimate


def convolve_step(spec: KernelSpec, f: StepFunction, x: Sequence[float], cfg: QuadConfig = None) -> complex:
    """``(F * f)(x)`` for a box step function ``f`` by quadrature cell by cell.

    Each cell contributes ``f_c ∫_{x - cell} F``; the reflected cell is clipped
    to the kernel support and cut along the kernel's breaklines.
    """
    if f.triangular or f.dim != 2:
        raise ValueError("convolve_step expects a planar box step function")
    cfg = cfg or QuadConfig()
    spacing, directions = breaklines(spec)
    kernel_support = support(spec).to_shapely()
    px, py = float(x[0]), float(x[1])
    ox, oy = f.origin
    total = 0j
    for iy, ix in zip(*np.nonzero(f.values)):
        x0, y0 = ox + ix * f.h, oy + iy * f.h
        reflected = ShapelyPolygon([(px - x0, py - y0), (px - x0 - f.h, py - y0),
                                    (px - x0 - f.h, py - y0 - f.h), (px - x0, py - y0 - f.h)])
        piece = reflected.intersection(kernel_support)
        if piece.is_empty or piece.area < 1e-14 or not isinstance(piece, ShapelyPolygon):
            continue
        region = Polygon(tuple(piece.exterior.coords))
        integral = integrate_polygon(lambda u, v: eval_kernel(spec, u, v), region, spacing, cfg, directions)
        total += f.values[iy, ix] * integral
    return total


# ---------------------------------------------------------------------------
# Dilations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SeriesTruncation:
    """Calibre ``r`` and the summation window ``m_low <= n <= m_high`` of ``k^r``."""
    r: float = 1.0
    m_low: int = -10
    m_high: int = 40

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"calibre r must be > 0, got {self.r}")
        if self.m_low > self.m_high:
            raise ValueError(f"m_low ({self.m_low}) must not exceed m_high ({self.m_high})")

    def shifted(self, by: int) -> "SeriesTruncation":
        return dataclasses.replace(self, m_low=self.m_low + by, m_high=self.m_high + by)


def _support_radius(spec: KernelSpec) -> float:
    return float(np.linalg.norm(support(spec).array, axis=1).max())


def kr_truncated(spec: KernelSpec, trunc: SeriesTruncation, x) -> np.ndarray:
    """``Σ_{n=m_low}^{m_high} F^{r 2^n}(x)`` at one point or an array of shape (n, 2).

    Raises:
        OriginNotAllowed: a point is the origin.
    """
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = pts.reshape(-1, 2)
    if np.any(np.all(pts == 0.0, axis=1)):
        raise OriginNotAllowed("k^r is not defined at the origin")
    ref = pts @ np.linalg.inv(spec.transport).T
    reach = _support_radius(spec)
    nearest = float(np.linalg.norm(pts, axis=1).min())
    total = np.zeros(len(pts), dtype=complex)
    for n in range(trunc.m_low, trunc.m_high + 1):
        rho = trunc.r * 2.0 ** n
        if rho * reach < nearest:
            continue
        total += reference_kernel(spec, ref[:, 0] / rho, ref[:, 1] / rho) / (spec.jacobian * rho * rho)
    return complex(total[0]) if single else total


def _ray_breakpoints(spec: KernelSpec, direction: np.ndarray, reach: float) -> List[float]:
    """Radii where the ray through ``direction`` crosses a kernel breakline."""
    spacing, normals = breaklines(spec)
    out = []
    for normal in normals:
        rate = float(np.dot(normal, direction))
        if abs(rate) < 1e-15:
            continue
        for k in range(1, int(math.ceil(reach * abs(rate) / spacing)) + 1):
            out.append(k * spacing / abs(rate))
    return out


def homogenized_profile(spec: KernelSpec, phi: float, cfg: QuadConfig = None) -> complex:
    """``k(e^{iφ}) = (1/log 2) ∫_0^R F(r e^{iφ}) r dr`` with R past the support."""
    cfg = cfg or QuadConfig()
    direction = np.array([math.cos(phi), math.sin(phi)])
    reach = _support_radius(spec) * (1.0 + 1e-12)

    def integrand(r: np.ndarray) -> np.ndarray:
        return eval_kernel(spec, r * direction[0], r * direction[1]) * r

    result = quad1d(integrand, 0.0, reach, _ray_breakpoints(spec, direction, reach), cfg)
    return result.value / LOG2


@dataclass
class RadialKernel:
    """The homogenized kernel ``k(x) = profile(arg x) / |x|^2`` with a profile cache."""
    spec: KernelSpec
    cfg: QuadConfig = field(default_factory=QuadConfig)
    _cache: Dict[float, complex] = field(default_factory=dict, repr=False)

    def profile(self, phi: float) -> complex:
        key = math.remainder(float(phi), 2.0 * math.pi)
        if key not in self._cache:
            self._cache[key] = homogenized_profile(self.spec, key, self.cfg)
        return self._cache[key]

    def __call__(self, x: float, y: float) -> complex:
        r2 = x * x + y * y
        if r2 == 0.0:
            raise OriginNotAllowed()
        return self.profile(math.atan2(y, x)) / r2


def _calibre_breakpoints(spec: KernelSpec, direction: np.ndarray, trunc: SeriesTruncation) -> List[float]:
    """Calibres s in (1, 2) at which some term F^{s 2^n}(e) changes piece."""
    spacing, normals = breaklines(spec)
    reach = _support_radius(spec)
    out = []
    for n in range(trunc.m_low, trunc.m_high + 1):
        scale = 2.0 ** n
        if 2.0 * scale * reach < 1.0:
            continue
        for normal in normals:
            rate = abs(float(np.dot(normal, direction)))
            if rate < 1e-15:
                continue
            # F^{s 2^n}(e) breaks where rate / (s 2^n) = k * spacing
            k_lo = int(math.floor(rate / (2.0 * scale * spacing)))
            k_hi = int(math.ceil(rate / (scale * spacing)))
            for k in range(max(k_lo, 1), k_hi + 1):
                s = rate / (k * spacing * scale)
                if 1.0 < s < 2.0:
                    out.append(s)
    return out


def calibre_average(spec: KernelSpec, phi: float, trunc: SeriesTruncation = None, cfg: QuadConfig = None) -> complex:
    """``(1/log 2) ∫_1^2 k^s(e^{iφ}) ds / s`` with the series truncated to ``trunc``'s window."""
    trunc = trunc or SeriesTruncation()
    cfg = cfg or QuadConfig()
    direction = np.array([math.cos(phi), math.sin(phi)])

    def integrand(s: np.ndarray) -> np.ndarray:
        flat = s.ravel()
        values = np.array([kr_truncated(spec, dataclasses.replace(trunc, r=float(si)), direction) for si in flat])
        return (values / flat).reshape(s.shape)

    result = quad1d(integrand, 1.0, 2.0, _calibre_breakpoints(spec, direction, trunc), cfg)
    return result.value / LOG2


def lattice_angles(spec: KernelSpec) -> List[float]:
    """Angles in [0, 2π) of the breakline intersections inside the kernel support."""
    spacing, normals = breaklines(spec)
    reach = _support_radius(spec)
    angles = set()
    for i in range(len(normals)):
        for j in range(i + 1, len(normals)):
            matrix = np.array([normals[i], normals[j]])
            if abs(np.linalg.det(matrix)) < 1e-14:
                continue
            inverse = np.linalg.inv(matrix)
            ki = int(math.ceil(reach * np.linalg.norm(normals[i]) / spacing))
            kj = int(math.ceil(reach * np.linalg.norm(normals[j]) / spacing))
            grid = np.array([(a, b) for a in range(-ki, ki + 1) for b in range(-kj, kj + 1) if (a, b) != (0, 0)])
            points = (grid * spacing) @ inverse.T
            inside = np.linalg.norm(points, axis=1) <= reach * (1 + 1e-12)
            for px, py in points[inside]:
                angles.add(round(math.atan2(py, px) % (2 * math.pi), 14))
    return sorted(angles)


def rotation_fourier_coefficient(spec: KernelSpec, cfg: QuadConfig = None) -> complex:
    """``∫_0^{2π} k(e^{iφ}) e^{2iφ} dφ``, split at the angles of lattice points."""
    cfg = cfg or QuadConfig()

    def integrand(phis: np.ndarray) -> np.ndarray:
        flat = phis.ravel()
        values = np.array([homogenized_profile(spec, float(p), cfg) for p in flat]) * np.exp(2j * flat)
        return values.reshape(phis.shape)

    return quad1d(integrand, 0.0, 2.0 * math.pi, lattice_angles(spec), cfg).value
