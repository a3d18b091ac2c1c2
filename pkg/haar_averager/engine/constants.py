"""The constant C relating the Ahlfors-Beurling operator to averaged transforms.

For an averaged kernel F the rotation average against ``e^{-2iψ}`` leaves

    I = 1 / (2 log 2) ∬ F(x, y) (x + iy)^2 / (x^2 + y^2) dA,

and C = 1 / |I|. Two evaluations are offered: ``planar`` integrates the
physical kernel over its physical support; ``reduced`` changes variables back
to the reference lattice, where the weight becomes ``(u + v ζ) / (u + v ζ̄)``
and the diagonal and triangle families simplify further.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Tuple

import numpy as np

from haar_averager.engine.kernels import (
    KernelSpec,
    breaklines,
    diagonal_kernel,
    eval_kernel,
    reference_kernel,
    support,
)
from haar_averager.engine.quad import Polygon, QuadConfig, QuadResult, polygon_quadrature
from haar_averager.engine.special import ALPHA, BETA, GAMMA, WEDGE_REGIONS, G_COEFFICIENTS, eval_quadratic

logger = logging.getLogger(__name__)

LOG2 = math.log(2.0)
METHODS = ("reduced", "planar")

_REFERENCE_SQUARE = Polygon.box(-1.0, -1.0, 1.0, 1.0)
_UNIT_SQUARE = Polygon.box(0.0, 0.0, 1.0, 1.0)


@dataclass(frozen=True)
class ConstantResult:
    """Value of I for one kernel, the derived C and quadrature diagnostics.

    ``vanishing`` marks an I that cannot be told apart from 0: its modulus is
    within the error estimate or the cancellation floor. C is then infinite.
    """
    integral_I: complex
    C: float
    err_est: float
    cells_used: int
    method: str = "reduced"
    degenerate: bool = False
    family: str = ""
    params: Dict[str, float] = field(default_factory=dict)
    vanishing: bool = False

    @classmethod
    def from_integral(cls, value: complex, err_est: float, cells: int, floor: float = 0.0,
                      **extra) -> "ConstantResult":
        """Wrap an integral; ``|I| <= max(err_est, floor)`` counts as a zero integral."""
        modulus = abs(value)
        vanishing = modulus <= max(float(err_est), float(floor))
        C = math.inf if vanishing else 1.0 / modulus
        return cls(complex(value), C, float(err_est), int(cells), vanishing=vanishing, **extra)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": dict(self.params),
            "I_re": self.integral_I.real,
            "I_im": self.integral_I.imag,
            "C": self.C,
            "err_est": self.err_est,
            "cells_used": self.cells_used,
            "method": self.method,
            "degenerate": self.degenerate,
            "vanishing": self.vanishing,
        }


def _rotation_weight(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``z^2 / |z|^2`` with the value at the origin set to 0."""
    r2 = x * x + y * y
    z = x + 1j * y
    return np.where(r2 > 0, z * z / np.where(r2 > 0, r2, 1.0), 0.0)


def _reference_weight(zeta: complex) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """``(u + v ζ) / (u + v ζ̄)``, the rotation weight pulled back to the lattice."""
    conj = zeta.conjugate()

    def weight(u: np.ndarray, v: np.ndarray) -> np.ndarray:
        den = u + v * conj
        return np.where(den != 0, (u + v * zeta) / np.where(den != 0, den, 1.0), 0.0)

    return weight


def _zeta(spec: KernelSpec) -> complex:
    """Image of the second lattice vector, as a complex number."""
    transport = spec.transport / spec.transport[0, 0]
    return complex(transport[0, 1], transport[1, 1])


def _planar(spec: KernelSpec, cfg: QuadConfig) -> Tuple[complex, float, int, float]:
    spacing, directions = breaklines(spec)
    result = polygon_quadrature(
        lambda x, y: eval_kernel(spec, x, y) * _rotation_weight(x, y),
        support(spec), spacing, cfg, directions,
    )
    scale = 1.0 / (2.0 * LOG2)
    return result.value * scale, result.error * scale, result.cells, abs(result.value) * scale


def _reduced_square(spec: KernelSpec, cfg: QuadConfig) -> Tuple[complex, float, int, float]:
    weight = _reference_weight(_zeta(spec))
    result = polygon_quadrature(
        lambda u, v: reference_kernel(spec, u, v) * weight(u, v),
        _REFERENCE_SQUARE, 0.5, cfg,
    )
    scale = 1.0 / (2.0 * LOG2)
    return result.value * scale, result.error * scale, result.cells, abs(result.value) * scale


def _diagonal_split(spec: KernelSpec, cfg: QuadConfig) -> Tuple[complex, float, int, float]:
    """Three integrals over [0,1]^2 for the rectangle diagonal kernel.

    With ``D = x^2 + b^2 y^2``:
    ``I = (4 / log 2) (σ0 A - s B - 2 i b d G)`` where ``A = ∬ αα x^2 / D``,
    ``B = ∬ (αβ + βα) x^2 / D`` and ``G = ∬ γγ x y / D``.
    """
    b = spec.b
    s0, sp, sm = spec.sigma
    s, d = 0.5 * (sp + sm), 0.5 * (sp - sm)

    def ratio(num: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        den = x * x + b * b * y * y
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)

    pieces = {
        "A": lambda x, y: ALPHA(x) * ALPHA(y) * ratio(x * x, x, y),
        "B": lambda x, y: (ALPHA(x) * BETA(y) + BETA(x) * ALPHA(y)) * ratio(x * x, x, y),
        "G": lambda x, y: GAMMA(x) * GAMMA(y) * ratio(x * y, x, y),
    }
    results = {name: polygon_quadrature(f, _UNIT_SQUARE, 0.5, cfg) for name, f in pieces.items()}
    A, B, G = (results[name].value.real for name in "ABG")
    coefficients = {"A": abs(s0), "B": abs(s), "G": 2.0 * b * abs(d)}
    value = 4.0 / LOG2 * (s0 * A - s * B - 2j * b * d * G)
    error = 4.0 / LOG2 * sum(coefficients[n] * results[n].error for n in "ABG")
    size = 4.0 / LOG2 * sum(coefficients[n] * abs(results[n].value) for n in "ABG")
    return value, error, sum(r.cells for r in results.values()), size


def _triangle_wedge(spec: KernelSpec, cfg: QuadConfig) -> Tuple[complex, float, int, float]:
    """Sum over the wedge regions A-G of ``G_k (w(s, t) + w(t, s))``.

    The G functions are even and symmetric under the swap, and the weight is
    even, so the hexagon folds onto the wedge ``x >= |y|`` four to one:
    ``I = (2 / log 2) Σ_k σ_k ∬_wedge G_k (w(s, t) + w(t, s))``.
    """
    weight = _reference_weight(_zeta(spec))
    sigma = dict(zip(("0", "+", "-"), spec.sigma))
    total, error, cells, size = 0j, 0.0, 0, 0.0
    for label, region in WEDGE_REGIONS.items():
        coef = sum(sigma[k] * np.asarray(G_COEFFICIENTS[k].get(label, (0.0,) * 6)) for k in sigma)
        if not np.any(coef):
            continue
        result = polygon_quadrature(
            lambda s, t, c=coef: eval_quadratic(c, s, t) * (weight(s, t) + weight(t, s)),
            region, None, cfg,
        )
        total += result.value
        error += result.error
        cells += result.cells
        size += abs(result.value)
    return 2.0 / LOG2 * total, 2.0 / LOG2 * error, cells, 2.0 / LOG2 * size


def constant_for(spec: KernelSpec, cfg: QuadConfig = None, method: str = "reduced") -> ConstantResult:
    """Evaluate I and C for ``spec``.

    Dilations do not change I, so scaled kernels are evaluated through their
    base kernel. An I whose modulus is below ``abs_tol``, below ``rel_tol``
    times the size of the terms that cancel in it, or below its error
    estimate is reported as vanishing, with C = inf.

    Raises:
        NonConvergence: the quadrature missed its tolerance.
    """
    if method not in METHODS:
        raise ValueError(f"Unknown method {method!r}; expected one of {list(METHODS)}")
    cfg = cfg or QuadConfig()
    base = spec.base
    if method == "planar":
        value, error, cells, size = _planar(base, cfg)
    elif base.family == "triangle":
        value, error, cells, size = _triangle_wedge(base, cfg)
    elif base.family == "diagonal" and base.phi == math.pi / 2:
        value, error, cells, size = _diagonal_split(base, cfg)
    else:
        value, error, cells, size = _reduced_square(base, cfg)
    floor = max(cfg.abs_tol, cfg.rel_tol * size)
    result = ConstantResult.from_integral(value, error, cells, floor, method=method, degenerate=base.degenerate,
                                          family=base.family, params=base.params())
    logger.debug(f"constant_for {base.family} {base.params()} [{method}]: "
                 f"I={value:.12g} C={result.C:.12g} err={error:.2g} cells={cells}"
                 + (" (I vanishes)" if result.vanishing else ""))
    return result


def diagonal_constant(b: float, theta: float, cfg: QuadConfig = None) -> ConstantResult:
    """C for the rectangle diagonal system with σ0 = 1, σ± = e^{±iθ}."""
    return constant_for(diagonal_kernel(b, theta), cfg, "reduced")


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------

def closed_form_C_unit() -> float:
    """C of ℋ_new with σ = (1, -1, -1)."""
    return 12.0 * LOG2 / (16.0 * math.pi + 32.0 * LOG2 - 15.0 * math.log(5.0) - 40.0 * math.atan(2.0))


def closed_form_I_sqrt2() -> float:
    """``2 log 2 * I`` for the rectangle with sides 1 and √2; C = 2 log 2 / value."""
    r2 = math.sqrt(2.0)
    return ((5.0 * math.pi / 6.0 + 9.0 * math.atan(1.0 / r2) - 7.0 * math.atan(r2)) / r2
            + 8.0 / 3.0 * LOG2 - 2.0 * math.log(3.0))


def closed_form_sqrt2_pieces() -> Tuple[float, float, float]:
    """The three polynomial pieces of :func:`closed_form_I_sqrt2` in closed form."""
    r2 = math.sqrt(2.0)
    a1, a2 = math.atan(1.0 / r2), math.atan(r2)
    l2, l3 = LOG2, math.log(3.0)
    t1 = (-26.0 + 40.0 * r2 * math.pi - 16.0 * r2 * a1 - 48.0 * r2 * a2 + 52.0 * l2 - 71.0 * l3) / 96.0
    t2 = (-14.0 + 256.0 * r2 * a1 - 160.0 * r2 * a2 + 124.0 * l2 - 77.0 * l3) / 96.0
    t3 = (10.0 + 48.0 * r2 * a1 - 32.0 * r2 * a2 + 20.0 * l2 - 11.0 * l3) / 24.0
    return t1, t2, t3


def sqrt2_piece_integrals(cfg: QuadConfig = None) -> List[QuadResult]:
    """Quadrature of the three pieces over [0,½]², [½,1]×[0,½] and [0,1]×[½,1].

    Each has the weight ``y^2 / (x^2 + 2 y^2)``.
    """
    cfg = cfg or QuadConfig()

    def weight(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        den = x * x + 2.0 * y * y
        return np.where(den > 0, y * y / np.where(den > 0, den, 1.0), 0.0)

    pieces = [
        (Polygon.box(0.0, 0.0, 0.5, 0.5), lambda x, y: 16.0 * (9 * x * y - 5 * x - y + 1) * weight(x, y)),
        (Polygon.box(0.5, 0.0, 1.0, 0.5), lambda x, y: 16.0 * (1 - x) * (7 * y - 3) * weight(x, y)),
        (Polygon.box(0.0, 0.5, 1.0, 1.0), lambda x, y: 16.0 * (1 - x) * (1 - y) * weight(x, y)),
    ]
    return [polygon_quadrature(f, region, None, cfg) for region, f in pieces]
