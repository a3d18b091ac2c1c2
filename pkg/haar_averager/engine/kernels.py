"""Averaged convolution kernels of the homogeneous martingale transforms.

Each kernel is first written in the reference coordinates of its lattice
(unit square cells, or unit triangles for the triangle system) and then
transported to the plane: ``F(z) = F_ref(T^-1 z) / |det T|``.

Reference kernels, with ``s = (σ+ + σ-)/2`` and ``d = (σ+ - σ-)/2``:

* new / parallelogram: ``σ0 (-β(u) α(v)) + s (-α(u) β(v) + α(u) α(v))``
* diagonal: ``σ0 α(u) α(v) - s (α(u) β(v) + β(u) α(v)) - 2 d γ(u) γ(v)``
* triangle: ``2 (σ0 G0 + σ+ G+ + σ- G-)``

Sign choices are stored as phases so that ``|σ| = 1`` holds exactly.
"""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from haar_averager.engine.basis import HaarSystem, UnsupportedParams, get_system
from haar_averager.engine.quad import Polygon
from haar_averager.engine.special import ALPHA, BETA, GAMMA, TRIANGLE_G, TRIANGLE_KERNEL_SUPPORT

logger = logging.getLogger(__name__)

FAMILIES = ("new", "diagonal", "triangle", "scaled")
BREAKLINE_SPACING = 0.5
UNIT_TOL = 1e-9

SignLike = Union[complex, float]

_SQUARE_SUPPORT = Polygon.box(-1.0, -1.0, 1.0, 1.0)


def phase_of(sigma: SignLike) -> float:
    """Phase of a unimodular number.

    Raises:
        UnsupportedParams: ``|sigma|`` differs from 1.
    """
    value = complex(sigma)
    if abs(abs(value) - 1.0) > UNIT_TOL:
        raise UnsupportedParams(f"sign choices must have modulus 1, got {sigma} (|σ| = {abs(value):.12g})")
    return cmath.phase(value)


def unit(phase: float) -> complex:
    if phase == 0.0:
        return 1 + 0j
    if abs(phase) == math.pi:
        return -1 + 0j
    return cmath.exp(1j * phase)


@dataclass(frozen=True)
class KernelSpec:
    """Tagged description of an averaged kernel.

    Attributes:
        family: One of ``new``, ``diagonal``, ``triangle``, ``scaled``.
        b, phi: Parallelogram shape (new and diagonal families).
        a: Triangle shear; the triangle family uses ``U(x, y) = (x + a y, b y)``.
        phases: ``(arg σ0, arg σ+, arg σ-)``.
        rho: Dilation of a scaled kernel.
        inner: The kernel being dilated.
    """
    family: str
    b: float = 1.0
    phi: float = math.pi / 2
    a: float = 0.0
    phases: Tuple[float, float, float] = (0.0, math.pi, math.pi)
    rho: float = 1.0
    inner: Optional["KernelSpec"] = field(default=None, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise UnsupportedParams(f"Unknown kernel family {self.family!r}; known: {list(FAMILIES)}")
        object.__setattr__(self, "phases", tuple(float(p) for p in self.phases))
        if self.family == "scaled":
            if self.inner is None:
                raise UnsupportedParams("a scaled kernel needs an inner kernel")
            if not self.rho > 0:
                raise UnsupportedParams(f"rho must be > 0, got {self.rho}")
            return
        if not self.b > 0:
            raise UnsupportedParams(f"b must be > 0, got {self.b}")
        if self.family != "triangle" and not 0 < self.phi < math.pi:
            raise UnsupportedParams(f"phi must lie in (0, pi), got {self.phi}")
        if len(self.phases) != 3:
            raise UnsupportedParams(f"expected three phases (σ0, σ+, σ-), got {self.phases}")

    @property
    def sigma(self) -> Tuple[complex, complex, complex]:
        return tuple(unit(p) for p in self.phases)

    @property
    def base(self) -> "KernelSpec":
        """The unscaled kernel underneath any dilations."""
        return self.inner.base if self.family == "scaled" else self

    @property
    def scale(self) -> float:
        return self.rho * self.inner.scale if self.family == "scaled" else 1.0

    @property
    def transport(self) -> np.ndarray:
        """Matrix taking reference coordinates to the plane (dilations included)."""
        if self.family == "scaled":
            return self.rho * self.inner.transport
        if self.family == "triangle":
            return np.array([[1.0, self.a], [0.0, self.b]])
        if self.phi == math.pi / 2:
            return np.array([[1.0, 0.0], [0.0, self.b]])
        return np.array([[1.0, self.b * math.cos(self.phi)], [0.0, self.b * math.sin(self.phi)]])

    @property
    def jacobian(self) -> float:
        return abs(float(np.linalg.det(self.transport)))

    @property
    def degenerate(self) -> bool:
        """True for the identity average, which carries no information about T."""
        base = self.base
        s0, sp, sm = base.sigma
        return abs(sp - s0) < UNIT_TOL and abs(sm - s0) < UNIT_TOL

    def params(self) -> Dict[str, float]:
        """Flat parameter record for logs and reports."""
        if self.family == "scaled":
            return {**self.inner.params(), "rho": self.scale}
        out: Dict[str, float] = {}
        if self.family == "triangle":
            out["a"] = self.a
        out["b"] = self.b
        if self.family != "triangle":
            out["phi"] = self.phi
        if self.family == "diagonal":
            out["theta"] = self.phases[1]
        out.update(arg_sigma0=self.phases[0], arg_sigma_plus=self.phases[1], arg_sigma_minus=self.phases[2])
        return out

    def with_params(self, **changes: float) -> "KernelSpec":
        return replace(self, **changes)


def new_kernel(b: float = 1.0, phi: float = math.pi / 2,
               sigma: Sequence[SignLike] = (1, -1, -1)) -> KernelSpec:
    """Kernel of the parallelogram system ℋ_{b,φ}; b = 1, φ = π/2 is ℋ_new."""
    return KernelSpec("new", b=b, phi=phi, phases=tuple(phase_of(s) for s in sigma))


def diagonal_kernel(b: float = 1.0, theta: float = math.pi, phi: float = math.pi / 2,
                    sigma: Optional[Sequence[SignLike]] = None) -> KernelSpec:
    """Kernel of the diagonal system with σ0 = 1, σ± = e^{±iθ} unless ``sigma`` is given."""
    if sigma is None:
        phases = (0.0, float(theta), -float(theta))
    else:
        phases = tuple(phase_of(s) for s in sigma)
    return KernelSpec("diagonal", b=b, phi=phi, phases=phases)


def triangle_kernel(a: float = 0.0, b: float = 1.0,
                    sigma: Sequence[SignLike] = (1, -1, -1)) -> KernelSpec:
    return KernelSpec("triangle", a=a, b=b, phases=tuple(phase_of(s) for s in sigma))


def scaled_kernel(inner: KernelSpec, rho: float) -> KernelSpec:
    return KernelSpec("scaled", rho=rho, inner=inner)


def reference_kernel(spec: KernelSpec, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """The untransported kernel of ``spec.base`` at reference coordinates."""
    base = spec.base
    s0, sp, sm = base.sigma
    s = 0.5 * (sp + sm)
    if base.family == "new":
        au, av = ALPHA(u), ALPHA(v)
        return s0 * (-BETA(u) * av) + s * (-au * BETA(v) + au * av)
    if base.family == "diagonal":
        d = 0.5 * (sp - sm)
        au, av = ALPHA(u), ALPHA(v)
        return s0 * au * av - s * (au * BETA(v) + BETA(u) * av) - 2.0 * d * GAMMA(u) * GAMMA(v)
    return 2.0 * (s0 * TRIANGLE_G["0"](u, v) + sp * TRIANGLE_G["+"](u, v) + sm * TRIANGLE_G["-"](u, v))


def eval_kernel(spec: KernelSpec, x, y):
    """Physical kernel value(s) at ``(x, y)``; complex scalar or array."""
    xa, ya = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    inverse = np.linalg.inv(spec.transport)
    u = inverse[0, 0] * xa + inverse[0, 1] * ya
    v = inverse[1, 0] * xa + inverse[1, 1] * ya
    values = np.asarray(reference_kernel(spec, np.atleast_1d(u), np.atleast_1d(v)), dtype=complex)
    values = values / spec.jacobian
    return complex(values.reshape(-1)[0]) if xa.ndim == 0 else values.reshape(xa.shape)


def support(spec: KernelSpec) -> Polygon:
    """Exact support polygon of the physical kernel."""
    ref = TRIANGLE_KERNEL_SUPPORT if spec.base.family == "triangle" else _SQUARE_SUPPORT
    return ref.mapped(spec.transport)


def reference_directions(family: str) -> Tuple[Tuple[float, float], ...]:
    if family == "triangle":
        return ((1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, -1.0))
    return ((1.0, 0.0), (0.0, 1.0))


def breaklines(spec: KernelSpec) -> Tuple[float, Tuple[Tuple[float, float], ...]]:
    """Spacing and physical normals of the lines the kernel is polynomial between.

    A reference line ``m . w = k/2`` is the physical line ``(T^-T m) . p = k/2``.
    """
    inverse = np.linalg.inv(spec.transport)
    directions = tuple(tuple(float(c) for c in np.asarray(m) @ inverse)
                       for m in reference_directions(spec.base.family))
    return BREAKLINE_SPACING, directions


def kernel_for(system: HaarSystem, sigma: Mapping[str, SignLike]) -> KernelSpec:
    """Averaged kernel of the homogeneous sign choice ``sigma`` (kind -> σ)."""
    phases = tuple(phase_of(sigma.get(kind, 1.0)) for kind in ("0", "+", "-"))
    params = system.describe()
    if system.tag in ("new", "parallelogram"):
        return KernelSpec("new", b=params.get("b", 1.0), phi=params.get("phi", math.pi / 2), phases=phases)
    if system.tag == "diagonal":
        return KernelSpec("diagonal", b=params["b"], phi=params["phi"], phases=phases)
    if system.tag == "triangle":
        return KernelSpec("triangle", a=params["a"], b=params["b"], phases=phases)
    raise UnsupportedParams(f"no averaged kernel is defined for the {system.tag} system")


def system_for(spec: KernelSpec) -> HaarSystem:
    """The Haar system whose averaged transform has kernel ``spec``."""
    base = spec.base
    if base.family == "new":
        if base.b == 1.0 and base.phi == math.pi / 2:
            return get_system("new")
        return get_system("parallelogram", b=base.b, phi=base.phi)
    if base.family == "diagonal":
        return get_system("diagonal", b=base.b, phi=base.phi)
    return get_system("triangle", a=base.a, b=base.b)


def sigma_map(spec: KernelSpec) -> Dict[str, complex]:
    return dict(zip(("0", "+", "-"), spec.base.sigma))


def build_kernel(family: str, **params) -> KernelSpec:
    """Build a kernel from flat parameters as they appear in configs and CLI flags."""
    sigma = params.pop("sigma", None)
    if family == "new":
        return new_kernel(params.get("b", 1.0), params.get("phi", math.pi / 2), sigma or (1, -1, -1))
    if family == "diagonal":
        return diagonal_kernel(params.get("b", 1.0), params.get("theta", math.pi),
                               params.get("phi", math.pi / 2), sigma)
    if family == "triangle":
        return triangle_kernel(params.get("a", 0.0), params.get("b", 1.0), sigma or (1, -1, -1))
    raise UnsupportedParams(f"Unknown kernel family {family!r}")
