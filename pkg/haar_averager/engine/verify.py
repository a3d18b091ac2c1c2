"""Invariant suites over the engine modules.

Each suite returns a list of :class:`CheckResult`. Suites run as jobs of the
orchestrator, so an exception inside one suite is reported as a failed check
and the remaining suites still run.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from haar_averager.core import EvaluationJob, Orchestrator
from haar_averager.engine.averaging import (
    SeriesTruncation,
    calibre_average,
    convolve_step,
    homogenized_profile,
    kr_truncated,
    mc_average_translations,
    rotation_fourier_coefficient,
)
from haar_averager.engine.basis import (
    SQRT2,
    SYSTEM_TAGS,
    HaarSystem,
    StepFunction,
    decompose,
    get_system,
    gram_check,
    random_step_function,
    reconstruct,
)
from haar_averager.engine.constants import (
    LOG2,
    closed_form_C_unit,
    closed_form_I_sqrt2,
    closed_form_sqrt2_pieces,
    constant_for,
    sqrt2_piece_integrals,
)
from haar_averager.engine.kernels import (
    diagonal_kernel,
    kernel_for,
    new_kernel,
    reference_kernel,
    sigma_map,
    system_for,
    triangle_kernel,
)
from haar_averager.engine.martingale import SignChoice, build_run, check_subordination, norm_ratios, p_star
from haar_averager.engine.quad import McConfig, Polygon, QuadConfig, integrate_polygon, quad1d
from haar_averager.engine.special import (
    ALPHA,
    BETA,
    CHI0,
    GAMMA,
    H0,
    TRIANGLE_KERNEL_SUPPORT,
    conv1d_oracle,
    conv2d_oracle,
    triangle_G,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckResult:
    """One invariant check: the largest violation found and whether it is within tolerance."""
    check: str
    system: str
    max_violation: float
    passed: bool
    params: Dict[str, object] = field(default_factory=dict)
    tolerance: Optional[float] = None

    @classmethod
    def bounded(cls, check: str, system: str, violation: float, tolerance: float, **params) -> "CheckResult":
        """Passes when ``violation <= tolerance``."""
        violation = float(violation)
        return cls(check, system, violation, bool(violation <= tolerance), params, tolerance)

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "system": self.system,
            "params": dict(self.params),
            "max_violation": self.max_violation,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }


@dataclass(frozen=True)
class SuiteSizes:
    """Sample sizes of the randomized checks."""
    norm_trials: int = 20
    subordination_trials: int = 10
    mc_pairs: int = 2
    mc_samples: int = 20_000
    kernel_points: int = 20
    symmetry_points: int = 1_000
    calibre_angles: int = 2
    diagonal_points: int = 3


DESK = SuiteSizes()
FULL = SuiteSizes(norm_trials=200, subordination_trials=50, mc_pairs=20, mc_samples=1_000_000,
                  kernel_points=200, symmetry_points=10_000, calibre_angles=8, diagonal_points=10)

NORM_EXPONENTS = (4.0 / 3.0, 2.0, 3.0, 4.0)


def _quad_suite(seed: int, cfg: QuadConfig, sizes: SuiteSizes) -> List[CheckResult]:
    unit = Polygon.box(0.0, 0.0, 1.0, 1.0)
    corner = Polygon(((0.0, 0.0), (1.0, 0.0), (0.0, 1.0)))
    return [
        CheckResult.bounded("monomial x^2 y on the unit square", "-",
                            abs(integrate_polygon(lambda x, y: x * x * y, unit, None, cfg) - 1.0 / 6.0), 1e-12),
        CheckResult.bounded("x on the unit triangle", "-",
                            abs(integrate_polygon(lambda x, y: x, corner, None, cfg) - 1.0 / 6.0), 1e-12),
        CheckResult.bounded("area of the hexagonal kernel support", "-",
                            abs(integrate_polygon(lambda x, y: np.ones_like(x), TRIANGLE_KERNEL_SUPPORT, 0.5, cfg)
                                - 3.0), 1e-12),
        CheckResult.bounded("sin on [0, pi]", "-", abs(quad1d(np.sin, 0.0, math.pi, (), cfg).value - 2.0), 1e-10),
    ]


def _special_suite(seed: int, cfg: QuadConfig, sizes: SuiteSizes) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    xs = rng.uniform(-1.2, 1.2, sizes.kernel_points)
    profiles = [
        ("alpha", ALPHA, H0, H0),
        ("beta", BETA, CHI0, CHI0),
        ("gamma", GAMMA, H0, CHI0),
    ]
    out = [
        CheckResult.bounded(f"{name} matches the 1-D overlap oracle", "one-d",
                            max(abs(fn(x) - conv1d_oracle(f, g, x)) for x in xs), 1e-12)
        for name, fn, f, g in profiles
    ]
    out.append(CheckResult.bounded("G0(0, 0) = 1", "triangle", abs(triangle_G("0", 0.0, 0.0) - 1.0), 0.0))

    pts = rng.uniform(-1.0, 1.0, (sizes.symmetry_points, 2))
    g0 = triangle_G("0", pts[:, 0], pts[:, 1])
    out.append(CheckResult.bounded("G0 swap symmetry", "triangle",
                                   np.abs(g0 - triangle_G("0", pts[:, 1], pts[:, 0])).max(), 1e-12))
    out.append(CheckResult.bounded("G0 point symmetry", "triangle",
                                   np.abs(g0 - triangle_G("0", -pts[:, 0], -pts[:, 1])).max(), 1e-12))

    kernels = [
        new_kernel(1.0, math.pi / 2),
        new_kernel(SQRT2, math.pi / 3, (1, 1j, -1j)),
        diagonal_kernel(0.7, math.pi / 3),
        triangle_kernel(0.5, 1.0),
        triangle_kernel(0.0, 1.0, (1, np.exp(0.4j), np.exp(-1.1j))),
    ]
    zs = rng.uniform(-1.2, 1.2, (sizes.kernel_points, 2))
    for spec in kernels:
        system = system_for(spec)
        sigma = sigma_map(spec)
        analytic = reference_kernel(spec, zs[:, 0], zs[:, 1])
        oracle = np.array([conv2d_oracle(system, sigma, z) for z in zs])
        out.append(CheckResult.bounded("averaged kernel matches the overlap oracle", system.tag,
                                       np.abs(analytic - oracle).max(), 1e-6, **spec.params()))
    return out


def _basis_suite(seed: int, cfg: QuadConfig, sizes: SuiteSizes) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    for tag in SYSTEM_TAGS:
        system = get_system(tag)
        depth = 1 if system.dim == 3 else 2
        report = gram_check(system, depth=depth)
        out.append(CheckResult.bounded("orthonormality", tag, max(report), 1e-12, depth=depth))
        f = random_step_function(system, rng, depth)
        restored = reconstruct(decompose(f, system), system, depth)
        out.append(CheckResult.bounded("decompose / reconstruct", tag,
                                       np.abs(restored.values - f.values).max(), 1e-12, depth=depth))
    return out


def _martingale_suite(seed: int, cfg: QuadConfig, sizes: SuiteSizes) -> List[CheckResult]:
    out = []
    for tag in SYSTEM_TAGS:
        system = get_system(tag)
        for p in NORM_EXPONENTS:
            ratios = norm_ratios(system, None, p, sizes.norm_trials, seed)
            if p == 2.0:
                out.append(CheckResult.bounded("L2 isometry", tag, np.abs(ratios - 1.0).max(), 1e-10,
                                               trials=sizes.norm_trials))
            else:
                bound = p_star(p) - 1.0
                out.append(CheckResult.bounded("norm ratio below p* - 1", tag, max(0.0, ratios.max() - bound), 1e-9,
                                               p=p, trials=sizes.norm_trials, max_ratio=float(ratios.max())))

    rng = np.random.default_rng(seed)
    new = get_system("new")
    worst = 0.0
    for _ in range(sizes.subordination_trials):
        f = random_step_function(new, rng, 3)
        worst = max(worst, abs(check_subordination(build_run(f, new, SignChoice.random(new.kinds, rng))).max_violation))
    out.append(CheckResult.bounded("|dY| = |dX| pointwise", "new", worst, 1e-12, trials=sizes.subordination_trials))

    orig = get_system("orig")
    largest = 0.0
    for _ in range(sizes.subordination_trials):
        f = random_step_function(orig, rng, 2)
        largest = max(largest, check_subordination(build_run(f, orig, SignChoice.random(orig.kinds, rng))).max_violation)
    out.append(CheckResult("three-kind step breaks subordination", "orig", largest, largest > 1e-6,
                           {"trials": sizes.subordination_trials}))
    return out


MC_SIGMAS = 4.0


@dataclass(frozen=True)
class McComparison:
    """Monte-Carlo translation average against the kernel convolution at one point."""
    x: Tuple[float, float]
    estimate: complex
    oracle: complex
    stderr: float

    @property
    def passed(self) -> bool:
        return abs(self.estimate - self.oracle) <= MC_SIGMAS * self.stderr

    def to_dict(self) -> dict:
        return {"x": list(self.x), "estimate": self.estimate, "oracle": self.oracle,
                "stderr": self.stderr, "pass": self.passed}


def mc_comparisons(system: HaarSystem, pairs: int, samples: int, seed: int,
                   cfg: QuadConfig = None) -> List[McComparison]:
    """Compare ``E_t[P_t f](x)`` with ``(F * f)(x)`` for random ``(f, σ, x)``.

    ``f`` is a complex step function on the 4 x 4 grid of side 1/2 over
    [-1, 1]^2; ``x`` is uniform in [-1/2, 1/2]^2.
    """
    rng = np.random.default_rng(seed)
    out = []
    for pair in range(pairs):
        sigma = SignChoice.random(system.kinds, rng)
        spec = kernel_for(system, sigma.per_kind(system))
        f = StepFunction(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)), (-1.0, -1.0), 0.5)
        x = rng.uniform(-0.5, 0.5, 2)
        estimate = mc_average_translations(system, sigma, f, x, McConfig(samples, seed * 1000 + pair))
        out.append(McComparison((float(x[0]), float(x[1])), estimate.estimate,
                                convolve_step(spec, f, x, cfg), estimate.stderr))
    return out


def _averaging_suite(seed: int, cfg: QuadConfig, sizes: SuiteSizes) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    for system in (get_system("new"), get_system("parallelogram", b=SQRT2, phi=math.pi / 3),
                   get_system("triangle", a=0.5, b=1.0)):
        comparisons = mc_comparisons(system, sizes.mc_pairs, sizes.mc_samples, seed, cfg)
        worst = max(abs(c.estimate - c.oracle) / max(MC_SIGMAS * c.stderr, 1e-300) for c in comparisons)
        out.append(CheckResult.bounded("translation average matches the kernel convolution (in 4 stderr)",
                                       system.tag, worst, 1.0, pairs=sizes.mc_pairs, samples=sizes.mc_samples,
                                       max_stderr=max(c.stderr for c in comparisons)))

    spec = new_kernel(SQRT2, math.pi / 2)
    trunc = SeriesTruncation()
    points = rng.uniform(-1.5, 1.5, (5, 2))
    doubled = kr_truncated(spec, trunc, 2.0 * points)
    halved = kr_truncated(spec, trunc.shifted(-1), points) / 4.0
    out.append(CheckResult.bounded("k^r doubling relation", "new",
                                   (np.abs(doubled - halved) / np.maximum(1.0, np.abs(halved))).max(), 1e-12))

    angles = rng.uniform(0.0, 2.0 * math.pi, sizes.calibre_angles)
    gap = max(abs(calibre_average(spec, phi, trunc, cfg) - homogenized_profile(spec, phi, cfg)) for phi in angles)
    out.append(CheckResult.bounded("calibre average equals the homogenized kernel", "new", gap, 1e-8,
                                   angles=sizes.calibre_angles))

    fourier = rotation_fourier_coefficient(spec, cfg)
    out.append(CheckResult.bounded("rotation coefficient equals 2 I", "new",
                                   abs(fourier - 2.0 * constant_for(spec, cfg).integral_I), 1e-7))
    return out


def _constants_suite(seed: int, cfg: QuadConfig, sizes: SuiteSizes) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    unit = constant_for(new_kernel(1.0, math.pi / 2), cfg)
    out.append(CheckResult.bounded("C of the unit square", "new", abs(unit.C - closed_form_C_unit()), 1e-6,
                                   C=unit.C))

    rect = constant_for(new_kernel(SQRT2, math.pi / 2), cfg)
    out.append(CheckResult.bounded("I of the sqrt(2) rectangle", "parallelogram",
                                   abs(2.0 * LOG2 * rect.integral_I.real - closed_form_I_sqrt2()), 1e-8, C=rect.C))
    pieces = sqrt2_piece_integrals(cfg)
    out.append(CheckResult.bounded("sqrt(2) rectangle pieces", "parallelogram",
                                   max(abs(r.value.real - t) for r, t in zip(pieces, closed_form_sqrt2_pieces())),
                                   1e-8))

    for spec in (new_kernel(1.3, 1.2), triangle_kernel(0.5, 0.8), diagonal_kernel(0.6, 2.0)):
        planar = constant_for(spec, cfg, "planar")
        reduced = constant_for(spec, cfg, "reduced")
        out.append(CheckResult.bounded("planar and reduced evaluations agree", spec.family,
                                       abs(planar.integral_I - reduced.integral_I),
                                       1e-7 + planar.err_est + reduced.err_est, **spec.params()))

    worst = 0.0
    for _ in range(sizes.diagonal_points):
        b, theta = float(rng.uniform(0.3, 1.0)), float(rng.uniform(-math.pi, math.pi))
        mirrored = constant_for(diagonal_kernel(1.0 / b, theta), cfg)
        direct = constant_for(diagonal_kernel(b, -theta), cfg)
        slack = mirrored.err_est + direct.err_est + 1e-10
        worst = max(worst, abs(mirrored.integral_I + direct.integral_I) / slack)
    out.append(CheckResult.bounded("I(1/b, theta) = -I(b, -theta)", "diagonal", worst, 1.0,
                                   points=sizes.diagonal_points))
    return out


SUITES: Dict[str, Callable[[int, QuadConfig, SuiteSizes], List[CheckResult]]] = {
    "quad": _quad_suite,
    "special": _special_suite,
    "basis": _basis_suite,
    "martingale": _martingale_suite,
    "averaging": _averaging_suite,
    "constants": _constants_suite,
}


def run_suites(names: Sequence[str] = ("all",), seed: int = 0, cfg: QuadConfig = None,
               sizes: SuiteSizes = DESK, threads: Optional[int] = None) -> List[CheckResult]:
    """Run the named suites (``all`` for every suite) and return their checks in suite order.

    Raises:
        ValueError: an unknown suite name.
    """
    cfg = cfg or QuadConfig()
    selected = list(SUITES) if "all" in names else list(dict.fromkeys(names))
    unknown = [n for n in selected if n not in SUITES]
    if unknown:
        raise ValueError(f"Unknown suite(s) {unknown}; expected any of {['all', *SUITES]}")

    jobs = [EvaluationJob(label="suite", params={"name": name}) for name in selected]
    orchestrator = Orchestrator(threads, name="verify")
    outcomes = orchestrator.run(
        jobs,
        lambda job: SUITES[job.params["name"]](seed, cfg, sizes),
        describe=lambda r: f"{sum(c.passed for c in r.value)}/{len(r.value)} checks passed",
    )

    checks: List[CheckResult] = []
    for name, outcome in zip(selected, outcomes):
        if outcome.ok:
            checks.extend(outcome.value)
        else:
            checks.append(CheckResult(f"{name} suite", "-", math.inf, False, {"error": outcome.error}))
    failed = [c for c in checks if not c.passed]
    for check in failed:
        logger.warning(f"FAILED {check.check} [{check.system}]: violation {check.max_violation:.3g}")
    logger.info(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return checks
