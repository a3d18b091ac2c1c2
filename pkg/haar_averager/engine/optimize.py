"""Searches over kernel parameters for the smallest constant C.

A search runs a coarse grid over the box (in parallel through the
orchestrator) and then refines with bounded Nelder-Mead simplices started
from the three best grid points. Each refinement stage starts from the best
points of everything evaluated so far, so the best C never increases from one
stage to the next.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from haar_averager.core import EvaluationJob, JobResult, Orchestrator
from haar_averager.engine.basis import UnsupportedParams
from haar_averager.engine.constants import METHODS, constant_for
from haar_averager.engine.kernels import KernelSpec, new_kernel
from haar_averager.engine.quad import NonConvergence, QuadConfig
from haar_averager.output import RunManifest, get_writer
from haar_averager.utils.logging import format_params, timed

logger = logging.getLogger(__name__)

SEARCH_FAMILIES = ("new", "diagonal", "triangle")

PARAMETERS: Dict[str, Tuple[str, ...]] = {
    "new": ("b", "phi"),
    "diagonal": ("b", "theta", "phi"),
    "triangle": ("a", "b", "arg_sigma_plus", "arg_sigma_minus"),
}

FIXED_DEFAULTS: Dict[str, Dict[str, float]] = {
    "new": {"b": 1.0, "phi": math.pi / 2},
    "diagonal": {"b": 1.0, "theta": math.pi, "phi": math.pi / 2},
    "triangle": {"a": 0.0, "b": 1.0},
}

DEFAULT_BOUNDS: Dict[str, Dict[str, Tuple[float, float]]] = {
    "new": {"b": (0.5, 2.5), "phi": (math.pi / 4, 3 * math.pi / 4)},
    "diagonal": {"b": (0.2, 1.0), "theta": (-math.pi, math.pi)},
    "triangle": {"a": (-1.0, 2.0), "b": (0.25, 2.0),
                 "arg_sigma_plus": (-math.pi, math.pi), "arg_sigma_minus": (-math.pi, math.pi)},
}

DEFAULT_GRID = {"new": 9, "diagonal": 9, "triangle": 5}

SIMPLEX_OPTIONS = {"xatol": 1e-5, "fatol": 1e-9, "maxiter": 500}
REFINE_STARTS = 3
SIMPLEX_JITTER = 0.05


def check_bounds(family: str, bounds: Mapping[str, Sequence[float]]) -> None:
    """Reject boxes outside the parameter domain of ``family``.

    Raises:
        UnsupportedParams: unknown family or parameter, unordered bounds, or a
            box leaving the domain.
    """
    if family not in SEARCH_FAMILIES:
        raise UnsupportedParams(f"Unknown search family {family!r}; expected one of {list(SEARCH_FAMILIES)}")
    if not bounds:
        raise UnsupportedParams("a search needs at least one bounded parameter")
    for name, (lo, hi) in bounds.items():
        if name not in PARAMETERS[family]:
            raise UnsupportedParams(f"{family} searches have no parameter {name!r}; "
                                    f"known: {list(PARAMETERS[family])}")
        if not lo < hi:
            raise UnsupportedParams(f"bounds for {name} must satisfy lo < hi, got [{lo}, {hi}]")
        if name == "b" and not lo > 0:
            raise UnsupportedParams(f"b must stay > 0, got lower bound {lo}")
        if name == "phi" and not (0 < lo and hi < math.pi):
            raise UnsupportedParams(f"phi must stay inside (0, pi), got [{lo}, {hi}]")
        if name in ("theta", "arg_sigma_plus", "arg_sigma_minus") and not (-math.pi <= lo and hi <= math.pi):
            raise UnsupportedParams(f"{name} must stay inside [-pi, pi], got [{lo}, {hi}]")
    if family == "diagonal" and "b" in bounds and bounds["b"][1] > 1.0:
        raise UnsupportedParams("diagonal searches run over b <= 1; C(1/b, theta) mirrors C(b, -theta)")
    if family == "triangle":
        if "a" in bounds and not (-1.0 <= bounds["a"][0] and bounds["a"][1] <= 2.0):
            raise UnsupportedParams(f"triangle a must stay inside [-1, 2], got {list(bounds['a'])}")
        if "b" in bounds and bounds["b"][1] > 2.0:
            raise UnsupportedParams(f"triangle b must stay inside (0, 2], got {list(bounds['b'])}")


@dataclass(frozen=True)
class SearchSpec:
    """A search box and how to scan it.

    Attributes:
        family: ``new``, ``diagonal`` or ``triangle``.
        bounds: ``(name, lo, hi)`` per searched parameter, in axis order.
        grid: Grid points per axis in the first stage.
        stages: Total number of stages; stage 1 is the grid.
        seed: Seeds the jitter of the refinement simplices.
        phases: Fixed ``(arg σ0, arg σ+, arg σ-)`` for phases not searched.
        fixed: Values of parameters not searched.
        method: Evaluation method passed to ``constant_for``.
    """
    family: str
    bounds: Tuple[Tuple[str, float, float], ...]
    grid: int = 9
    stages: int = 2
    seed: int = 0
    phases: Tuple[float, float, float] = (0.0, math.pi, math.pi)
    fixed: Tuple[Tuple[str, float], ...] = ()
    method: str = "reduced"

    def __post_init__(self):
        object.__setattr__(self, "bounds", tuple((str(n), float(lo), float(hi)) for n, lo, hi in self.bounds))
        object.__setattr__(self, "phases", tuple(float(p) for p in self.phases))
        object.__setattr__(self, "fixed", tuple(sorted((str(n), float(v)) for n, v in self.fixed)))
        check_bounds(self.family, {n: (lo, hi) for n, lo, hi in self.bounds})
        if len({n for n, _, _ in self.bounds}) != len(self.bounds):
            raise UnsupportedParams("each parameter may be bounded once")
        if int(self.grid) != self.grid or self.grid < 2:
            raise UnsupportedParams(f"grid must be an integer >= 2, got {self.grid}")
        if int(self.stages) != self.stages or self.stages < 1:
            raise UnsupportedParams(f"stages must be an integer >= 1, got {self.stages}")
        if self.method not in METHODS:
            raise UnsupportedParams(f"Unknown method {self.method!r}; expected one of {list(METHODS)}")

    @classmethod
    def default(cls, family: str, **changes) -> "SearchSpec":
        """The standard box of ``family``."""
        if family not in SEARCH_FAMILIES:
            raise UnsupportedParams(f"Unknown search family {family!r}; expected one of {list(SEARCH_FAMILIES)}")
        bounds = tuple((name, lo, hi) for name, (lo, hi) in DEFAULT_BOUNDS[family].items())
        return cls(family=family, bounds=changes.pop("bounds", bounds),
                   grid=changes.pop("grid", DEFAULT_GRID[family]), **changes)

    @classmethod
    def from_config(cls, config: Mapping) -> "SearchSpec":
        """Build a spec from a loaded (defaults applied) configuration."""
        family = config["family"]
        bounds = config.get("bounds") or DEFAULT_BOUNDS[family]
        return cls(
            family=family,
            bounds=tuple((name, lo, hi) for name, (lo, hi) in bounds.items()),
            grid=config.get("grid") or DEFAULT_GRID[family],
            stages=config.get("stages", 2),
            seed=config.get("seed", 0),
            phases=tuple(config.get("sigma") or (0.0, math.pi, math.pi)),
            fixed=tuple((config.get("fixed") or {}).items()),
            method=config.get("method", "reduced"),
        )

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(name for name, _, _ in self.bounds)

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for _, lo, _ in self.bounds])

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, _, hi in self.bounds])

    def grid_points(self) -> List[Dict[str, float]]:
        """Grid points in sorted parameter order."""
        axes = [np.linspace(lo, hi, self.grid) for _, lo, hi in self.bounds]
        return [dict(zip(self.names, (float(v) for v in values))) for values in itertools.product(*axes)]

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "bounds": {n: [lo, hi] for n, lo, hi in self.bounds},
            "grid": self.grid,
            "stages": self.stages,
            "seed": self.seed,
            "sigma": list(self.phases),
            "fixed": dict(self.fixed),
            "method": self.method,
        }


def kernel_at(spec: SearchSpec, params: Mapping[str, float]) -> KernelSpec:
    """Kernel of ``spec.family`` at a search point."""
    values = {**FIXED_DEFAULTS[spec.family], **dict(spec.fixed), **params}
    s0, sp, sm = spec.phases
    if spec.family == "new":
        return KernelSpec("new", b=values["b"], phi=values["phi"], phases=(s0, sp, sm))
    if spec.family == "diagonal":
        theta = values["theta"]
        return KernelSpec("diagonal", b=values["b"], phi=values["phi"], phases=(0.0, theta, -theta))
    return KernelSpec("triangle", a=values["a"], b=values["b"],
                      phases=(s0, values.get("arg_sigma_plus", sp), values.get("arg_sigma_minus", sm)))


def diagonal_mirror(params: Mapping[str, float]) -> Dict[str, float]:
    """The diagonal point with the same |I|: ``(b, θ) -> (1/b, -θ)``."""
    return {**params, "b": 1.0 / params["b"], "theta": -params["theta"]}


@dataclass(frozen=True)
class Evaluation:
    """One evaluated point of a search."""
    params: Dict[str, float]
    C: float
    err_est: float
    integral_I: complex
    degenerate: bool
    stage: int

    def to_record(self) -> Dict[str, object]:
        return {
            "stage": self.stage,
            **self.params,
            "C": self.C,
            "err_est": self.err_est,
            "I_re": self.integral_I.real,
            "I_im": self.integral_I.imag,
            "degenerate": self.degenerate,
        }


@dataclass
class SearchResult:
    """Everything a search evaluated, with the best admissible point."""
    spec: SearchSpec
    evaluations: List[Evaluation] = field(default_factory=list)
    stage_bests: List[float] = field(default_factory=list)
    failed: int = 0

    @property
    def admissible(self) -> List[Evaluation]:
        return [e for e in self.evaluations if not e.degenerate and math.isfinite(e.C)]

    @property
    def best(self) -> Optional[Evaluation]:
        ranked = ranked_evaluations(self.admissible)
        return ranked[0] if ranked else None

    @property
    def best_params(self) -> Optional[Dict[str, float]]:
        return None if self.best is None else dict(self.best.params)

    @property
    def best_C(self) -> float:
        return math.inf if self.best is None else self.best.C


def ranked_evaluations(evaluations: Sequence[Evaluation]) -> List[Evaluation]:
    """Sort by C ascending with degenerate points last; ties by parameters."""
    return sorted(evaluations, key=lambda e: (e.degenerate, e.C, tuple(e.params.values())))


def evaluate_point(spec: SearchSpec, params: Mapping[str, float], cfg: QuadConfig, stage: int) -> Evaluation:
    """Evaluate C at one point.

    Raises:
        NonConvergence: the quadrature missed its tolerance.
    """
    kernel = kernel_at(spec, params)
    result = constant_for(kernel, cfg, spec.method)
    evaluation = Evaluation(dict(params), result.C, result.err_est, result.integral_I, result.degenerate, stage)
    logger.debug(f"stage {stage} {format_params(params)}: C={result.C:.12g} err={result.err_est:.2g}"
                 + (" (degenerate)" if result.degenerate else ""))
    return evaluation


class _Refiner:
    """Objective of one refinement stage with a cache of evaluated points."""

    def __init__(self, spec: SearchSpec, cfg: QuadConfig, stage: int, result: SearchResult):
        self.spec = spec
        self.cfg = cfg
        self.stage = stage
        self.result = result
        self._seen: Dict[Tuple[float, ...], float] = {
            tuple(e.params[n] for n in spec.names): (math.inf if e.degenerate else e.C)
            for e in result.evaluations
        }

    def __call__(self, x: np.ndarray) -> float:
        point = tuple(float(v) for v in np.clip(x, self.spec.lower, self.spec.upper))
        if point in self._seen:
            return self._seen[point]
        params = dict(zip(self.spec.names, point))
        try:
            evaluation = evaluate_point(self.spec, params, self.cfg, self.stage)
        except NonConvergence as exc:
            logger.warning(f"Skipping {format_params(params)}: {exc.message}")
            self.result.failed += 1
            value = math.inf
        else:
            self.result.evaluations.append(evaluation)
            value = math.inf if evaluation.degenerate else evaluation.C
        self._seen[point] = value
        return value


def _initial_simplex(spec: SearchSpec, start: np.ndarray, stage: int, rng: np.random.Generator) -> np.ndarray:
    widths = (spec.upper - spec.lower) / (spec.grid - 1)
    steps = widths * 0.5 ** (stage - 1) * (1.0 + SIMPLEX_JITTER * rng.uniform(size=len(widths)))
    simplex = [start]
    for i, step in enumerate(steps):
        vertex = start.copy()
        vertex[i] = start[i] + step if start[i] + step <= spec.upper[i] else start[i] - step
        simplex.append(vertex)
    return np.array(simplex)


def _grid_stage(spec: SearchSpec, cfg: QuadConfig, threads: Optional[int], result: SearchResult) -> None:
    jobs = [EvaluationJob(label=spec.family, params=point) for point in spec.grid_points()]

    def task(job: EvaluationJob) -> Optional[Evaluation]:
        try:
            return evaluate_point(spec, job.params, cfg, 1)
        except NonConvergence as exc:
            logger.warning(f"Skipping {format_params(job.params)}: {exc.message}")
            return None

    orchestrator = Orchestrator(threads, name=f"{spec.family} grid stage")
    outcomes: List[JobResult] = orchestrator.run(jobs, task)
    for outcome in outcomes:
        if outcome.ok and outcome.value is not None:
            result.evaluations.append(outcome.value)
        else:
            result.failed += 1


def search(spec: SearchSpec, cfg: QuadConfig = None, threads: Optional[int] = None) -> SearchResult:
    """Grid scan, then ``spec.stages - 1`` rounds of simplex refinement.

    Points whose quadrature does not converge are logged and skipped.
    Degenerate points are kept in the log but never chosen as a start or as
    the best point.
    """
    cfg = cfg or QuadConfig()
    result = SearchResult(spec)
    rng = np.random.default_rng(spec.seed)

    with timed(logger, f"{spec.family} search"):
        logger.info(f"Stage 1/{spec.stages}: {spec.grid}^{len(spec.bounds)} grid over "
                    + ", ".join(f"{n} in [{lo:.6g}, {hi:.6g}]" for n, lo, hi in spec.bounds))
        _grid_stage(spec, cfg, threads, result)
        result.stage_bests.append(result.best_C)
        logger.info(f"Stage 1 best C = {result.best_C:.12g} at {format_params(result.best_params or {})}")

        for stage in range(2, spec.stages + 1):
            starts = ranked_evaluations(result.admissible)[:REFINE_STARTS]
            if not starts:
                logger.warning(f"Stage {stage}: no admissible point to refine from")
                result.stage_bests.append(result.best_C)
                continue
            objective = _Refiner(spec, cfg, stage, result)
            for start in starts:
                x0 = np.array([start.params[n] for n in spec.names])
                options = {**SIMPLEX_OPTIONS, "initial_simplex": _initial_simplex(spec, x0, stage, rng)}
                outcome = minimize(objective, x0, method="Nelder-Mead",
                                   bounds=list(zip(spec.lower, spec.upper)), options=options)
                logger.debug(f"Stage {stage} simplex from {format_params(start.params)}: "
                             f"{outcome.nit} iterations, C={outcome.fun:.12g} ({outcome.message})")
            result.stage_bests.append(result.best_C)
            logger.info(f"Stage {stage}/{spec.stages} best C = {result.best_C:.12g} "
                        f"at {format_params(result.best_params or {})}")

    return result


@dataclass(frozen=True)
class SigmaPattern:
    sigma: Tuple[int, int, int]
    C: float
    degenerate: bool


def sigma_pattern_search(b: float = 1.0, phi: float = math.pi / 2, cfg: QuadConfig = None,
                         method: str = "reduced") -> List[SigmaPattern]:
    """Rank the patterns σ0 = 1, σ± = ±1 by C, degenerate patterns last."""
    patterns = []
    for sp, sm in itertools.product((1, -1), repeat=2):
        result = constant_for(new_kernel(b, phi, (1, sp, sm)), cfg, method)
        patterns.append(SigmaPattern((1, sp, sm), result.C, result.degenerate))
        logger.debug(f"sigma=(1, {sp}, {sm}): C={result.C:.12g}")
    return sorted(patterns, key=lambda p: (p.degenerate, p.C))


def summary(result: SearchResult) -> Dict[str, object]:
    """JSON summary of a search."""
    best = result.best
    return {
        "search": result.spec.to_dict(),
        "best": None if best is None else {
            "params": dict(best.params),
            "C": best.C,
            "err_est": best.err_est,
            "I_re": best.integral_I.real,
            "I_im": best.integral_I.imag,
            "stage": best.stage,
        },
        "stage_bests": list(result.stage_bests),
        "evaluations": len(result.evaluations),
        "degenerate": sum(1 for e in result.evaluations if e.degenerate),
        "failed": result.failed,
    }


def report(result: SearchResult, destination: str, formats: Sequence[str] = ("csv", "json"),
           manifest: Optional[RunManifest] = None) -> List[Path]:
    """Write ``<destination>.csv`` (the evaluation log) and ``<destination>.json`` (the summary).

    Returns:
        The paths written.
    """
    manifest = manifest or RunManifest.create("optimize", result.spec.to_dict(), {"search": result.spec.seed})
    fieldnames = ["stage", *result.spec.names, "C", "err_est", "I_re", "I_im", "degenerate"]
    written = []
    for fmt in formats:
        writer = get_writer(fmt)
        path = Path(f"{destination}.{fmt}")
        if fmt == "json":
            writer.open(path)
            try:
                writer.write_manifest(manifest)
                writer.write_object(summary(result))
            finally:
                writer.close()
        else:
            records = [e.to_record() for e in ranked_evaluations(result.evaluations)]
            writer.write_document(path, manifest, records, fieldnames)
        logger.info(f"Wrote {path}")
        written.append(path)
    return written
