"""Martingale transforms on Haar systems.

``T_σ f = Σ σ(h) <f, h> h`` multiplies every Haar coefficient by a unimodular
number. For the staged systems (ℋ_new and its relatives) the partial sums
taken stage by stage form a martingale whose increments are supported where
a single kind (or several kinds with disjoint supports) lives, so the
transformed martingale is differentially subordinate to the original one.
That is what :func:`build_run` and :func:`check_subordination` exercise.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from haar_averager.engine.basis import (
    HaarAtom,
    HaarSystem,
    LatticeId,
    StepFunction,
    atom_positions,
    coefficient_arrays,
    from_leaves,
    leaf_values,
    random_step_function,
    synthesize,
)
from haar_averager.engine.kernels import phase_of, unit

logger = logging.getLogger(__name__)

# leaves per root cell used for random test functions: n_children ** resolution
DEFAULT_RESOLUTION = {1: 8, 2: 4, 3: 2}


@dataclass(frozen=True)
class SignChoice:
    """Unimodular multipliers per atom kind, optionally overridden per atom.

    Phases are stored rather than complex values. Kinds without an entry get
    σ = 1.
    """
    phases: Tuple[Tuple[str, float], ...] = ()
    overrides: Tuple[Tuple[HaarAtom, float], ...] = field(default=(), repr=False)

    @classmethod
    def from_values(cls, values: Mapping[str, complex],
                    overrides: Optional[Mapping[HaarAtom, complex]] = None) -> "SignChoice":
        return cls(
            tuple(sorted((str(k), phase_of(v)) for k, v in values.items())),
            tuple((atom, phase_of(v)) for atom, v in (overrides or {}).items()),
        )

    @classmethod
    def identity(cls) -> "SignChoice":
        return cls()

    @classmethod
    def random(cls, kinds: Sequence[str], rng: np.random.Generator) -> "SignChoice":
        return cls(tuple((k, float(rng.uniform(-math.pi, math.pi))) for k in kinds))

    @property
    def homogeneous(self) -> bool:
        """No per-atom overrides: the choice does not depend on cell size or position."""
        return not self.overrides

    def for_kind(self, kind: str) -> complex:
        return unit(dict(self.phases).get(kind, 0.0))

    def for_atom(self, atom: HaarAtom) -> complex:
        for other, phase in self.overrides:
            if other == atom:
                return unit(phase)
        return self.for_kind(atom.kind)

    def per_kind(self, system: HaarSystem) -> Dict[str, complex]:
        return {kind: self.for_kind(kind) for kind in system.kinds}

    def conjugate(self) -> "SignChoice":
        return SignChoice(tuple((k, -p) for k, p in self.phases),
                          tuple((a, -p) for a, p in self.overrides))


def p_star(p: float) -> float:
    if not p > 1:
        raise ValueError(f"p must be > 1, got {p}")
    return max(p, p / (p - 1.0))


def _resolve(f: StepFunction, system: HaarSystem, root_cell: Optional[LatticeId],
             depth: Optional[int]) -> Tuple[LatticeId, int]:
    return root_cell or system.root_cell(), f.resolution if depth is None else depth


def _multiplied(f: StepFunction, system: HaarSystem, multipliers: np.ndarray, root_cell: LatticeId,
                depth: int, overrides: Sequence[Tuple[HaarAtom, complex]] = ()) -> StepFunction:
    leaves = leaf_values(f, system, root_cell)
    arrays = [a * multipliers[None, :] for a in coefficient_arrays(leaves, system, root_cell, depth)]
    if overrides:
        originals = coefficient_arrays(leaves, system, root_cell, depth)
        positions = atom_positions(system, root_cell, depth)
        for atom, sigma in overrides:
            if atom in positions:
                g, block, j = positions[atom]
                arrays[g][block, j] = originals[g][block, j] * sigma
    return from_leaves(synthesize(arrays, system, root_cell, f.resolution), system, root_cell, f.resolution)


def apply_transform(f: StepFunction, system: HaarSystem, sigma: SignChoice, depth: Optional[int] = None,
                    root_cell: Optional[LatticeId] = None) -> StepFunction:
    """``T_σ f`` summed over the atoms of ``root_cell`` down to ``depth`` generations.

    Raises:
        ResolutionMismatch: ``f`` does not fit the lattice of ``root_cell``.
    """
    root_cell, depth = _resolve(f, system, root_cell, depth)
    multipliers = np.array([sigma.for_kind(k) for k in system.kinds])
    overrides = [(atom, unit(phase)) for atom, phase in sigma.overrides]
    return _multiplied(f, system, multipliers, root_cell, depth, overrides)


def kind_projection(f: StepFunction, system: HaarSystem, kinds: Sequence[str], depth: Optional[int] = None,
                    root_cell: Optional[LatticeId] = None) -> StepFunction:
    """Projection onto the span of the atoms of the given kinds."""
    root_cell, depth = _resolve(f, system, root_cell, depth)
    for kind in kinds:
        system.kind_index(kind)
    multipliers = np.array([1.0 if k in kinds else 0.0 for k in system.kinds])
    return _multiplied(f, system, multipliers, root_cell, depth)


def depth_projection(f: StepFunction, system: HaarSystem, depth: Optional[int] = None,
                     root_cell: Optional[LatticeId] = None) -> StepFunction:
    return kind_projection(f, system, system.kinds, depth, root_cell)


# ---------------------------------------------------------------------------
# Martingale runs
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MartingaleRun:
    """Partial sums X_m of f and Y_m of T_σ f, one step per filtration stage.

    ``labels[m][i]`` names the atom of the σ-algebra F_m that holds leaf ``i``
    (leaves in child-path order).
    """
    system: HaarSystem
    root_cell: LatticeId
    steps: Tuple[Tuple[StepFunction, StepFunction], ...]
    labels: Tuple[np.ndarray, ...]
    stages: Tuple[str, ...]

    def __len__(self) -> int:
        return len(self.steps)

    def leaf_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        """X and Y leaf values stacked per step, shape (steps, leaves)."""
        xs = np.array([leaf_values(x, self.system, self.root_cell) for x, _ in self.steps])
        ys = np.array([leaf_values(y, self.system, self.root_cell) for _, y in self.steps])
        return xs, ys


def _stage_labels(system: HaarSystem, generation: int, added: Sequence[str], resolution: int) -> np.ndarray:
    """Cells of the filtration after the kinds ``added`` of ``generation`` are in."""
    k = system.n_children
    leaves = np.arange(k ** resolution)
    block = leaves // k ** (resolution - generation)
    if not added:
        return block
    child = (leaves // k ** (resolution - generation - 1)) % k
    patterns = system.pattern_matrix[[system.kind_index(kind) for kind in added]]
    signatures = {}
    child_label = np.array([signatures.setdefault(tuple(patterns[:, c]), len(signatures)) for c in range(k)])
    return block * k + child_label[child]


def build_run(f: StepFunction, system: HaarSystem, sigma: SignChoice, depth: Optional[int] = None,
              root_cell: Optional[LatticeId] = None) -> MartingaleRun:
    """Stage-by-stage partial sums of f and T_σ f.

    X_0 = 0; each later step adds the atoms of one stage of one generation,
    generations coarse to fine. For ℋ_new the stages are {0} then {+, -}.
    """
    root_cell, depth = _resolve(f, system, root_cell, depth)
    resolution = f.resolution
    leaves = leaf_values(f, system, root_cell)
    coefs = coefficient_arrays(leaves, system, root_cell, depth)
    multipliers = np.array([sigma.for_kind(k) for k in system.kinds])
    overrides = {atom: unit(phase) for atom, phase in sigma.overrides}
    positions = atom_positions(system, root_cell, depth) if overrides else {}
    transformed = [c * multipliers[None, :] for c in coefs]
    for atom, value in overrides.items():
        if atom in positions:
            g, block, j = positions[atom]
            transformed[g][block, j] = coefs[g][block, j] * value

    k = system.n_children
    active_x = [np.zeros_like(c) for c in coefs]
    active_y = [np.zeros_like(c) for c in coefs]
    zero = from_leaves(np.zeros(k ** resolution, dtype=complex), system, root_cell, resolution)
    steps = [(zero, zero)]
    labels = [np.zeros(k ** resolution, dtype=int)]
    names = ["trivial"]
    for g in range(depth):
        added: List[str] = []
        for stage in system.stages:
            columns = [system.kind_index(kind) for kind in stage]
            active_x[g][:, columns] = coefs[g][:, columns]
            active_y[g][:, columns] = transformed[g][:, columns]
            added.extend(stage)
            steps.append((
                from_leaves(synthesize(active_x, system, root_cell, resolution), system, root_cell, resolution),
                from_leaves(synthesize(active_y, system, root_cell, resolution), system, root_cell, resolution),
            ))
            labels.append(_stage_labels(system, g, added, resolution))
            names.append(f"g{g}:{'/'.join(stage)}")
    logger.debug(f"build_run {system.tag}: {len(steps)} steps over {depth} generations")
    return MartingaleRun(system, root_cell, tuple(steps), tuple(labels), tuple(names))


class SubordinationReport(NamedTuple):
    max_violation: float
    measurability_error: float
    martingale_error: float


def _cell_means(values: np.ndarray, labels: np.ndarray) -> np.ndarray:
    counts = np.bincount(labels)
    safe = np.maximum(counts, 1)
    means = (np.bincount(labels, weights=values.real) + 1j * np.bincount(labels, weights=values.imag)) / safe
    return means[labels]


def check_subordination(run: MartingaleRun) -> SubordinationReport:
    """Largest ``|ΔY| - |ΔX|`` over steps and leaves, plus filtration diagnostics.

    The measurability error is the largest deviation of X_m or Y_m from its
    cell averages over F_m; the martingale error is the largest
    ``|E(X_{m+1} | F_m) - X_m|``. All leaves carry equal measure, so
    conditional expectations are plain cell averages.
    """
    xs, ys = run.leaf_arrays()
    violation = 0.0
    if len(xs) > 1:
        violation = float((np.abs(np.diff(ys, axis=0)) - np.abs(np.diff(xs, axis=0))).max())
    measurability = 0.0
    martingale = 0.0
    for m, labels in enumerate(run.labels):
        for values in (xs[m], ys[m]):
            measurability = max(measurability, float(np.abs(values - _cell_means(values, labels)).max()))
        if m + 1 < len(xs):
            martingale = max(martingale, float(np.abs(_cell_means(xs[m + 1], labels) - xs[m]).max()))
    return SubordinationReport(violation, measurability, martingale)


# ---------------------------------------------------------------------------
# Norm ratios
# ---------------------------------------------------------------------------

def norm_ratios(system: HaarSystem, sigma: Optional[SignChoice], p: float, trials: int, seed: int,
                resolution: Optional[int] = None) -> np.ndarray:
    """``||T_σ f||_p / ||f||_p`` for ``trials`` random mean-zero step functions.

    Each trial draws from its own child of ``SeedSequence(seed)``; with
    ``sigma=None`` every trial also draws its own per-kind phases.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    resolution = DEFAULT_RESOLUTION[system.dim] if resolution is None else resolution
    ratios = np.empty(trials)
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(trials)):
        rng = np.random.default_rng(child)
        choice = sigma if sigma is not None else SignChoice.random(system.kinds, rng)
        f = random_step_function(system, rng, resolution)
        ratios[i] = apply_transform(f, system, choice).lp_norm(p) / f.lp_norm(p)
    return ratios


def empirical_norm_ratio(system: HaarSystem, sigma: Optional[SignChoice], p: float, trials: int = 200,
                         seed: int = 0, resolution: Optional[int] = None) -> float:
    """Largest sampled ``||T_σ f||_p / ||f||_p``; bounded by ``p* - 1``."""
    ratio = float(norm_ratios(system, sigma, p, trials, seed, resolution).max())
    logger.debug(f"empirical_norm_ratio {system.tag} p={p:g}: {ratio:.12g} (bound {p_star(p) - 1:.6g})")
    return ratio


class NearExtremalResult(NamedTuple):
    ratio: float
    f: StepFunction
    evaluations: int


def near_extremal_search(system: HaarSystem, sigma: SignChoice, p: float = 4.0, depth: int = 2,
                         seed: int = 0, maxiter: int = 2000) -> NearExtremalResult:
    """Nelder-Mead ascent of the norm ratio over real mean-zero step functions.

    The best ratio found is a lower bound for ``||T_σ||_p`` and nothing more.
    """
    root = system.root_cell()
    count = system.n_children ** depth
    rng = np.random.default_rng(seed)

    def build(x: np.ndarray) -> StepFunction:
        return from_leaves(x - x.mean(), system, root, depth)

    def objective(x: np.ndarray) -> float:
        f = build(x)
        norm = f.lp_norm(p)
        if norm < 1e-300:
            return 0.0
        return -apply_transform(f, system, sigma).lp_norm(p) / norm

    start = rng.standard_normal(count)
    result = minimize(objective, start, method="Nelder-Mead",
                      options={"maxiter": maxiter, "xatol": 1e-8, "fatol": 1e-12})
    best = build(result.x)
    logger.info(f"near-extremal search {system.tag} p={p:g}: ratio {-result.fun:.8f} after {result.nfev} evaluations")
    return NearExtremalResult(float(-result.fun), best, int(result.nfev))
