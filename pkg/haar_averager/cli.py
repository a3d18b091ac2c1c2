import logging
import math
import sys
from typing import Any, Dict, Optional, Sequence, Tuple

import click
import numpy as np

from haar_averager import __version__
from haar_averager.config.loader import ConfigParseError, load_search_config
from haar_averager.engine.averaging import RadialKernel
from haar_averager.engine.basis import ResolutionMismatch, UnsupportedParams, cell_for_grid, get_system
from haar_averager.engine.constants import METHODS, constant_for
from haar_averager.engine.kernels import KernelSpec, build_kernel, eval_kernel, support
from haar_averager.engine.martingale import SignChoice, apply_transform
from haar_averager.engine.optimize import SEARCH_FAMILIES, SearchSpec, report, search, sigma_pattern_search
from haar_averager.engine.quad import NonConvergence, QuadConfig
from haar_averager.engine.verify import FULL, DESK, SUITES, mc_comparisons, run_suites
from haar_averager.output import CsvWriter, JsonWriter, RunManifest
from haar_averager.output.grid import GridFormatError, read_grid, write_grid
from haar_averager.utils.logging import setup_logging

logger = logging.getLogger("haar_averager")

KERNEL_FAMILIES = ("new", "diagonal", "triangle")
TRANSFORM_SYSTEMS = ("new", "orig", "diagonal", "parallelogram")
MC_SYSTEMS = ("new", "parallelogram", "triangle")


@click.group(invoke_without_command=True)
@click.version_option(version=__version__, prog_name="haar-averager")
@click.option("--verbose", "-v", is_flag=True, help="Increase log output to DEBUG level.")
@click.option("--quiet", "-q", is_flag=True, help="Suppress all output except errors and final results.")
@click.option("--threads", type=int, default=None,
              help="Worker threads for batch evaluations (default: $HAAR_AVERAGER_THREADS or the CPU count).")
@click.option("--log-file", default=None, help="Also write log records to this file.")
@click.pass_context
def main(ctx, verbose, quiet, threads, log_file):
    """
    Haar averaging toolkit

    Martingale transforms of planar Haar systems, their averaged kernels and
    the constants relating them to the Ahlfors-Beurling operator.
    """
    if verbose and quiet:
        click.echo("Error: --verbose and --quiet are mutually exclusive", err=True)
        sys.exit(2)
    if threads is not None and threads < 1:
        raise click.BadParameter("must be >= 1", param_hint="--threads")

    ctx.ensure_object(dict)
    ctx.obj["verbose"] = verbose
    ctx.obj["quiet"] = quiet
    ctx.obj["threads"] = threads

    # Bootstrap logging before any command executes
    log_level = "DEBUG" if verbose else "ERROR" if quiet else None
    setup_logging(level=log_level, log_file=log_file)

    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())


# ---------------------------------------------------------------------------
# Shared option parsing
# ---------------------------------------------------------------------------

def _parse_sigma(text: Optional[str]) -> Optional[Tuple[complex, complex, complex]]:
    """``"σ0,σ+,σ-"`` as Python complex literals, e.g. ``1,-1,-1`` or ``1,1j,-1j``."""
    if text is None:
        return None
    try:
        values = tuple(complex(part.strip().replace(" ", "")) for part in text.split(","))
    except ValueError:
        raise click.BadParameter(f"cannot parse {text!r} as complex numbers", param_hint="--sigma")
    if len(values) != 3:
        raise click.BadParameter(f"expected three values σ0,σ+,σ-, got {len(values)}", param_hint="--sigma")
    return values


def _quad_config(tol: Optional[float], gl_order: Optional[int]) -> QuadConfig:
    try:
        return QuadConfig().replace(abs_tol=tol, rel_tol=tol, gl_order=gl_order)
    except ValueError as e:
        raise click.UsageError(str(e))


def _kernel_from_flags(family: str, b: Optional[float], phi: Optional[float], theta: Optional[float],
                       a: Optional[float], sigma: Optional[str]) -> KernelSpec:
    params: Dict[str, Any] = {k: v for k, v in {"b": b, "phi": phi, "theta": theta, "a": a}.items() if v is not None}
    params["sigma"] = _parse_sigma(sigma)
    try:
        return build_kernel(family, **params)
    except UnsupportedParams as e:
        raise click.UsageError(e.message)


def _manifest(ctx: click.Context, seeds: Optional[Dict[str, int]] = None) -> RunManifest:
    flags = dict(ctx.params)
    flags["threads"] = ctx.obj.get("threads") if ctx.obj else None
    return RunManifest.create(ctx.command.name, flags, seeds)


def _write_json(destination: Optional[str], manifest: RunManifest, data: Any) -> None:
    writer = JsonWriter()
    writer.open(destination or "-")
    try:
        writer.write_manifest(manifest)
        if isinstance(data, list):
            writer.write_records(data)
        else:
            writer.write_object(data)
    finally:
        writer.close()


def _kernel_options(func):
    func = click.option("--sigma", default=None,
                        help="Sign choice σ0,σ+,σ- as complex literals with |σ| = 1 (default 1,-1,-1).")(func)
    func = click.option("--a", type=float, default=None, help="Triangle shear a (default 0).")(func)
    func = click.option("--theta", type=float, default=None,
                        help="Diagonal phase: σ± = exp(±iθ) (default pi).")(func)
    func = click.option("--phi", type=float, default=None, help="Inclination φ in (0, pi) (default pi/2).")(func)
    func = click.option("--b", type=float, default=None, help="Side length / height b > 0 (default 1).")(func)
    func = click.option("--family", type=click.Choice(KERNEL_FAMILIES), default="new", show_default=True,
                        help="Kernel family.")(func)
    return func


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

@main.command()
@_kernel_options
@click.option("--method", type=click.Choice(METHODS), default="reduced", show_default=True,
              help="Reference-lattice reduction or direct planar quadrature.")
@click.option("--tol", type=float, default=None, help="Absolute and relative quadrature tolerance.")
@click.option("--gl-order", type=int, default=None, help="Gauss-Legendre nodes per axis.")
@click.option("--out", default=None, help="Write the JSON result here instead of stdout.")
@click.pass_context
def constant(ctx, family, b, phi, theta, a, sigma, method, tol, gl_order, out):
    """
    Compute I and C = 1/|I| for one averaged kernel.
    """
    spec = _kernel_from_flags(family, b, phi, theta, a, sigma)
    cfg = _quad_config(tol, gl_order)
    try:
        result = constant_for(spec, cfg, method)
    except NonConvergence as e:
        raise click.ClickException(f"Quadrature did not converge: {e}")
    if result.degenerate:
        logger.warning("This sign choice is the identity average; its constant says nothing about T")
    if result.vanishing:
        logger.warning(f"I vanishes within its error estimate ({result.err_est:.2g}); C is reported as inf")
    _write_json(out, _manifest(ctx), result.to_dict())


@main.command()
@click.option("--config", "config_path", default=None, type=click.Path(dir_okay=False),
              help="YAML search configuration.")
@click.option("--family", type=click.Choice(SEARCH_FAMILIES), default=None, help="Kernel family to search.")
@click.option("--stages", type=int, default=None, help="Grid stage plus refinement stages.")
@click.option("--grid", type=int, default=None, help="Grid points per axis in the first stage.")
@click.option("--seed", type=int, default=None, help="Seed of the refinement simplices.")
@click.option("--out", default=None, help="Output prefix; writes PREFIX.csv and PREFIX.json.")
@click.option("--sigma-patterns", is_flag=True,
              help="Rank the ±1 sign patterns at fixed --b/--phi instead of searching.")
@click.option("--b", type=float, default=1.0, show_default=True, help="b for --sigma-patterns.")
@click.option("--phi", type=float, default=math.pi / 2, help="φ for --sigma-patterns (default pi/2).")
@click.pass_context
def optimize(ctx, config_path, family, stages, grid, seed, out, sigma_patterns, b, phi):
    """
    Search a kernel family for the smallest constant C.
    """
    threads = ctx.obj.get("threads")
    if sigma_patterns:
        try:
            patterns = sigma_pattern_search(b, phi)
        except UnsupportedParams as e:
            raise click.UsageError(e.message)
        records = [{"sigma": list(p.sigma), "C": p.C, "degenerate": p.degenerate} for p in patterns]
        _write_json(f"{out}.json" if out else None, _manifest(ctx), records)
        return

    overrides = {
        "family": family,
        "stages": stages,
        "grid": grid,
        "seed": seed,
        "threads": threads,
        "output": {"destination": out},
    }
    try:
        config = load_search_config(config_path, overrides)
    except FileNotFoundError as e:
        raise click.ClickException(str(e))
    except ConfigParseError as e:
        raise click.UsageError(str(e))

    try:
        spec = SearchSpec.from_config(config)
        cfg = QuadConfig.from_dict(config["quad"])
    except (UnsupportedParams, ValueError) as e:
        raise click.UsageError(str(e))

    result = search(spec, cfg, config.get("threads"))
    manifest = RunManifest.create("optimize", {**ctx.params, "resolved": spec.to_dict()}, {"search": spec.seed})
    paths = report(result, config["output"]["destination"], config["output"]["formats"], manifest)
    if result.best is None:
        raise click.ClickException("No admissible point was evaluated")
    click.echo(f"Best C = {result.best_C:.12g} at "
               + ", ".join(f"{k}={v:.12g}" for k, v in result.best_params.items()))
    for path in paths:
        click.echo(f"Wrote {path}")


@main.command()
@click.option("--suite", "suites", type=click.Choice(["all", *SUITES]), multiple=True, default=("all",),
              show_default=True, help="Suite to run; repeat for several.")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed of the randomized checks.")
@click.option("--full", is_flag=True, help="Use the full sample sizes (slow).")
@click.option("--out", default=None, help="Write the JSON report here instead of stdout.")
@click.pass_context
def verify(ctx, suites, seed, full, out):
    """
    Run the invariant suites and report every check.

    Exits with status 1 when any check fails.
    """
    checks = run_suites(suites, seed, sizes=FULL if full else DESK, threads=ctx.obj.get("threads"))
    _write_json(out, _manifest(ctx, {"seed": seed}), [c.to_dict() for c in checks])
    if not all(c.passed for c in checks):
        sys.exit(1)


def _parse_phases(text: Optional[str], kinds: Sequence[str]) -> SignChoice:
    """``kind=phase`` pairs (``0=0,+=3.14159,-=3.14159``) or phases in kind order."""
    if not text:
        return SignChoice.identity()
    parts = [p.strip() for p in text.split(",") if p.strip()]
    try:
        if all("=" in p for p in parts):
            pairs = [tuple(p.split("=", 1)) for p in parts]
            phases = tuple((k.strip(), float(v)) for k, v in pairs)
        else:
            if len(parts) != len(kinds):
                raise ValueError(f"expected {len(kinds)} phases for kinds {list(kinds)}, got {len(parts)}")
            phases = tuple(zip(kinds, (float(p) for p in parts)))
    except ValueError as e:
        raise click.BadParameter(str(e), param_hint="--sigma")
    unknown = [k for k, _ in phases if k not in kinds]
    if unknown:
        raise click.BadParameter(f"unknown kinds {unknown}; this system has {list(kinds)}", param_hint="--sigma")
    return SignChoice(tuple(sorted(phases)))


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Dense CSV grid: an nx,ny,x0,y0,h line, then re,im rows in row-major order.")
@click.option("--system", type=click.Choice(TRANSFORM_SYSTEMS), default="new", show_default=True)
@click.option("--b", type=float, default=None, help="Parallelogram/diagonal b.")
@click.option("--phi", type=float, default=None, help="Parallelogram/diagonal φ.")
@click.option("--sigma", default=None, help="Per-kind phases in radians: kind=phase pairs or a list in kind order.")
@click.option("--depth", type=int, default=None, help="Generations to transform (default: all).")
@click.option("--out", default=None, help="Write the CSV here instead of stdout.")
@click.pass_context
def transform(ctx, input_path, system, b, phi, sigma, depth, out):
    """
    Apply a martingale transform to a step function on a dyadic cell.

    The grid must cover one lattice cell exactly: its side nx * h is a power
    of 2 and its corner (x0, y0) a multiple of that side. The result is
    written in the same layout.
    """
    params = {k: v for k, v in {"b": b, "phi": phi}.items() if v is not None}
    try:
        haar = get_system(system, **params)
    except (UnsupportedParams, TypeError) as e:
        raise click.UsageError(str(e))
    try:
        f = read_grid(input_path)
        root_cell = cell_for_grid(haar, f)
    except (GridFormatError, ResolutionMismatch) as e:
        raise click.BadParameter(f"{input_path}: {e}", param_hint="--input")
    if depth is not None and not 0 <= depth <= f.resolution:
        raise click.BadParameter(f"must lie in [0, {f.resolution}]", param_hint="--depth")
    g = apply_transform(f, haar, _parse_phases(sigma, haar.kinds), depth, root_cell)
    write_grid(out or "-", _manifest(ctx), g)


@main.command(name="kernel-dump")
@_kernel_options
@click.option("--n", "points", type=int, default=65, show_default=True, help="Grid points per axis.")
@click.option("--homogenized", is_flag=True, help="Dump the homogenized profile k(e^{iφ}) instead.")
@click.option("--angles", type=int, default=360, show_default=True, help="Angles for --homogenized.")
@click.option("--out", default=None, help="Write the CSV here instead of stdout.")
@click.pass_context
def kernel_dump(ctx, family, b, phi, theta, a, sigma, points, homogenized, angles, out):
    """
    Tabulate an averaged kernel for plotting.
    """
    spec = _kernel_from_flags(family, b, phi, theta, a, sigma)
    if homogenized:
        if angles < 1:
            raise click.BadParameter("must be >= 1", param_hint="--angles")
        radial = RadialKernel(spec)
        records = []
        for phi_k in np.linspace(0.0, 2.0 * math.pi, angles, endpoint=False):
            value = radial.profile(float(phi_k))
            records.append({"phi": float(phi_k), "re": value.real, "im": value.imag})
        fieldnames = ["phi", "re", "im"]
    else:
        if points < 2:
            raise click.BadParameter("must be >= 2", param_hint="--n")
        x0, y0, x1, y1 = support(spec).bounds
        xs, ys = np.meshgrid(np.linspace(x0, x1, points), np.linspace(y0, y1, points))
        values = eval_kernel(spec, xs, ys)
        records = [{"x": x, "y": y, "re": v.real, "im": v.imag}
                   for x, y, v in zip(xs.ravel(), ys.ravel(), values.ravel())]
        fieldnames = ["x", "y", "re", "im"]
    CsvWriter().write_document(out or "-", _manifest(ctx), records, fieldnames)


@main.command(name="mc-check")
@click.option("--system", type=click.Choice(MC_SYSTEMS), default="new", show_default=True)
@click.option("--b", type=float, default=None, help="Parallelogram b / triangle b.")
@click.option("--phi", type=float, default=None, help="Parallelogram φ.")
@click.option("--a", type=float, default=None, help="Triangle shear a.")
@click.option("--pairs", type=int, default=20, show_default=True, help="Random (f, x) pairs.")
@click.option("--samples", type=int, default=1_000_000, show_default=True, help="Monte-Carlo samples per pair.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", default=None, help="Write the JSON report here instead of stdout.")
@click.pass_context
def mc_check(ctx, system, b, phi, a, pairs, samples, seed, out):
    """
    Compare Monte-Carlo translation averages with the analytic kernel.

    Exits with status 1 when an estimate is more than 4 standard errors off.
    """
    allowed = {"new": (), "parallelogram": ("b", "phi"), "triangle": ("a", "b")}[system]
    given = {k: v for k, v in {"a": a, "b": b, "phi": phi}.items() if v is not None}
    extra = sorted(set(given) - set(allowed))
    if extra:
        raise click.UsageError(f"--{extra[0]} does not apply to the {system} system")
    if pairs < 1 or samples < 2:
        raise click.UsageError("--pairs must be >= 1 and --samples >= 2")
    try:
        haar = get_system(system, **given)
    except UnsupportedParams as e:
        raise click.UsageError(e.message)
    comparisons = mc_comparisons(haar, pairs, samples, seed)
    _write_json(out, _manifest(ctx, {"seed": seed}), [c.to_dict() for c in comparisons])
    failed = sum(not c.passed for c in comparisons)
    if failed:
        logger.error(f"{failed}/{len(comparisons)} comparisons off by more than 4 standard errors")
        sys.exit(1)


def entry_point():
    """Entry point for the CLI that handles top-level exceptions and Ctrl+C."""
    try:
        # Use standalone_mode=False to handle our own exit codes and exceptions
        main(standalone_mode=False)
    except click.UsageError as e:
        e.show()
        sys.exit(2)
    except click.ClickException as e:
        e.show()
        sys.exit(1)
    except KeyboardInterrupt:
        click.echo("\nInterrupted.", err=True)
        sys.exit(1)
    except Exception as e:
        logging.getLogger("haar_averager").debug("Unexpected exception", exc_info=True)
        click.echo(f"Error: An unexpected error occurred: {e}", err=True)
        click.echo("Suggestion: Re-run with --verbose for more details.", err=True)
        sys.exit(1)


if __name__ == "__main__":
    entry_point()
