"""``polydd`` command line: single runs, tables and convergence studies.

Exit status is 0 on success, 2 when any solve hit ``maxit`` without
converging, and 1 on errors.
"""

from __future__ import annotations

import json
import logging
import sys

import click

from .errors import PolyDDError
from .harness import (
    METHODS,
    CoefficientField,
    ExperimentConfig,
    TableResult,
    convergence_study,
    emit_scaling_data,
    expand_grid,
    run_experiment,
    run_table,
)

EXIT_NONCONVERGED = 2


def _write(text: str, path: str | None):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


@click.group()
@click.option("-v", "--verbose", count=True, help="Repeat for more logging.")
def main(verbose):
    """Virtual element BDDC / FETI-DP experiments."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--mesh", type=click.Choice(["hex", "voronoi"]), default="hex", show_default=True)
@click.option("--N", "N", type=int, default=8, show_default=True, help="Subdomains per side.")
@click.option("--nx", type=int, default=8, show_default=True)
@click.option("--ny", type=int, default=10, show_default=True)
@click.option("--cells", type=int, default=100, show_default=True,
              help="Voronoi cells per subdomain.")
@click.option("--lloyd", type=int, default=3, show_default=True, help="Lloyd iterations.")
@click.option("--degree", type=int, default=1, show_default=True)
@click.option("--coeff", type=click.Choice(["const", "central", "randexp"]), default="const",
              show_default=True)
@click.option("--rho0", type=float, default=1.0, show_default=True)
@click.option("--block", type=int, default=None, help="Side of the central block (default N/2).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--gamma", type=float, default=1.0, show_default=True)
@click.option("--method", type=click.Choice(list(METHODS)), default="fetidp", show_default=True)
@click.option("--rhs", type=click.Choice(["sinsin", "random"]), default="sinsin", show_default=True)
@click.option("--tol", type=float, default=1e-6, show_default=True)
@click.option("--maxit", type=int, default=1000, show_default=True)
@click.option("--reference", is_flag=True, help="Also compare against a direct solve.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV output path.")
def run(mesh, N, nx, ny, cells, lloyd, degree, coeff, rho0, block, seed, gamma, method, rhs,
        tol, maxit, reference, out):
    """Run one experiment and write a one-row CSV."""
    try:
        cfg = ExperimentConfig(mesh=mesh, N=N, nx=nx, ny=ny, cells=cells, lloyd=lloyd,
                               degree=degree,
                               coeff=CoefficientField(coeff, rho0, seed, block),
                               method=method, rhs=rhs, seed=seed, tol=tol, maxit=maxit,
                               gamma=gamma, reference=reference)
        row = run_experiment(cfg)
    except PolyDDError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    _write(TableResult([row]).to_csv(), out)
    msg = f"{cfg.label()}: {row.iterations} iterations, cond {row.cond:.4g}"
    if reference:
        msg += f", energy error vs direct {row.energy_error:.2e}"
    click.echo(msg, err=True)
    if not row.converged:
        click.echo(f"not converged within {maxit} iterations", err=True)
        sys.exit(EXIT_NONCONVERGED)


@main.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="JSON file with 'base', 'grid' and optional 'out', 'markdown', "
                   "'scaling', 'memory_budget_mb'.")
def table(spec_path):
    """Run a grid of experiments; CSV plus a markdown table."""
    try:
        with open(spec_path) as fh:
            spec = json.load(fh)
        configs = expand_grid(spec.get("base", {}), spec.get("grid", {}))
        result = run_table(configs, spec.get("memory_budget_mb"))
        _write(result.to_csv(), spec.get("out"))
        md = result.to_markdown()
        if spec.get("markdown"):
            _write(md, spec["markdown"])
        else:
            click.echo(md, err=True)
        if spec.get("scaling"):
            fit = emit_scaling_data(result.rows, spec["scaling"])
            click.echo(f"sqrt(lambda_max) fit: slope {fit.slope:.4f}, R^2 {fit.r2:.4f}", err=True)
    except (PolyDDError, OSError, ValueError, TypeError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    if any(r.ok and not r.converged for r in result.rows):
        sys.exit(EXIT_NONCONVERGED)


@main.command()
@click.option("--degree", type=int, default=1, show_default=True)
@click.option("--levels", type=int, default=4, show_default=True)
@click.option("--start", type=int, default=4, show_default=True, help="Coarsest hex grid size.")
def converge(degree, levels, start):
    """Refinement study with the manufactured solution sin(pi x) sin(pi y)."""
    try:
        tab = convergence_study(degree, levels, start)
    except PolyDDError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(tab.to_markdown(), nl=False)


if __name__ == "__main__":
    main()
