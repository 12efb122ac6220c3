"""Experiment driver: mesh + coefficients + solver -> one result row.

Tables are lists of rows rendered as CSV (one row per configuration, grid
order) and as a markdown grid with subdomain counts down and local sizes
across.
"""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from functools import lru_cache

import numpy as np

from .ddspaces import DDSystem
from .errors import ParameterError, PolyDDError
from .geometry import build_hex_mesh, build_voronoi_mesh
from .solvers import (
    StildeInverse,
    energy_error,
    solve_bddc,
    solve_fetidp,
    solve_fetidp_unpreconditioned,
    solve_schur_unpreconditioned,
)
from .vem import assemble, build_dof_map, element_matrices, error_norms, solve_reference

log = logging.getLogger(__name__)

RNG_ALGORITHM = "numpy-PCG64"
METHODS = ("fetidp", "bddc", "cg", "cg-schur")
CSV_COLUMNS = ["mesh", "N", "n", "k", "coeff", "method", "iters", "lambda_min",
               "lambda_max", "cond", "dofs_interface", "dofs_primal", "wall_ms", "seed",
               "converged", "rng", "error"]


# ----------------------------------------------------------------------
# coefficients


@dataclass(frozen=True)
class CoefficientField:
    """Piecewise constant diffusion coefficient, one value per subdomain.

    ``kind`` is ``const`` (``rho0`` everywhere), ``central`` (``rho0`` on a
    centered ``block x block`` square of subdomains, 1 elsewhere; ``block``
    defaults to ``N // 2``) or ``randexp`` (``10**a`` with integer ``a``
    uniform in ``exponent_range``, drawn from ``numpy.random.default_rng``).
    """

    kind: str = "const"
    rho0: float = 1.0
    seed: int = 0
    block: int | None = None
    exponent_range: tuple[int, int] = (-4, 4)

    def __post_init__(self):
        if self.kind not in ("const", "central", "randexp"):
            raise ParameterError(f"unknown coefficient kind {self.kind!r}")
        if not self.rho0 > 0:
            raise ParameterError(f"rho0 must be positive, got {self.rho0}")
        lo, hi = self.exponent_range
        if lo > hi:
            raise ParameterError(f"empty exponent range {self.exponent_range}")

    def values(self, N: int) -> np.ndarray:
        """Coefficients in subdomain order ``l = J*N + I``."""
        if self.kind == "const":
            return np.full(N * N, float(self.rho0))
        if self.kind == "central":
            b = N // 2 if self.block is None else self.block
            if not 0 <= b <= N:
                raise ParameterError(f"central block {b} does not fit in {N}x{N} subdomains")
            s = (N - b) // 2
            rho = np.ones((N, N))
            rho[s:s + b, s:s + b] = self.rho0
            return rho.ravel()
        lo, hi = self.exponent_range
        a = np.random.default_rng(self.seed).integers(lo, hi + 1, size=N * N)
        return 10.0 ** a.astype(float)

    def label(self) -> str:
        if self.kind == "const":
            return "const" if self.rho0 == 1.0 else f"const({self.rho0:g})"
        if self.kind == "central":
            return f"central({self.rho0:g})"
        return f"randexp({self.seed})"


# ----------------------------------------------------------------------
# configuration and results


@dataclass(frozen=True)
class ExperimentConfig:
    mesh: str = "hex"
    N: int = 8
    nx: int = 8
    ny: int = 10
    cells: int = 100
    lloyd: int = 3
    degree: int = 1
    coeff: CoefficientField = field(default_factory=CoefficientField)
    method: str = "fetidp"
    rhs: str = "sinsin"
    seed: int = 0
    tol: float = 1e-6
    maxit: int = 1000
    gamma: float = 1.0
    reference: bool = False

    def __post_init__(self):
        if self.mesh not in ("hex", "voronoi"):
            raise ParameterError(f"unknown mesh kind {self.mesh!r}")
        if not 1 <= self.N <= 64:
            raise ParameterError(f"N must be in [1, 64], got {self.N}")
        if not 1 <= self.degree <= 8:
            raise ParameterError(f"degree must be in [1, 8], got {self.degree}")
        if self.method not in METHODS:
            raise ParameterError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.rhs not in ("sinsin", "random"):
            raise ParameterError(f"unknown rhs {self.rhs!r}")
        if not 0 < self.tol < 1:
            raise ParameterError(f"tol must be in (0, 1), got {self.tol}")
        if self.maxit < 1:
            raise ParameterError("maxit must be positive")
        if self.mesh == "hex" and min(self.nx, self.ny) < 2:
            raise ParameterError("hex meshes need nx, ny >= 2")
        if self.mesh == "voronoi" and self.cells < 1:
            raise ParameterError("voronoi meshes need at least one cell per subdomain")

    @property
    def n_label(self) -> str:
        return f"{self.nx}x{self.ny}" if self.mesh == "hex" else str(self.cells)

    def label(self) -> str:
        return (f"{self.mesh} N={self.N} n={self.n_label} k={self.degree} "
                f"{self.coeff.label()} {self.method}")


@dataclass
class ResultRow:
    config: ExperimentConfig
    iterations: int = 0
    converged: bool = False
    lambda_min: float = float("nan")
    lambda_max: float = float("nan")
    wall_ms: float = 0.0
    n_dofs: int = 0
    n_hat: int = 0
    n_tilde: int = 0
    n_pi: int = 0
    n_jump: int = 0
    h: float = float("nan")
    H: float = float("nan")
    energy_error: float = float("nan")
    error: str = ""

    @property
    def cond(self) -> float:
        return self.lambda_max / self.lambda_min

    @property
    def ok(self) -> bool:
        return not self.error

    def csv_record(self) -> dict:
        c = self.config
        seed = c.coeff.seed if c.coeff.kind == "randexp" else c.seed
        return {
            "mesh": c.mesh, "N": c.N, "n": c.n_label, "k": c.degree,
            "coeff": c.coeff.label(), "method": c.method,
            "iters": self.iterations if self.ok else "",
            "lambda_min": _fmt(self.lambda_min), "lambda_max": _fmt(self.lambda_max),
            "cond": _fmt(self.cond) if self.ok else "",
            "dofs_interface": self.n_hat, "dofs_primal": self.n_pi,
            "wall_ms": f"{self.wall_ms:.1f}", "seed": seed,
            "converged": int(self.converged), "rng": RNG_ALGORITHM, "error": self.error,
        }


def _fmt(x: float) -> str:
    return "" if not np.isfinite(x) else repr(float(x))


# ----------------------------------------------------------------------
# single runs


def sinsin(p):
    return np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])


def sinsin_load(p):
    return 2.0 * np.pi ** 2 * sinsin(p)


@lru_cache(maxsize=4)
def _discretization(mesh: str, N: int, nx: int, ny: int, cells: int, lloyd: int,
                    seed: int, k: int):
    if mesh == "hex":
        m, part = build_hex_mesh(N, nx, ny)
    else:
        m, part = build_voronoi_mesh(N, cells, seed, lloyd_iters=lloyd)
    dm = build_dof_map(m, part, k)
    return m, part, dm, element_matrices(m, dm, k)


def discretize(config: ExperimentConfig):
    """``(mesh, partition, dofmap, unit element matrices)``; cached."""
    c = config
    return _discretization(c.mesh, c.N, c.nx, c.ny, c.cells if c.mesh == "voronoi" else 0,
                           c.lloyd if c.mesh == "voronoi" else 0,
                           c.seed if c.mesh == "voronoi" else 0, c.degree)


def run_experiment(config: ExperimentConfig, return_solution: bool = False):
    """Build, solve and report.  Errors are re-raised with the config label."""
    try:
        return _run(config, return_solution)
    except PolyDDError as exc:
        raise type(exc)(f"[{config.label()}] {exc}") from exc


def _run(config: ExperimentConfig, return_solution: bool):
    t0 = time.perf_counter()
    mesh, part, dm, unit = discretize(config)
    rho = config.coeff.values(config.N)
    f = sinsin_load if config.rhs == "sinsin" else None
    system = assemble(mesh, dm, config.degree, rho, f, element_cache=unit)
    dd = DDSystem(system, rho, config.gamma, part)
    f_hat = None
    if config.rhs == "random":
        f_hat = np.random.default_rng(config.seed).random(dd.index.n_hat)

    kw = dict(f_hat=f_hat, tol=config.tol, maxit=config.maxit)
    if config.method == "cg-schur":
        sol = solve_schur_unpreconditioned(dd, **kw)
    else:
        Sinv = StildeInverse(dd)
        solver = {"fetidp": solve_fetidp, "bddc": solve_bddc,
                  "cg": solve_fetidp_unpreconditioned}[config.method]
        sol = solver(dd, Sinv=Sinv, **kw)
    rep = sol.report
    wall = (time.perf_counter() - t0) * 1e3

    counts = dm.counts
    row = ResultRow(config, rep.iterations, rep.converged, rep.lambda_min, rep.lambda_max,
                    wall, counts["N"], counts["N_hat"], counts["N_tilde"], counts["N_pi"],
                    counts["M"], h=float(mesh.cell_geometry[:, 3].max()), H=part.H)
    if config.reference:
        f_sub = dd.broken_load_from_hat(f_hat) if f_hat is not None else None
        if f_sub is not None:
            system = replace(system, F=dd.full_load_from_broken(f_sub)[system.free])
        row.energy_error = energy_error(system, sol.u, solve_reference(system))
    if not rep.converged:
        log.warning("%s: not converged after %d iterations", config.label(), rep.iterations)
    return (row, sol) if return_solution else row


# ----------------------------------------------------------------------
# tables


def estimate_memory_mb(config: ExperimentConfig) -> float:
    """Rough peak memory of a run (sparse factors dominate)."""
    cells = config.N ** 2 * (config.cells if config.mesh == "voronoi" else config.nx * config.ny)
    dofs = cells * (2 + 3 * (config.degree - 1) + config.degree * (config.degree - 1) / 2)
    return dofs * 4e-3 * config.degree


@dataclass
class TableResult:
    rows: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow(r.csv_record())
        return buf.getvalue()

    def to_markdown(self) -> str:
        """Grid with one line per row key and one column per local size.

        The row key is ``N`` plus whichever other settings vary in the table.
        Entries read ``iters (cond)``; failed or skipped cells show a dash.
        """
        cfgs = [r.config for r in self.rows]
        varying = [name for name in ("degree", "method", "mesh")
                   if len({getattr(c, name) for c in cfgs}) > 1]
        coeff_varies = len({c.coeff for c in cfgs}) > 1

        def key(c):
            parts = [f"N={c.N}"]
            parts += [f"{name}={getattr(c, name)}" for name in varying]
            if coeff_varies:
                parts.append(c.coeff.label())
            return " ".join(parts)

        cols = list(dict.fromkeys(c.n_label for c in cfgs))
        lines = list(dict.fromkeys(key(c) for c in cfgs))
        cell = {}
        for r in self.rows:
            if not r.ok:
                txt = "—"
            else:
                txt = f"{r.iterations} ({r.cond:.2f})"
                if not r.converged:
                    txt = f"> {r.iterations} ({r.cond:.3g})"
            cell[key(r.config), r.config.n_label] = txt
        out = ["| | " + " | ".join(f"n={c}" for c in cols) + " |",
               "|---" * (len(cols) + 1) + "|"]
        for ln in lines:
            out.append(f"| {ln} | " + " | ".join(cell.get((ln, c), "") for c in cols) + " |")
        return "\n".join(out) + "\n"


def run_table(configs, memory_budget_mb: float | None = None) -> TableResult:
    """Run every configuration in order; failures are recorded per cell."""
    configs = list(configs)
    if not configs:
        raise ParameterError("empty configuration grid")
    rows = []
    for c in configs:
        if memory_budget_mb is not None and estimate_memory_mb(c) > memory_budget_mb:
            rows.append(ResultRow(c, error="memory budget exceeded"))
            continue
        try:
            rows.append(run_experiment(c))
        except PolyDDError as exc:
            log.error("%s", exc)
            rows.append(ResultRow(c, error=str(exc).replace("\n", " ")))
    return TableResult(rows)


def expand_grid(base: dict, grid: dict) -> list[ExperimentConfig]:
    """Cartesian product of ``grid`` over ``base`` (JSON-style dicts).

    Keys are :class:`ExperimentConfig` fields; ``n`` is accepted as
    ``"NXxNY"`` for hex meshes or an integer cell count for Voronoi meshes,
    and coefficient settings use ``coeff``, ``rho0``, ``coeff_seed`` and
    ``block``.
    """
    names = list(grid)
    out = []
    for values in itertools.product(*(grid[n] for n in names)):
        d = dict(base)
        d.update(zip(names, values))
        out.append(config_from_dict(d))
    return out


_COEFF_KEYS = {"coeff": "kind", "rho0": "rho0", "coeff_seed": "seed", "block": "block"}


def config_from_dict(d: dict) -> ExperimentConfig:
    d = dict(d)
    ck = {}
    for key, attr in _COEFF_KEYS.items():
        if key in d:
            ck[attr] = d.pop(key)
    if "seed" in d and "seed" not in ck:
        ck["seed"] = d["seed"]
    if "n" in d:
        n = d.pop("n")
        if isinstance(n, str) and "x" in n:
            nx, ny = n.split("x")
            d["nx"], d["ny"] = int(nx), int(ny)
        else:
            d["cells"] = int(n)
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(d) - known
    if unknown:
        raise ParameterError(f"unknown configuration keys {sorted(unknown)}")
    return ExperimentConfig(coeff=CoefficientField(**ck), **d)


def config_to_dict(c: ExperimentConfig) -> dict:
    d = asdict(c)
    d["coeff"] = asdict(c.coeff)
    return d


# ----------------------------------------------------------------------
# scaling data and convergence


@dataclass
class LinearFit:
    x: np.ndarray
    y: np.ndarray
    slope: float
    intercept: float
    r2: float

    def to_csv(self, xname="x", yname="y") -> str:
        lines = [f"{xname},{yname}"]
        lines += [f"{a!r},{b!r}" for a, b in zip(self.x.tolist(), self.y.tolist())]
        lines.append(f"# slope={self.slope!r} intercept={self.intercept!r} r2={self.r2!r}")
        return "\n".join(lines) + "\n"


def linear_fit(x, y) -> LinearFit:
    """Least-squares line with R^2 (1 for an exact fit, including constants)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 3:
        raise ParameterError(f"need at least 3 points for a fit, got {len(x)}")
    if np.ptp(x) == 0:
        raise ParameterError("all abscissae coincide")
    slope, intercept = np.polyfit(x, y, 1)
    res = y - (slope * x + intercept)
    ss_res = float(res @ res)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot <= 1e-28 * max(1.0, float(y @ y)):
        r2 = 1.0
        slope = 0.0
        intercept = float(y.mean())
    else:
        r2 = 1.0 - ss_res / ss_tot
    return LinearFit(x, y, float(slope), float(intercept), float(r2))


def emit_scaling_data(rows, path=None) -> LinearFit:
    """``sqrt(lambda_max)`` against ``log(k^2 H / h)`` with a linear fit."""
    rows = [r for r in rows if r.ok]
    if len(rows) < 3:
        raise ParameterError(f"need at least 3 successful rows, got {len(rows)}")
    x = [math.log(r.config.degree ** 2 * r.H / r.h) for r in rows]
    y = [math.sqrt(r.lambda_max) for r in rows]
    fit = linear_fit(x, y)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(fit.to_csv("log_k2H_over_h", "sqrt_lambda_max"))
    return fit


@dataclass(frozen=True)
class ManufacturedSolution:
    u: object
    grad: object
    f: object
    name: str = ""


SINSIN = ManufacturedSolution(
    sinsin,
    lambda p: np.pi * np.column_stack([np.cos(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1]),
                                       np.sin(np.pi * p[:, 0]) * np.cos(np.pi * p[:, 1])]),
    sinsin_load, "sinsin")


def polynomial_solution(k: int) -> ManufacturedSolution:
    """``u = (x + 2y)^k + 1``; harmonic for ``k = 1``, load of degree ``k - 2``."""
    def u(p):
        return (p[:, 0] + 2 * p[:, 1]) ** k + 1.0

    def grad(p):
        t = k * (p[:, 0] + 2 * p[:, 1]) ** (k - 1)
        return np.column_stack([t, 2 * t])

    def f(p):
        if k < 2:
            return np.zeros(len(p))
        return -5.0 * k * (k - 1) * (p[:, 0] + 2 * p[:, 1]) ** (k - 2)

    return ManufacturedSolution(u, grad, f, f"poly{k}")


@dataclass
class ConvergenceTable:
    k: int
    h: np.ndarray
    l2: np.ndarray
    h1: np.ndarray
    n_dofs: np.ndarray

    @property
    def slope_l2(self) -> float:
        return linear_fit(np.log(self.h), np.log(self.l2)).slope

    @property
    def slope_h1(self) -> float:
        return linear_fit(np.log(self.h), np.log(self.h1)).slope

    def to_markdown(self) -> str:
        out = ["| h | dofs | L2 error | H1 error |", "|---|---|---|---|"]
        for h, n, a, b in zip(self.h, self.n_dofs, self.l2, self.h1):
            out.append(f"| {h:.4e} | {n} | {a:.4e} | {b:.4e} |")
        if len(self.h) >= 3 and np.all(self.l2 > 0) and np.all(self.h1 > 0):
            out.append(f"\nslopes: L2 {self.slope_l2:.3f}, H1 {self.slope_h1:.3f}")
        return "\n".join(out) + "\n"


def convergence_study(k: int, levels: int = 3, start: int = 4,
                      solution: ManufacturedSolution = SINSIN) -> ConvergenceTable:
    """Monolithic solves on uniformly refined single-domain hex meshes."""
    if levels < 3:
        raise ParameterError(f"need at least 3 refinement levels, got {levels}")
    hs, l2s, h1s, nd = [], [], [], []
    for i in range(levels):
        n = start * 2 ** i
        mesh, part = build_hex_mesh(1, n, n)
        dm = build_dof_map(mesh, part, k)
        system = assemble(mesh, dm, k, 1.0, solution.f, dirichlet=solution.u)
        uh = solve_reference(system)
        l2, h1 = error_norms(mesh, dm, uh, solution.u, solution.grad)
        hs.append(float(mesh.cell_geometry[:, 3].max()))
        l2s.append(l2)
        h1s.append(h1)
        nd.append(dm.n_dofs)
    return ConvergenceTable(k, np.array(hs), np.array(l2s), np.array(h1s), np.array(nd))
