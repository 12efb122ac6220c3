import csv
import io
import json

import numpy as np
import pytest
from click.testing import CliRunner

from polydd.cli import main
from polydd.errors import ParameterError
from polydd.harness import (
    CSV_COLUMNS,
    CoefficientField,
    ExperimentConfig,
    ResultRow,
    TableResult,
    config_from_dict,
    convergence_study,
    emit_scaling_data,
    expand_grid,
    linear_fit,
    polynomial_solution,
    run_experiment,
    run_table,
)

SMALL = dict(N=3, nx=3, ny=3)


def test_central_block_default():
    rho = CoefficientField("central", 1e-4).values(8).reshape(8, 8)
    assert (rho == 1e-4).sum() == 16
    assert np.all(rho[2:6, 2:6] == 1e-4)
    rho = CoefficientField("central", 5.0, block=2).values(4).reshape(4, 4)
    assert np.all(rho[1:3, 1:3] == 5.0) and (rho == 5.0).sum() == 4


def test_random_exponents():
    f = CoefficientField("randexp", seed=3)
    a = f.values(16)
    np.testing.assert_array_equal(a, CoefficientField("randexp", seed=3).values(16))
    e = np.log10(a)
    np.testing.assert_allclose(e, np.round(e))
    assert e.min() >= -4 and e.max() <= 4
    assert len(np.unique(e)) == 9
    assert not np.array_equal(a, CoefficientField("randexp", seed=4).values(16))


@pytest.mark.parametrize("kw", [dict(kind="other"), dict(rho0=0.0), dict(exponent_range=(2, 1))])
def test_coefficient_validation(kw):
    with pytest.raises(ParameterError):
        CoefficientField(**kw)


@pytest.mark.parametrize("kw", [dict(N=0), dict(N=65), dict(degree=9), dict(method="gmres"),
                                dict(rhs="x"), dict(tol=2.0), dict(maxit=0), dict(nx=1),
                                dict(mesh="quad")])
def test_config_validation(kw):
    with pytest.raises(ParameterError):
        ExperimentConfig(**kw)


def test_run_experiment_reports_pcg_values():
    row, sol = run_experiment(ExperimentConfig(**SMALL, reference=True), return_solution=True)
    assert row.iterations == sol.report.iterations
    assert row.lambda_min == sol.report.lambda_min and row.lambda_max == sol.report.lambda_max
    assert row.cond == sol.report.cond
    assert row.energy_error < 1e-6
    assert row.n_tilde == row.n_hat + row.n_jump
    assert row.H == pytest.approx(1 / 3)


def test_base_configuration_close_to_reference_numbers():
    row = run_experiment(ExperimentConfig(N=8, nx=8, ny=10, method="fetidp"))
    assert abs(row.iterations - 9) <= 3
    assert abs(row.cond - 3.61) <= 0.3 * 3.61


def test_random_rhs_reference_check():
    cfg = ExperimentConfig(**SMALL, rhs="random", seed=4, method="bddc", reference=True,
                           coeff=CoefficientField("randexp", seed=4))
    assert run_experiment(cfg).energy_error < 1e-6


def test_errors_carry_config_context():
    cfg = ExperimentConfig(mesh="voronoi", N=2, cells=2)
    with pytest.raises(ParameterError, match="voronoi N=2"):
        run_experiment(cfg)


def test_table_csv_and_markdown():
    cfgs = expand_grid(dict(SMALL, method="fetidp"), {"N": [2, 3], "n": ["2x2", "3x3"]})
    tab = run_table(cfgs)
    rows = list(csv.DictReader(io.StringIO(tab.to_csv())))
    assert list(rows[0]) == CSV_COLUMNS
    assert [(r["N"], r["n"]) for r in rows] == [("2", "2x2"), ("2", "3x3"), ("3", "2x2"), ("3", "3x3")]
    md = tab.to_markdown().splitlines()
    assert md[0] == "| | n=2x2 | n=3x3 |"
    assert md[2].startswith("| N=2 | ") and "(" in md[2]


def test_table_memory_budget_and_failures():
    cfgs = [ExperimentConfig(**SMALL), ExperimentConfig(N=30, nx=30, ny=30),
            ExperimentConfig(mesh="voronoi", N=2, cells=3)]
    tab = run_table(cfgs, memory_budget_mb=50)
    assert tab.rows[0].ok
    assert tab.rows[1].error == "memory budget exceeded"
    assert not tab.rows[2].ok
    assert tab.to_markdown().count("—") == 2
    rows = list(csv.DictReader(io.StringIO(tab.to_csv())))
    assert rows[1]["iters"] == "" and rows[1]["error"]


def test_single_cell_table():
    tab = run_table([ExperimentConfig(**SMALL)])
    assert len(tab.to_csv().strip().splitlines()) == 2
    with pytest.raises(ParameterError):
        run_table([])


def test_csv_is_deterministic():
    cfg = ExperimentConfig(**SMALL, coeff=CoefficientField("randexp", seed=9), rhs="random", seed=9)

    def strip(text):
        return [{k: v for k, v in r.items() if k != "wall_ms"} for r in csv.DictReader(io.StringIO(text))]

    a = run_table([cfg]).to_csv()
    b = run_table([cfg]).to_csv()
    assert strip(a) == strip(b)


def test_config_from_dict():
    c = config_from_dict({"mesh": "voronoi", "n": 50, "coeff": "randexp", "seed": 5, "N": 4})
    assert c.cells == 50 and c.coeff.kind == "randexp" and c.coeff.seed == 5
    c = config_from_dict({"n": "18x20", "coeff": "central", "rho0": 1e4})
    assert (c.nx, c.ny, c.coeff.rho0) == (18, 20, 1e4)
    with pytest.raises(ParameterError):
        config_from_dict({"bogus": 1})


def test_linear_fit_and_scaling_errors():
    fit = linear_fit([1, 2, 3, 4], [2, 4, 6, 8])
    assert fit.slope == pytest.approx(2) and fit.r2 == pytest.approx(1)
    flat = linear_fit([1, 2, 3], [5, 5, 5])
    assert flat.slope == 0 and flat.r2 == 1
    with pytest.raises(ParameterError):
        linear_fit([1, 2], [1, 2])
    with pytest.raises(ParameterError):
        emit_scaling_data([ResultRow(ExperimentConfig())] * 2)


def test_emit_scaling_data(tmp_path):
    rows = [run_experiment(ExperimentConfig(N=2, nx=n, ny=n)) for n in (2, 4, 8, 16)]
    fit = emit_scaling_data(rows, tmp_path / "fig.csv")
    assert fit.slope > 0
    text = (tmp_path / "fig.csv").read_text().splitlines()
    assert text[0] == "log_k2H_over_h,sqrt_lambda_max" and len(text) == 6


def test_convergence_study():
    tab = convergence_study(1, 3, 4)
    assert np.all(np.diff(tab.h1) < 0)
    assert 0.8 < tab.slope_h1 < 1.2
    assert "slopes" in tab.to_markdown()
    with pytest.raises(ParameterError):
        convergence_study(1, 2)


def test_polynomial_solution_is_reproduced():
    for k in (1, 2, 3):
        tab = convergence_study(k, 3, 2, polynomial_solution(k))
        assert tab.l2.max() < 1e-9 and tab.h1.max() < 1e-9


# ----------------------------------------------------------------------
# command line


def test_cli_run(tmp_path):
    out = tmp_path / "r.csv"
    res = CliRunner().invoke(main, ["run", "--N", "3", "--nx", "3", "--ny", "3", "--out", str(out)])
    assert res.exit_code == 0, res.output
    rows = list(csv.DictReader(out.open()))
    assert rows[0]["method"] == "fetidp" and int(rows[0]["iters"]) > 0


def test_cli_nonconvergence_exit_code():
    res = CliRunner().invoke(main, ["run", "--N", "3", "--nx", "3", "--ny", "3", "--coeff", "randexp",
                                    "--seed", "2", "--rhs", "random", "--method", "cg", "--maxit", "3"])
    assert res.exit_code == 2


def test_cli_error_exit_code():
    res = CliRunner().invoke(main, ["run", "--degree", "12"])
    assert res.exit_code == 1
    assert "degree" in res.output


def test_cli_table(tmp_path):
    spec = {"base": {"nx": 3, "ny": 3, "method": "bddc"}, "grid": {"N": [2, 3], "degree": [1, 2]},
            "out": str(tmp_path / "t.csv"), "markdown": str(tmp_path / "t.md")}
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec))
    res = CliRunner().invoke(main, ["table", "--spec", str(path)])
    assert res.exit_code == 0, res.output
    assert len((tmp_path / "t.csv").read_text().strip().splitlines()) == 5
    assert "degree=2" in (tmp_path / "t.md").read_text()


def test_cli_converge():
    res = CliRunner().invoke(main, ["converge", "--degree", "1", "--levels", "3"])
    assert res.exit_code == 0
    assert "H1" in res.output
