import numpy as np
import pytest

from polydd.ddspaces import DDSystem
from polydd.geometry import build_hex_mesh, build_voronoi_mesh
from polydd.vem import assemble, build_dof_map

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def sinsin_load(p):
    return 2 * np.pi**2 * np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])


def make_dd(N=2, nx=2, ny=3, k=1, rho=1.0, mesh="hex", cells=6, seed=3, gamma=1.0):
    if mesh == "hex":
        m, part = build_hex_mesh(N, nx, ny)
    else:
        m, part = build_voronoi_mesh(N, cells, seed, lloyd_iters=1)
    dm = build_dof_map(m, part, k)
    rho = np.broadcast_to(np.asarray(rho, float), (N * N,)).copy()
    system = assemble(m, dm, k, rho, sinsin_load)
    return DDSystem(system, rho, gamma, part)


@pytest.fixture(scope="session")
def dd_small():
    return make_dd(N=3, nx=2, ny=3, k=1, rho=np.array([1, 10, 0.1, 3, 1, 100, 0.01, 2, 5.0]))


@pytest.fixture(scope="session")
def dd_small_k2():
    return make_dd(N=2, nx=2, ny=2, k=2, rho=np.array([1.0, 1e2, 1e-2, 4.0]))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
