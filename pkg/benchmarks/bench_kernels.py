"""Compare the compiled per-cell kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--N 8 --nx 8 --ny 10 --repeat 3]

Times each kernel over every cell of a hexagonal mesh and prints the
speed-up of the Cython backend.
"""

import argparse
import timeit

import numpy as np

from polydd import _kernels_py
from polydd.geometry import build_hex_mesh
from polydd.quadrature import gauss_legendre_01

try:
    from polydd import _kernels_c
except ImportError:  # extension not built
    _kernels_c = None


def workloads(mod, cells, geom, degree):
    gx, gw = gauss_legendre_01(degree // 2 + 2)

    def geometry():
        for xy in cells:
            mod.polygon_geometry(xy)

    def moments():
        for xy, (_, cx, cy, h) in zip(cells, geom):
            mod.polygon_moments(xy, cx, cy, h, degree, gx, gw)

    def stiffness():
        for xy in cells:
            mod.k1_local_stiffness(xy, 1.0)

    return {"polygon_geometry": geometry, "polygon_moments": moments,
            "k1_local_stiffness": stiffness}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=8)
    ap.add_argument("--nx", type=int, default=8)
    ap.add_argument("--ny", type=int, default=10)
    ap.add_argument("--degree", type=int, default=6, help="moment degree")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    mesh, _ = build_hex_mesh(args.N, args.nx, args.ny)
    cells = [mesh.cell_xy(c) for c in range(mesh.n_cells)]
    geom = np.array([_kernels_py.polygon_geometry(xy) for xy in cells])
    print(f"{mesh.n_cells} cells, best of {args.repeat}")
    print(f"{'kernel':22s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speed-up':>9s}")
    py = workloads(_kernels_py, cells, geom, args.degree)
    cy = workloads(_kernels_c, cells, geom, args.degree) if _kernels_c else {}
    for name, fn in py.items():
        t_py = min(timeit.repeat(fn, number=1, repeat=args.repeat)) * 1e3
        if name in cy:
            t_c = min(timeit.repeat(cy[name], number=1, repeat=args.repeat)) * 1e3
            print(f"{name:22s} {t_py:12.1f} {t_c:12.1f} {t_py / t_c:8.1f}x")
        else:
            print(f"{name:22s} {t_py:12.1f} {'n/a':>12s} {'':>9s}")


if __name__ == "__main__":
    main()
