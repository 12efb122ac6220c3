"""Virtual elements on polygonal meshes with BDDC and FETI-DP solvers."""

from .ddspaces import DDSystem, InterfaceIndex, ScalingD, SubdomainSchur, build_scaling, classify_interface
from .errors import NumericalError, ParameterError, PolyDDError, StateError, StructuralError
from .geometry import (
    BoxPartition,
    MeshQualityReport,
    PolyMesh,
    build_hex_mesh,
    build_voronoi_mesh,
    load_mesh,
    save_mesh,
    validate_mesh,
)
from .harness import (
    CoefficientField,
    ExperimentConfig,
    ResultRow,
    convergence_study,
    emit_scaling_data,
    run_experiment,
    run_table,
)
from .kernels import BACKEND
from .solvers import (
    PCGReport,
    StildeInverse,
    apply_Stilde_inv,
    pcg,
    solve_bddc,
    solve_fetidp,
    solve_fetidp_unpreconditioned,
    solve_schur_unpreconditioned,
)
from .vem import DofMap, GlobalSystem, assemble, build_dof_map, local_stiffness, solve_reference

__version__ = "0.1.0"
