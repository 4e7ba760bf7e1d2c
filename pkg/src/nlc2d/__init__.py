"""Finite-difference laboratory for 2D liquid-crystal flows.

The package couples an incompressible velocity field to a manifold-valued
director (unit sphere or orthonormal frame pair) on the unit torus or
square, with a relaxed quadratic-well scheme and a pointwise-projected
scheme, plus the diagnostics used to study energy concentration.
"""
from __future__ import annotations

from .grid import (
    SQUARE,
    TORUS,
    BoundaryData,
    Grid2D,
    advect,
    ball_mask,
    divergence,
    gradient,
    integrate,
    l2_norm,
    laplacian,
)
from .manifold import (
    BIAXIAL,
    SPHERE,
    CutoffProfile,
    ManifoldSpec,
    OffManifold,
    OutsideTube,
    decompose,
    distance,
    penalty_gradient,
    project,
    second_fundamental_form_term,
    tangent_project,
)
from .solver import (
    CflViolation,
    GinzburgLandau,
    LedgerRow,
    NotConverged,
    NumericalBlowup,
    PoissonDiverged,
    Projected,
    RunResult,
    SolverConfig,
    State,
    StepInfo,
    default_poisson_tol,
    make_divergence_free,
    pressure_poisson,
    run,
    stationary_gl_solve,
    stationary_residual,
    step,
    suggested_dt,
)
from .diagnostics import (
    ConcentrationReport,
    DefectEstimate,
    EnergyReport,
    GLDecomposition,
    HopfField,
    PohozaevReport,
    StressField,
    concentration_set,
    dbar_hopf_residual,
    defect_measures,
    degree_integral,
    ericksen_stress,
    gl_decomposition,
    hopf_differential,
    hopf_lp_norm,
    penalty_l1,
    pohozaev_residual,
    stress_divergence,
    tension_field,
    total_energy,
)
from .experiments import (
    BiaxialReport,
    BubbleSpec,
    CompactnessReport,
    SweepMember,
    SweepPlan,
    SweepResult,
    Underresolved,
    biaxial_demo,
    bubble_trace,
    bump_function,
    compactness_demo,
    make_bubble,
    restrict_field,
    run_sweep,
)
from .snapshots import (
    CSV_COLUMNS,
    BadMagic,
    CorruptPayload,
    IoError,
    Snapshot,
    VersionMismatch,
    emit_plot_script,
    read_energy_csv,
    read_snapshot,
    write_defects_csv,
    write_energy_csv,
    write_snapshot,
)
from .config import (
    ConfigError,
    DiagnosticsSettings,
    RunConfig,
    make_data_factory,
    parse_config,
    parse_diagnostics,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # grid
    "TORUS", "SQUARE", "Grid2D", "BoundaryData",
    "gradient", "divergence", "laplacian", "advect",
    "ball_mask", "integrate", "l2_norm",
    # manifold targets
    "SPHERE", "BIAXIAL", "ManifoldSpec", "CutoffProfile",
    "OutsideTube", "OffManifold",
    "distance", "project", "decompose", "penalty_gradient",
    "second_fundamental_form_term", "tangent_project",
    # solver
    "GinzburgLandau", "Projected", "SolverConfig", "State",
    "StepInfo", "LedgerRow", "RunResult",
    "CflViolation", "PoissonDiverged", "NumericalBlowup", "NotConverged",
    "step", "run", "stationary_gl_solve", "stationary_residual",
    "make_divergence_free", "pressure_poisson",
    "suggested_dt", "default_poisson_tol",
    # diagnostics
    "StressField", "HopfField", "ConcentrationReport", "PohozaevReport",
    "DefectEstimate", "GLDecomposition", "EnergyReport",
    "total_energy", "penalty_l1",
    "ericksen_stress", "stress_divergence", "tension_field",
    "hopf_differential", "hopf_lp_norm", "dbar_hopf_residual",
    "concentration_set", "pohozaev_residual", "defect_measures",
    "gl_decomposition", "degree_integral",
    # experiments
    "BubbleSpec", "SweepPlan", "SweepMember", "SweepResult",
    "CompactnessReport", "BiaxialReport", "Underresolved",
    "make_bubble", "bubble_trace", "bump_function", "restrict_field",
    "run_sweep", "compactness_demo", "biaxial_demo",
    # snapshots and CSV
    "Snapshot", "IoError", "BadMagic", "VersionMismatch", "CorruptPayload",
    "write_snapshot", "read_snapshot",
    "CSV_COLUMNS", "write_energy_csv", "read_energy_csv",
    "write_defects_csv", "emit_plot_script",
    # config
    "ConfigError", "RunConfig", "DiagnosticsSettings",
    "parse_config", "parse_diagnostics", "make_data_factory",
]
