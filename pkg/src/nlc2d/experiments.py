"""Manufactured director data and orchestration: degree-one bubbles,
relaxation sweeps, refinement studies, and the concentration demos.

The bubble is the inverse stereographic image of w = ((x1-c1)*a,
(x2-c2))/scale, an exact degree-one sphere map that is conformal iff the
stretch a equals 1.  On the torus the raw formula would jump at the seam,
so beyond an inner radius the polar angle is blended smoothly to the south
pole along near-conformal level sets; inside the inner radius (which is
where every quantitative check integrates) the field is the raw formula
exactly, and the blended map is C^1 on the torus with degree exactly one.
On the square the raw formula is used everywhere.

Sweeps are deterministic: no randomness, member failures are recorded and
do not abort the remaining members.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import manifold as mf
from .diagnostics import (
    DefectEstimate,
    defect_measures,
    hopf_differential,
    hopf_lp_norm,
    penalty_l1,
)
from .grid import (
    SQUARE,
    TORUS,
    BoundaryData,
    Grid2D,
    ball_mask,
    gradient,
    integrate,
)
from .solver import (
    CflViolation,
    GinzburgLandau,
    NumericalBlowup,
    PoissonDiverged,
    Projected,
    RunResult,
    SolverConfig,
    State,
    run,
)

__all__ = [
    "Underresolved",
    "BubbleSpec",
    "make_bubble",
    "bubble_trace",
    "SweepPlan",
    "SweepMember",
    "SweepResult",
    "run_sweep",
    "restrict_field",
    "CompactnessReport",
    "compactness_demo",
    "BiaxialReport",
    "biaxial_demo",
    "bump_function",
]

# torus blending annulus: raw formula inside CAP_INNER, constant south
# pole outside CAP_OUTER
CAP_INNER = 0.35
CAP_OUTER = 0.48


class Underresolved(UserWarning):
    """Bubble scale too close to the grid spacing to resolve."""


@dataclass(frozen=True, eq=False)
class BubbleSpec:
    """Degree-one bubble: center, concentration scale, target rotation,
    planar stretch (anisotropy; 1 means conformal)."""

    center: tuple = (0.5, 0.5)
    scale: float = 0.1
    orientation: np.ndarray | None = None
    stretch: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if not self.stretch >= 1.0:
            raise ValueError(f"stretch must be >= 1, got {self.stretch}")
        if self.orientation is not None:
            R = np.asarray(self.orientation, dtype=float)
            if R.shape != (3, 3) or not np.allclose(R @ R.T, np.eye(3), atol=1e-12):
                raise ValueError("orientation must be a 3x3 rotation matrix")
            if np.linalg.det(R) < 0:
                raise ValueError("orientation must preserve orientation (det +1)")


def _raw_bubble(spec: BubbleSpec, dx, dy) -> np.ndarray:
    # inverse stereographic image of w = (a dx, dy) / lam, north pole at w=0
    w1 = spec.stretch * np.asarray(dx, dtype=float) / spec.scale
    w2 = np.asarray(dy, dtype=float) / spec.scale
    q2 = w1 * w1 + w2 * w2
    denom = 1.0 + q2
    return np.stack(
        [2.0 * w1 / denom, 2.0 * w2 / denom, (1.0 - q2) / denom], axis=-1
    )


def bubble_trace(spec: BubbleSpec, x, y) -> np.ndarray:
    """Bubble field sampled at arbitrary points, no torus cap applied.

    Suited to wall traces on the square, where the capped far field never
    enters the domain."""
    v = _raw_bubble(spec, np.asarray(x) - spec.center[0], np.asarray(y) - spec.center[1])
    if spec.orientation is not None:
        v = v @ np.asarray(spec.orientation, dtype=float).T
    return v


def make_bubble(spec: BubbleSpec, grid: Grid2D) -> np.ndarray:
    """Sphere-valued degree-one bubble field on the grid.

    Emits an Underresolved warning when scale < 4h.  The result is unit
    length to machine precision at every node.
    """
    if spec.scale < 4.0 * grid.h:
        warnings.warn(
            f"bubble scale {spec.scale} is below 4h = {4 * grid.h}; "
            "the core is underresolved",
            Underresolved,
        )
    lam = spec.scale
    a = spec.stretch
    x, y = grid.meshgrid()
    dx = x - spec.center[0]
    dy = y - spec.center[1]
    if grid.domain == TORUS:
        dx = (dx + 0.5) % 1.0 - 0.5
        dy = (dy + 0.5) % 1.0 - 0.5
    v = _raw_bubble(spec, dx, dy)

    if grid.domain == TORUS:
        s = np.sqrt(a * a * dx * dx + dy * dy)
        blend = (s >= CAP_INNER) & (s < CAP_OUTER)
        outer = s >= CAP_OUTER
        if np.any(blend):
            sb = s[blend]
            uu = np.log(sb / CAP_INNER) / math.log(CAP_OUTER / CAP_INNER)
            T = (lam / sb) * (1.0 - uu * uu) ** 2
            dT = 1.0 + T * T
            e1 = a * dx[blend] / sb
            e2 = dy[blend] / sb
            v[blend, 0] = 2.0 * T * e1 / dT
            v[blend, 1] = 2.0 * T * e2 / dT
            v[blend, 2] = (T * T - 1.0) / dT
        v[outer] = np.array([0.0, 0.0, -1.0])

    if spec.orientation is not None:
        v = v @ np.asarray(spec.orientation, dtype=float).T
    return v


def bump_function(
    grid: Grid2D, center, plateau: float, support: float
) -> np.ndarray:
    """C^1 radial bump: 1 inside the plateau radius, 0 outside support."""
    if not 0 < plateau < support:
        raise ValueError("need 0 < plateau < support")
    x, y = grid.meshgrid()
    dx = x - center[0]
    dy = y - center[1]
    if grid.domain == TORUS:
        dx = (dx + 0.5) % 1.0 - 0.5
        dy = (dy + 0.5) % 1.0 - 0.5
    r = np.sqrt(dx * dx + dy * dy)
    s = np.clip((r - plateau) / (support - plateau), 0.0, 1.0)
    return 1.0 - s * s * (3.0 - 2.0 * s)


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepPlan:
    """Family of runs over decreasing relaxation scales and/or grids.

    data_factory(grid) must return (u0, v0, bc_v or None) and be
    deterministic.  nx_values is either one size shared by all members or
    one size per eps value.  The relaxed scheme requires h <= eps/4 for
    every member so the penalty layer is resolved.
    """

    eps_values: tuple
    nx_values: tuple
    scheme_kind: str  # "ginzburg-landau" or "projected"
    domain: str
    t_end: float
    data_factory: object
    cfl_safety: float = 0.5
    manifold_kind: str = mf.SPHERE
    delta_n: float | None = None
    extrapolate_defects: bool = False

    def __post_init__(self):
        if self.scheme_kind not in ("ginzburg-landau", "projected"):
            raise ValueError(f"unknown scheme kind {self.scheme_kind!r}")
        if self.scheme_kind == "ginzburg-landau":
            eps = tuple(self.eps_values)
            if not eps:
                raise ValueError("relaxed sweeps need at least one eps")
            if any(b >= a for a, b in zip(eps, eps[1:])):
                raise ValueError("eps values must be strictly decreasing")
            if self.extrapolate_defects and len(eps) < 3:
                raise ValueError("defect extrapolation needs >= 3 eps values")
            if len(self.nx_values) not in (1, len(eps)):
                raise ValueError(
                    "nx_values must have length 1 or match eps_values"
                )
        elif not self.nx_values:
            raise ValueError("constrained sweeps need at least one grid size")
        if self.scheme_kind == "ginzburg-landau":
            for i, e in enumerate(self.eps_values):
                nx = self.nx_values[i if len(self.nx_values) > 1 else 0]
                if 1.0 / nx > e / 4.0 + 1e-15:
                    raise ValueError(
                        f"member eps={e}, nx={nx} violates h <= eps/4"
                    )

    def members(self):
        if self.scheme_kind == "projected":
            for nx in self.nx_values:
                yield None, nx
        else:
            for i, e in enumerate(self.eps_values):
                yield e, self.nx_values[i if len(self.nx_values) > 1 else 0]


@dataclass
class SweepMember:
    eps: float | None
    nx: int
    rows: list = field(default_factory=list)
    final_state: State | None = None
    error: str | None = None


@dataclass
class SweepResult:
    members: list = field(default_factory=list)
    pairwise_l2: list = field(default_factory=list)
    penalty_l1_values: list = field(default_factory=list)
    defects: DefectEstimate | None = None

    def succeeded(self):
        return [m for m in self.members if m.error is None]


def restrict_field(fine: Grid2D, f: np.ndarray, coarse: Grid2D) -> np.ndarray:
    """Block-average a node field from a finer grid onto a coarser one."""
    if fine.nx % coarse.nx != 0:
        raise ValueError("fine grid size must be a multiple of the coarse")
    k = fine.nx // coarse.nx
    shape = (coarse.nx, k, coarse.ny, k) + f.shape[2:]
    return f.reshape(shape).mean(axis=(1, 3))


def run_sweep(plan: SweepPlan) -> SweepResult:
    """Run every member of the plan, collecting ledgers and differences.

    Solver failures are caught per member and recorded on the member; the
    remaining members still run.  pairwise_l2 holds the L2 differences of
    consecutive successful members' final director fields (the finer grid
    is block-averaged onto the coarser when sizes differ).
    """
    result = SweepResult()
    spec = mf.ManifoldSpec(plan.manifold_kind, plan.delta_n)
    for eps, nx in plan.members():
        grid = Grid2D.unit(nx, plan.domain)
        member = SweepMember(eps=eps, nx=nx)
        scheme = Projected() if eps is None else GinzburgLandau(eps=eps)
        try:
            u0, v0, bc_v = plan.data_factory(grid)
            bound = grid.h * grid.h / 4.0
            if eps is not None:
                bound = min(bound, eps * eps / 4.0)
            config = SolverConfig(
                scheme=scheme,
                dt=plan.cfl_safety * bound,
                t_end=plan.t_end,
                cfl_safety=plan.cfl_safety,
            )
            out = run(grid, config, State(0.0, u0, v0, np.zeros((nx, nx))),
                      spec, bc_v=bc_v)
            member.rows = out.rows
            member.final_state = out.state
            if eps is not None:
                profile = mf.CutoffProfile.for_spec(spec)
                result.penalty_l1_values.append(
                    penalty_l1(grid, out.state.v, spec, profile, eps)
                )
        except (CflViolation, PoissonDiverged, NumericalBlowup,
                mf.OutsideTube, ValueError) as exc:
            member.error = f"{type(exc).__name__}: {exc}"
            if eps is not None:
                result.penalty_l1_values.append(math.nan)
        result.members.append(member)

    ok = result.succeeded()
    for m0, m1 in zip(ok, ok[1:]):
        f0, g0 = m0.final_state.v, Grid2D.unit(m0.nx, plan.domain)
        f1, g1 = m1.final_state.v, Grid2D.unit(m1.nx, plan.domain)
        if m0.nx > m1.nx:
            f0 = restrict_field(g0, f0, g1)
            gd = g1
        elif m1.nx > m0.nx:
            f1 = restrict_field(g1, f1, g0)
            gd = g0
        else:
            gd = g0
        diff = f0 - f1
        result.pairwise_l2.append(
            math.sqrt(integrate(gd, np.sum(diff * diff, axis=-1)))
        )

    if plan.extrapolate_defects and plan.scheme_kind == "ginzburg-landau":
        if len(ok) >= 3:
            nx_min = min(m.nx for m in ok)
            gd = Grid2D.unit(nx_min, plan.domain)
            fields = []
            for m in ok:
                f = m.final_state.v
                if m.nx > nx_min:
                    f = restrict_field(Grid2D.unit(m.nx, plan.domain), f, gd)
                fields.append((f, m.eps))
            # best limit proxy available: the least-relaxed member
            reference = mf.project(spec, fields[-1][0])
            phi = bump_function(gd, (0.5, 0.5), plateau=0.25, support=0.34)
            profile = mf.CutoffProfile.for_spec(spec)
            result.defects = defect_measures(
                gd, fields, phi, reference, spec, profile
            )
    return result


# ---------------------------------------------------------------------------
# concentration demo


@dataclass
class CompactnessReport:
    """Defect triple of a concentrating family plus per-member Hopf data."""

    defect: DefectEstimate
    eps: list
    hopf_norms: list
    ball_gradient_sq: list
    ball_radius: float


def compactness_demo(
    grid: Grid2D,
    eps_values,
    stretch: float = 1.0,
    center=(0.5, 0.5),
    phi: np.ndarray | None = None,
    ball_radius: float = 0.25,
    hopf_p: float = 1.5,
) -> CompactnessReport:
    """Evaluate the defect triple and Hopf norms of a bubble family.

    Scales are tied to the relaxation parameter (scale = eps).  The weak
    reference is the constant far-field state, so for a conformal family
    the trace-free defects vanish and the energy defect approaches the
    full bubble quantum; the per-member Hopf norms record how the
    trace-free signal behaves while the ball gradient mass stays put.
    """
    eps_values = [float(e) for e in eps_values]
    spec = mf.ManifoldSpec(mf.SPHERE)
    profile = mf.CutoffProfile.for_spec(spec)
    if phi is None:
        phi = bump_function(grid, center, plateau=0.25, support=0.34)

    members = []
    hopf_norms = []
    ball_grad = []
    reference = None
    for e in eps_values:
        v = make_bubble(BubbleSpec(center=center, scale=e, stretch=stretch), grid)
        if reference is None:
            if grid.domain == TORUS:
                far = v[0, 0]  # seam-side value: the constant far field
            else:
                far = np.array([0.0, 0.0, -1.0])
            reference = np.tile(far, (grid.nx, grid.ny, 1))
        members.append((v, e))
        hf = hopf_differential(grid, v)
        hopf_norms.append(hopf_lp_norm(grid, hf.h, hopf_p, center, ball_radius))
        gx, gy = gradient(grid, v)
        dens = np.sum(gx * gx + gy * gy, axis=-1)
        ball_grad.append(integrate(grid, dens, ball_mask(grid, center, ball_radius)))

    defect = defect_measures(grid, members, phi, reference, spec, profile)
    return CompactnessReport(
        defect=defect,
        eps=eps_values,
        hopf_norms=hopf_norms,
        ball_gradient_sq=ball_grad,
        ball_radius=ball_radius,
    )


# ---------------------------------------------------------------------------
# biaxial demo


@dataclass
class BiaxialReport:
    """Both schemes run from a rotating orthonormal frame."""

    projected_rows: list
    gl_rows: list
    orthogonality_max: float  # max |n.m| over the constrained run
    norm_error_max: float  # max ||n|-1|, ||m|-1| over the constrained run
    gl_penalty_max: float
    gl_e0: float


def _rotating_frame(grid: Grid2D, turns: float = 1.0) -> np.ndarray:
    x, _ = grid.meshgrid()
    th = 2.0 * np.pi * turns * x
    c, s = np.cos(th), np.sin(th)
    zero = np.zeros_like(th)
    return np.stack([c, s, zero, -s, c, zero], axis=-1)


def biaxial_demo(grid: Grid2D, config: SolverConfig) -> BiaxialReport:
    """Run the orthonormal-pair target under both schemes.

    config supplies dt, t_end and tolerances; its scheme field selects the
    relaxation scale for the relaxed leg (a Projected config gets eps=0.1).
    The constrained leg tracks the orthogonality and unit-norm errors at
    every step; the relaxed leg tracks the penalty against the initial
    energy.
    """
    spec = mf.ManifoldSpec(mf.BIAXIAL)
    v0 = _rotating_frame(grid)
    u0 = np.zeros((grid.nx, grid.ny, 2))
    eps = config.scheme.eps if isinstance(config.scheme, GinzburgLandau) else 0.1

    worst = {"dot": 0.0, "norm": 0.0}

    def watch(state, row):
        n = state.v[..., :3]
        m = state.v[..., 3:]
        dot = float(np.abs(np.sum(n * m, axis=-1)).max())
        nrm = max(
            float(np.abs(np.linalg.norm(n, axis=-1) - 1.0).max()),
            float(np.abs(np.linalg.norm(m, axis=-1) - 1.0).max()),
        )
        worst["dot"] = max(worst["dot"], dot)
        worst["norm"] = max(worst["norm"], nrm)

    proj_cfg = SolverConfig(
        scheme=Projected(),
        dt=config.dt,
        t_end=config.t_end,
        cfl_safety=config.cfl_safety,
        poisson_tol=config.poisson_tol,
        poisson_max_iter=config.poisson_max_iter,
    )
    proj_out = run(
        grid, proj_cfg, State(0.0, u0.copy(), v0.copy(), np.zeros((grid.nx, grid.ny))),
        spec, callback=watch,
    )

    gl_cfg = SolverConfig(
        scheme=GinzburgLandau(eps=eps),
        dt=min(config.dt, 0.5 * eps * eps / 4.0),
        t_end=config.t_end,
        cfl_safety=config.cfl_safety,
        poisson_tol=config.poisson_tol,
        poisson_max_iter=config.poisson_max_iter,
    )
    gl_out = run(
        grid, gl_cfg, State(0.0, u0.copy(), v0.copy(), np.zeros((grid.nx, grid.ny))),
        spec,
    )
    return BiaxialReport(
        projected_rows=proj_out.rows,
        gl_rows=gl_out.rows,
        orthogonality_max=worst["dot"],
        norm_error_max=worst["norm"],
        gl_penalty_max=max(r.penalty for r in gl_out.rows),
        gl_e0=gl_out.e0,
    )
