"""Time integration of the coupled flow, and the stationary director solver.

Two schemes share one explicit step: the relaxed scheme evolves the
director by the penalized heat flow v <- v + dt (lap v - u.grad v - well'),
the constrained scheme replaces the well force by a pointwise nearest-point
projection after the update.  The momentum update uses the fresh director's
elastic stress, then a discrete Helmholtz projection restores
incompressibility.

The projection solves the normal equations (D D^T) mu = D u* built from the
same centered divergence D that diagnostics use, then corrects
u <- u* - D^T mu; this zeroes the collocated divergence exactly (up to the
linear-solver tolerance) and never adds kinetic energy.  On the torus D D^T
diagonalizes under the DFT with symbol (sin^2 + sin^2)/h^2, whose four null
modes carry no divergence; on the square a cached sparse factorization plus
iterative refinement drives max |div u| below the tolerance.  The pressure
is recovered as p = -mu/dt with its mean removed.

The stationary solver runs stabilized pseudo-time stepping: the shifted
Helmholtz operator (a I - lap) is factored once and reused, the well force
and forcing stay explicit, and the shift is raised adaptively if the
residual climbs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import cg, splu

from . import manifold as mf
from .diagnostics import EnergyReport, stress_divergence, total_energy
from .grid import (
    SQUARE,
    TORUS,
    BoundaryData,
    Grid2D,
    advect,
    divergence,
    gradient,
    integrate,
    laplacian,
)

__all__ = [
    "CflViolation",
    "PoissonDiverged",
    "NumericalBlowup",
    "NotConverged",
    "GinzburgLandau",
    "Projected",
    "SolverConfig",
    "State",
    "StepInfo",
    "LedgerRow",
    "RunResult",
    "suggested_dt",
    "default_poisson_tol",
    "make_divergence_free",
    "pressure_poisson",
    "step",
    "run",
    "stationary_gl_solve",
    "stationary_residual",
]


class CflViolation(RuntimeError):
    """Advective stability limit exceeded by the current velocity."""


class PoissonDiverged(RuntimeError):
    """Pressure solver failed to reach tolerance within its budget."""


class NumericalBlowup(RuntimeError):
    """Non-finite field entries; the time step is too large."""


class NotConverged(RuntimeError):
    """Stationary iteration stopped short; carries the best iterate."""

    def __init__(self, message: str, v: np.ndarray | None = None,
                 residual: float = math.nan):
        super().__init__(message)
        self.v = v
        self.residual = residual


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class GinzburgLandau:
    """Relaxed scheme: explicit penalty force with length scale eps."""

    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")


@dataclass(frozen=True)
class Projected:
    """Constrained scheme: pointwise projection onto the target."""


@dataclass(frozen=True)
class SolverConfig:
    scheme: "GinzburgLandau | Projected"
    dt: float
    t_end: float
    cfl_safety: float = 0.5
    poisson_tol: float | None = None  # None: per-domain default
    poisson_max_iter: int = 500

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError(
                f"cfl_safety must lie in (0, 1], got {self.cfl_safety}"
            )
        if self.poisson_max_iter < 1:
            raise ValueError("poisson_max_iter must be at least 1")

    def stability_bound(self, grid: Grid2D) -> float:
        """Largest admissible dt: diffusion h^2/4, well stiffness eps^2/4."""
        bound = grid.h * grid.h / 4.0
        if isinstance(self.scheme, GinzburgLandau):
            bound = min(bound, self.scheme.eps**2 / 4.0)
        return self.cfl_safety * bound

    def validate(self, grid: Grid2D) -> None:
        bound = self.stability_bound(grid)
        if self.dt > bound * (1 + 1e-12):
            raise ValueError(
                f"dt = {self.dt} exceeds the stability bound {bound:.3e} "
                f"(cfl_safety = {self.cfl_safety})"
            )


def suggested_dt(grid: Grid2D, scheme, cfl_safety: float = 0.5) -> float:
    """Stability-limited time step for the given grid and scheme."""
    bound = grid.h * grid.h / 4.0
    if isinstance(scheme, GinzburgLandau):
        bound = min(bound, scheme.eps**2 / 4.0)
    return cfl_safety * bound


def default_poisson_tol(domain: str) -> float:
    """Divergence tolerance: spectral machine-level on the torus, CG-level
    on the square."""
    return 1e-10 if domain == TORUS else 1e-8


@dataclass
class State:
    """Flow state at one instant: velocity, director, pressure."""

    t: float
    u: np.ndarray  # (nx, ny, 2)
    v: np.ndarray  # (nx, ny, L)
    p: np.ndarray  # (nx, ny)

    def copy(self) -> "State":
        return State(self.t, self.u.copy(), self.v.copy(), self.p.copy())


@dataclass
class StepInfo:
    """Per-step diagnostics the run loop folds into the ledger."""

    div_max: float
    dist_max: float
    dissipation_increment: float


# ---------------------------------------------------------------------------
# spectral projection (torus)

_TORUS_CACHE: dict = {}


def _torus_ops(grid: Grid2D):
    ops = _TORUS_CACHE.get(grid)
    if ops is None:
        sx = np.sin(2.0 * np.pi * np.fft.fftfreq(grid.nx))
        sy = np.sin(2.0 * np.pi * np.fft.rfftfreq(grid.ny))
        sx[np.abs(sx) < 1e-12] = 0.0
        sy[np.abs(sy) < 1e-12] = 0.0
        wide = (sx[:, None] ** 2 + sy[None, :] ** 2) / grid.h**2
        inv_wide = np.zeros_like(wide)
        np.divide(1.0, wide, out=inv_wide, where=wide > 0)
        # centered first-difference symbols
        ikx = 1j * sx[:, None] / grid.h
        iky = 1j * sy[None, :] / grid.h
        # five-point Laplacian symbol for the exposed Poisson solver
        cx = 2.0 * np.cos(2.0 * np.pi * np.fft.fftfreq(grid.nx)) - 2.0
        cy = 2.0 * np.cos(2.0 * np.pi * np.fft.rfftfreq(grid.ny)) - 2.0
        five = (cx[:, None] + cy[None, :]) / grid.h**2
        inv_five = np.zeros_like(five)
        np.divide(1.0, five, out=inv_five, where=five != 0)
        ops = {"inv_wide": inv_wide, "ikx": ikx, "iky": iky, "inv_five": inv_five}
        _TORUS_CACHE[grid] = ops
    return ops


def _project_torus(grid: Grid2D, u: np.ndarray):
    ops = _torus_ops(grid)
    div = divergence(grid, u)
    div_hat = np.fft.rfft2(div)
    mu_hat = div_hat * ops["inv_wide"]
    shape = div.shape
    corr_x = np.fft.irfft2(ops["ikx"] * mu_hat, s=shape)
    corr_y = np.fft.irfft2(ops["iky"] * mu_hat, s=shape)
    u_new = u + np.stack([corr_x, corr_y], axis=-1)
    mu = np.fft.irfft2(mu_hat, s=shape)
    return u_new, mu


# ---------------------------------------------------------------------------
# sparse projection (square)

_SQUARE_CACHE: dict = {}


def _d1_matrix(n: int, h: float) -> sparse.csr_matrix:
    """Centered first derivative with one-sided second-order end rows."""
    D = sparse.lil_matrix((n, n))
    for i in range(1, n - 1):
        D[i, i - 1] = -0.5
        D[i, i + 1] = 0.5
    D[0, 0], D[0, 1], D[0, 2] = -1.5, 2.0, -0.5
    D[n - 1, n - 1], D[n - 1, n - 2], D[n - 1, n - 3] = 1.5, -2.0, 0.5
    return (D / h).tocsr()


def _square_ops(grid: Grid2D):
    ops = _SQUARE_CACHE.get(grid)
    if ops is None:
        n = grid.nx
        D1 = _d1_matrix(n, grid.h)
        eye = sparse.identity(n, format="csr")
        Dx = sparse.kron(D1, eye, format="csr")
        Dy = sparse.kron(eye, D1, format="csr")
        D = sparse.hstack([Dx, Dy], format="csr")
        A = (D @ D.T).tocsr()
        ridge = 1e-10 * A.diagonal().max()
        lu = splu((A + ridge * sparse.identity(A.shape[0])).tocsc())
        # five-point homogeneous-Neumann Laplacian for the Poisson solver
        L1 = sparse.lil_matrix((n, n))
        for i in range(n):
            L1[i, i] = -2.0
            if i > 0:
                L1[i, i - 1] = 1.0
            if i < n - 1:
                L1[i, i + 1] = 1.0
        L1[0, 0] = -1.0
        L1[n - 1, n - 1] = -1.0
        L1 = (L1 / grid.h**2).tocsr()
        Lneu = sparse.kron(L1, eye) + sparse.kron(eye, L1)
        ops = {"D": D, "A": A, "lu": lu, "Lneu": (-Lneu).tocsr()}
        _SQUARE_CACHE[grid] = ops
    return ops


def _project_square(grid: Grid2D, u: np.ndarray, tol: float, max_iter: int):
    ops = _square_ops(grid)
    D, A, lu = ops["D"], ops["A"], ops["lu"]
    uf = np.concatenate([u[..., 0].ravel(), u[..., 1].ravel()])
    b = D @ uf
    x = lu.solve(b)
    r = b - A @ x
    it = 0
    while np.abs(r).max() > tol:
        if it >= max_iter:
            raise PoissonDiverged(
                f"projection residual {np.abs(r).max():.3e} after "
                f"{max_iter} refinement passes (tol {tol})"
            )
        x += lu.solve(r)
        r = b - A @ x
        it += 1
    uf = uf - D.T @ x
    n = grid.nx
    u_new = np.stack(
        [uf[: n * n].reshape(n, n), uf[n * n :].reshape(n, n)], axis=-1
    )
    return u_new, x.reshape(n, n)


def make_divergence_free(
    grid: Grid2D,
    u: np.ndarray,
    tol: float | None = None,
    max_iter: int = 500,
) -> np.ndarray:
    """Helmholtz projection of a velocity field (centered divergence)."""
    if tol is None:
        tol = default_poisson_tol(grid.domain)
    if grid.domain == TORUS:
        u_new, _ = _project_torus(grid, u)
    else:
        u_new, _ = _project_square(grid, u, tol, max_iter)
    return u_new


# ---------------------------------------------------------------------------
# exposed Poisson solver (five-point system)


def pressure_poisson(
    rhs: np.ndarray,
    grid: Grid2D,
    tol: float | None = None,
    max_iter: int | None = None,
) -> np.ndarray:
    """Solve the five-point Poisson system lap p = rhs, zero-mean result.

    Torus: exact inversion of the five-point symbol in Fourier space.
    Square: conjugate gradients on the five-point homogeneous-Neumann
    system.  The mean of rhs is removed first (compatibility), and the
    returned field has zero mean.
    """
    if tol is None:
        tol = default_poisson_tol(grid.domain)
    rhs = rhs - rhs.mean()
    if grid.domain == TORUS:
        ops = _torus_ops(grid)
        p = np.fft.irfft2(np.fft.rfft2(rhs) * ops["inv_five"], s=rhs.shape)
        return p - p.mean()
    ops = _square_ops(grid)
    Aneg = ops["Lneu"]  # -Laplacian, positive semidefinite
    b = -rhs.ravel()
    if max_iter is None:
        max_iter = 40 * grid.nx
    x, info = cg(Aneg, b, rtol=0.0, atol=0.5 * tol, maxiter=max_iter)
    if info != 0:
        raise PoissonDiverged(
            f"conjugate gradients stopped after {max_iter} iterations "
            f"without reaching tolerance {tol}"
        )
    resid = np.abs(b - Aneg @ x).max()
    if resid > tol:
        raise PoissonDiverged(
            f"Poisson residual {resid:.3e} above tolerance {tol}"
        )
    p = x.reshape(rhs.shape)
    return p - p.mean()


# ---------------------------------------------------------------------------
# time stepping


def _director_rhs(grid, state, spec, profile, scheme, bc_v):
    """Diffusion-advection(-well) right-hand side for the director."""
    lap_v = laplacian(grid, state.v, bc_v)
    adv_v = advect(grid, state.u, state.v)
    rhs = lap_v - adv_v
    if isinstance(scheme, GinzburgLandau):
        rhs = rhs - mf.penalty_gradient(spec, profile, state.v, scheme.eps)
    return rhs, adv_v


def step(
    grid: Grid2D,
    config: SolverConfig,
    state: State,
    spec: mf.ManifoldSpec,
    profile: mf.CutoffProfile | None = None,
    bc_v: BoundaryData | None = None,
    bc_u: BoundaryData | None = None,
    freeze_velocity: bool = False,
) -> tuple[State, StepInfo]:
    """One explicit step: director, momentum with fresh stress, projection.

    freeze_velocity skips the momentum update and projection, evolving the
    director in the frozen flow (pure heat-flow studies).  Raises
    CflViolation when dt * max|u| / h exceeds cfl_safety, NumericalBlowup
    on non-finite results, PoissonDiverged from the projection,
    OutsideTube from the constrained scheme's projection.
    """
    if profile is None:
        profile = mf.CutoffProfile.for_spec(spec)
    dt = config.dt
    tol = config.poisson_tol
    if tol is None:
        tol = default_poisson_tol(grid.domain)
    umax = math.sqrt(float(np.max(np.sum(state.u * state.u, axis=-1))))
    if dt * umax / grid.h > config.cfl_safety * (1 + 1e-12):
        raise CflViolation(
            f"dt*|u|/h = {dt * umax / grid.h:.3e} exceeds cfl_safety "
            f"= {config.cfl_safety} at t = {state.t:.6g}"
        )
    if grid.domain == SQUARE and bc_u is None:
        bc_u = BoundaryData.constant(grid, np.zeros(2))

    # director update
    rhs_v, adv_v = _director_rhs(grid, state, spec, profile, config.scheme, bc_v)
    if isinstance(config.scheme, GinzburgLandau):
        v_new = state.v + dt * rhs_v
        f_disc = rhs_v + adv_v  # = lap v - well'(v), the diffusive part
    else:
        v_new = mf.project(spec, state.v + dt * rhs_v)
        f_disc = (v_new - state.v) / dt + adv_v
    if not np.all(np.isfinite(v_new)):
        raise NumericalBlowup(f"director lost finiteness at t = {state.t:.6g}")

    if freeze_velocity:
        u_new = state.u
        p = state.p
        div_max = float(np.abs(divergence(grid, u_new)).max())
    else:
        # momentum update with the fresh director's stress
        lap_u = laplacian(grid, state.u, bc_u)
        adv_u = advect(grid, state.u, state.u)
        u_star = state.u + dt * (lap_u - adv_u - stress_divergence(grid, v_new))
        if grid.domain == TORUS:
            u_new, mu = _project_torus(grid, u_star)
        else:
            u_new, mu = _project_square(grid, u_star, tol, config.poisson_max_iter)
        if not np.all(np.isfinite(u_new)):
            raise NumericalBlowup(
                f"velocity lost finiteness at t = {state.t:.6g}"
            )
        p = -mu / dt
        p = p - p.mean()
        div_max = float(np.abs(divergence(grid, u_new)).max())
        if div_max > tol:
            raise PoissonDiverged(
                f"post-projection divergence {div_max:.3e} above {tol}"
            )
    gx, gy = gradient(grid, u_new)
    diss_rate = 0.5 * integrate(grid, np.sum(gx * gx + gy * gy, axis=-1))
    diss_rate += 0.5 * integrate(grid, np.sum(f_disc * f_disc, axis=-1))
    dist_max = float(mf.distance(spec, v_new).max())

    new_state = State(t=state.t + dt, u=u_new, v=v_new, p=p)
    info = StepInfo(
        div_max=div_max,
        dist_max=dist_max,
        dissipation_increment=dt * diss_rate,
    )
    return new_state, info


@dataclass
class LedgerRow:
    """One energy-ledger record; dissipation is cumulative."""

    t: float
    kinetic: float
    dirichlet: float
    penalty: float
    dissipation: float
    total: float
    div_max: float
    dist_max: float


@dataclass
class RunResult:
    state: State
    rows: list = field(default_factory=list)
    e0: float = math.nan
    lambda1: float = math.nan

    def final_report(self) -> EnergyReport:
        last = self.rows[-1]
        return EnergyReport(
            kinetic=last.kinetic,
            dirichlet=last.dirichlet,
            penalty=last.penalty,
            cumulative_dissipation=last.dissipation,
            e0=self.e0,
            lambda1=self.lambda1,
        )


def run(
    grid: Grid2D,
    config: SolverConfig,
    state: State,
    spec: mf.ManifoldSpec,
    profile: mf.CutoffProfile | None = None,
    bc_v: BoundaryData | None = None,
    bc_u: BoundaryData | None = None,
    callback=None,
    freeze_velocity: bool = False,
) -> RunResult:
    """March the flow to t_end, keeping the energy ledger.

    The initial velocity is projected divergence-free before the first
    step and before e0 is recorded (skipped when freeze_velocity holds the
    flow fixed).  callback, when given, is invoked as callback(state, row)
    after the initial projection and after every step.  The final step is
    shortened to land exactly on t_end.
    """
    if profile is None:
        profile = mf.CutoffProfile.for_spec(spec)
    eps = config.scheme.eps if isinstance(config.scheme, GinzburgLandau) else 1.0

    state = state.copy()
    if not freeze_velocity:
        state.u = make_divergence_free(
            grid, state.u, config.poisson_tol, config.poisson_max_iter
        )
    report = total_energy(grid, state.u, state.v, spec, profile, eps)
    e0 = report.total
    lambda1 = report.dirichlet + report.penalty
    cum_diss = 0.0
    result = RunResult(state=state, e0=e0, lambda1=lambda1)

    row = LedgerRow(
        t=state.t,
        kinetic=report.kinetic,
        dirichlet=report.dirichlet,
        penalty=report.penalty,
        dissipation=0.0,
        total=report.total,
        div_max=float(np.abs(divergence(grid, state.u)).max()),
        dist_max=float(mf.distance(spec, state.v).max()),
    )
    result.rows.append(row)
    if callback is not None:
        callback(state, row)

    t_end = config.t_end
    while state.t < t_end - 1e-12 * max(1.0, abs(t_end)):
        dt_step = min(config.dt, t_end - state.t)
        cfg = config if dt_step == config.dt else SolverConfig(
            scheme=config.scheme,
            dt=dt_step,
            t_end=t_end,
            cfl_safety=config.cfl_safety,
            poisson_tol=config.poisson_tol,
            poisson_max_iter=config.poisson_max_iter,
        )
        state, info = step(
            grid, cfg, state, spec, profile, bc_v, bc_u,
            freeze_velocity=freeze_velocity,
        )
        cum_diss += info.dissipation_increment
        report = total_energy(grid, state.u, state.v, spec, profile, eps)
        lambda1 = max(lambda1, report.dirichlet + report.penalty)
        row = LedgerRow(
            t=state.t,
            kinetic=report.kinetic,
            dirichlet=report.dirichlet,
            penalty=report.penalty,
            dissipation=cum_diss,
            total=report.total,
            div_max=info.div_max,
            dist_max=info.dist_max,
        )
        result.rows.append(row)
        if callback is not None:
            callback(state, row)

    result.state = state
    result.lambda1 = lambda1
    return result


# ---------------------------------------------------------------------------
# stationary solver

_HELMHOLTZ_CACHE: dict = {}
_LAP2D_CACHE: dict = {}


def _lap1d_matrix(n: int, h: float, periodic: bool) -> sparse.csr_matrix:
    L = sparse.lil_matrix((n, n))
    for i in range(n):
        L[i, i] = -2.0
        if i > 0:
            L[i, i - 1] = 1.0
        if i < n - 1:
            L[i, i + 1] = 1.0
    if periodic:
        L[0, n - 1] += 1.0
        L[n - 1, 0] += 1.0
    else:
        # linear extrapolation to a Dirichlet wall value (ghost folded in)
        L[0, 0] = -3.0
        L[n - 1, n - 1] = -3.0
    return (L / h**2).tocsr()


def _lap2d_matrix(grid: Grid2D) -> sparse.csr_matrix:
    L = _LAP2D_CACHE.get(grid)
    if L is None:
        L1 = _lap1d_matrix(grid.nx, grid.h, grid.domain == TORUS)
        eye = sparse.identity(grid.nx, format="csr")
        L = (sparse.kron(L1, eye) + sparse.kron(eye, L1)).tocsr()
        _LAP2D_CACHE[grid] = L
    return L


def _helmholtz_lu(grid: Grid2D, a: float):
    key = (grid, a)
    lu = _HELMHOLTZ_CACHE.get(key)
    if lu is None:
        L = _lap2d_matrix(grid)
        M = (a * sparse.identity(L.shape[0]) - L).tocsc()
        lu = splu(M)
        _HELMHOLTZ_CACHE[key] = lu
    return lu


def _bc_ghost_array(grid: Grid2D, bc: BoundaryData | None, L: int) -> np.ndarray:
    """Dirichlet ghost contribution 2 g / h^2 folded onto wall cells."""
    out = np.zeros((grid.nx, grid.ny, L))
    if bc is None:
        return out
    h2 = grid.h**2

    def as2d(arr):
        arr = np.asarray(arr, dtype=float)
        return arr[:, None] if arr.ndim == 1 else arr

    out[0, :, :] += 2.0 * as2d(bc.left) / h2
    out[-1, :, :] += 2.0 * as2d(bc.right) / h2
    out[:, 0, :] += 2.0 * as2d(bc.bottom) / h2
    out[:, -1, :] += 2.0 * as2d(bc.top) / h2
    return out


def stationary_residual(
    grid: Grid2D,
    v: np.ndarray,
    tau: np.ndarray,
    eps: float,
    bc: BoundaryData | None,
    spec: mf.ManifoldSpec,
    profile: mf.CutoffProfile | None = None,
) -> float:
    """L2 norm of lap v - well'(v) - tau, the stationary defect."""
    if profile is None:
        profile = mf.CutoffProfile.for_spec(spec)
    res = (
        laplacian(grid, v, bc)
        - mf.penalty_gradient(spec, profile, v, eps)
        - tau
    )
    return math.sqrt(integrate(grid, np.sum(res * res, axis=-1)))


def _harmonic_extension(grid: Grid2D, bc: BoundaryData | None, L: int,
                        spec: mf.ManifoldSpec) -> np.ndarray:
    """Initial guess: harmonic extension of bc, clamped into the tube."""
    canonical = np.zeros(L)
    if spec.kind == mf.SPHERE:
        canonical[2] = 1.0
    else:
        canonical[0] = 1.0
        canonical[4] = 1.0
    if bc is None or grid.domain == TORUS:
        return np.tile(canonical, (grid.nx, grid.ny, 1))
    ghost = _bc_ghost_array(grid, bc, L)
    lu = _helmholtz_lu(grid, 0.0)  # factors -lap, SPD for the square
    v = lu.solve(ghost.reshape(-1, L)).reshape(grid.nx, grid.ny, L)
    # pull stray nodes back into the projection tube
    d = mf.distance(spec, v)
    stray = d > spec.delta_n
    if np.any(stray):
        proj = mf.project_raw(spec, v)
        v = np.where(stray[..., None], proj, v)
        d = mf.distance(spec, v)
        bad = d > spec.delta_n
        if np.any(bad):
            v = np.where(bad[..., None], canonical, v)
    return v


def stationary_gl_solve(
    grid: Grid2D,
    tau: np.ndarray,
    eps: float,
    bc: BoundaryData | None = None,
    spec: mf.ManifoldSpec | None = None,
    profile: mf.CutoffProfile | None = None,
    tol: float = 1e-8,
    max_iter: int = 20000,
    v0: np.ndarray | None = None,
) -> np.ndarray:
    """Solve lap v - well'(v) = tau by stabilized pseudo-time stepping.

    Each sweep solves (a I - lap) v_next = a v - well'(v) - tau (+ ghost
    terms) with a cached factorization; a starts at 4/eps^2 and doubles
    whenever the residual climbs, which keeps the explicit well force
    contractive.  Returns the director field once the L2 residual drops
    below tol; raises NotConverged carrying the best iterate otherwise.
    """
    if spec is None:
        spec = mf.ManifoldSpec(mf.SPHERE)
    if profile is None:
        profile = mf.CutoffProfile.for_spec(spec)
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    L = spec.ambient_dim
    if tau.shape != (grid.nx, grid.ny, L):
        raise ValueError(
            f"tau must have shape {(grid.nx, grid.ny, L)}, got {tau.shape}"
        )
    if grid.domain == SQUARE and bc is None:
        raise ValueError("square runs need Dirichlet boundary data")

    v = v0.copy() if v0 is not None else _harmonic_extension(grid, bc, L, spec)
    ghost = _bc_ghost_array(grid, bc, L).reshape(-1, L)
    a = 4.0 / eps**2
    lu = _helmholtz_lu(grid, a)

    best_v = v
    best_res = math.inf
    res = stationary_residual(grid, v, tau, eps, bc, spec, profile)
    for _ in range(max_iter):
        if res <= tol:
            return v
        if res < best_res:
            best_res = res
            best_v = v
        elif res > 4.0 * best_res or not math.isfinite(res):
            a *= 2.0
            lu = _helmholtz_lu(grid, a)
            v = best_v
        pen = mf.penalty_gradient(spec, profile, v, eps)
        rhs = (a * v - pen - tau).reshape(-1, L) + ghost
        v = lu.solve(rhs).reshape(grid.nx, grid.ny, L)
        res = stationary_residual(grid, v, tau, eps, bc, spec, profile)
    if res < best_res:
        best_res, best_v = res, v
    raise NotConverged(
        f"stationary residual {best_res:.3e} after {max_iter} sweeps "
        f"(tol {tol})",
        v=best_v,
        residual=best_res,
    )
