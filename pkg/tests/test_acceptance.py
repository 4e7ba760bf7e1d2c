"""End-to-end acceptance checks for the flow solver and its analysis tools.

Each test pins a quantitative property of the shipped artifact: scheme
exactness on equilibria, incompressibility after every step, the discrete
energy ledger, the viscous-decay benchmark, the bubble energy quantum,
defect extrapolation of concentrating families, Hopf-norm boundedness
under concentration, the scaling identity under refinement, penalty decay
across relaxation sweeps, self-convergence of the relaxed flow, frame
constraint preservation, and snapshot serialization.

Two checks fail at the shipped tolerances and are kept failing on
purpose; their assertion messages carry the measured values and the
scaling argument for why the bound cannot be met by this (or any
consistent) discretization at these parameters.
"""

import math
import time
import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from nlc2d.diagnostics import (
    degree_integral,
    hopf_lp_norm,
    hopf_differential,
    penalty_l1,
    pohozaev_residual,
    total_energy,
)
from nlc2d.experiments import (
    CAP_INNER,
    CAP_OUTER,
    BubbleSpec,
    SweepPlan,
    biaxial_demo,
    bubble_trace,
    make_bubble,
    run_sweep,
)
from nlc2d.grid import (
    SQUARE,
    TORUS,
    BoundaryData,
    Grid2D,
    ball_mask,
    gradient,
    integrate,
)
from nlc2d.manifold import (
    CutoffProfile,
    ManifoldSpec,
    distance,
    second_fundamental_form_term,
)
from nlc2d.snapshots import (
    BadMagic,
    CorruptPayload,
    VersionMismatch,
    read_snapshot,
    write_snapshot,
)
from nlc2d.solver import (
    GinzburgLandau,
    Projected,
    SolverConfig,
    State,
    run,
    stationary_gl_solve,
    stationary_residual,
    suggested_dt,
)

from conftest import random_frames, smooth_sphere_field, taylor_green_velocity

SPHERE = ManifoldSpec("sphere")
SPHERE_PROFILE = CutoffProfile.for_spec(SPHERE)


def north_state(grid):
    v = np.zeros((grid.nx, grid.ny, 3))
    v[..., 2] = 1.0
    return State(0.0, np.zeros((grid.nx, grid.ny, 2)), v, np.zeros((grid.nx, grid.ny)))


def smooth_state(grid, u_amp=1.0):
    return State(
        0.0,
        u_amp * taylor_green_velocity(grid),
        smooth_sphere_field(grid),
        np.zeros((grid.nx, grid.ny)),
    )


def tilted_bc(grid):
    # smooth wall data winding gently in polar angle and phase
    def fn(x, y):
        s = np.where(np.abs(x - 0.5) > 0.49, y, x)
        th = 0.5 * np.sin(2 * np.pi * s)
        ph = 0.3 * np.cos(2 * np.pi * s)
        return np.stack(
            [np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)],
            axis=-1,
        )

    return BoundaryData.from_function(grid, fn)


# ---------------------------------------------------------------------------
# equilibria stay put, fast


@pytest.mark.parametrize(
    "scheme", [GinzburgLandau(eps=0.1), Projected()], ids=["relaxed", "constrained"]
)
def test_equilibrium_is_a_fixed_point_for_a_thousand_steps(scheme):
    g = Grid2D.unit(64, TORUS)
    dt = suggested_dt(g, scheme)
    cfg = SolverConfig(scheme, dt=dt, t_end=1000 * dt)
    st = north_state(g)
    u0, v0 = st.u.copy(), st.v.copy()
    started = time.monotonic()
    res = run(g, cfg, st, SPHERE)
    elapsed = time.monotonic() - started
    drift = max(
        float(np.abs(res.state.u - u0).max()),
        float(np.abs(res.state.v - v0).max()),
    )
    assert len(res.rows) == 1001
    assert drift <= 1e-12, f"equilibrium drifted by {drift:.3e}"
    assert elapsed <= 10.0, f"1000 equilibrium steps took {elapsed:.1f} s"


# ---------------------------------------------------------------------------
# every step ends divergence-free


def test_velocity_stays_divergence_free_on_the_torus():
    g = Grid2D.unit(64, TORUS)
    scheme = GinzburgLandau(eps=0.2)
    dt = suggested_dt(g, scheme)
    cfg = SolverConfig(scheme, dt=dt, t_end=200 * dt)
    res = run(g, cfg, smooth_state(g), SPHERE)
    worst = max(r.div_max for r in res.rows)
    assert worst <= 1e-10, f"torus divergence reached {worst:.3e}"


def test_velocity_stays_divergence_free_on_the_square():
    g = Grid2D.unit(64, SQUARE)
    scheme = GinzburgLandau(eps=0.2)
    dt = suggested_dt(g, scheme)
    cfg = SolverConfig(scheme, dt=dt, t_end=150 * dt)
    spec = BubbleSpec(center=(0.5, 0.5), scale=0.15)
    v0 = make_bubble(spec, g)
    bc = BoundaryData.from_function(g, lambda x, y: bubble_trace(spec, x, y))
    st = State(0.0, np.zeros((64, 64, 2)), v0, np.zeros((64, 64)))
    res = run(g, cfg, st, SPHERE, bc_v=bc)
    worst = max(r.div_max for r in res.rows)
    assert worst <= 1e-8, f"square divergence reached {worst:.3e}"


# ---------------------------------------------------------------------------
# discrete energy ledger (kept failing: quadrature bias, see message)


@pytest.mark.slow
def test_energy_plus_twice_dissipation_never_exceeds_start():
    g = Grid2D.unit(128, TORUS)
    scheme = GinzburgLandau(eps=0.1)
    cfg = SolverConfig(scheme, dt=suggested_dt(g, scheme), t_end=0.05)
    res = run(g, cfg, smooth_state(g), SPHERE)
    slack = max(
        (r.total + 2.0 * r.dissipation - res.e0) / res.e0 for r in res.rows
    )
    assert slack <= 1e-6, (
        f"worst relative ledger slack {slack:.3e} exceeds 1e-6. The rate "
        "terms are sampled at the end of each step (left endpoints of the "
        "energy drop), which overstates the time integral by O(dt) per "
        "unit time; with the doubled weight the bias is first-order in dt "
        "and lands a few parts in 1e-3 here, three orders of magnitude "
        "above the allowed band (halving dt halves it). No consistent "
        "explicit scheme lands under 1e-6 at this resolution; tightening "
        "requires either the unhalved rate convention or trapezoidal "
        "sampling of the rates."
    )


# ---------------------------------------------------------------------------
# pure fluid reduction


def test_constant_director_reduces_to_viscous_decay():
    g = Grid2D.unit(128, TORUS)
    scheme = Projected()
    dt = suggested_dt(g, scheme)
    cfg = SolverConfig(scheme, dt=dt, t_end=0.01)
    st = north_state(g)
    st.u = taylor_green_velocity(g)
    res = run(g, cfg, st, SPHERE)
    k0 = res.rows[0].kinetic
    for row in res.rows:
        want = k0 * math.exp(-16.0 * math.pi**2 * row.t)
        assert abs(row.kinetic - want) <= 0.02 * want, (
            f"kinetic energy {row.kinetic:.6g} at t={row.t:.5f} is outside "
            f"2% of {want:.6g}"
        )


# ---------------------------------------------------------------------------
# the bubble energy quantum


def _capped_radial_density(r, lam):
    # polar-angle profile of the capped bubble and its energy density
    # Theta'(r)^2 + sin(Theta)^2 / r^2, derived from the cap formulas
    if r >= CAP_OUTER:
        return 0.0
    if r < CAP_INNER:
        gp = 2.0 * lam / (lam * lam + r * r)  # conformal: both parts equal
        return 2.0 * gp * gp
    logk = math.log(CAP_OUTER / CAP_INNER)
    u = math.log(r / CAP_INNER) / logk
    T = (lam / r) * (1.0 - u * u) ** 2
    dT = (lam / (r * r)) * (1.0 - u * u) * (-(1.0 - u * u) - 4.0 * u / logk)
    tp = -2.0 * dT / (1.0 + T * T)  # Theta = pi - 2 arctan T
    st = 2.0 * T / (1.0 + T * T)
    return tp * tp + (st / r) ** 2


def radial_dirichlet_oracle(lam):
    inner, _ = quad(
        lambda r: _capped_radial_density(r, lam) * r, 0.0, CAP_INNER, limit=200
    )
    blend, _ = quad(
        lambda r: _capped_radial_density(r, lam) * r, CAP_INNER, CAP_OUTER, limit=200
    )
    return math.pi * (inner + blend)


def test_bubble_carries_one_energy_quantum():
    g = Grid2D.unit(256, TORUS)
    lam = 0.1
    v = make_bubble(BubbleSpec(scale=lam), g)
    rep = total_energy(g, np.zeros((256, 256, 2)), v, SPHERE, SPHERE_PROFILE, lam)
    oracle = radial_dirichlet_oracle(lam)
    ratio = rep.dirichlet / oracle
    assert 0.98 <= ratio <= 1.02, (
        f"grid Dirichlet energy {rep.dirichlet:.6f} vs radial quadrature "
        f"{oracle:.6f} (ratio {ratio:.4f})"
    )
    deg = degree_integral(g, v)
    assert abs(deg - 1.0) <= 0.02, f"degree integral {deg:.6f}"


# ---------------------------------------------------------------------------
# concentrating families: trace-free defects vanish, energy quantizes


def test_conformal_concentration_leaves_no_trace_free_defect():
    g = Grid2D.unit(512, TORUS)
    started = time.monotonic()
    from nlc2d.experiments import compactness_demo

    rep = compactness_demo(g, [0.08, 0.04, 0.02])
    elapsed = time.monotonic() - started
    gamma = rep.defect.gamma
    assert 4 * math.pi * 0.95 <= gamma <= 4 * math.pi * 1.05, (
        f"energy defect {gamma:.4f} is outside the bubble quantum band "
        f"[{4 * math.pi * 0.95:.4f}, {4 * math.pi * 1.05:.4f}]"
    )
    assert abs(rep.defect.alpha) <= 0.01 * gamma, (
        f"defect alpha {rep.defect.alpha:.3e} above 1% of gamma {gamma:.4f}"
    )
    assert abs(rep.defect.beta) <= 0.01 * gamma, (
        f"defect beta {rep.defect.beta:.3e} above 1% of gamma {gamma:.4f}"
    )
    assert elapsed <= 300.0, f"defect extrapolation took {elapsed:.0f} s"


# ---------------------------------------------------------------------------
# Hopf norm under concentration (kept failing: scaling law, see message)


def test_hopf_ball_norm_bounded_while_gradient_mass_concentrates():
    g = Grid2D.unit(512, TORUS)
    center, R, p = (0.5, 0.5), 0.25, 1.5
    norms = []
    masses = []
    for lam in (0.06, 0.03, 0.015):
        v = make_bubble(BubbleSpec(scale=lam, stretch=1.5), g)
        h = hopf_differential(g, v).h
        norms.append(hopf_lp_norm(g, h, p, center, R))
        gx, gy = gradient(g, v)
        dens = np.sum(gx * gx + gy * gy, axis=-1)
        masses.append(integrate(g, dens, ball_mask(g, center, R)))
    mass_swing = max(masses) / min(masses)
    assert mass_swing <= 1.05, (
        f"ball gradient mass varies by {mass_swing:.4f} across the family"
    )
    norm_swing = max(norms) / min(norms)
    assert norm_swing <= 2.0, (
        f"Hopf ball norm varies by {norm_swing:.4f} > 2 across a 4x scale "
        "reduction. For the stretched profile the pointwise Hopf field "
        "scales like 1/scale^2 over a core of area scale^2, so the ball "
        "L^p norm grows like scale^(2/p - 2); at p = 3/2 a 4x reduction "
        "multiplies it by 4^(2/3) = 2.52 in the continuum. The measured "
        "factor sits just under that because the finest core is barely "
        "resolved; no grid brings it to 2 or less at p = 3/2. Exponents "
        "p <= 4/3 would pass."
    )


# ---------------------------------------------------------------------------
# scaling identity under refinement


def test_scaling_balance_tightens_under_refinement():
    resid = {"radial": [], "x0": []}
    for nx in (48, 96):
        g = Grid2D.unit(nx, SQUARE)
        bc = tilted_bc(g)
        tau = np.zeros((nx, nx, 3))
        v = stationary_gl_solve(g, tau, eps=0.1, bc=bc, spec=SPHERE, tol=1e-8)
        assert stationary_residual(g, v, tau, 0.1, bc, SPHERE) <= 1e-8
        for d in ("radial", "x0"):
            rep = pohozaev_residual(
                g, v, tau, SPHERE, SPHERE_PROFILE, 0.1, (0.5, 0.5), 0.2,
                deformation=d,
            )
            resid[d].append(rep.residual)
    for d in ("radial", "x0"):
        factor = resid[d][0] / resid[d][1]
        assert factor >= 1.8, (
            f"{d} balance residual only improved by {factor:.2f} under h/2"
        )


# ---------------------------------------------------------------------------
# penalty decay across a relaxation sweep


def test_penalty_mass_decays_with_the_relaxation_scale():
    nx = 192
    g = Grid2D.unit(nx, SQUARE)
    bc = tilted_bc(g)
    tau = np.zeros((nx, nx, 3))
    values = []
    v0 = None
    for eps in (0.1, 0.05, 0.025):
        v0 = stationary_gl_solve(
            g, tau, eps=eps, bc=bc, spec=SPHERE, tol=1e-8, v0=v0
        )
        values.append(penalty_l1(g, v0, SPHERE, SPHERE_PROFILE, eps))
    assert values[0] > values[1] > values[2], (
        f"penalty mass {values} is not strictly decreasing"
    )


# ---------------------------------------------------------------------------
# self-convergence of the relaxed flow


@pytest.mark.slow
def test_relaxed_flow_self_converges_as_the_scale_shrinks():
    def data(grid):
        st = smooth_state(grid)
        return st.u, st.v, None

    plan = SweepPlan(
        eps_values=(0.2, 0.1, 0.05),
        nx_values=(256,),
        scheme_kind="ginzburg-landau",
        domain=TORUS,
        t_end=0.02,
        data_factory=data,
    )
    res = run_sweep(plan)
    assert all(m.error is None for m in res.members)
    d = res.pairwise_l2
    assert len(d) == 2
    assert d[0] > d[1], f"final-state differences {d} are not decreasing"
    warnings.warn(
        "relaxed-flow self-convergence: successive final-state distances "
        f"{d[0]:.6g} -> {d[1]:.6g}, contraction ratio {d[1] / d[0]:.4f}",
        stacklevel=1,
    )


# ---------------------------------------------------------------------------
# the orthonormal-frame target


def test_constrained_scheme_preserves_the_frame():
    g = Grid2D.unit(64, TORUS)
    scheme = Projected()
    dt = suggested_dt(g, scheme)
    cfg = SolverConfig(scheme, dt=dt, t_end=500 * dt)
    rep = biaxial_demo(g, cfg)
    assert len(rep.projected_rows) == 501
    assert rep.orthogonality_max <= 1e-12, (
        f"frame orthogonality drifted to {rep.orthogonality_max:.3e}"
    )
    assert rep.norm_error_max <= 1e-12, (
        f"frame member norms drifted to {rep.norm_error_max:.3e}"
    )


def test_curvature_term_is_normal_to_the_frame_target(rng):
    n_samples = 10_000
    frames = random_frames(rng, n_samples)
    gx = rng.normal(size=(n_samples, 6))
    gy = rng.normal(size=(n_samples, 6))
    spec = ManifoldSpec("biaxial")
    out = second_fundamental_form_term(spec, frames, gx, gy)
    n, m = frames[:, :3], frames[:, 3:]
    # orthogonal basis of the normal space at (n, m)
    e1 = np.concatenate([n, np.zeros_like(m)], axis=1)
    e2 = np.concatenate([np.zeros_like(n), m], axis=1)
    e3 = np.concatenate([m, n], axis=1) / math.sqrt(2.0)
    tangential = out.copy()
    for e in (e1, e2, e3):
        tangential -= np.sum(out * e, axis=1, keepdims=True) * e
    worst = float(np.abs(tangential).max())
    assert worst <= 1e-10, f"curvature term has tangential part {worst:.3e}"


def test_curvature_term_is_normal_on_the_sphere(rng):
    v = rng.normal(size=(10_000, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    gx = rng.normal(size=(10_000, 3))
    gy = rng.normal(size=(10_000, 3))
    out = second_fundamental_form_term(SPHERE, v, gx, gy)
    tangential = out - np.sum(out * v, axis=1, keepdims=True) * v
    worst = float(np.abs(tangential).max())
    assert worst <= 1e-10, f"curvature term has tangential part {worst:.3e}"


# ---------------------------------------------------------------------------
# serialization


def test_snapshot_round_trip_is_bitwise_for_a_hundred_states(tmp_path, rng):
    cases = [
        (int(rng.integers(2, 7)) * 4, domain, kind, ncomp)
        for domain in (TORUS, SQUARE)
        for kind, ncomp in (("sphere", 3), ("biaxial", 6))
        for _ in range(25)
    ]
    assert len(cases) == 100
    path = str(tmp_path / "state.nlc2d")
    for i, (nx, domain, kind, ncomp) in enumerate(cases):
        g = Grid2D.unit(max(nx, 8), domain)
        st = State(
            t=float(rng.normal()),
            u=rng.normal(size=(g.nx, g.nx, 2)),
            v=rng.normal(size=(g.nx, g.nx, ncomp)),
            p=rng.normal(size=(g.nx, g.nx)),
        )
        write_snapshot(path, st, g, kind)
        back = read_snapshot(path)
        assert back.grid == g and back.manifold_kind == kind
        assert back.state.t == st.t
        assert np.array_equal(back.state.u, st.u)
        assert np.array_equal(back.state.v, st.v)
        assert np.array_equal(back.state.p, st.p)


def test_damaged_snapshots_fail_with_designated_errors(tmp_path, rng):
    import struct

    g = Grid2D.unit(16, TORUS)
    st = State(0.5, rng.normal(size=(16, 16, 2)),
               rng.normal(size=(16, 16, 3)), rng.normal(size=(16, 16)))
    good = str(tmp_path / "good.nlc2d")
    write_snapshot(good, st, g, "sphere")
    blob = open(good, "rb").read()

    def expect(err, mutated):
        path = str(tmp_path / "bad.nlc2d")
        open(path, "wb").write(mutated)
        with pytest.raises(err):
            read_snapshot(path)

    expect(BadMagic, b"PNG\r\n\x1a" + blob[6:])
    expect(BadMagic, b"\x00")
    b = bytearray(blob)
    struct.pack_into("<I", b, 6, 2)
    expect(VersionMismatch, bytes(b))
    expect(CorruptPayload, blob[:-16])           # truncated payload
    expect(CorruptPayload, blob[:40])            # truncated header
    expect(CorruptPayload, blob + b"\x00" * 16)  # trailing bytes
    b = bytearray(blob)
    b[22] = 9
    expect(CorruptPayload, bytes(b))             # unknown domain code
    b = bytearray(blob)
    struct.pack_into("<I", b, 18, 6)
    expect(CorruptPayload, bytes(b))             # component count mismatch
