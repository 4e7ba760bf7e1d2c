"""Command-line front end.

Subcommands: run, sweep, diagnose, compare, demo-compactness,
demo-biaxial, validate-config.  Exit codes: 0 success, 2 configuration or
input-file error, 3 numerical failure.  Reports are JSON on stdout;
floats are printed with full round-trip precision.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import manifold as mf
from .config import ConfigError, RunConfig, parse_config, parse_diagnostics
from .diagnostics import (
    BadExponent,
    BallTooSmall,
    FamilyTooShort,
    concentration_set,
    dbar_hopf_residual,
    gl_decomposition,
    hopf_differential,
    hopf_lp_norm,
    penalty_l1,
    pohozaev_residual,
    tension_field,
    total_energy,
)
from .experiments import biaxial_demo, bump_function, compactness_demo
from .grid import SQUARE, Grid2D, divergence, gradient, l2_norm
from .snapshots import (
    BadMagic,
    CorruptPayload,
    IoError,
    VersionMismatch,
    emit_plot_script,
    read_snapshot,
    write_defects_csv,
    write_energy_csv,
    write_snapshot,
)
from .solver import (
    CflViolation,
    GinzburgLandau,
    NotConverged,
    NumericalBlowup,
    PoissonDiverged,
    Projected,
    SolverConfig,
    State,
    run,
    suggested_dt,
)

_INPUT_ERRORS = (ConfigError, IoError, BadMagic, VersionMismatch, CorruptPayload)
_NUMERICAL_ERRORS = (
    CflViolation,
    PoissonDiverged,
    NumericalBlowup,
    NotConverged,
    mf.OutsideTube,
    mf.OffManifold,
)


def _dump(obj, path=None) -> None:
    text = json.dumps(obj, indent=2)
    if path is None:
        print(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def _ensure_dir(path: str) -> None:
    os.makedirs(path, exist_ok=True)


# ---------------------------------------------------------------------------
# run

def _cmd_run(args) -> int:
    cfg = parse_config(args.config, args.overrides)
    grid = cfg.grid()
    spec = cfg.manifold()
    solver_cfg = cfg.solver()
    u0, v0, bc_v, bc_u = cfg.initial_data(grid)
    state = State(0.0, u0, v0, np.zeros((grid.nx, grid.ny)))

    out_dir = cfg.output.directory
    _ensure_dir(out_dir)
    every = cfg.output.snapshot_every
    counter = {"step": -1}

    def watch(st, row):
        counter["step"] += 1
        if every > 0 and counter["step"] % every == 0:
            name = os.path.join(out_dir, f"step_{counter['step']:08d}.nlc2d")
            write_snapshot(name, st, grid, cfg.manifold_kind)

    try:
        result = run(
            grid, solver_cfg, state, spec,
            bc_v=bc_v, bc_u=bc_u, callback=watch,
        )
    except _NUMERICAL_ERRORS as exc:
        steps = max(counter["step"], 0)
        raise type(exc)(
            f"{exc} (after {steps} completed steps)"
        ) from None

    csv_path = os.path.join(out_dir, "energy.csv")
    write_energy_csv(csv_path, result.rows)
    emit_plot_script("energy", csv_path, os.path.join(out_dir, "plot_energy.gp"))
    write_snapshot(
        os.path.join(out_dir, "final.nlc2d"), result.state, grid,
        cfg.manifold_kind,
    )
    last = result.rows[-1]
    _dump({
        "steps": len(result.rows) - 1,
        "t_final": last.t,
        "initial_energy": result.e0,
        "final_energy": last.total,
        "cumulative_dissipation": last.dissipation,
        "div_max": last.div_max,
        "dist_max": last.dist_max,
        "output_directory": out_dir,
    })
    return 0


# ---------------------------------------------------------------------------
# sweep

def _cmd_sweep(args) -> int:
    cfg = parse_config(args.config, args.overrides)
    if cfg.sweep is None:
        raise ConfigError("the sweep command needs a [sweep] section")
    plan = cfg.sweep_plan()
    from .experiments import run_sweep  # local: keeps CLI import light

    result = run_sweep(plan)
    out_dir = cfg.output.directory
    _ensure_dir(out_dir)

    members_out = []
    for i, member in enumerate(result.members):
        tag = f"member_{i:03d}"
        sub = os.path.join(out_dir, tag)
        _ensure_dir(sub)
        entry = {"index": i, "eps": member.eps, "nx": member.nx}
        if member.error is not None:
            entry["error"] = member.error
        else:
            write_energy_csv(os.path.join(sub, "energy.csv"), member.rows)
            write_snapshot(
                os.path.join(sub, "final.nlc2d"),
                member.final_state,
                Grid2D.unit(member.nx, cfg.domain),
                cfg.manifold_kind,
            )
            entry["t_final"] = member.rows[-1].t
            entry["final_energy"] = member.rows[-1].total
        members_out.append(entry)

    summary = {
        "members": members_out,
        "pairwise_l2": list(result.pairwise_l2),
        "penalty_l1": [
            None if isinstance(x, float) and math.isnan(x) else x
            for x in result.penalty_l1_values
        ],
    }
    if result.defects is not None:
        d = result.defects
        summary["defects"] = {
            "alpha": d.alpha, "beta": d.beta, "gamma": d.gamma,
            "eps": list(d.eps),
            "raw_alpha": list(d.raw_alpha),
            "raw_beta": list(d.raw_beta),
            "raw_gamma": list(d.raw_gamma),
        }
    _dump(summary, os.path.join(out_dir, "sweep.json"))
    _dump(summary)
    return 0


# ---------------------------------------------------------------------------
# diagnose

def _cmd_diagnose(args) -> int:
    snap = read_snapshot(args.snapshot)
    settings, eps = parse_diagnostics(args.config, args.overrides)
    grid, state = snap.grid, snap.state
    spec = mf.ManifoldSpec(snap.manifold_kind)
    profile = mf.CutoffProfile.for_spec(spec)

    report_eps = eps if eps is not None else 1.0
    energy = total_energy(grid, state.u, state.v, spec, profile, report_eps)
    out = {
        "snapshot": args.snapshot,
        "time": state.t,
        "domain": grid.domain,
        "nx": grid.nx,
        "ny": grid.ny,
        "manifold": snap.manifold_kind,
        "energy": {
            "kinetic": energy.kinetic,
            "dirichlet": energy.dirichlet,
        },
        "div_max": float(np.abs(divergence(grid, state.u)).max()),
        "dist_max": float(mf.distance(spec, state.v).max()),
    }
    if eps is not None:
        out["energy"]["penalty"] = energy.penalty
        out["energy"]["penalty_l1"] = penalty_l1(
            grid, state.v, spec, profile, eps
        )
        out["eps"] = eps

    center, radius = settings.center, settings.radius
    source = None

    def stationary_source():
        # built on demand: the tangential tension requires an on-target
        # field, which plain metadata queries must not insist on
        nonlocal source
        if source is None:
            if eps is not None:
                source = _gl_source(grid, state.v, spec, profile, eps)
            else:
                source = tension_field(grid, state.v, spec)
        return source

    if "hopf" in settings.reports:
        hf = hopf_differential(grid, state.v, tension=stationary_source())
        out["hopf"] = {
            "p": settings.p,
            "center": list(center),
            "radius": radius,
            "ball_norm": hopf_lp_norm(grid, hf.h, settings.p, center, radius),
            "dbar_residual_l1": dbar_hopf_residual(grid, hf, center, radius),
        }
    if "concentration" in settings.reports:
        conc = concentration_set(
            grid, state.v, spec, profile, report_eps,
            radius=radius, threshold=settings.delta0_sq,
        )
        ax = grid.axis()
        ii, jj = np.nonzero(conc.mask)
        out["concentration"] = {
            "radius": radius,
            "threshold": settings.delta0_sq,
            "count": conc.count,
            "points": [[ax[i], ax[j]] for i, j in zip(ii, jj)][:64],
            "peak_ball_energy": float(conc.local_energy.max()),
        }
    if "pohozaev" in settings.reports:
        rep = pohozaev_residual(
            grid, state.v, stationary_source(), spec, profile, report_eps,
            center, radius, deformation=settings.deformation,
        )
        out["pohozaev"] = {
            "deformation": settings.deformation,
            "center": list(center),
            "radius": radius,
            "residual": rep.residual,
            "boundary_gradient": rep.boundary_gradient,
            "interior_gradient": rep.interior_gradient,
            "interior_energy": rep.interior_energy,
            "boundary_energy": rep.boundary_energy,
            "source": rep.source,
        }
    if "decomposition" in settings.reports:
        dec = gl_decomposition(grid, state.v, spec)
        out["decomposition"] = {
            "zeta_max": float(np.abs(dec.zeta).max()),
            "zeta_mean": float(np.abs(dec.zeta).mean()),
        }
    _dump(out, args.out)
    if args.out is not None:
        print(args.out)
    return 0


def _gl_source(grid, v, spec, profile, eps):
    from .grid import laplacian

    return laplacian(grid, v) - mf.penalty_gradient(spec, profile, v, eps)


# ---------------------------------------------------------------------------
# compare

def _cmd_compare(args) -> int:
    a = read_snapshot(args.snapshot_a)
    b = read_snapshot(args.snapshot_b)
    if a.grid != b.grid:
        raise ConfigError(
            f"snapshots use different grids: {a.grid} vs {b.grid}"
        )
    if a.manifold_kind != b.manifold_kind:
        raise ConfigError(
            f"snapshots target different manifolds: "
            f"{a.manifold_kind} vs {b.manifold_kind}"
        )
    grid = a.grid

    def dist(fa, fb):
        diff = fa - fb
        gx, gy = gradient(grid, diff)
        h1 = math.sqrt(l2_norm(grid, gx) ** 2 + l2_norm(grid, gy) ** 2)
        return {"l2": l2_norm(grid, diff), "h1_semi": h1}

    _dump({
        "time_a": a.state.t,
        "time_b": b.state.t,
        "u": dist(a.state.u, b.state.u),
        "v": dist(a.state.v, b.state.v),
        "p": {"l2": l2_norm(grid, a.state.p - b.state.p)},
    })
    return 0


# ---------------------------------------------------------------------------
# demos

def _cmd_demo_compactness(args) -> int:
    eps_values = tuple(float(tok) for tok in args.eps.split(",") if tok.strip())
    grid = Grid2D.unit(args.nx)
    report = compactness_demo(
        grid, eps_values, stretch=args.stretch, ball_radius=args.radius,
    )
    _ensure_dir(args.out)
    csv_path = os.path.join(args.out, "defects.csv")
    write_defects_csv(csv_path, report)
    emit_plot_script("defects", csv_path, os.path.join(args.out, "plot_defects.gp"))
    emit_plot_script("hopf", csv_path, os.path.join(args.out, "plot_hopf.gp"))
    est = report.defect
    _dump({
        "eps": list(report.eps),
        "alpha": est.alpha,
        "beta": est.beta,
        "gamma": est.gamma,
        "gamma_over_bubble_quantum": est.gamma / (4.0 * math.pi),
        "hopf_lp": list(report.hopf_norms),
        "ball_gradient_sq": list(report.ball_gradient_sq),
        "ball_radius": report.ball_radius,
        "output_directory": args.out,
    })
    return 0


def _cmd_demo_biaxial(args) -> int:
    grid = Grid2D.unit(args.nx)
    scheme = GinzburgLandau(args.eps)
    dt = min(suggested_dt(grid, scheme), suggested_dt(grid, Projected()))
    cfg = SolverConfig(scheme=scheme, dt=dt, t_end=args.steps * dt)
    report = biaxial_demo(grid, cfg)
    _ensure_dir(args.out)
    write_energy_csv(
        os.path.join(args.out, "projected_energy.csv"), report.projected_rows
    )
    write_energy_csv(os.path.join(args.out, "gl_energy.csv"), report.gl_rows)
    emit_plot_script(
        "energy",
        os.path.join(args.out, "projected_energy.csv"),
        os.path.join(args.out, "plot_energy.gp"),
    )
    _dump({
        "steps": args.steps,
        "orthogonality_max": report.orthogonality_max,
        "norm_error_max": report.norm_error_max,
        "gl_penalty_max": report.gl_penalty_max,
        "gl_initial_energy": report.gl_e0,
        "output_directory": args.out,
    })
    return 0


def _cmd_validate(args) -> int:
    cfg = parse_config(args.config, args.overrides)
    sys.stdout.write(cfg.echo())
    return 0


# ---------------------------------------------------------------------------
# argument plumbing

def _add_config_args(sub, required=True):
    sub.add_argument("--config", required=required, default=None,
                     help="INI-style run configuration")
    sub.add_argument("-D", "--set", dest="overrides", action="append",
                     default=[], metavar="section.key=value",
                     help="override one configuration entry (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nlc2d",
        description="2-D nematic liquid crystal flow: runs, sweeps, reports",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("run", help="advance one configured simulation")
    _add_config_args(p)
    p.set_defaults(fn=_cmd_run)

    p = subs.add_parser("sweep", help="run a configured relaxation sweep")
    _add_config_args(p)
    p.set_defaults(fn=_cmd_sweep)

    p = subs.add_parser("validate-config", help="check a config, echo defaults")
    _add_config_args(p)
    p.set_defaults(fn=_cmd_validate)

    p = subs.add_parser("diagnose", help="report on a stored snapshot")
    p.add_argument("snapshot")
    p.add_argument("--out", default=None, help="write the JSON report here")
    _add_config_args(p, required=False)
    p.set_defaults(fn=_cmd_diagnose)

    p = subs.add_parser("compare", help="distances between two snapshots")
    p.add_argument("snapshot_a")
    p.add_argument("snapshot_b")
    p.set_defaults(fn=_cmd_compare)

    p = subs.add_parser(
        "demo-compactness",
        help="defect triple of a concentrating bubble family",
    )
    p.add_argument("--nx", type=int, default=512)
    p.add_argument("--eps", default="0.08,0.04,0.02",
                   help="comma-separated decreasing scales")
    p.add_argument("--stretch", type=float, default=1.0)
    p.add_argument("--radius", type=float, default=0.25)
    p.add_argument("--out", default="demo-compactness-out")
    p.set_defaults(fn=_cmd_demo_compactness)

    p = subs.add_parser(
        "demo-biaxial",
        help="orthonormal-frame flow under both schemes",
    )
    p.add_argument("--nx", type=int, default=64)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--eps", type=float, default=0.1,
                   help="relaxation scale of the relaxed leg")
    p.add_argument("--out", default="demo-biaxial-out")
    p.set_defaults(fn=_cmd_demo_biaxial)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except _NUMERICAL_ERRORS as exc:
        # before ValueError: the tube and convergence errors subclass it
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (BadExponent, BallTooSmall, FamilyTooShort, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
