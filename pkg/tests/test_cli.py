"""Command line surface: subcommands, exit codes, file products."""

import json
import os

import numpy as np
import pytest

from nlc2d.cli import main
from nlc2d.grid import Grid2D
from nlc2d.snapshots import read_energy_csv, read_snapshot, write_snapshot
from nlc2d.solver import State

from conftest import smooth_sphere_field


BASE = """\
[domain]
type = torus
nx = 32

[scheme]
variant = ginzburg-landau
eps = 0.2
t_end = {t_end}

[initial]
generator = {generator}

[output]
directory = {outdir}
snapshot_every = {every}
"""


def write_ini(tmp_path, name="run.ini", generator="smooth", t_end="0.0005",
              every=0, extra=""):
    outdir = tmp_path / "out"
    text = BASE.format(
        t_end=t_end, generator=generator, outdir=outdir, every=every
    ) + extra
    path = tmp_path / name
    path.write_text(text)
    return str(path), str(outdir)


def test_validate_config_echoes_resolved_values(tmp_path, capsys):
    ini, _ = write_ini(tmp_path)
    assert main(["validate-config", "--config", ini]) == 0
    echo = capsys.readouterr().out
    assert "nx = 32" in echo
    assert "cfl_safety = 0.5" in echo  # default filled in
    assert "dt = " in echo  # auto resolved to a number


def test_validated_config_actually_runs(tmp_path, capsys):
    ini, outdir = write_ini(tmp_path)
    assert main(["validate-config", "--config", ini]) == 0
    capsys.readouterr()
    assert main(["run", "--config", ini]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["steps"] >= 1
    assert os.path.exists(os.path.join(outdir, "final.nlc2d"))
    assert os.path.exists(os.path.join(outdir, "energy.csv"))
    assert os.path.exists(os.path.join(outdir, "plot_energy.gp"))


def test_run_constant_data_is_stationary(tmp_path, capsys):
    ini, outdir = write_ini(tmp_path, generator="constant")
    assert main(["run", "--config", ini]) == 0
    capsys.readouterr()
    rows = read_energy_csv(os.path.join(outdir, "energy.csv"))
    assert len(rows) >= 3
    for row in rows:
        assert row.total == pytest.approx(rows[0].total, abs=1e-12)
        assert row.kinetic == 0.0
    snap = read_snapshot(os.path.join(outdir, "final.nlc2d"))
    assert snap.state.t == pytest.approx(0.0005)
    assert np.abs(snap.state.v[..., 2] - 1.0).max() < 1e-14


def test_run_writes_periodic_snapshots(tmp_path, capsys):
    ini, outdir = write_ini(tmp_path, every=3)
    assert main(["run", "--config", ini]) == 0
    capsys.readouterr()
    assert os.path.exists(os.path.join(outdir, "step_00000000.nlc2d"))
    assert os.path.exists(os.path.join(outdir, "step_00000003.nlc2d"))


def test_overrides_change_the_resolved_config(tmp_path, capsys):
    ini, _ = write_ini(tmp_path)
    assert main(["validate-config", "--config", ini, "-D", "domain.nx=48"]) == 0
    assert "nx = 48" in capsys.readouterr().out
    # malformed override
    assert main(["validate-config", "--config", ini, "-D", "nx48"]) == 2
    # unknown key
    assert main(["validate-config", "--config", ini, "-D", "domain.mx=48"]) == 2


def test_config_errors_name_the_line(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text(
        "[domain]\ntype = torus\nnx = 32\nbogus_key = 1\n"
        "[scheme]\nvariant = projected\nt_end = 1e-4\n"
        "[initial]\ngenerator = smooth\n"
    )
    assert main(["validate-config", "--config", str(path)]) == 2
    err = capsys.readouterr().err
    assert "bogus_key" in err
    assert "line 4" in err


def test_duplicate_sections_are_input_errors(tmp_path, capsys):
    ini, _ = write_ini(tmp_path, extra="\n[domain]\nnx = 16\n")
    assert main(["validate-config", "--config", ini]) == 2
    err = capsys.readouterr().err
    assert "already exists" in err


def test_missing_required_key(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[domain]\ntype = torus\n")
    assert main(["validate-config", "--config", str(path)]) == 2
    assert "nx" in capsys.readouterr().err


def test_unstable_dt_is_an_input_error(tmp_path, capsys):
    ini, _ = write_ini(tmp_path)
    code = main(["run", "--config", ini, "-D", "scheme.dt=0.01"])
    assert code == 2
    assert "stability" in capsys.readouterr().err


def test_eps_rules_per_scheme(tmp_path, capsys):
    ini, _ = write_ini(tmp_path)
    assert main([
        "validate-config", "--config", ini,
        "-D", "scheme.variant=projected",
    ]) == 2  # projected scheme takes no eps
    capsys.readouterr()
    bad = tmp_path / "noeps.ini"
    bad.write_text(
        "[domain]\ntype = torus\nnx = 32\n"
        "[scheme]\nvariant = ginzburg-landau\nt_end = 1e-4\n"
        "[initial]\ngenerator = smooth\n"
    )
    assert main(["validate-config", "--config", str(bad)]) == 2
    assert "eps" in capsys.readouterr().err


def test_generator_domain_rules(tmp_path, capsys):
    ini, _ = write_ini(tmp_path, generator="taylor-green")
    assert main(["validate-config", "--config", ini]) == 0
    capsys.readouterr()
    assert main([
        "validate-config", "--config", ini, "-D", "domain.type=square",
    ]) == 2
    assert "taylor-green" in capsys.readouterr().err


def test_sweep_products(tmp_path, capsys):
    ini, outdir = write_ini(
        tmp_path,
        extra="\n[sweep]\neps_values = 0.3,0.2,0.14\nextrapolate_defects = true\n",
    )
    assert main(["sweep", "--config", ini]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert len(summary["members"]) == 3
    assert len(summary["pairwise_l2"]) == 2
    assert summary["defects"] is not None
    assert os.path.exists(os.path.join(outdir, "sweep.json"))
    assert os.path.exists(os.path.join(outdir, "member_000", "energy.csv"))
    assert os.path.exists(os.path.join(outdir, "member_002", "final.nlc2d"))


def test_sweep_requires_sweep_section(tmp_path, capsys):
    ini, _ = write_ini(tmp_path)
    assert main(["sweep", "--config", ini]) == 2


def make_snapshot(tmp_path, rng, name="field.nlc2d", blowup=False):
    g = Grid2D.unit(32, "torus")
    v = smooth_sphere_field(g)
    if blowup:
        v = 3.0 * v
    st = State(0.25, np.zeros((32, 32, 2)), v, np.zeros((32, 32)))
    path = str(tmp_path / name)
    write_snapshot(path, st, g, "sphere")
    return path


def test_diagnose_base_report_without_config(tmp_path, rng, capsys):
    snap = make_snapshot(tmp_path, rng)
    assert main(["diagnose", snap]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["nx"] == 32
    assert rep["manifold"] == "sphere"
    assert rep["energy"]["dirichlet"] > 0
    assert "hopf" not in rep  # detailed blocks are opt-in


def diag_ini(tmp_path, reports, extra=""):
    path = tmp_path / "diag.ini"
    path.write_text(
        "[domain]\ntype = torus\nnx = 32\n"
        "[scheme]\nvariant = ginzburg-landau\neps = 0.2\nt_end = 1e-4\n"
        "[initial]\ngenerator = smooth\n"
        f"[diagnostics]\nreports = {reports}\n{extra}"
    )
    return str(path)


def test_diagnose_full_report(tmp_path, rng, capsys):
    snap = make_snapshot(tmp_path, rng)
    ini = diag_ini(tmp_path, "hopf,concentration,pohozaev,decomposition")
    out = str(tmp_path / "report.json")
    assert main(["diagnose", snap, "--config", ini, "--out", out]) == 0
    rep = json.loads(open(out).read())
    assert rep["nx"] == 32
    assert rep["eps"] == 0.2
    for block in ("hopf", "concentration", "pohozaev", "decomposition"):
        assert block in rep
    assert np.isfinite(rep["hopf"]["ball_norm"])
    assert rep["pohozaev"]["residual"] >= 0
    assert rep["energy"]["penalty_l1"] >= 0
    assert rep["decomposition"]["zeta_max"] < 1e-12  # exactly on target


def test_diagnose_stdout_matches_out_file(tmp_path, rng, capsys):
    snap = make_snapshot(tmp_path, rng)
    assert main(["diagnose", snap]) == 0
    from_stdout = json.loads(capsys.readouterr().out)
    out = str(tmp_path / "r.json")
    assert main(["diagnose", snap, "--out", out]) == 0
    assert from_stdout == json.loads(open(out).read())


def test_diagnose_missing_snapshot(tmp_path, capsys):
    assert main(["diagnose", str(tmp_path / "none.nlc2d")]) == 2


def test_diagnose_outside_tube_is_numerical(tmp_path, rng, capsys):
    snap = make_snapshot(tmp_path, rng, blowup=True)
    # metadata alone still works on a wild field
    assert main(["diagnose", snap]) == 0
    capsys.readouterr()
    # the tube decomposition cannot, and fails as a numerical error
    ini = diag_ini(tmp_path, "decomposition")
    assert main(["diagnose", snap, "--config", ini]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_compare_self_is_zero(tmp_path, rng, capsys):
    snap = make_snapshot(tmp_path, rng)
    assert main(["compare", snap, snap]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["v"]["l2"] == 0.0
    assert rep["u"]["l2"] == 0.0
    assert rep["p"]["l2"] == 0.0


def test_compare_mismatched_grids(tmp_path, rng, capsys):
    a = make_snapshot(tmp_path, rng, "a.nlc2d")
    g = Grid2D.unit(16, "torus")
    st = State(0.0, np.zeros((16, 16, 2)), smooth_sphere_field(g), np.zeros((16, 16)))
    b = str(tmp_path / "b.nlc2d")
    write_snapshot(b, st, g, "sphere")
    assert main(["compare", a, b]) == 2


def test_demo_compactness_products(tmp_path, capsys):
    out = str(tmp_path / "demo")
    assert main([
        "demo-compactness", "--nx", "64", "--eps", "0.3,0.2,0.1",
        "--out", out,
    ]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["gamma_over_bubble_quantum"] > 0
    assert os.path.exists(os.path.join(out, "defects.csv"))
    assert os.path.exists(os.path.join(out, "plot_defects.gp"))
    assert os.path.exists(os.path.join(out, "plot_hopf.gp"))


def test_demo_biaxial_products(tmp_path, capsys):
    out = str(tmp_path / "bi")
    assert main(["demo-biaxial", "--nx", "16", "--steps", "5", "--out", out]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["orthogonality_max"] <= 1e-12
    assert os.path.exists(os.path.join(out, "projected_energy.csv"))
    assert os.path.exists(os.path.join(out, "gl_energy.csv"))


def test_unknown_subcommand_exits_via_argparse(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
