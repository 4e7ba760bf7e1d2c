"""On-disk formats: binary field snapshots, energy CSV, plot scripts.

Snapshot layout (64-byte header, then payload):

    offset  size  field
    0       6     magic b"NLC2D\\0"
    6       4     format version, u32 little-endian (currently 1)
    10      4     nx, u32
    14      4     ny, u32
    18      4     director component count, u32 (3 sphere, 6 biaxial)
    22      1     domain, u8 (0 torus, 1 square)
    23      8     time, f64
    31      1     manifold kind, u8 (0 sphere, 1 biaxial)
    32      32    zero padding
    64      -     payload: u then v then p, row-major, node-major,
                  component-minor, f64 little-endian

Everything is 64-bit floats, uncompressed, so round trips are bitwise
and regression baselines can be compared exactly.
"""

from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass

import numpy as np

from . import manifold as mf
from .grid import TORUS, SQUARE, Grid2D
from .solver import LedgerRow, State

log = logging.getLogger(__name__)

MAGIC = b"NLC2D\x00"
VERSION = 1
HEADER_SIZE = 64
_HEADER_FMT = "<6sIIIIBdB"

_DOMAIN_CODE = {TORUS: 0, SQUARE: 1}
_DOMAIN_NAME = {code: name for name, code in _DOMAIN_CODE.items()}
_MANIFOLD_CODE = {mf.SPHERE: 0, mf.BIAXIAL: 1}
_MANIFOLD_NAME = {code: name for name, code in _MANIFOLD_CODE.items()}
_COMPONENTS = {mf.SPHERE: 3, mf.BIAXIAL: 6}


class IoError(Exception):
    """Underlying read or write failed."""


class BadMagic(Exception):
    """The file does not start with the snapshot magic."""


class VersionMismatch(Exception):
    """The snapshot format version is not the one this code writes."""


class CorruptPayload(Exception):
    """Header fields or payload length are inconsistent."""


@dataclass
class Snapshot:
    """A field state with enough context to rebuild its grid."""

    grid: Grid2D
    manifold_kind: str
    state: State


def write_snapshot(path: str, state: State, grid: Grid2D, manifold_kind: str) -> None:
    """Serialize a state bit-exactly; overwrites an existing file."""
    if manifold_kind not in _MANIFOLD_CODE:
        raise ValueError(f"unknown manifold kind {manifold_kind!r}")
    ncomp = _COMPONENTS[manifold_kind]
    if state.u.shape != (grid.nx, grid.ny, 2):
        raise ValueError(f"velocity shape {state.u.shape} does not match grid")
    if state.v.shape != (grid.nx, grid.ny, ncomp):
        raise ValueError(
            f"director shape {state.v.shape} does not match grid and target"
        )
    if state.p.shape != (grid.nx, grid.ny):
        raise ValueError(f"pressure shape {state.p.shape} does not match grid")

    header = struct.pack(
        _HEADER_FMT,
        MAGIC,
        VERSION,
        grid.nx,
        grid.ny,
        ncomp,
        _DOMAIN_CODE[grid.domain],
        state.t,
        _MANIFOLD_CODE[manifold_kind],
    )
    header += b"\x00" * (HEADER_SIZE - len(header))
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(state.u, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(state.v, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(state.p, dtype="<f8").tobytes())
    except OSError as exc:
        raise IoError(f"cannot write snapshot {path}: {exc}") from None


def read_snapshot(path: str) -> Snapshot:
    """Read a snapshot written by write_snapshot; bitwise inverse."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read snapshot {path}: {exc}") from None

    if len(blob) < HEADER_SIZE:
        if not blob.startswith(MAGIC[: len(blob)]) or len(blob) < len(MAGIC):
            raise BadMagic(f"{path}: not a field snapshot")
        raise CorruptPayload(f"{path}: truncated header ({len(blob)} bytes)")
    if blob[: len(MAGIC)] != MAGIC:
        raise BadMagic(f"{path}: not a field snapshot")

    fields = struct.unpack_from(_HEADER_FMT, blob)
    _, version, nx, ny, ncomp, domain_code, t, manifold_code = fields
    if version != VERSION:
        raise VersionMismatch(
            f"{path}: format version {version}, this build reads {VERSION}"
        )
    if domain_code not in _DOMAIN_NAME:
        raise CorruptPayload(f"{path}: invalid domain code {domain_code}")
    if manifold_code not in _MANIFOLD_NAME:
        raise CorruptPayload(f"{path}: invalid manifold code {manifold_code}")
    manifold_kind = _MANIFOLD_NAME[manifold_code]
    if ncomp != _COMPONENTS[manifold_kind]:
        raise CorruptPayload(
            f"{path}: component count {ncomp} contradicts the "
            f"{manifold_kind} target"
        )
    try:
        grid = Grid2D.unit(nx, _DOMAIN_NAME[domain_code])
        if ny != nx:
            raise ValueError("grids are square")
    except (ValueError, ZeroDivisionError) as exc:
        raise CorruptPayload(f"{path}: bad grid header ({exc})") from None

    expected = HEADER_SIZE + nx * ny * (2 + ncomp + 1) * 8
    if len(blob) != expected:
        raise CorruptPayload(
            f"{path}: payload is {len(blob)} bytes, expected {expected}"
        )

    flat = np.frombuffer(blob, dtype="<f8", offset=HEADER_SIZE)
    n_u = nx * ny * 2
    n_v = nx * ny * ncomp
    u = flat[:n_u].reshape(nx, ny, 2).astype(float)
    v = flat[n_u : n_u + n_v].reshape(nx, ny, ncomp).astype(float)
    p = flat[n_u + n_v :].reshape(nx, ny).astype(float)
    return Snapshot(grid=grid, manifold_kind=manifold_kind, state=State(t, u, v, p))


# ---------------------------------------------------------------------------
# energy ledger CSV

CSV_COLUMNS = (
    "t",
    "kinetic",
    "dirichlet",
    "penalty",
    "dissipation",
    "total",
    "div_max",
    "dist_max",
)


def write_energy_csv(path: str, rows) -> None:
    """Fixed-order ledger columns; %.17g preserves every f64 exactly."""
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for row in rows:
                fh.write(
                    ",".join(
                        "%.17g" % getattr(row, col) for col in CSV_COLUMNS
                    )
                    + "\n"
                )
    except OSError as exc:
        raise IoError(f"cannot write ledger {path}: {exc}") from None


def read_energy_csv(path: str) -> list:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [line.strip() for line in fh if line.strip()]
    except OSError as exc:
        raise IoError(f"cannot read ledger {path}: {exc}") from None
    if not lines or lines[0] != ",".join(CSV_COLUMNS):
        raise CorruptPayload(f"{path}: unexpected ledger header")
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != len(CSV_COLUMNS):
            raise CorruptPayload(f"{path}: ragged ledger row {line!r}")
        rows.append(LedgerRow(*(float(tok) for tok in parts)))
    return rows


def write_defects_csv(path: str, report) -> None:
    """Per-member defect sequences of a concentrating family."""
    est = report.defect
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("eps,alpha,beta,gamma,hopf_lp,ball_gradient_sq\n")
            for i, e in enumerate(report.eps):
                fh.write(
                    "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n"
                    % (
                        e,
                        est.raw_alpha[i],
                        est.raw_beta[i],
                        est.raw_gamma[i],
                        report.hopf_norms[i],
                        report.ball_gradient_sq[i],
                    )
                )
    except OSError as exc:
        raise IoError(f"cannot write defect table {path}: {exc}") from None


# ---------------------------------------------------------------------------
# plot scripts (gnuplot text; emitted, never executed)

_PLOT_HEADER = """\
# gnuplot script, written by the nlc2d command-line tool
set datafile separator ','
set key autotitle columnhead
set grid
"""

_PLOT_BODIES = {
    "energy": """\
set xlabel 'time'
set ylabel 'energy'
set title 'energy ledger'
plot '{csv}' using 1:6 with lines title 'total', \\
     '{csv}' using 1:5 with lines title 'cumulative dissipation'
""",
    "defects": """\
# nonpositive defect entries are dropped by the log axes
set logscale xy
set xlabel 'relaxation scale'
set ylabel 'defect mass'
set title 'defect triple across the family'
plot '{csv}' using 1:(abs($2)) with linespoints title '|alpha|', \\
     '{csv}' using 1:(abs($3)) with linespoints title '|beta|', \\
     '{csv}' using 1:4 with linespoints title 'gamma'
""",
    "hopf": """\
set logscale x
set xlabel 'relaxation scale'
set ylabel 'Hopf L^p norm on the ball'
set title 'trace-free stress across the family'
plot '{csv}' using 1:5 with linespoints title 'hopf_lp', \\
     '{csv}' using 1:6 with linespoints title 'ball gradient mass'
""",
}

PLOT_KINDS = tuple(sorted(_PLOT_BODIES))


def emit_plot_script(kind: str, csv_path: str, out_path: str) -> str:
    """Write a self-contained plot script referencing csv_path.

    A missing CSV only logs a warning; the script is still written so it
    can be produced before the data."""
    if kind not in _PLOT_BODIES:
        raise ValueError(f"unknown plot kind {kind!r}; known: {PLOT_KINDS}")
    if not os.path.exists(csv_path):
        log.warning("plot script %s references missing data %s", out_path, csv_path)
    text = _PLOT_HEADER + _PLOT_BODIES[kind].format(csv=csv_path)
    try:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write plot script {out_path}: {exc}") from None
    return out_path
