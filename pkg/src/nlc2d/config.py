"""Run configuration: strict INI-style schema with typed keys.

Sections and keys are fixed; anything unrecognized is rejected with the
offending key and source line.  Every value a run needs is resolved here,
defaults included, so a config that validates cannot fail at config stage
later.  Command-line overrides use ``section.key=value`` tokens and are
applied before validation.
"""

from __future__ import annotations

import configparser
import io
import re
from dataclasses import dataclass, field

import numpy as np

from . import manifold as mf
from .grid import TORUS, SQUARE, BoundaryData, Grid2D
from .solver import (
    GinzburgLandau,
    Projected,
    SolverConfig,
    default_poisson_tol,
    suggested_dt,
)
from .experiments import BubbleSpec, SweepPlan, bubble_trace, make_bubble


class ConfigError(Exception):
    """Configuration rejected; the message names the key and line."""


# ---------------------------------------------------------------------------
# schema

_REQUIRED = object()

# section -> key -> (kind, default); _REQUIRED means the key must appear
# (possibly conditionally, see _resolve).  Kinds drive the value parsers.
_SCHEMA = {
    "domain": {
        "type": ("choice:torus,square", _REQUIRED),
        "nx": ("int", _REQUIRED),
    },
    "manifold": {
        "kind": ("choice:sphere,biaxial", "sphere"),
        "delta_n": ("float", None),
    },
    "scheme": {
        "variant": ("choice:ginzburg-landau,projected", _REQUIRED),
        "eps": ("float", None),
        "dt": ("float-or-auto", "auto"),
        "t_end": ("float", _REQUIRED),
        "cfl_safety": ("float", 0.5),
        "poisson_tol": ("float", None),
        "poisson_max_iter": ("int", 500),
    },
    "initial": {
        "generator": (
            "choice:constant,bubble,taylor-green,smooth,rotating-frame",
            _REQUIRED,
        ),
        "center_x": ("float", 0.5),
        "center_y": ("float", 0.5),
        "scale": ("float", 0.1),
        "stretch": ("float", 1.0),
        "turns": ("float", 1.0),
    },
    "diagnostics": {
        "reports": ("str", ""),
        "center_x": ("float", 0.5),
        "center_y": ("float", 0.5),
        "radius": ("float", 0.25),
        "delta0_sq": ("float", 1.0),
        "p": ("float", 1.5),
        "phi_plateau": ("float", 0.25),
        "phi_support": ("float", 0.34),
        "deformation": ("choice:radial,x0,0x", "radial"),
    },
    "output": {
        "directory": ("str", "out"),
        "snapshot_every": ("int", 0),
    },
    "sweep": {
        "eps_values": ("float-list", None),
        "nx_values": ("int-list", None),
        "extrapolate_defects": ("bool", False),
    },
}

# keys of [initial] that are only meaningful for particular generators
_GENERATOR_PARAMS = {
    "constant": set(),
    "bubble": {"center_x", "center_y", "scale", "stretch"},
    "taylor-green": set(),
    "smooth": set(),
    "rotating-frame": {"turns"},
}

_KNOWN_REPORTS = ("energy", "hopf", "concentration", "pohozaev", "decomposition")


# ---------------------------------------------------------------------------
# resolved settings

@dataclass(frozen=True)
class DiagnosticsSettings:
    reports: tuple
    center: tuple
    radius: float
    delta0_sq: float
    p: float
    phi_plateau: float
    phi_support: float
    deformation: str


@dataclass(frozen=True)
class OutputSettings:
    directory: str
    snapshot_every: int


@dataclass(frozen=True)
class SweepSettings:
    eps_values: tuple
    nx_values: tuple
    extrapolate_defects: bool


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration; construction implies validity."""

    domain: str
    nx: int
    manifold_kind: str
    delta_n: float | None
    scheme_variant: str
    eps: float | None
    dt: float
    dt_was_auto: bool
    t_end: float
    cfl_safety: float
    poisson_tol: float
    poisson_max_iter: int
    generator: str
    initial_params: dict
    diagnostics: DiagnosticsSettings
    output: OutputSettings
    sweep: SweepSettings | None

    def grid(self) -> Grid2D:
        return Grid2D.unit(self.nx, self.domain)

    def manifold(self) -> mf.ManifoldSpec:
        return mf.ManifoldSpec(self.manifold_kind, self.delta_n)

    def scheme(self):
        if self.scheme_variant == "ginzburg-landau":
            return GinzburgLandau(self.eps)
        return Projected()

    def solver(self) -> SolverConfig:
        return SolverConfig(
            scheme=self.scheme(),
            dt=self.dt,
            t_end=self.t_end,
            cfl_safety=self.cfl_safety,
            poisson_tol=self.poisson_tol,
            poisson_max_iter=self.poisson_max_iter,
        )

    def sweep_plan(self):
        if self.sweep is None:
            raise ConfigError("no [sweep] section was configured")
        return SweepPlan(
            eps_values=self.sweep.eps_values,
            nx_values=self.sweep.nx_values,
            scheme_kind=self.scheme_variant,
            domain=self.domain,
            t_end=self.t_end,
            data_factory=make_data_factory(self),
            cfl_safety=self.cfl_safety,
            manifold_kind=self.manifold_kind,
            delta_n=self.delta_n,
            extrapolate_defects=self.sweep.extrapolate_defects,
        )

    def initial_data(self, grid: Grid2D | None = None):
        """(u0, v0, bc_v, bc_u) for the configured generator."""
        if grid is None:
            grid = self.grid()
        return _build_initial(self, grid)

    def echo(self) -> str:
        """Resolved values, INI-formatted, defaults filled in."""
        out = io.StringIO()

        def sec(name, pairs):
            out.write(f"[{name}]\n")
            for k, val in pairs:
                if val is None:
                    continue
                out.write(f"{k} = {val}\n")
            out.write("\n")

        sec("domain", [("type", self.domain), ("nx", self.nx)])
        sec("manifold", [
            ("kind", self.manifold_kind),
            ("delta_n", self.delta_n if self.delta_n is not None
             else self.manifold().delta_n),
        ])
        sec("scheme", [
            ("variant", self.scheme_variant),
            ("eps", self.eps),
            ("dt", repr(self.dt) + ("  # auto" if self.dt_was_auto else "")),
            ("t_end", self.t_end),
            ("cfl_safety", self.cfl_safety),
            ("poisson_tol", repr(self.poisson_tol)),
            ("poisson_max_iter", self.poisson_max_iter),
        ])
        items = [("generator", self.generator)]
        items += sorted(self.initial_params.items())
        sec("initial", items)
        d = self.diagnostics
        sec("diagnostics", [
            ("reports", ",".join(d.reports)),
            ("center_x", d.center[0]), ("center_y", d.center[1]),
            ("radius", d.radius), ("delta0_sq", d.delta0_sq), ("p", d.p),
            ("phi_plateau", d.phi_plateau), ("phi_support", d.phi_support),
            ("deformation", d.deformation),
        ])
        sec("output", [
            ("directory", self.output.directory),
            ("snapshot_every", self.output.snapshot_every),
        ])
        if self.sweep is not None:
            sec("sweep", [
                ("eps_values", ",".join(repr(e) for e in self.sweep.eps_values)),
                ("nx_values", ",".join(str(n) for n in self.sweep.nx_values)),
                ("extrapolate_defects", self.sweep.extrapolate_defects),
            ])
        return out.getvalue().rstrip("\n") + "\n"


# ---------------------------------------------------------------------------
# parsing helpers

def _find_line(lines, section: str, key: str | None) -> str:
    """Best-effort source locator for error messages."""
    sec_re = re.compile(r"^\s*\[(?P<name>[^\]]+)\]")
    current = None
    for i, raw in enumerate(lines, start=1):
        m = sec_re.match(raw)
        if m:
            current = m.group("name").strip().lower()
            if key is None and current == section:
                return f"line {i}"
            continue
        if key is not None and current == section:
            if re.match(rf"^\s*{re.escape(key)}\s*[=:]", raw):
                return f"line {i}"
    return "command-line override"


def _parse_value(kind: str, text: str, where: str):
    text = text.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "float-or-auto":
            return "auto" if text.lower() == "auto" else float(text)
        if kind == "bool":
            low = text.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if kind == "str":
            return text
        if kind == "float-list":
            return tuple(float(tok) for tok in text.split(",") if tok.strip())
        if kind == "int-list":
            return tuple(int(tok) for tok in text.split(",") if tok.strip())
        if kind.startswith("choice:"):
            allowed = kind[len("choice:"):].split(",")
            if text not in allowed:
                raise ValueError(
                    f"must be one of {', '.join(allowed)}; got {text!r}"
                )
            return text
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise AssertionError(f"unhandled kind {kind}")


def _apply_overrides(parser: configparser.ConfigParser, overrides):
    for tok in overrides:
        m = re.fullmatch(r"([a-z]+)\.([a-z0-9_]+)=(.*)", tok.strip())
        if m is None:
            raise ConfigError(
                f"malformed override {tok!r}; expected section.key=value"
            )
        section, key, value = m.groups()
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value)


def _read_values(path: str | None, overrides) -> tuple:
    """Parse INI text plus overrides into typed per-section values."""
    text = ""
    lines: list = []
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        lines = text.splitlines()

    parser = configparser.ConfigParser(
        interpolation=None,
        delimiters=("=",),
        inline_comment_prefixes=("#", ";"),
    )
    try:
        parser.read_string(text, source=path or "<overrides>")
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    _apply_overrides(parser, overrides)

    values: dict = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            loc = _find_line(lines, section, None)
            raise ConfigError(f"{loc}: unknown section [{section}]")
        table = _SCHEMA[section]
        values[section] = {}
        for key, raw in parser.items(section):
            if key not in table:
                loc = _find_line(lines, section, key)
                raise ConfigError(
                    f"{loc}: unknown key {key!r} in [{section}]"
                )
            kind = table[key][0]
            loc = _find_line(lines, section, key)
            where = f"{loc}: [{section}] {key}"
            values[section][key] = _parse_value(kind, raw, where)
    return values, parser.has_section("sweep")


def parse_config(path: str | None, overrides=()) -> RunConfig:
    """Parse and fully resolve a config file plus overrides.

    path may be None when every required key arrives as an override."""
    values, has_sweep = _read_values(path, overrides)
    return _resolve(values, has_sweep)


def parse_diagnostics(path: str | None, overrides=()) -> tuple:
    """Resolve just the [diagnostics] block (and optionally [scheme] eps).

    Used by report-only commands that work from a snapshot instead of a
    full run configuration; path may be None.  Returns (settings, eps)."""
    values, _ = _read_values(path, overrides)
    eps = values.get("scheme", {}).get("eps")
    if eps is not None and not eps > 0:
        raise ConfigError(f"[scheme] eps must be positive, got {eps}")
    return _resolve_diagnostics(values), eps


def _get(values, section, key):
    kind, default = _SCHEMA[section][key]
    got = values.get(section, {}).get(key, default)
    if got is _REQUIRED:
        raise ConfigError(f"missing required key {key!r} in [{section}]")
    return got


def _resolve_diagnostics(values: dict) -> DiagnosticsSettings:
    reports_raw = _get(values, "diagnostics", "reports")
    reports = tuple(tok.strip() for tok in reports_raw.split(",") if tok.strip())
    for rep in reports:
        if rep not in _KNOWN_REPORTS:
            raise ConfigError(
                f"[diagnostics] reports: unknown report {rep!r}; known: "
                + ", ".join(_KNOWN_REPORTS)
            )
    p_exp = _get(values, "diagnostics", "p")
    if not 1.0 < p_exp < 2.0:
        raise ConfigError(
            f"[diagnostics] p must lie in (1, 2), got {p_exp}"
        )
    radius = _get(values, "diagnostics", "radius")
    if not radius > 0:
        raise ConfigError(f"[diagnostics] radius must be positive, got {radius}")
    return DiagnosticsSettings(
        reports=reports,
        center=(
            _get(values, "diagnostics", "center_x"),
            _get(values, "diagnostics", "center_y"),
        ),
        radius=radius,
        delta0_sq=_get(values, "diagnostics", "delta0_sq"),
        p=p_exp,
        phi_plateau=_get(values, "diagnostics", "phi_plateau"),
        phi_support=_get(values, "diagnostics", "phi_support"),
        deformation=_get(values, "diagnostics", "deformation"),
    )


def _resolve(values: dict, has_sweep: bool) -> RunConfig:
    domain = _get(values, "domain", "type")
    nx = _get(values, "domain", "nx")
    try:
        grid = Grid2D.unit(nx, domain)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"[domain] nx: {exc}") from None

    kind = _get(values, "manifold", "kind")
    delta_n = _get(values, "manifold", "delta_n")
    try:
        mf.ManifoldSpec(kind, delta_n)
    except ValueError as exc:
        raise ConfigError(f"[manifold]: {exc}") from None

    variant = _get(values, "scheme", "variant")
    eps = _get(values, "scheme", "eps")
    if variant == "ginzburg-landau":
        if eps is None:
            raise ConfigError(
                "[scheme] eps is required for variant ginzburg-landau"
            )
        if not eps > 0:
            raise ConfigError(f"[scheme] eps must be positive, got {eps}")
    elif eps is not None:
        raise ConfigError(
            "[scheme] eps is only meaningful for variant ginzburg-landau"
        )

    scheme = GinzburgLandau(eps) if variant == "ginzburg-landau" else Projected()
    cfl = _get(values, "scheme", "cfl_safety")
    dt = _get(values, "scheme", "dt")
    dt_was_auto = dt == "auto"
    if dt_was_auto:
        try:
            dt = suggested_dt(grid, scheme, cfl)
        except ValueError as exc:
            raise ConfigError(f"[scheme] cfl_safety: {exc}") from None
    t_end = _get(values, "scheme", "t_end")
    if not t_end > 0:
        raise ConfigError(f"[scheme] t_end must be positive, got {t_end}")
    tol = _get(values, "scheme", "poisson_tol")
    if tol is None:
        tol = default_poisson_tol(domain)

    try:
        solver = SolverConfig(
            scheme=scheme,
            dt=dt,
            t_end=t_end,
            cfl_safety=cfl,
            poisson_tol=tol,
            poisson_max_iter=_get(values, "scheme", "poisson_max_iter"),
        )
        solver.validate(grid)
    except ValueError as exc:
        raise ConfigError(f"[scheme]: {exc}") from None

    generator = _get(values, "initial", "generator")
    given = set(values.get("initial", {})) - {"generator"}
    stray = given - _GENERATOR_PARAMS[generator]
    if stray:
        raise ConfigError(
            f"[initial] key {sorted(stray)[0]!r} does not apply to "
            f"generator {generator!r}"
        )
    params = {
        k: _get(values, "initial", k)
        for k in sorted(_GENERATOR_PARAMS[generator])
    }
    _check_generator(generator, domain, kind, params, grid)

    diagnostics = _resolve_diagnostics(values)

    every = _get(values, "output", "snapshot_every")
    if every < 0:
        raise ConfigError(
            f"[output] snapshot_every must be >= 0, got {every}"
        )
    output = OutputSettings(
        directory=_get(values, "output", "directory"),
        snapshot_every=every,
    )

    sweep = None
    if has_sweep:
        eps_values = _get(values, "sweep", "eps_values")
        nx_values = _get(values, "sweep", "nx_values")
        if variant == "ginzburg-landau" and not eps_values:
            raise ConfigError(
                "[sweep] eps_values is required for variant ginzburg-landau"
            )
        if variant == "projected":
            if eps_values:
                raise ConfigError(
                    "[sweep] eps_values is only meaningful for "
                    "variant ginzburg-landau"
                )
            eps_values = ()
        if not nx_values:
            nx_values = (nx,)
        sweep = SweepSettings(
            eps_values=tuple(eps_values),
            nx_values=tuple(nx_values),
            extrapolate_defects=_get(values, "sweep", "extrapolate_defects"),
        )

    cfg = RunConfig(
        domain=domain,
        nx=nx,
        manifold_kind=kind,
        delta_n=delta_n,
        scheme_variant=variant,
        eps=eps,
        dt=float(dt),
        dt_was_auto=dt_was_auto,
        t_end=t_end,
        cfl_safety=cfl,
        poisson_tol=tol,
        poisson_max_iter=_get(values, "scheme", "poisson_max_iter"),
        generator=generator,
        initial_params=params,
        diagnostics=diagnostics,
        output=output,
        sweep=sweep,
    )
    if sweep is not None:
        try:
            cfg.sweep_plan()
        except ValueError as exc:
            raise ConfigError(f"[sweep]: {exc}") from None
    return cfg


# ---------------------------------------------------------------------------
# initial data generators

def _check_generator(generator, domain, manifold_kind, params, grid):
    sphere_only = ("bubble", "smooth")
    if generator in sphere_only and manifold_kind != mf.SPHERE:
        raise ConfigError(
            f"[initial] generator {generator!r} needs the sphere target"
        )
    if generator == "rotating-frame" and manifold_kind != mf.BIAXIAL:
        raise ConfigError(
            "[initial] generator 'rotating-frame' needs the biaxial target"
        )
    if generator in ("taylor-green", "smooth") and domain != TORUS:
        raise ConfigError(
            f"[initial] generator {generator!r} needs the torus "
            "(its velocity does not vanish on walls)"
        )
    if generator == "bubble":
        try:
            BubbleSpec(
                center=(params["center_x"], params["center_y"]),
                scale=params["scale"],
                stretch=params["stretch"],
            )
        except ValueError as exc:
            raise ConfigError(f"[initial]: {exc}") from None


def _constant_director(manifold_kind):
    if manifold_kind == mf.SPHERE:
        return np.array([0.0, 0.0, 1.0])
    return np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])


def _taylor_green_velocity(x, y):
    return np.stack(
        [
            np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y),
            -np.cos(2 * np.pi * x) * np.sin(2 * np.pi * y),
        ],
        axis=-1,
    )


def _smooth_director(x, y):
    th = 0.8 * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)
    ph = 2 * np.pi * (x + 0.3 * np.cos(2 * np.pi * y))
    return np.stack(
        [np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)],
        axis=-1,
    )


def _frame_director(x, y, turns):
    th = 2.0 * np.pi * turns * x
    c, s = np.cos(th), np.sin(th)
    zero = np.zeros_like(th)
    return np.stack([c, s, zero, -s, c, zero], axis=-1)


def _build_initial(cfg: RunConfig, grid: Grid2D):
    x, y = grid.meshgrid()
    u0 = np.zeros((grid.nx, grid.ny, 2))
    bc_v = None
    bc_u = None
    g = cfg.generator
    if g == "constant":
        const = _constant_director(cfg.manifold_kind)
        v0 = np.broadcast_to(const, (grid.nx, grid.ny, const.size)).copy()
        if grid.domain == SQUARE:
            bc_v = BoundaryData.constant(grid, const)
    elif g == "bubble":
        p = cfg.initial_params
        spec = BubbleSpec(
            center=(p["center_x"], p["center_y"]),
            scale=p["scale"],
            stretch=p["stretch"],
        )
        v0 = make_bubble(spec, grid)
        if grid.domain == SQUARE:
            bc_v = BoundaryData.from_function(
                grid, lambda xx, yy: bubble_trace(spec, xx, yy)
            )
    elif g == "taylor-green":
        u0 = _taylor_green_velocity(x, y)
        const = _constant_director(cfg.manifold_kind)
        v0 = np.broadcast_to(const, (grid.nx, grid.ny, const.size)).copy()
    elif g == "smooth":
        u0 = _taylor_green_velocity(x, y)
        v0 = _smooth_director(x, y)
    elif g == "rotating-frame":
        turns = cfg.initial_params["turns"]
        v0 = _frame_director(x, y, turns)
        if grid.domain == SQUARE:
            bc_v = BoundaryData.from_function(
                grid, lambda xx, yy: _frame_director(xx, yy, turns)
            )
    else:  # pragma: no cover - schema keeps this unreachable
        raise AssertionError(g)
    if grid.domain == SQUARE:
        bc_u = BoundaryData.constant(grid, np.zeros(2))
    return u0, v0, bc_v, bc_u


def make_data_factory(cfg: RunConfig):
    """Sweep-facing closure: grid -> (u0, v0, bc_v), deterministic."""

    def factory(grid: Grid2D):
        u0, v0, bc_v, _ = _build_initial(cfg, grid)
        return u0, v0, bc_v

    return factory
