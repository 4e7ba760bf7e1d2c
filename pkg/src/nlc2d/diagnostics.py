"""Measurements on flow states: energies, stresses, the Hopf field,
concentration detection, the scaling (Pohozaev) balance, and defect
extrapolation across a relaxation family.

Conventions.  The energy density is e = |u|^2/2 + |grad v|^2/2 +
(1/eps^2) chi(dist^2).  The Ericksen stress is sigma_ij = d_i v . d_j v;
its trace-free part has entries (|v_x|^2 - |v_y|^2)/2 and <v_x, v_y>.
The Hopf field is H = (|v_x|^2 - |v_y|^2) + 2i <v_x, v_y>, whose complex
conjugate satisfies dbar(conj H) = 2 g . dv/dz for any tension g equal to
the Laplacian up to normal directions; the residual below measures that
identity.  Ball integrals select cells by center inclusion, so boundary
terms on circles are evaluated by trapezoid quadrature with bilinear
interpolation instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from . import manifold as mf
from .grid import (
    SQUARE,
    TORUS,
    BoundaryData,
    Grid2D,
    ball_mask,
    gradient,
    integrate,
    laplacian,
)

__all__ = [
    "BadExponent",
    "BallTooSmall",
    "FamilyTooShort",
    "EnergyReport",
    "StressField",
    "HopfField",
    "ConcentrationReport",
    "PohozaevReport",
    "DefectEstimate",
    "GLDecomposition",
    "total_energy",
    "ericksen_stress",
    "stress_divergence",
    "tension_field",
    "hopf_differential",
    "hopf_lp_norm",
    "dbar_hopf_residual",
    "concentration_set",
    "pohozaev_residual",
    "defect_measures",
    "penalty_l1",
    "gl_decomposition",
    "degree_integral",
]


class BadExponent(ValueError):
    """Lebesgue exponent outside the valid open range (1, 2)."""


class BallTooSmall(ValueError):
    """Ball radius too small for the grid spacing."""


class FamilyTooShort(ValueError):
    """Defect extrapolation needs at least three family members."""


# ---------------------------------------------------------------------------
# energy


@dataclass
class EnergyReport:
    """Energy ledger entry.

    kinetic, dirichlet and penalty are the instantaneous integrals of
    |u|^2/2, |grad v|^2/2 and (1/eps^2) chi(dist^2).  The solver loop fills
    cumulative_dissipation with the time integral of |grad u|^2/2 +
    |D_t v|^2/2 (discrete material derivative, same half weights as the
    energies), e0 with the initial total, and lambda1 with the running
    maximum of the director part.
    """

    kinetic: float
    dirichlet: float
    penalty: float
    cumulative_dissipation: float = 0.0
    e0: float = math.nan
    lambda1: float = math.nan

    @property
    def total(self) -> float:
        return self.kinetic + self.dirichlet + self.penalty

    def balance_slack(self) -> float:
        """Signed slack of the dissipation inequality, relative to e0.

        The ledger reads total + 2*cumulative_dissipation <= e0, where the
        dissipation rate carries the same half weights as the energy
        densities; nonpositive slack satisfies the inequality.
        """
        return (self.total + 2.0 * self.cumulative_dissipation - self.e0) / self.e0


def total_energy(
    grid: Grid2D,
    u: np.ndarray,
    v: np.ndarray,
    spec: mf.ManifoldSpec,
    profile: mf.CutoffProfile,
    eps: float,
) -> EnergyReport:
    """Midpoint-rule energies of a state; penalty vanishes on the target."""
    kinetic = 0.5 * integrate(grid, np.sum(u * u, axis=-1))
    vx, vy = gradient(grid, v)
    dirichlet = 0.5 * integrate(grid, np.sum(vx * vx + vy * vy, axis=-1))
    d = mf.distance(spec, v)
    penalty = integrate(grid, profile.chi(d * d)) / eps**2
    return EnergyReport(kinetic=kinetic, dirichlet=dirichlet, penalty=penalty)


def penalty_l1(
    grid: Grid2D,
    v: np.ndarray,
    spec: mf.ManifoldSpec,
    profile: mf.CutoffProfile,
    eps: float,
    region: np.ndarray | None = None,
) -> float:
    """Integral of the relaxation well (1/eps^2) chi(dist^2)."""
    d = mf.distance(spec, v)
    return integrate(grid, profile.chi(d * d), region) / eps**2


# ---------------------------------------------------------------------------
# stress


@dataclass
class StressField:
    """Elastic stress sigma_ij = d_i v . d_j v and its trace-free part."""

    sigma: np.ndarray  # (nx, ny, 2, 2)
    trace_free: np.ndarray  # (nx, ny, 2, 2)


def ericksen_stress(grid: Grid2D, v: np.ndarray) -> StressField:
    vx, vy = gradient(grid, v)
    s11 = np.sum(vx * vx, axis=-1)
    s12 = np.sum(vx * vy, axis=-1)
    s22 = np.sum(vy * vy, axis=-1)
    sigma = np.empty(v.shape[:2] + (2, 2))
    sigma[..., 0, 0] = s11
    sigma[..., 0, 1] = s12
    sigma[..., 1, 0] = s12
    sigma[..., 1, 1] = s22
    trace_free = sigma.copy()
    half_trace = 0.5 * (s11 + s22)
    trace_free[..., 0, 0] -= half_trace
    trace_free[..., 1, 1] -= half_trace
    return StressField(sigma=sigma, trace_free=trace_free)


def stress_divergence(grid: Grid2D, v: np.ndarray) -> np.ndarray:
    """Row divergence of the elastic stress, as a force on the velocity."""
    vx, vy = gradient(grid, v)
    s11 = np.sum(vx * vx, axis=-1)
    s12 = np.sum(vx * vy, axis=-1)
    s22 = np.sum(vy * vy, axis=-1)
    fx = gradient(grid, s11)[0] + gradient(grid, s12)[1]
    fy = gradient(grid, s12)[0] + gradient(grid, s22)[1]
    return np.stack([fx, fy], axis=-1)


# ---------------------------------------------------------------------------
# Hopf field


@dataclass
class HopfField:
    """Complex Hopf combination of the director gradient, with source.

    h = (|v_x|^2 - |v_y|^2) + 2i <v_x, v_y>; g = 2 (tension . dv/dz) when a
    tension field was supplied, else None.
    """

    h: np.ndarray
    g: np.ndarray | None = None


def tension_field(
    grid: Grid2D,
    v: np.ndarray,
    spec: mf.ManifoldSpec,
    bc: BoundaryData | None = None,
) -> np.ndarray:
    """Tangential tension Delta v + A(v)(grad v, grad v) for on-target v."""
    vx, vy = gradient(grid, v)
    return laplacian(grid, v, bc) + mf.second_fundamental_form_term(spec, v, vx, vy)


def hopf_differential(
    grid: Grid2D, v: np.ndarray, tension: np.ndarray | None = None
) -> HopfField:
    vx, vy = gradient(grid, v)
    h = (
        np.sum(vx * vx, axis=-1)
        - np.sum(vy * vy, axis=-1)
        + 2.0j * np.sum(vx * vy, axis=-1)
    )
    g = None
    if tension is not None:
        # 2 g . dv/dz with dv/dz = (v_x - i v_y)/2
        g = np.sum(tension * vx, axis=-1) - 1.0j * np.sum(tension * vy, axis=-1)
    return HopfField(h=h, g=g)


def hopf_lp_norm(
    grid: Grid2D, h: np.ndarray, p: float, center, radius: float
) -> float:
    """L^p norm of the Hopf field over a ball; only 1 < p < 2 is meaningful."""
    if not 1.0 < p < 2.0:
        raise BadExponent(f"exponent must satisfy 1 < p < 2, got {p}")
    mask = ball_mask(grid, center, radius)
    return integrate(grid, np.abs(h) ** p, mask) ** (1.0 / p)


def dbar_hopf_residual(grid: Grid2D, hopf: HopfField, center, radius: float) -> float:
    """L^1 ball norm of dbar(conj h) - g, the first-order Hopf identity.

    Uses centered differences; dbar(conj h) is evaluated as the conjugate
    of dz(h) with dz = (d_x - i d_y)/2.
    """
    if hopf.g is None:
        raise ValueError("the Hopf field was built without a tension source")
    # differentiate the real and imaginary parts separately: the gradient
    # helper owns real fields only
    rx, ry = gradient(grid, np.real(hopf.h))
    ix, iy = gradient(grid, np.imag(hopf.h))
    hx = rx + 1.0j * ix
    hy = ry + 1.0j * iy
    dz_h = 0.5 * (hx - 1.0j * hy)
    resid = np.conj(dz_h) - hopf.g
    mask = ball_mask(grid, center, radius)
    return integrate(grid, np.abs(resid), mask)


# ---------------------------------------------------------------------------
# concentration


@dataclass
class ConcentrationReport:
    """Nodes whose r-ball energy exceeds the threshold."""

    local_energy: np.ndarray
    mask: np.ndarray
    radius: float
    threshold: float

    @property
    def count(self) -> int:
        return int(self.mask.sum())


def _energy_density(grid, u, v, spec, profile, eps):
    vx, vy = gradient(grid, v)
    e = 0.5 * np.sum(vx * vx + vy * vy, axis=-1)
    d = mf.distance(spec, v)
    e = e + profile.chi(d * d) / eps**2
    if u is not None:
        e = e + 0.5 * np.sum(u * u, axis=-1)
    return e


def concentration_set(
    grid: Grid2D,
    v: np.ndarray,
    spec: mf.ManifoldSpec,
    profile: mf.CutoffProfile,
    eps: float,
    radius: float,
    threshold: float = 1.0,
) -> ConcentrationReport:
    """Flag nodes x with int_{B_r(x)} (|grad v|^2/2 + well) > threshold.

    The local ball sums are evaluated for every node at once by convolving
    the energy density with the ball indicator (circular on the torus,
    zero-padded on the square).  threshold plays the role of the squared
    concentration scale delta_0^2 and defaults to 1.
    """
    if radius < 2.0 * grid.h:
        raise BallTooSmall(f"radius {radius} is below 2h = {2 * grid.h}")
    e = _energy_density(grid, None, v, spec, profile, eps)
    h = grid.h
    if grid.domain == TORUS:
        d = np.arange(grid.nx)
        d = np.minimum(d, grid.nx - d) * h
        kernel = (d[:, None] ** 2 + d[None, :] ** 2) < radius * radius
        local = np.fft.irfft2(
            np.fft.rfft2(e) * np.fft.rfft2(kernel.astype(float)), s=e.shape
        )
    else:
        m = int(math.ceil(radius / h)) + 1
        d = np.arange(-m, m + 1) * h
        kernel = ((d[:, None] ** 2 + d[None, :] ** 2) < radius * radius).astype(float)
        local = fftconvolve(e, kernel, mode="same")
    local = local * h * h
    return ConcentrationReport(
        local_energy=local, mask=local > threshold, radius=radius, threshold=threshold
    )


# ---------------------------------------------------------------------------
# scaling balance on balls


@dataclass
class PohozaevReport:
    """Terms of the scaling identity for a chosen deformation field X."""

    boundary_gradient: float
    interior_gradient: float
    interior_energy: float
    boundary_energy: float
    source: float

    @property
    def residual(self) -> float:
        lhs = (
            self.boundary_gradient
            - self.interior_gradient
            + self.interior_energy
            - self.boundary_energy
        )
        return abs(lhs - self.source)


def _bilinear(grid: Grid2D, f: np.ndarray, px: np.ndarray, py: np.ndarray):
    """Bilinear interpolation of node data at arbitrary points."""
    a = px / grid.h - 0.5
    b = py / grid.h - 0.5
    i0 = np.floor(a).astype(int)
    j0 = np.floor(b).astype(int)
    wa = (a - i0)[..., None] if f.ndim == 3 else a - i0
    wb = (b - j0)[..., None] if f.ndim == 3 else b - j0
    if grid.domain == TORUS:
        i0m, i1m = i0 % grid.nx, (i0 + 1) % grid.nx
        j0m, j1m = j0 % grid.ny, (j0 + 1) % grid.ny
    else:
        i0m = np.clip(i0, 0, grid.nx - 1)
        i1m = np.clip(i0 + 1, 0, grid.nx - 1)
        j0m = np.clip(j0, 0, grid.ny - 1)
        j1m = np.clip(j0 + 1, 0, grid.ny - 1)
    f00 = f[i0m, j0m]
    f10 = f[i1m, j0m]
    f01 = f[i0m, j1m]
    f11 = f[i1m, j1m]
    return (
        f00 * (1 - wa) * (1 - wb)
        + f10 * wa * (1 - wb)
        + f01 * (1 - wa) * wb
        + f11 * wa * wb
    )


_DEFORMATIONS = ("radial", "x0", "0x")


def pohozaev_residual(
    grid: Grid2D,
    v: np.ndarray,
    g: np.ndarray,
    spec: mf.ManifoldSpec,
    profile: mf.CutoffProfile,
    eps: float,
    center,
    radius: float,
    deformation: str = "radial",
) -> PohozaevReport:
    """Scaling balance on B_radius(center) for the equation Delta v - well' = g.

    deformation selects X: "radial" for X = (xi, eta) (coordinates relative
    to the center), "x0" for X = (xi, 0), "0x" for X = (0, xi).  The
    boundary integrals use trapezoid quadrature on the circle with
    bilinearly interpolated gradients; interior integrals use cell-center
    inclusion.  The report's residual converges at the discretization rate
    for stationary fields.
    """
    if deformation not in _DEFORMATIONS:
        raise ValueError(f"deformation must be one of {_DEFORMATIONS}")
    if radius < 4.0 * grid.h:
        raise BallTooSmall(f"radius {radius} is below 4h = {4 * grid.h}")
    if grid.domain == SQUARE:
        margin = min(center[0], center[1], 1.0 - center[0], 1.0 - center[1])
        if radius > margin - 2.0 * grid.h:
            raise BallTooSmall("circle leaves the domain interior")

    vx, vy = gradient(grid, v)
    e = _energy_density(grid, None, v, spec, profile, eps)

    x, y = grid.meshgrid()
    xi = x - center[0]
    eta = y - center[1]
    if grid.domain == TORUS:
        xi = (xi + 0.5) % 1.0 - 0.5
        eta = (eta + 0.5) % 1.0 - 0.5
    mask = xi * xi + eta * eta < radius * radius

    h2 = grid.h * grid.h
    if deformation == "radial":
        interior_gradient = float(
            np.sum((vx * vx + vy * vy).sum(-1)[mask]) * h2
        )
        interior_energy = 2.0 * float(np.sum(e[mask]) * h2)
        xdv = xi[..., None] * vx + eta[..., None] * vy
    elif deformation == "x0":
        interior_gradient = float(np.sum((vx * vx).sum(-1)[mask]) * h2)
        interior_energy = float(np.sum(e[mask]) * h2)
        xdv = xi[..., None] * vx
    else:  # "0x"
        interior_gradient = float(np.sum((vx * vy).sum(-1)[mask]) * h2)
        interior_energy = 0.0
        xdv = xi[..., None] * vy
    source = float(np.sum((xdv * g).sum(-1)[mask]) * h2)

    # circle quadrature
    ntheta = max(64, int(math.ceil(8.0 * radius / grid.h)))
    theta = (np.arange(ntheta) + 0.5) * (2.0 * np.pi / ntheta)
    cx, sx = np.cos(theta), np.sin(theta)
    px = center[0] + radius * cx
    py = center[1] + radius * sx
    if grid.domain == TORUS:
        px = px % 1.0
        py = py % 1.0
    vx_b = _bilinear(grid, vx, px, py)
    vy_b = _bilinear(grid, vy, px, py)
    e_b = _bilinear(grid, e, px, py)
    normal_dv = cx[:, None] * vx_b + sx[:, None] * vy_b
    if deformation == "radial":
        xdv_b = radius * normal_dv
        xdotn = radius * np.ones(ntheta)
    elif deformation == "x0":
        xdv_b = (radius * cx)[:, None] * vx_b
        xdotn = radius * cx * cx
    else:
        xdv_b = (radius * cx)[:, None] * vy_b
        xdotn = radius * cx * sx
    darc = 2.0 * np.pi * radius / ntheta
    boundary_gradient = float(np.sum(xdv_b * normal_dv) * darc)
    boundary_energy = float(np.sum(e_b * xdotn) * darc)

    return PohozaevReport(
        boundary_gradient=boundary_gradient,
        interior_gradient=interior_gradient,
        interior_energy=interior_energy,
        boundary_energy=boundary_energy,
        source=source,
    )


# ---------------------------------------------------------------------------
# defect measures


@dataclass
class DefectEstimate:
    """Extrapolated defect triple and the raw per-member sequences."""

    alpha: float
    beta: float
    gamma: float
    eps: list = field(default_factory=list)
    raw_alpha: list = field(default_factory=list)
    raw_beta: list = field(default_factory=list)
    raw_gamma: list = field(default_factory=list)


def _linear_extrapolate(eps: np.ndarray, values: np.ndarray) -> float:
    """Least-squares linear fit in eps over the last three members, at 0."""
    A = np.stack([np.ones_like(eps), eps], axis=1)
    coef, *_ = np.linalg.lstsq(A, values, rcond=None)
    return float(coef[0])


def defect_measures(
    grid: Grid2D,
    members,
    phi: np.ndarray,
    reference: np.ndarray,
    spec: mf.ManifoldSpec,
    profile: mf.CutoffProfile,
) -> DefectEstimate:
    """Defect triple (alpha, beta, gamma) of a concentrating family.

    members is a sequence of (v, eps) with eps strictly decreasing; phi is
    a scalar test-function array on the grid; reference is the limit
    director field.  alpha and beta track the trace-free stress against
    the reference, gamma the energy excess; each raw sequence is
    extrapolated to eps = 0 by a linear Richardson fit over the last three
    members.
    """
    if len(members) < 3:
        raise FamilyTooShort("need at least three family members")
    eps_list = [float(e) for _, e in members]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps values must be strictly decreasing")

    def stress_parts(v, eps):
        vx, vy = gradient(grid, v)
        a = np.sum(vx * vx, axis=-1) - np.sum(vy * vy, axis=-1)
        b = np.sum(vx * vy, axis=-1)
        d = mf.distance(spec, v)
        e = 0.5 * np.sum(vx * vx + vy * vy, axis=-1) + profile.chi(d * d) / eps**2
        return (
            integrate(grid, a * phi),
            integrate(grid, b * phi),
            integrate(grid, e * phi),
        )

    # reference contributes no penalty term in the limit
    rvx, rvy = gradient(grid, reference)
    ref_a = integrate(
        grid, (np.sum(rvx * rvx, -1) - np.sum(rvy * rvy, -1)) * phi
    )
    ref_b = integrate(grid, np.sum(rvx * rvy, -1) * phi)
    ref_e = integrate(grid, 0.5 * np.sum(rvx * rvx + rvy * rvy, -1) * phi)

    raw_a, raw_b, raw_g = [], [], []
    for v, eps in members:
        a, b, e = stress_parts(v, eps)
        raw_a.append(a - ref_a)
        raw_b.append(b - ref_b)
        raw_g.append(e - ref_e)

    tail = np.asarray(eps_list[-3:])
    alpha = _linear_extrapolate(tail, np.asarray(raw_a[-3:]))
    beta = _linear_extrapolate(tail, np.asarray(raw_b[-3:]))
    gamma = _linear_extrapolate(tail, np.asarray(raw_g[-3:]))
    return DefectEstimate(
        alpha=alpha,
        beta=beta,
        gamma=gamma,
        eps=eps_list,
        raw_alpha=raw_a,
        raw_beta=raw_b,
        raw_gamma=raw_g,
    )


# ---------------------------------------------------------------------------
# tube decomposition and degree


@dataclass
class GLDecomposition:
    """Tube split v = omega + zeta * nu of a relaxed director field."""

    omega: np.ndarray
    zeta: np.ndarray
    nu: np.ndarray


def gl_decomposition(grid: Grid2D, v: np.ndarray, spec: mf.ManifoldSpec) -> GLDecomposition:
    """Split v into target part, distance and unit normal.

    Raises OutsideTube naming the offending node count if any node sits at
    distance >= 2 * delta_n.
    """
    d = mf.distance(spec, v)
    outside = d >= 2.0 * spec.delta_n
    if np.any(outside):
        idx = np.argwhere(outside)
        raise mf.OutsideTube(
            f"{int(outside.sum())} nodes outside the projection tube, "
            f"first at index {tuple(int(k) for k in idx[0])}, "
            f"max distance {float(d.max()):.3g}"
        )
    omega, zeta, nu = mf.decompose(spec, v)
    return GLDecomposition(omega=omega, zeta=zeta, nu=nu)


def degree_integral(grid: Grid2D, v: np.ndarray, region: np.ndarray | None = None) -> float:
    """Topological charge (1/4pi) int v . (v_x x v_y) for sphere fields."""
    if v.shape[-1] != 3:
        raise ValueError("degree integral requires a sphere-valued field")
    vx, vy = gradient(grid, v)
    jac = np.sum(v * np.cross(vx, vy), axis=-1)
    return integrate(grid, jac, region) / (4.0 * np.pi)
