"""Target geometry for the director field.

Two targets are supported: the unit sphere in R^3 (uniaxial director) and
the set of orthonormal frame pairs {(n, m) in S^2 x S^2 : n . m = 0},
embedded in R^6 (biaxial director).  Both come with a nearest-point
projection, the distance to the target, a flattened quadratic well used
by the relaxed scheme, and the curvature term that keeps tangential
dynamics on the target.

Every operation is vectorized: an ambient vector argument may have shape
(L,) or (..., L) where L is the ambient dimension (3 or 6), and results
broadcast over the leading axes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SPHERE",
    "BIAXIAL",
    "ManifoldSpec",
    "CutoffProfile",
    "OutsideTube",
    "OffManifold",
    "project",
    "project_raw",
    "distance",
    "penalty_gradient",
    "second_fundamental_form_term",
    "tangent_project",
    "decompose",
]

SPHERE = "sphere"
BIAXIAL = "biaxial"

# Tubular-neighborhood half-widths inside which the nearest-point
# projection is guaranteed well conditioned.
_DEFAULT_DELTA = {SPHERE: 0.25, BIAXIAL: 0.1}
_AMBIENT_DIM = {SPHERE: 3, BIAXIAL: 6}

# Rank guard for the frame-pair polar factor.
_TINY = 1e-14


class OutsideTube(ValueError):
    """A point sits too far from the target for a stable projection."""


class OffManifold(ValueError):
    """An argument that must lie on the target does not."""


@dataclass(frozen=True)
class ManifoldSpec:
    """Which target to use and how wide its safe tube is.

    delta_n defaults to 0.25 for the sphere and 0.1 for frame pairs;
    projections are refused at distance >= 2 * delta_n.
    """

    kind: str = SPHERE
    delta_n: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in _AMBIENT_DIM:
            raise ValueError(f"unknown manifold kind {self.kind!r}")
        if self.delta_n is None:
            object.__setattr__(self, "delta_n", _DEFAULT_DELTA[self.kind])
        if not 0.0 < self.delta_n <= 0.5:
            raise ValueError("delta_n must lie in (0, 0.5]")

    @property
    def ambient_dim(self) -> int:
        return _AMBIENT_DIM[self.kind]


@dataclass(frozen=True)
class CutoffProfile:
    """Flattened square of the distance: chi(s) for s = dist^2.

    chi(s) = s on [0, delta^2], chi(s) = 4*delta^2 for s >= 4*delta^2, and
    a monotone C^1 cubic Hermite blend in between (endpoint values delta^2
    and 4*delta^2, endpoint slopes 1 and 0).  0 <= chi' <= 2 everywhere.
    """

    delta_n: float

    @classmethod
    def for_spec(cls, spec: ManifoldSpec) -> "CutoffProfile":
        return cls(delta_n=spec.delta_n)

    def chi(self, s):
        s = np.asarray(s, dtype=float)
        d2 = self.delta_n**2
        t = np.clip((s - d2) / (3.0 * d2), 0.0, 1.0)
        blend = d2 * (-3.0 * t**3 + 3.0 * t**2 + 3.0 * t + 1.0)
        return np.where(s <= d2, s, np.where(s >= 4.0 * d2, 4.0 * d2, blend))

    def chi_prime(self, s):
        s = np.asarray(s, dtype=float)
        d2 = self.delta_n**2
        t = np.clip((s - d2) / (3.0 * d2), 0.0, 1.0)
        blend = (1.0 - t) * (1.0 + 3.0 * t)
        return np.where(s <= d2, 1.0, np.where(s >= 4.0 * d2, 0.0, blend))


def _check_dim(spec: ManifoldSpec, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != spec.ambient_dim:
        raise ValueError(
            f"expected trailing dimension {spec.ambient_dim} for {spec.kind}, "
            f"got shape {y.shape}"
        )
    return y


def _frame_polar(y: np.ndarray):
    """Closed-form polar factor for the frame pair written as a 3x2 matrix.

    For A = [n | m] the nearest matrix with orthonormal columns is
    U = A (A^T A)^(-1/2); the 2x2 inverse square root is evaluated from
    the Cayley-Hamilton form, which vectorizes over nodes.  Returns
    (U flattened back to (..., 6), singular values (sig1, sig2)).
    """
    n = y[..., 0:3]
    m = y[..., 3:6]
    a = np.einsum("...i,...i->...", n, n)
    c = np.einsum("...i,...i->...", m, m)
    b = np.einsum("...i,...i->...", n, m)
    det = np.maximum(a * c - b * b, 0.0)
    s = np.sqrt(det)
    trace = a + c
    # Singular values of A from the eigenvalues of A^T A.  The
    # discriminant is evaluated as (a-c)^2 + 4b^2, which is exact where
    # trace^2 - 4 det would cancel catastrophically (sig1 = sig2, i.e.
    # everywhere near the target); sig2 comes from sig1 sig2 = sqrt(det)
    # for the same reason.
    disc = np.sqrt((a - c) ** 2 + 4.0 * b * b)
    sig1 = np.sqrt(np.maximum((trace + disc) / 2.0, 0.0))
    sig2 = np.divide(s, sig1, out=np.zeros_like(s), where=sig1 > 0.0)
    # (A^T A)^(1/2) = (A^T A + s I) / t with t = sqrt(trace + 2 s); its
    # inverse has determinant s.
    t = np.sqrt(np.maximum(trace + 2.0 * s, 0.0))
    denom = s * t
    bad = denom <= _TINY
    safe = np.where(bad, 1.0, denom)
    # U columns: [n m] @ [[(c+s), -b], [-b, (a+s)]] / (s t)
    un = (n * (c + s)[..., None] - m * b[..., None]) / safe[..., None]
    um = (-n * b[..., None] + m * (a + s)[..., None]) / safe[..., None]
    u = np.concatenate([un, um], axis=-1)
    return u, sig1, sig2, bad


def distance(spec: ManifoldSpec, y) -> np.ndarray:
    """Euclidean distance from ambient points to the target."""
    y = _check_dim(spec, y)
    if spec.kind == SPHERE:
        return np.abs(np.linalg.norm(y, axis=-1) - 1.0)
    _, sig1, sig2, _ = _frame_polar(y)
    return np.sqrt((sig1 - 1.0) ** 2 + (sig2 - 1.0) ** 2)


def project_raw(spec: ManifoldSpec, y) -> np.ndarray:
    """Nearest-point projection without the tube guard.

    Well defined wherever the nearest point is unique (nonzero vectors for
    the sphere, full-rank frames for the pair); degenerate nodes are left
    unchanged so callers can mask them.
    """
    y = _check_dim(spec, y)
    if spec.kind == SPHERE:
        r = np.linalg.norm(y, axis=-1)
        bad = r <= _TINY
        safe = np.where(bad, 1.0, r)
        out = y / safe[..., None]
        return np.where(bad[..., None], y, out)
    u, _, _, bad = _frame_polar(y)
    return np.where(bad[..., None], y, u)


def project(spec: ManifoldSpec, y) -> np.ndarray:
    """Nearest-point projection onto the target.

    Raises OutsideTube if any point sits at distance >= 2 * delta_n, where
    the projection is no longer trusted.
    """
    y = _check_dim(spec, y)
    d = distance(spec, y)
    if np.any(d >= 2.0 * spec.delta_n):
        worst = float(np.max(d))
        raise OutsideTube(
            f"distance {worst:.3g} exceeds the projection tube "
            f"2*delta_n = {2 * spec.delta_n:.3g}"
        )
    return project_raw(spec, y)


def penalty_gradient(spec: ManifoldSpec, profile: CutoffProfile, y, eps: float) -> np.ndarray:
    """Gradient of the relaxation well (1/eps^2) chi(dist^2).

    Equals (1/eps^2) chi'(dist^2) * grad(dist^2) with
    grad(dist^2) = 2 (y - proj(y)); identically zero at distance >= 2*delta_n
    because chi' vanishes there, so no tube guard is needed.
    """
    y = _check_dim(spec, y)
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    d = distance(spec, y)
    w = profile.chi_prime(d * d)
    out = np.zeros_like(y)
    active = w > 0.0
    if np.any(active):
        ya = y[active]
        grad = 2.0 * (ya - project_raw(spec, ya))
        out[active] = (w[active] / eps**2)[..., None] * grad
    return out


def _require_on_manifold(spec: ManifoldSpec, v: np.ndarray, tol: float = 1e-8) -> None:
    d = distance(spec, v)
    if np.any(d > tol):
        raise OffManifold(
            f"argument lies at distance up to {float(np.max(d)):.3g} from the "
            f"target (tolerance {tol:.1g})"
        )


def second_fundamental_form_term(spec: ManifoldSpec, v, gx, gy) -> np.ndarray:
    """Curvature source A(v)(gx, gx) + A(v)(gy, gy) for tangent pairs gx, gy.

    For the sphere this is (|gx|^2 + |gy|^2) v.  For frame pairs (n, m) with
    tangent derivatives gx = (nx, mx), gy = (ny, my) the n-block is
    (|nx|^2 + |ny|^2) n + (nx.mx + ny.my) m and the m-block is symmetric.
    The result is normal to the target at v.
    """
    v = _check_dim(spec, v)
    gx = _check_dim(spec, gx)
    gy = _check_dim(spec, gy)
    _require_on_manifold(spec, v)
    if spec.kind == SPHERE:
        q = np.einsum("...i,...i->...", gx, gx) + np.einsum("...i,...i->...", gy, gy)
        return q[..., None] * v
    n, m = v[..., 0:3], v[..., 3:6]
    nx, mx = gx[..., 0:3], gx[..., 3:6]
    ny, my = gy[..., 0:3], gy[..., 3:6]
    nn = np.einsum("...i,...i->...", nx, nx) + np.einsum("...i,...i->...", ny, ny)
    mm = np.einsum("...i,...i->...", mx, mx) + np.einsum("...i,...i->...", my, my)
    cross = np.einsum("...i,...i->...", nx, mx) + np.einsum("...i,...i->...", ny, my)
    block_n = nn[..., None] * n + cross[..., None] * m
    block_m = mm[..., None] * m + cross[..., None] * n
    return np.concatenate([block_n, block_m], axis=-1)


def tangent_project(spec: ManifoldSpec, v, w) -> np.ndarray:
    """Orthogonal projection of ambient vectors w onto the tangent space at v."""
    v = _check_dim(spec, v)
    w = _check_dim(spec, w)
    _require_on_manifold(spec, v)
    if spec.kind == SPHERE:
        return w - np.einsum("...i,...i->...", w, v)[..., None] * v
    n, m = v[..., 0:3], v[..., 3:6]
    # Orthonormal basis of the normal space at (n, m): (n, 0), (0, m),
    # (m, n)/sqrt(2).
    p, q = w[..., 0:3], w[..., 3:6]
    c1 = np.einsum("...i,...i->...", p, n)
    c2 = np.einsum("...i,...i->...", q, m)
    c3 = (np.einsum("...i,...i->...", p, m) + np.einsum("...i,...i->...", q, n)) / 2.0
    tp = p - c1[..., None] * n - c3[..., None] * m
    tq = q - c2[..., None] * m - c3[..., None] * n
    return np.concatenate([tp, tq], axis=-1)


def decompose(spec: ManifoldSpec, y):
    """Split ambient points as y = omega + zeta * nu inside the tube.

    omega is the nearest target point, zeta the distance, nu a unit normal
    (chosen canonically where zeta vanishes).  Returns (omega, zeta, nu).
    Raises OutsideTube at distance >= 2 * delta_n.
    """
    y = _check_dim(spec, y)
    omega = project(spec, y)  # raises OutsideTube when too far
    zeta = distance(spec, y)
    diff = y - omega
    tinyz = zeta <= _TINY
    safe = np.where(tinyz, 1.0, zeta)
    nu = diff / safe[..., None]
    if np.any(tinyz):
        # On the target the normal direction is not determined by y; pick
        # the radial normal for the sphere and (n, 0) for frame pairs.
        if spec.kind == SPHERE:
            fallback = omega
        else:
            fallback = np.concatenate(
                [omega[..., 0:3], np.zeros_like(omega[..., 3:6])], axis=-1
            )
        nu = np.where(tinyz[..., None], fallback, nu)
    return omega, zeta, nu
