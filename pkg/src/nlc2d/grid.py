"""Uniform cell-centered finite differences on the unit torus and square.

Fields live at cell centers ((i + 1/2) h, (j + 1/2) h) and are stored as
numpy arrays of shape (nx, ny) for scalars, (nx, ny, 2) for velocities,
and (nx, ny, L) for directors; the first axis is x.  Derivatives are
second-order centered, with periodic wraparound on the torus and
one-sided second-order stencils at the square's boundary.  The square's
Laplacian consumes Dirichlet traces through linear ghost values, which is
the standard cell-centered treatment (second-order accurate in solves).
Integrals use the midpoint rule; ball integrals select cells whose
centers fall inside the ball.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "TORUS",
    "SQUARE",
    "Grid2D",
    "BoundaryData",
    "gradient",
    "divergence",
    "laplacian",
    "advect",
    "integrate",
    "ball_mask",
    "l2_norm",
]

TORUS = "torus"
SQUARE = "square"


@dataclass(frozen=True)
class Grid2D:
    """Square grid on the unit domain: nx = ny cells of width h = 1/nx."""

    nx: int
    ny: int
    h: float
    domain: str

    def __post_init__(self) -> None:
        if self.domain not in (TORUS, SQUARE):
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.nx < 8 or self.ny < 8:
            raise ValueError("need at least 8 cells per direction")
        if self.nx != self.ny:
            raise ValueError("only square grids are supported")
        if abs(self.h * self.nx - 1.0) > 1e-12:
            raise ValueError("h * nx must equal 1 (unit domain)")

    @classmethod
    def unit(cls, nx: int, domain: str = TORUS) -> "Grid2D":
        return cls(nx=nx, ny=nx, h=1.0 / nx, domain=domain)

    def axis(self) -> np.ndarray:
        """Cell-center coordinates along one axis."""
        return (np.arange(self.nx) + 0.5) * self.h

    def meshgrid(self):
        """Cell-center coordinate arrays x, y of shape (nx, ny)."""
        c = self.axis()
        return np.meshgrid(c, c, indexing="ij")


@dataclass(frozen=True)
class BoundaryData:
    """Dirichlet traces on the four sides of the unit square.

    Each array holds values at the midpoints of the boundary faces:
    left/right at (0, y_j) and (1, y_j) with shape (ny, ...) matching the
    field's component shape, bottom/top at (x_i, 0) and (x_i, 1) with
    shape (nx, ...).  The torus needs no boundary data.
    """

    left: np.ndarray
    right: np.ndarray
    bottom: np.ndarray
    top: np.ndarray

    @classmethod
    def constant(cls, grid: Grid2D, value) -> "BoundaryData":
        value = np.asarray(value, dtype=float)
        side_x = np.broadcast_to(value, (grid.nx, *value.shape)).copy()
        side_y = np.broadcast_to(value, (grid.ny, *value.shape)).copy()
        return cls(left=side_y, right=side_y.copy(), bottom=side_x, top=side_x.copy())

    @classmethod
    def from_function(cls, grid: Grid2D, fn) -> "BoundaryData":
        """Sample fn(x, y) (vectorized over arrays) on the four sides."""
        c = grid.axis()
        zeros = np.zeros_like(c)
        ones = np.ones_like(c)
        return cls(
            left=np.asarray(fn(zeros, c), dtype=float),
            right=np.asarray(fn(ones, c), dtype=float),
            bottom=np.asarray(fn(c, zeros), dtype=float),
            top=np.asarray(fn(c, ones), dtype=float),
        )


def _diff(grid: Grid2D, f: np.ndarray, axis: int) -> np.ndarray:
    """Centered first derivative along an axis, one-sided at square walls."""
    h = grid.h
    if grid.domain == TORUS:
        return (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2.0 * h)
    out = np.empty_like(f)
    src = np.moveaxis(f, axis, 0)
    dst = np.moveaxis(out, axis, 0)
    dst[1:-1] = (src[2:] - src[:-2]) / (2.0 * h)
    dst[0] = (-3.0 * src[0] + 4.0 * src[1] - src[2]) / (2.0 * h)
    dst[-1] = (3.0 * src[-1] - 4.0 * src[-2] + src[-3]) / (2.0 * h)
    return out


def gradient(grid: Grid2D, f: np.ndarray):
    """Partial derivatives (df/dx, df/dy); f may carry component axes."""
    f = np.asarray(f, dtype=float)
    return _diff(grid, f, 0), _diff(grid, f, 1)


def divergence(grid: Grid2D, w: np.ndarray) -> np.ndarray:
    """Divergence of a velocity field of shape (nx, ny, 2)."""
    w = np.asarray(w, dtype=float)
    if w.shape[-1] != 2:
        raise ValueError("velocity field must have a trailing axis of size 2")
    return _diff(grid, w[..., 0], 0) + _diff(grid, w[..., 1], 1)


def laplacian(grid: Grid2D, f: np.ndarray, bc: BoundaryData | None = None) -> np.ndarray:
    """Five-point Laplacian; the square requires Dirichlet traces in bc."""
    f = np.asarray(f, dtype=float)
    h2 = grid.h * grid.h
    if grid.domain == TORUS:
        return (
            np.roll(f, -1, 0) + np.roll(f, 1, 0) + np.roll(f, -1, 1) + np.roll(f, 1, 1) - 4.0 * f
        ) / h2
    if bc is None:
        raise ValueError("the square Laplacian needs Dirichlet boundary data")
    out = np.zeros_like(f)
    out[1:-1, :] += (f[2:, :] - 2.0 * f[1:-1, :] + f[:-2, :]) / h2
    out[:, 1:-1] += (f[:, 2:] - 2.0 * f[:, 1:-1] + f[:, :-2]) / h2
    # Ghost value 2 g - f mirrors the trace g across the wall face.
    out[0, :] += (f[1, :] - 3.0 * f[0, :] + 2.0 * bc.left) / h2
    out[-1, :] += (f[-2, :] - 3.0 * f[-1, :] + 2.0 * bc.right) / h2
    out[:, 0] += (f[:, 1] - 3.0 * f[:, 0] + 2.0 * bc.bottom) / h2
    out[:, -1] += (f[:, -2] - 3.0 * f[:, -1] + 2.0 * bc.top) / h2
    return out


def advect(grid: Grid2D, u: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Transport term (u . grad) f with centered differences."""
    u = np.asarray(u, dtype=float)
    fx, fy = gradient(grid, f)
    if fx.ndim == u.ndim:  # f carries components
        return u[..., 0:1] * fx + u[..., 1:2] * fy
    return u[..., 0] * fx + u[..., 1] * fy


def ball_mask(grid: Grid2D, center, radius: float) -> np.ndarray:
    """Cells whose centers lie inside the ball (torus: wrapped metric)."""
    x, y = grid.meshgrid()
    dx = x - center[0]
    dy = y - center[1]
    if grid.domain == TORUS:
        dx = (dx + 0.5) % 1.0 - 0.5
        dy = (dy + 0.5) % 1.0 - 0.5
    return dx * dx + dy * dy < radius * radius


def integrate(grid: Grid2D, f: np.ndarray, region: np.ndarray | None = None) -> float:
    """Midpoint-rule integral of a scalar field, optionally over a mask."""
    f = np.asarray(f, dtype=float)
    if region is None:
        return float(f.sum() * grid.h * grid.h)
    return float(f[region].sum() * grid.h * grid.h)


def l2_norm(grid: Grid2D, f: np.ndarray) -> float:
    """L^2 norm over the whole domain, components summed."""
    f = np.asarray(f, dtype=float)
    if f.ndim > 2:
        mag2 = np.sum(f * f, axis=-1)
    else:
        mag2 = f * f
    return float(np.sqrt(mag2.sum() * grid.h * grid.h))
