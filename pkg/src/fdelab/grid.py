"""Uniform 1D grids for the interval and the radially reduced ball.

The discrete Dirichlet Laplacian is kept in a symmetric tridiagonal "weighted"
form: the matrix A with entries A[i,j] = quad_weights[i] * (-lap)[i,j] is
symmetric positive definite for both geometries.  For the interval this is the
standard 3-point stencil; for a radial ball the operator is the finite-volume
discretization of r^(1-N) (r^(N-1) u')' with a zero-flux face at r = 0, which
keeps exact symmetry under the shell-volume quadrature weights and is exact on
quadratics in r.

All integrals in the package are realized by `integrate` (node values times
quadrature weights) and all Dirichlet energies by `dirichlet_energy`, so the
energy identities and eigen-identities of the other modules hold at the
discrete level up to solver tolerances, not just up to O(h^2).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma, pi

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded


class GridError(ValueError):
    """Invalid domain specification or mismatched field length."""


@dataclass(frozen=True)
class DomainSpec:
    """Domain geometry: 'interval' of given length, or 'ball' of given radius
    and dimension (reduced to the radial coordinate).  `nodes` counts interior
    grid points."""

    geometry: str            # "interval" | "ball"
    nodes: int
    length: float = 1.0      # interval length L
    dimension: int = 1       # ball dimension N (>= 1)
    radius: float = 1.0      # ball radius R

    def __post_init__(self):
        if self.geometry not in ("interval", "ball"):
            raise GridError(f"unknown geometry {self.geometry!r}")
        if self.nodes < 8:
            raise GridError(f"need at least 8 interior nodes, got {self.nodes}")
        if self.geometry == "interval" and self.length <= 0:
            raise GridError("interval length must be positive")
        if self.geometry == "ball":
            if self.radius <= 0:
                raise GridError("ball radius must be positive")
            if self.dimension < 1 or int(self.dimension) != self.dimension:
                raise GridError("ball dimension must be a positive integer")

    @property
    def extent(self) -> float:
        return self.length if self.geometry == "interval" else self.radius


@dataclass(frozen=True)
class Grid:
    """Discretized domain.

    coords:            interior node positions x_i = i*h, i = 1..n
    quad_weights:      positive weights realizing int_Omega . dx
    boundary_distance: dist(x_i, boundary), positive at interior nodes
    lap_offdiag/lap_diag: the symmetric tridiagonal A = W_quad * (-lap)
    """

    spec: DomainSpec
    h: float
    coords: np.ndarray
    quad_weights: np.ndarray
    boundary_distance: np.ndarray
    lap_diag: np.ndarray       # diagonal of A
    lap_offdiag: np.ndarray    # sub/superdiagonal of A (length n-1)
    _cho: tuple = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.spec.nodes

    def check_field(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.n,):
            raise GridError(f"field has shape {f.shape}, expected ({self.n},)")
        return f


def _ball_surface(ndim: int) -> float:
    # |S^(N-1)| = 2 pi^(N/2) / Gamma(N/2)
    return 2.0 * pi ** (ndim / 2.0) / gamma(ndim / 2.0)


def build_domain(spec: DomainSpec) -> Grid:
    """Build the grid, quadrature and the discrete Dirichlet Laplacian."""
    n = spec.nodes
    h = spec.extent / (n + 1)
    coords = h * np.arange(1, n + 1)

    if spec.geometry == "interval":
        quad = np.full(n, h)
        diag = np.full(n, 2.0 / h)
        off = np.full(n - 1, -1.0 / h)
        dist = np.minimum(coords, spec.length - coords)
    else:
        ndim = spec.dimension
        s = _ball_surface(ndim)
        faces = h * (np.arange(n + 1) + 0.5)            # r_{i+1/2}, i = 0..n
        area = faces ** (ndim - 1)
        inner = np.concatenate(([0.0], faces[1:-1]))    # node 1 owns the core [0, r_{3/2}]
        quad = s * (faces[1:] ** ndim - inner ** ndim) / ndim
        area_in = area.copy()
        area_in[0] = 0.0                                # zero flux through r = 0
        diag = s * (area_in[:-1] + area[1:]) / h
        off = -s * area[1:n] / h
        dist = spec.radius - coords

    # banded Cholesky factor of A for the Green operator (upper form)
    ab = np.zeros((2, n))
    ab[0, 1:] = off
    ab[1, :] = diag
    cb = cholesky_banded(ab)

    return Grid(spec=spec, h=h, coords=coords, quad_weights=quad,
                boundary_distance=dist, lap_diag=diag, lap_offdiag=off,
                _cho=(cb,))


def apply_laplacian(grid: Grid, field) -> np.ndarray:
    """Discrete Laplacian (NOT negated) with homogeneous Dirichlet data."""
    f = grid.check_field(field)
    af = grid.lap_diag * f
    af[1:] += grid.lap_offdiag * f[:-1]
    af[:-1] += grid.lap_offdiag * f[1:]
    return -af / grid.quad_weights


def solve_poisson(grid: Grid, rhs) -> np.ndarray:
    """Discrete Green operator: g with -lap g = rhs (Dirichlet), banded solve."""
    r = grid.check_field(rhs)
    return cho_solve_banded((grid._cho[0], False), grid.quad_weights * r)


def integrate(grid: Grid, field) -> float:
    """Quadrature realization of int_Omega field dx."""
    return float(np.dot(grid.quad_weights, grid.check_field(field)))


def inner_product_weighted(grid: Grid, f, g, w) -> float:
    """<f, g> against the weight w: int f g w dx."""
    f = grid.check_field(f)
    g = grid.check_field(g)
    w = grid.check_field(w)
    return float(np.dot(grid.quad_weights, f * g * w))


def dirichlet_energy(grid: Grid, f) -> float:
    """int |grad f|^2 dx as the quadratic form <-lap f, f>_quad (f^T A f)."""
    f = grid.check_field(f)
    af = grid.lap_diag * f
    af[1:] += grid.lap_offdiag * f[:-1]
    af[:-1] += grid.lap_offdiag * f[1:]
    return float(np.dot(f, af))
