"""Cell-centered polar finite-volume grid on the unit disk.

Cells are centered at r_i = (i - 1/2)*dr, theta_j = (j - 1/2)*dtheta with
dr = 1/n_r, dtheta = 2*pi/n_theta; there is no node at the origin and the
innermost face flux vanishes through the metric factor r.  The boundary
circle carries its own unknown ring (the trace variable), coupled to the
bulk through one-sided fluxes across r = 1.

All discrete operators are assembled in conservative flux form, so the
zero-flux Laplacian has exact row sums zero, quadrature of the divergence
telescopes to the boundary, and summation by parts holds exactly against
the matching face-based H1 seminorms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sps

from .errors import ShapeMismatch

__all__ = (
    'DiskGrid', 'BulkField', 'TraceField',
    'integrate_bulk', 'integrate_trace', 'mean_bulk', 'mean_trace',
    'l2_norm_bulk', 'l2_norm_trace',
    'laplacian_bulk', 'laplace_beltrami', 'trace', 'normal_derivative',
    'h1_seminorm_bulk', 'h1_seminorm_trace',
    'neumann_laplacian_matrix', 'dirichlet_laplacian_matrices',
    'circle_laplacian_matrix', 'stiffness_matrix_bulk',
)


@dataclass(frozen=True)
class DiskGrid:
    """Polar grid resolution; all geometry is derived from the two counts."""

    n_r: int
    n_theta: int

    def __post_init__(self):
        if self.n_r < 4:
            raise ValueError('n_r must be >= 4')
        if self.n_theta < 8 or self.n_theta % 2:
            raise ValueError('n_theta must be even and >= 8')

    @property
    def dr(self) -> float:
        return 1.0 / self.n_r

    @property
    def dtheta(self) -> float:
        return 2.0 * math.pi / self.n_theta

    @property
    def r(self) -> np.ndarray:
        """Cell-center radii, shape (n_r,)."""
        return (np.arange(self.n_r) + 0.5) * self.dr

    @property
    def theta(self) -> np.ndarray:
        """Cell-center angles, shape (n_theta,)."""
        return (np.arange(self.n_theta) + 0.5) * self.dtheta

    @property
    def weights(self) -> np.ndarray:
        """Bulk quadrature weights w_ij = r_i*dr*dtheta, shape (n_r, n_theta)."""
        w = self.r * self.dr * self.dtheta
        return np.repeat(w[:, None], self.n_theta, axis=1)

    @property
    def boundary_weights(self) -> np.ndarray:
        """Arclength weights on the unit circle, shape (n_theta,)."""
        return np.full(self.n_theta, self.dtheta)

    @property
    def size(self) -> int:
        return self.n_r * self.n_theta


@dataclass
class BulkField:
    grid: DiskGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_r, self.grid.n_theta):
            raise ShapeMismatch(
                f'bulk field shape {self.values.shape} does not match grid '
                f'({self.grid.n_r}, {self.grid.n_theta})')
        if not np.all(np.isfinite(self.values)):
            raise ShapeMismatch('bulk field contains non-finite values')


@dataclass
class TraceField:
    grid: DiskGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_theta,):
            raise ShapeMismatch(
                f'trace field shape {self.values.shape} does not match grid '
                f'({self.grid.n_theta},)')
        if not np.all(np.isfinite(self.values)):
            raise ShapeMismatch('trace field contains non-finite values')


def _bulk_values(field: BulkField) -> np.ndarray:
    if not isinstance(field, BulkField):
        raise ShapeMismatch('expected a BulkField')
    return field.values


def _trace_values(field: TraceField) -> np.ndarray:
    if not isinstance(field, TraceField):
        raise ShapeMismatch('expected a TraceField')
    return field.values


# ---------------------------------------------------------------------------
# quadrature

def integrate_bulk(field: BulkField) -> float:
    g = field.grid
    # midpoint rule is exact in r for constants: sum_i r_i*dr = 1/2 exactly
    return float(g.dr * g.dtheta * (g.r @ _bulk_values(field).sum(axis=1)))


def integrate_trace(field: TraceField) -> float:
    g = field.grid
    return float(g.dtheta * _trace_values(field).sum())


def mean_bulk(field: BulkField) -> float:
    return integrate_bulk(field) / math.pi


def mean_trace(field: TraceField) -> float:
    return integrate_trace(field) / (2.0 * math.pi)


def l2_norm_bulk(field: BulkField) -> float:
    g = field.grid
    vals = _bulk_values(field)
    return math.sqrt(float(g.dr * g.dtheta * (g.r @ (vals * vals) @ np.ones(g.n_theta))))


def l2_norm_trace(field: TraceField) -> float:
    vals = _trace_values(field)
    return math.sqrt(float(field.grid.dtheta * (vals @ vals)))


# ---------------------------------------------------------------------------
# operator assembly (cached per grid)

def _face_coefficients(grid: DiskGrid):
    """Transmission coefficients s/d of the interior faces.

    Returns (radial kappa, shape (n_r-1,)) and (angular kappa, shape (n_r,)).
    Radial face i sits at R_i = (i+1)*dr between rings i and i+1 with
    arclength R_i*dtheta and distance dr; angular faces of ring i have
    length dr and distance r_i*dtheta.  The boundary face at r = 1 has
    arclength dtheta and distance dr/2 (cell center to boundary).
    """
    dr, dth = grid.dr, grid.dtheta
    face_r = np.arange(1, grid.n_r) * dr
    kappa_rad = face_r * dth / dr
    kappa_ang = dr / (grid.r * dth)
    return kappa_rad, kappa_ang


def _boundary_kappa(grid: DiskGrid) -> float:
    return grid.dtheta / (grid.dr / 2.0)


def _interior_faces(grid: DiskGrid):
    """(cell, neighbor, kappa) triplets over all interior faces.

    kappa = s/d is the transmission coefficient; each face appears once.
    """
    n_r, n_th = grid.n_r, grid.n_theta
    kappa_rad, kappa_ang = _face_coefficients(grid)
    idx = np.arange(n_r * n_th).reshape(n_r, n_th)

    rad_me = idx[:-1].ravel()
    rad_nb = idx[1:].ravel()
    rad_k = np.repeat(kappa_rad, n_th)

    ang_me = idx.ravel()
    ang_nb = np.roll(idx, -1, axis=1).ravel()
    ang_k = np.repeat(kappa_ang, n_th)

    me = np.concatenate([rad_me, ang_me])
    nb = np.concatenate([rad_nb, ang_nb])
    k = np.concatenate([rad_k, ang_k])
    return me, nb, k


def _flux_divergence_coo(grid: DiskGrid, weighted: bool):
    """COO triplets over the interior faces.

    weighted=True assembles S = -W*Lap (symmetric PSD, entries +-kappa);
    weighted=False assembles the Laplacian itself (each row scaled by the
    receiving cell's measure w_ij, giving row sums exactly zero).
    """
    me, nb, k = _interior_faces(grid)
    if weighted:
        c_me = c_nb = k
    else:
        w = np.repeat(grid.r * grid.dr * grid.dtheta, grid.n_theta)
        c_me = k / w[me]
        c_nb = k / w[nb]
    rows = np.concatenate([me, me, nb, nb])
    cols = np.concatenate([nb, me, me, nb])
    vals = np.concatenate([c_me, -c_me, c_nb, -c_nb])
    if weighted:
        vals = -vals
    return rows, cols, vals


def _assemble(grid, rows, cols, vals):
    n = grid.size
    return sps.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


@lru_cache(maxsize=None)
def neumann_laplacian_matrix(grid: DiskGrid) -> sps.csr_matrix:
    """Zero-flux finite-volume Laplacian; row sums are exactly zero."""
    rows, cols, vals = _flux_divergence_coo(grid, weighted=False)
    return _assemble(grid, rows, cols, vals)


@lru_cache(maxsize=None)
def stiffness_matrix_bulk(grid: DiskGrid) -> sps.csr_matrix:
    """S = -W*Laplacian_zero_flux, symmetric positive semidefinite.

    Kernel is the constants; (u, S u) equals the squared interior-face
    H1 seminorm exactly.
    """
    rows, cols, vals = _flux_divergence_coo(grid, weighted=True)
    return _assemble(grid, rows, cols, vals)


@lru_cache(maxsize=None)
def dirichlet_laplacian_matrices(grid: DiskGrid):
    """Laplacian with a Dirichlet boundary ring: Lap u = A @ u + B @ v.

    A is (N, N), B is (N, n_theta); the boundary face uses the one-sided
    difference (v_j - u_{n_r, j})/(dr/2).
    """
    n_r, n_th = grid.n_r, grid.n_theta
    w_last = grid.r[-1] * grid.dr * grid.dtheta
    kb = _boundary_kappa(grid) / w_last
    last = np.arange((n_r - 1) * n_th, n_r * n_th)
    diag = np.zeros(grid.size)
    diag[last] = kb
    A = neumann_laplacian_matrix(grid) - sps.diags(diag)
    B = sps.coo_matrix((np.full(n_th, kb), (last, np.arange(n_th))),
                       shape=(grid.size, n_th))
    return A.tocsr(), B.tocsr()


@lru_cache(maxsize=None)
def circle_laplacian_matrix(grid: DiskGrid) -> sps.csr_matrix:
    """Periodic central-difference Laplace-Beltrami on the unit circle."""
    n = grid.n_theta
    h2 = grid.dtheta ** 2
    main = np.full(n, -2.0 / h2)
    off = np.full(n, 1.0 / h2)
    mat = sps.diags([main, off[:-1], off[:-1], [1.0 / h2], [1.0 / h2]],
                    [0, 1, -1, n - 1, -(n - 1)], format='csr')
    return mat


# ---------------------------------------------------------------------------
# field operations

def laplacian_bulk(u: BulkField, boundary_values: TraceField | None = None) -> BulkField:
    """Finite-volume Laplacian of a bulk field.

    With ``boundary_values=None`` the outer face is zero-flux (conservative:
    the weighted sum of the result vanishes identically); otherwise the
    boundary face flux is (v_j - u_{n_r,j})/(dr/2) toward the Dirichlet ring.
    """
    g = u.grid
    flat = _bulk_values(u).ravel()
    if boundary_values is None:
        out = neumann_laplacian_matrix(g) @ flat
    else:
        if boundary_values.grid != g:
            raise ShapeMismatch('bulk and trace fields live on different grids')
        A, B = dirichlet_laplacian_matrices(g)
        out = A @ flat + B @ _trace_values(boundary_values)
    return BulkField(g, out.reshape(g.n_r, g.n_theta))


def laplace_beltrami(v: TraceField) -> TraceField:
    """Periodic second difference (v_{j-1} - 2 v_j + v_{j+1})/dtheta^2."""
    vals = _trace_values(v)
    h2 = v.grid.dtheta ** 2
    out = (np.roll(vals, 1) - 2.0 * vals + np.roll(vals, -1)) / h2
    return TraceField(v.grid, out)


def trace(u: BulkField, v: TraceField) -> TraceField:
    """The discrete trace of (u, v) is the boundary ring v itself.

    The coupling u|_Gamma = v is enforced by unknown identification, so
    this is the identity on v; it exists as an operation to keep call
    sites explicit about which object carries the boundary values.
    """
    if u.grid != v.grid:
        raise ShapeMismatch('bulk and trace fields live on different grids')
    return v


def normal_derivative(u: BulkField, v: TraceField) -> TraceField:
    """One-sided outward normal derivative at r = 1: (v_j - u_{n_r,j})/(dr/2)."""
    if u.grid != v.grid:
        raise ShapeMismatch('bulk and trace fields live on different grids')
    g = u.grid
    out = (_trace_values(v) - _bulk_values(u)[-1, :]) / (g.dr / 2.0)
    return TraceField(g, out)


def h1_seminorm_bulk(u: BulkField, v: TraceField | None = None) -> float:
    """Face-based Dirichlet energy sqrt(sum_faces (s/d)*(du)^2).

    Matches the Laplacian stencils exactly (discrete summation by parts);
    when the boundary ring ``v`` is supplied the boundary faces
    (v_j - u_{n_r,j}) enter with coefficient dtheta/(dr/2).
    """
    g = u.grid
    vals = _bulk_values(u)
    kappa_rad, kappa_ang = _face_coefficients(g)
    dru = np.diff(vals, axis=0)
    dthu = np.roll(vals, -1, axis=1) - vals
    total = float(kappa_rad @ (dru * dru) @ np.ones(g.n_theta))
    total += float(kappa_ang @ (dthu * dthu) @ np.ones(g.n_theta))
    if v is not None:
        if v.grid != g:
            raise ShapeMismatch('bulk and trace fields live on different grids')
        jump = _trace_values(v) - vals[-1, :]
        total += _boundary_kappa(g) * float(jump @ jump)
    return math.sqrt(total)


def h1_seminorm_trace(v: TraceField) -> float:
    """sqrt(sum_j (v_{j+1} - v_j)^2 / dtheta), matching the circle stencil."""
    vals = _trace_values(v)
    dv = np.roll(vals, -1) - vals
    return math.sqrt(float(dv @ dv) / v.grid.dtheta)
