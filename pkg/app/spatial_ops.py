"""
Sparse spatial operators on the 2-D tensor grid.

Vectors over the grid are flattened with the axis-1 index fastest
(x_00, x_10, ..., x_N0, x_01, ...), so kron(A, B) acts with B along axis 1.
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.sparse as sp

from app.errors import GridError, OutOfDomainError
from app.grids import SpatialGrid, sl_departure_grid

BOUNDARY_POLICIES = ("zero", "linear", "clamp")


@dataclass(frozen=True)
class FdCoefficients:
    """Three-point weights for offsets (-1, 0, +1), one row per node."""
    alpha: np.ndarray
    beta: np.ndarray


def build_fd_coeffs(grid: SpatialGrid) -> FdCoefficients:
    """
    Central first/second derivative weights on the nonuniform grid.

    Row 0 is zero (the coefficients of the equation vanish at x = 0); at x_max
    the second derivative is dropped and the first is a backward difference.
    """
    n = grid.n_x
    if n < 2:
        raise GridError("N_x must be at least 2")
    h = grid.widths
    hm, hp = h[:-1], h[1:]
    alpha = np.zeros((n + 1, 3))
    beta = np.zeros((n + 1, 3))

    alpha[1:n, 0] = -hp / (hm * (hm + hp))
    alpha[1:n, 1] = (hp - hm) / (hm * hp)
    alpha[1:n, 2] = hm / (hp * (hm + hp))
    beta[1:n, 0] = 2.0 / (hm * (hm + hp))
    beta[1:n, 1] = -2.0 / (hm * hp)
    beta[1:n, 2] = 2.0 / (hp * (hm + hp))

    alpha[n, 0] = -1.0 / h[-1]
    alpha[n, 1] = 1.0 / h[-1]
    return FdCoefficients(alpha=alpha, beta=beta)


def _tridiagonal(weights: np.ndarray) -> sp.csr_matrix:
    matrix = sp.diags([weights[1:, 0], weights[:, 1], weights[:-1, 2]], [-1, 0, 1], format="csr")
    matrix.eliminate_zeros()
    return matrix


def fd_matrices(coeffs: FdCoefficients) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """1-D first and second derivative matrices D1, D2."""
    return _tridiagonal(coeffs.alpha), _tridiagonal(coeffs.beta)


def build_diffusion(grid: SpatialGrid, sigma_w_sq) -> sp.csr_matrix:
    """
    D = 1/2 s11 I (x) X^2 D2 + s12 XD1 (x) XD1 + 1/2 s22 X^2 D2 (x) I
    with s = sigma_w sigma_w^T and X = diag(x).
    """
    s = np.asarray(sigma_w_sq, dtype=float)
    d1, d2 = fd_matrices(build_fd_coeffs(grid))
    x = sp.diags(grid.nodes)
    eye = sp.identity(grid.n_x + 1, format="csr")
    xd1 = (x @ d1).tocsr()
    x2d2 = (x @ x @ d2).tocsr()
    operator = (
        0.5 * s[0, 0] * sp.kron(eye, x2d2)
        + s[0, 1] * sp.kron(xd1, xd1)
        + 0.5 * s[1, 1] * sp.kron(x2d2, eye)
    ).tocsr()
    operator.eliminate_zeros()
    operator.sort_indices()
    return operator


# --- interpolation -----------------------------------------------------------

def lagrange_stencil(nodes, targets, degree: int = 3, policy: str = "zero") -> Tuple[np.ndarray, np.ndarray]:
    """
    Column indices and weights of the degree-P Lagrange interpolant for each target.

    The (P+1)-node window is centered on the bracketing interval and shifted
    inward at the ends. Targets outside [nodes[0], nodes[-1]] follow policy:
    'zero' (row of zeros), 'linear' (extrapolate from the two end nodes) or
    'clamp' (value of the nearest end node).
    """
    if policy not in BOUNDARY_POLICIES:
        raise ValueError(f"unknown boundary policy {policy!r}")
    nodes = np.asarray(nodes, dtype=float)
    t = np.atleast_1d(np.asarray(targets, dtype=float))
    n = nodes.size
    if n < degree + 1:
        raise GridError(f"need at least {degree + 1} source nodes")

    j = np.clip(np.searchsorted(nodes, t, side="right") - 1, 0, n - 2)
    start = np.clip(j - (degree - 1) // 2, 0, n - degree - 1)
    cols = start[:, None] + np.arange(degree + 1)
    xs = nodes[cols]
    weights = np.ones(cols.shape)
    for i in range(degree + 1):
        for k in range(degree + 1):
            if k != i:
                weights[:, i] *= (t - xs[:, k]) / (xs[:, i] - xs[:, k])

    tol = 1e-12 * max(abs(nodes[0]), abs(nodes[-1]), 1.0)
    below = t < nodes[0] - tol
    above = t > nodes[-1] + tol
    for side, pair in ((below, (0, 1)), (above, (n - 2, n - 1))):
        if not np.any(side):
            continue
        weights[side] = 0.0
        cols[side] = pair[0]
        if policy == "linear":
            a, b = nodes[pair[0]], nodes[pair[1]]
            cols[side, 1] = pair[1]
            weights[side, 0] = (b - t[side]) / (b - a)
            weights[side, 1] = (t[side] - a) / (b - a)
        elif policy == "clamp":
            nearest = pair[0] if pair[0] == 0 else pair[1]
            cols[side] = nearest
            weights[side, 0] = 1.0
    return cols, weights


def interpolation_matrix_1d(nodes, targets, degree: int = 3, policy: str = "zero") -> sp.csr_matrix:
    cols, weights = lagrange_stencil(nodes, targets, degree, policy)
    rows = np.repeat(np.arange(cols.shape[0]), cols.shape[1])
    matrix = sp.csr_matrix(
        (weights.ravel(), (rows, cols.ravel())), shape=(cols.shape[0], np.asarray(nodes).size)
    )
    matrix.sum_duplicates()
    matrix.eliminate_zeros()
    return matrix


@dataclass(frozen=True)
class TensorInterpolator:
    """Tensor-product interpolation applied axis by axis; to_sparse() gives kron(axis2, axis1)."""
    axis1: sp.csr_matrix
    axis2: sp.csr_matrix

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.axis1.shape[0] * self.axis2.shape[0], self.axis1.shape[1] * self.axis2.shape[1])

    def apply_array(self, values: np.ndarray) -> np.ndarray:
        """Interpolate a [m1, m2] array to the [target1, target2] array."""
        partial = self.axis1 @ values
        return np.asarray((self.axis2 @ partial.T).T)

    def apply(self, v: np.ndarray) -> np.ndarray:
        grid = np.reshape(v, (self.axis1.shape[1], self.axis2.shape[1]), order="F")
        return self.apply_array(grid).ravel(order="F")

    def to_sparse(self) -> sp.csr_matrix:
        matrix = sp.kron(self.axis2, self.axis1, format="csr")
        matrix.eliminate_zeros()
        return matrix


def build_interpolation(source_nodes, targets_1, targets_2, degree: int = 3, policy: str = "zero") -> TensorInterpolator:
    """Interpolation from the tensor grid source_nodes^2 onto the tensor targets_1 x targets_2."""
    return TensorInterpolator(
        axis1=interpolation_matrix_1d(source_nodes, targets_1, degree, policy),
        axis2=interpolation_matrix_1d(source_nodes, targets_2, degree, policy),
    )


def build_transport(grid: SpatialGrid, kappa_w, h_t: float, degree: int = 3) -> TensorInterpolator:
    """Semi-Lagrangian transport T^SL: values at x_m exp(kappa_w h_t), linear beyond x_max."""
    departure = sl_departure_grid(grid, kappa_w, h_t)
    return build_interpolation(grid.nodes, departure[0], departure[1], degree, policy="linear")


def interpolate_points(nodes, values: np.ndarray, points, degree: int = 3) -> np.ndarray:
    """Cubic tensor interpolation of a [m1, m2] array at scattered points (..., 2) inside the grid."""
    nodes = np.asarray(nodes, dtype=float)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    tol = 1e-12 * max(nodes[-1], 1.0)
    if np.any(pts < nodes[0] - tol) or np.any(pts > nodes[-1] + tol):
        raise OutOfDomainError("evaluation point outside the computational domain")
    c1, w1 = lagrange_stencil(nodes, pts[:, 0], degree)
    c2, w2 = lagrange_stencil(nodes, pts[:, 1], degree)
    block = values[c1[:, :, None], c2[:, None, :]]
    return np.einsum("pi,pj,pij->p", w1, w2, block)
