"""ILU(0)-preconditioned BiCGSTAB for the implicit step systems."""
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from app.errors import BreakdownError, MaxIterationsError, StagnationError, ZeroPivotError

logger = logging.getLogger(__name__)

PIVOT_THRESHOLD = 1e-300
_STAGNATION_WINDOW = 50
_MAX_RESIDUAL_REPLACEMENTS = 3


def _triangular_solver(matrix: sp.csr_matrix):
    # SuperLU on an already triangular matrix, natural order and diagonal pivots,
    # reproduces the matrix itself as a factor: a compiled substitution
    return spla.splu(
        matrix.tocsc(),
        permc_spec="NATURAL",
        diag_pivot_thresh=0.0,
        options={"SymmetricMode": True},
    )


class IluFactors:
    """Unit lower and upper triangular factors on the sparsity pattern of A."""

    def __init__(self, lower: sp.csr_matrix, upper: sp.csr_matrix):
        self.lower = lower
        self.upper = upper
        self._lower_solver = _triangular_solver(lower)
        self._upper_solver = _triangular_solver(upper)

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Forward then backward substitution, (LU)^{-1} b."""
        return self._upper_solver.solve(self._lower_solver.solve(np.asarray(b, dtype=float)))

    __call__ = solve


def ilu0(matrix) -> IluFactors:
    """
    Incomplete LU factorization with zero fill-in (IKJ variant).

    Raises:
        ZeroPivotError: when a pivot falls below 1e-300 in magnitude
    """
    a = sp.csr_matrix(matrix, dtype=float, copy=True)
    a.sum_duplicates()
    a.sort_indices()
    n = a.shape[0]
    indptr = a.indptr.tolist()
    indices = a.indices.tolist()
    data = a.data.tolist()

    diag = [0] * n
    for i in range(n):
        row = indices[indptr[i]:indptr[i + 1]]
        try:
            diag[i] = indptr[i] + row.index(i)
        except ValueError:
            raise ZeroPivotError(i, 0.0) from None

    for i in range(n):
        start, end = indptr[i], indptr[i + 1]
        position = {indices[p]: p for p in range(start, end)}
        for p in range(start, diag[i]):
            k = indices[p]
            pivot = data[diag[k]]
            if abs(pivot) < PIVOT_THRESHOLD:
                raise ZeroPivotError(k, pivot)
            factor = data[p] / pivot
            data[p] = factor
            for q in range(diag[k] + 1, indptr[k + 1]):
                target = position.get(indices[q])
                if target is not None:
                    data[target] -= factor * data[q]
        if abs(data[diag[i]]) < PIVOT_THRESHOLD:
            raise ZeroPivotError(i, data[diag[i]])

    factored = sp.csr_matrix((np.array(data), a.indices.copy(), a.indptr.copy()), shape=a.shape)
    lower = (sp.tril(factored, k=-1) + sp.identity(n)).tocsr()
    upper = sp.triu(factored).tocsr()
    return IluFactors(lower, upper)


@dataclass(frozen=True)
class BicgstabResult:
    solution: np.ndarray
    iterations: int
    residual: float


def bicgstab(
    a,
    precond: Optional[Callable[[np.ndarray], np.ndarray]],
    b: np.ndarray,
    x0: Optional[np.ndarray] = None,
    tol: float = 1e-14,
    max_iter: int = 1000,
) -> BicgstabResult:
    """
    Right-preconditioned BiCGSTAB for A x = b.

    Success is declared only once the true residual ||b - A x|| / ||b|| is at
    most tol. A recursive residual that has drifted from the true one is
    replaced and the iteration continues; a rho breakdown restarts once from
    the current iterate.

    Raises:
        BreakdownError: rho or omega vanished again after the restart
        StagnationError: no progress over a window of iterations
        MaxIterationsError: max_iter reached
    """
    b = np.asarray(b, dtype=float)
    apply_m = precond if precond is not None else (lambda v: v)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    norm_b = np.linalg.norm(b)
    if norm_b == 0.0:
        return BicgstabResult(np.zeros_like(b), 0, 0.0)

    r = b - a @ x
    true_residual = np.linalg.norm(r) / norm_b
    if true_residual <= tol:
        return BicgstabResult(x, 0, true_residual)

    iterations = 0
    restarts = 0
    replacements = 0
    best = true_residual
    best_at = 0

    while True:
        r_hat = r.copy()
        p = r.copy()
        rho = float(r_hat @ r)
        breakdown = False
        while iterations < max_iter:
            m_p = apply_m(p)
            a_m_p = a @ m_p
            denom = float(r_hat @ a_m_p)
            if denom == 0.0:
                breakdown = True
                break
            alpha = rho / denom
            s = r - alpha * a_m_p
            m_s = apply_m(s)
            a_m_s = a @ m_s
            t_t = float(a_m_s @ a_m_s)
            omega = float(a_m_s @ s) / t_t if t_t > 0.0 else 0.0
            x = x + alpha * m_p + omega * m_s
            r = s - omega * a_m_s
            iterations += 1

            recursive = np.linalg.norm(r) / norm_b
            if recursive <= tol:
                break
            if recursive < 0.5 * best:
                best, best_at = recursive, iterations
            elif iterations - best_at > _STAGNATION_WINDOW:
                raise StagnationError(
                    f"BiCGSTAB stagnated at residual {recursive:.3e}", iterations, recursive
                )

            rho_new = float(r_hat @ r)
            if omega == 0.0 or abs(rho_new) < np.finfo(float).tiny * 1e10 * np.linalg.norm(r_hat) * np.linalg.norm(r):
                breakdown = True
                break
            beta = (rho_new / rho) * (alpha / omega)
            rho = rho_new
            p = r + beta * (p - omega * a_m_p)
        else:
            raise MaxIterationsError(
                f"BiCGSTAB did not reach {tol:g} in {max_iter} iterations", iterations, np.linalg.norm(r) / norm_b
            )

        r = b - a @ x
        true_residual = np.linalg.norm(r) / norm_b
        if true_residual <= tol:
            logger.debug("BiCGSTAB converged in %d iterations (%.2e)", iterations, true_residual)
            return BicgstabResult(x, iterations, true_residual)
        if breakdown:
            restarts += 1
            if restarts > 1:
                raise BreakdownError("BiCGSTAB breakdown after restart", iterations, true_residual)
            logger.debug("BiCGSTAB breakdown at iteration %d, restarting", iterations)
        else:
            replacements += 1
            if replacements > _MAX_RESIDUAL_REPLACEMENTS:
                raise StagnationError(
                    f"true residual {true_residual:.3e} stuck above {tol:g}", iterations, true_residual
                )
