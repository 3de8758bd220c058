"""
Discretized jump integral: z-grid, the three-region partition and the weights.

Cells whose centers lie in the inner square R^I carry no weight; their
second moment is moved into the diffusion coefficient. Cells in the middle
ring R^II get moment-matched weights, the outer ring R^III the midpoint rule.
"""
import logging
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Tuple

import numpy as np

from app.errors import GridError, IntegrationAccuracyWarning, ModelDomainError, QuadratureConvergenceError
from app.levy_model import find_truncation_radius, levy_density
from app.models import NtsModel

logger = logging.getLogger(__name__)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(6)
_GL_TENSOR_WEIGHTS = np.outer(_GL_WEIGHTS, _GL_WEIGHTS)
_CHUNK = 4096

REGION_I, REGION_II, REGION_III = 1, 2, 3


@dataclass(frozen=True)
class ZGrid:
    """Square grid of 2N_z x 2N_z cells of width h_z centered on the origin."""
    n_z: int
    h_z: float

    @property
    def axis(self) -> np.ndarray:
        """Cell midpoints (l + 1/2) h_z for l = -N_z .. N_z - 1."""
        return (np.arange(-self.n_z, self.n_z) + 0.5) * self.h_z

    @property
    def centers(self) -> np.ndarray:
        """Midpoints as an array [l1, l2, component]."""
        z1, z2 = np.meshgrid(self.axis, self.axis, indexing="ij")
        return np.stack([z1, z2], axis=-1)

    def cell(self, l1: int, l2: int) -> Tuple[np.ndarray, np.ndarray]:
        lo = np.array([l1, l2], dtype=float) * self.h_z
        return lo, lo + self.h_z


@dataclass(frozen=True)
class RegionPartition:
    z_max_I: float
    z_max_II: float
    z_max_III: float

    def classify(self, centers: np.ndarray) -> np.ndarray:
        """Region label of each point by its sup-norm."""
        sup = np.abs(centers).max(axis=-1)
        return np.where(sup <= self.z_max_I, REGION_I, np.where(sup <= self.z_max_II, REGION_II, REGION_III))


@dataclass(frozen=True)
class QuadratureScheme:
    omega: np.ndarray
    sigma_w_sq: np.ndarray
    kappa_w: np.ndarray
    r_w: float
    second_moment_RI: np.ndarray
    regions: np.ndarray


def build_zgrid(model: NtsModel, n_z: int, level: float = 1e-8) -> Tuple[ZGrid, RegionPartition]:
    """
    Grid over the truncation square and its region radii.

    Raises:
        GridError: if n_z < 4
    """
    if n_z < 4:
        raise GridError(f"N_z must be at least 4, got {n_z}")
    z_max_III = find_truncation_radius(model, level)
    h_z = z_max_III / n_z
    partition = RegionPartition(z_max_I=2.0 * h_z, z_max_II=np.sqrt(0.1) * z_max_III, z_max_III=z_max_III)
    if partition.z_max_II <= partition.z_max_I:
        logger.warning("N_z=%d leaves the moment-matched ring empty", n_z)
    return ZGrid(n_z=n_z, h_z=h_z), partition


# --- adaptive tensor Gauss-Legendre ---------------------------------------------

def _tensor_rule(func: Callable, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    x1 = mid[:, 0, None] + half[:, 0, None] * _GL_NODES
    x2 = mid[:, 1, None] + half[:, 1, None] * _GL_NODES
    pts = np.stack(np.broadcast_arrays(x1[:, :, None], x2[:, None, :]), axis=-1)
    values = func(pts)
    return np.einsum("mijk,ij->mk", values, _GL_TENSOR_WEIGHTS) * (half[:, 0] * half[:, 1])[:, None]


def _quarter(lo: np.ndarray, hi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    mid = 0.5 * (lo + hi)
    los = np.stack([lo, np.c_[mid[:, 0], lo[:, 1]], np.c_[lo[:, 0], mid[:, 1]], mid], axis=1)
    his = np.stack([mid, np.c_[hi[:, 0], mid[:, 1]], np.c_[mid[:, 0], hi[:, 1]], hi], axis=1)
    return los.reshape(-1, 2), his.reshape(-1, 2)


def _adaptive_chunk(func, lo, hi, magnitude, rtol, max_depth):
    m = lo.shape[0]
    coarse = _tensor_rule(func, lo, hi)
    result = np.zeros_like(coarse)
    error = np.zeros(m)
    floor = 1e-6 * magnitude(coarse)
    owner = np.arange(m)

    for _ in range(max_depth):
        if owner.size == 0:
            break
        child_lo, child_hi = _quarter(lo, hi)
        child = _tensor_rule(func, child_lo, child_hi).reshape(owner.size, 4, -1)
        fine = child.sum(axis=1)
        diff = np.abs(fine - coarse).sum(axis=-1)
        done = diff <= rtol * np.maximum(magnitude(fine), floor[owner])

        np.add.at(result, owner[done], fine[done])
        np.add.at(error, owner[done], diff[done])

        keep = ~done
        lo = child_lo.reshape(-1, 4, 2)[keep].reshape(-1, 2)
        hi = child_hi.reshape(-1, 4, 2)[keep].reshape(-1, 2)
        coarse = child[keep].reshape(-1, child.shape[-1])
        owner = np.repeat(owner[keep], 4)

    if owner.size:
        np.add.at(result, owner, coarse)
        total = float(magnitude(result).sum())
        warnings.warn(
            IntegrationAccuracyWarning(
                f"{owner.size} subcells did not reach rtol={rtol:g}", estimate=total, error=float(error.sum())
            ),
            stacklevel=3,
        )
    return result


def adaptive_cell_integrals(
    func: Callable, lo: np.ndarray, hi: np.ndarray, rtol: float = 1e-10, max_depth: int = 30, magnitude=None
) -> np.ndarray:
    """
    Integrate func over a batch of rectangles [lo_i, hi_i] by quad-tree refinement.

    func maps points of shape (..., 2) to values of shape (..., k). A piece is
    accepted when its 6x6-point estimate agrees with the sum over its four
    children; refinement therefore concentrates where the integrand varies,
    i.e. at the corner closest to the origin.

    Returns:
        array (m, k) of integrals
    """
    lo = np.atleast_2d(np.asarray(lo, dtype=float))
    hi = np.atleast_2d(np.asarray(hi, dtype=float))
    if magnitude is None:
        magnitude = lambda v: np.abs(v).sum(axis=-1)  # noqa: E731
    parts = [
        _adaptive_chunk(func, lo[i:i + _CHUNK], hi[i:i + _CHUNK], magnitude, rtol, max_depth)
        for i in range(0, lo.shape[0], _CHUNK)
    ]
    return np.concatenate(parts, axis=0)


def _check_origin_free(lo: np.ndarray, hi: np.ndarray) -> None:
    touches = (lo[:, 0] <= 0) & (hi[:, 0] >= 0) & (lo[:, 1] <= 0) & (hi[:, 1] >= 0)
    if np.any(touches):
        raise ModelDomainError("cell contains the origin, where the Lévy density is singular")


def cell_moments(model: NtsModel, lo, hi, rtol: float = 1e-10) -> np.ndarray:
    """Integrals of |z|^2 l(z) over each rectangle [lo_i, hi_i]; rectangles must avoid 0."""
    lo = np.atleast_2d(np.asarray(lo, dtype=float))
    hi = np.atleast_2d(np.asarray(hi, dtype=float))
    _check_origin_free(lo, hi)

    def integrand(pts):
        return (np.sum(pts**2, axis=-1) * levy_density(model, pts))[..., None]

    return adaptive_cell_integrals(integrand, lo, hi, rtol=rtol)[:, 0]


def cell_moment(model: NtsModel, lo, hi, rtol: float = 1e-10) -> float:
    """Integral of |z|^2 l(z) (Euclidean norm) over the rectangle [lo, hi]."""
    return float(cell_moments(model, [lo], [hi], rtol=rtol)[0])


def _ring_tiles(w: float) -> Tuple[np.ndarray, np.ndarray]:
    # 4x4 tiles of side w/2 over [-w, w]^2 without the central 2x2 block
    side = 0.5 * w
    idx = [(i, j) for i in range(4) for j in range(4) if not (i in (1, 2) and j in (1, 2))]
    lo = np.array([(-w + i * side, -w + j * side) for i, j in idx])
    return lo, lo + side


def second_moment_RI(model: NtsModel, partition: RegionPartition, rtol: float = 1e-8, max_rings: int = 400) -> np.ndarray:
    """
    Matrix of integrals of z z^T l(z) over the inner square R^I.

    Summed over dyadic square rings shrinking to the origin; once the rings
    shrink geometrically the remaining tail is added as a geometric series.

    Raises:
        ModelDomainError: if the singularity is not square-integrable (alpha >= 1)
        QuadratureConvergenceError: if the ring sum does not settle
    """
    if 2.0 * model.alpha >= 2.0:
        raise ModelDomainError("second moment diverges at the origin for A_ell >= 2")

    def integrand(pts):
        dens = levy_density(model, pts)
        z1, z2 = pts[..., 0], pts[..., 1]
        return np.stack([z1 * z1 * dens, z1 * z2 * dens, z2 * z2 * dens], axis=-1)

    trace = lambda v: np.abs(v[..., 0]) + np.abs(v[..., 2])  # noqa: E731
    ratio = 2.0 ** (-(2.0 - 2.0 * model.alpha))
    total = np.zeros(3)
    w = partition.z_max_I
    for ring_index in range(max_rings):
        lo, hi = _ring_tiles(w)
        ring = adaptive_cell_integrals(integrand, lo, hi, rtol=0.1 * rtol, magnitude=trace).sum(axis=0)
        total += ring
        if trace(ring) <= rtol * (1.0 - ratio) * trace(total):
            total += ring * ratio / (1.0 - ratio)
            logger.debug("R^I second moment settled after %d rings", ring_index + 1)
            break
        w *= 0.5
    else:
        raise QuadratureConvergenceError(f"R^I ring sum not settled after {max_rings} rings")

    return np.array([[total[0], total[1]], [total[1], total[2]]])


def build_scheme(model: NtsModel, zgrid: ZGrid, partition: RegionPartition) -> QuadratureScheme:
    """Weights for every cell plus the corrected diffusion, drift and rate."""
    centers = zgrid.centers
    regions = partition.classify(centers)
    omega = np.zeros(regions.shape)
    h = zgrid.h_z

    outer = regions == REGION_III
    omega[outer] = levy_density(model, centers[outer]) * h * h

    middle = regions == REGION_II
    if np.any(middle):
        c = centers[middle]
        moments = cell_moments(model, c - 0.5 * h, c + 0.5 * h)
        omega[middle] = moments / np.sum(c * c, axis=-1)

    moment_RI = second_moment_RI(model, partition)
    sigma = model.sigma_matrix
    jumps = np.expm1(centers)
    scheme = QuadratureScheme(
        omega=omega,
        sigma_w_sq=sigma @ sigma.T + moment_RI,
        kappa_w=model.r - np.einsum("ab,abi->i", omega, jumps),
        r_w=float(model.r + omega.sum()),
        second_moment_RI=moment_RI,
        regions=regions,
    )
    logger.info(
        "weights for N_z=%d: sum(omega)=%.6g, kappa_w=(%.6g, %.6g)",
        zgrid.n_z, omega.sum(), scheme.kappa_w[0], scheme.kappa_w[1],
    )
    return scheme


@lru_cache(maxsize=8)
def precompute_scheme(model: NtsModel, n_z: int, level: float = 1e-8) -> Tuple[ZGrid, RegionPartition, QuadratureScheme]:
    """Grid, partition and weights for (model, N_z), computed once per process."""
    zgrid, partition = build_zgrid(model, n_z, level)
    return zgrid, partition, build_scheme(model, zgrid, partition)
