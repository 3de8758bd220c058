"""
Semi-Lagrangian theta-method in time.

Each step solves
    (I - h theta (D + B - r_w I)) V^n = T^SL (I + h (1 - theta)(D + B - r_w I)) V^{n-1}
by fixed-point iteration on the jump part, so only the sparse matrix
I - h theta (D - r_w I) is ever inverted. The first step is replaced by
implicit quarter steps to damp the payoff kink.
"""
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from app.errors import FixedPointError
from app.fft_conv import apply_B, build_kernel
from app.grids import SpatialGrid, YGrids, build_ygrids
from app.linsolve import IluFactors, bicgstab, ilu0
from app.models import PayoffSpec, SolverConfig
from app.payoff import initial_vector
from app.quadrature import QuadratureScheme, ZGrid
from app.spatial_ops import (
    TensorInterpolator,
    build_diffusion,
    build_fd_coeffs,
    build_interpolation,
    build_transport,
    fd_matrices,
    interpolate_points,
)

logger = logging.getLogger(__name__)

_EXTRAPOLATION = {1: (1.0,), 2: (2.0, -1.0), 3: (3.0, -3.0, 1.0), 4: (4.0, -6.0, 4.0, -1.0)}


@dataclass
class StepStats:
    fp_iterations: int
    linear_iterations: int
    differences: List[float]


@dataclass
class SolveStats:
    """Per-step diagnostics; the damped first step contributes one entry per substep."""
    fp_iterations: List[int] = field(default_factory=list)
    linear_iterations: List[int] = field(default_factory=list)
    fp_differences: List[List[float]] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)

    def record(self, stats: StepStats) -> None:
        self.fp_iterations.append(stats.fp_iterations)
        self.linear_iterations.append(stats.linear_iterations)
        self.fp_differences.append(stats.differences)


@dataclass(frozen=True)
class PriceSurface:
    values: np.ndarray
    grid: SpatialGrid
    time: float
    delta: Optional[np.ndarray] = None
    gamma: Optional[np.ndarray] = None
    stats: Optional[SolveStats] = None

    def as_array(self) -> np.ndarray:
        """Values as [m1, m2]."""
        n = self.grid.n_x + 1
        return np.reshape(self.values, (n, n), order="F")


class PideOperators:
    """Spatial operators for one grid and weight set, with per-step-size caches."""

    def __init__(self, grid: SpatialGrid, scheme: QuadratureScheme, zgrid: ZGrid, workers: Optional[int] = None):
        self.grid = grid
        self.scheme = scheme
        self.r_w = scheme.r_w
        self.workers = workers
        self.diffusion = build_diffusion(grid, scheme.sigma_w_sq)
        self.ygrids: YGrids = build_ygrids(zgrid.n_z, zgrid.h_z, grid.first_positive, grid.x_max)
        self.kernel = build_kernel(scheme.omega, self.ygrids)
        self.t_in = build_interpolation(grid.nodes, self.ygrids.y_in, self.ygrids.y_in, policy="zero")
        self.t_out = build_interpolation(self.ygrids.y_out, grid.nodes, grid.nodes, policy="linear")
        self._has_jumps = bool(np.any(scheme.omega))
        self._transport: Dict[float, TensorInterpolator] = {}
        self._systems: Dict[Tuple[float, float], Tuple[sp.csr_matrix, IluFactors]] = {}

    @property
    def size(self) -> int:
        return (self.grid.n_x + 1) ** 2

    def apply_B(self, v: np.ndarray) -> np.ndarray:
        if not self._has_jumps:
            return np.zeros_like(v)
        return apply_B(self.kernel, self.t_in, self.t_out, v, workers=self.workers)

    def generator(self, v: np.ndarray) -> np.ndarray:
        """(D + B_omega - r_w I) v."""
        return self.diffusion @ v + self.apply_B(v) - self.r_w * v

    def transport(self, h_t: float) -> TensorInterpolator:
        if h_t not in self._transport:
            self._transport[h_t] = build_transport(self.grid, self.scheme.kappa_w, h_t)
        return self._transport[h_t]

    def system(self, h_t: float, theta: float) -> Tuple[sp.csr_matrix, IluFactors]:
        """I - h_t theta (D - r_w I) and its ILU(0) factors."""
        key = (h_t, theta)
        if key not in self._systems:
            eye = sp.identity(self.size, format="csr")
            matrix = (eye - h_t * theta * (self.diffusion - self.r_w * eye)).tocsr()
            matrix.sort_indices()
            self._systems[key] = (matrix, ilu0(matrix))
        return self._systems[key]


def fp_start(history: Sequence, n: int):
    """Extrapolated first guess for step n from the newest min(n, 4) solutions (oldest first)."""
    coeffs = _EXTRAPOLATION[min(n, 4)]
    if len(history) < len(coeffs):
        raise ValueError(f"step {n} needs {len(coeffs)} previous solutions, got {len(history)}")
    newest_first = list(reversed(history))
    return sum(c * v for c, v in zip(coeffs, newest_first))


def step(
    v_prev: np.ndarray,
    ops: PideOperators,
    config: SolverConfig,
    h_t: float,
    theta: float,
    start: np.ndarray,
) -> Tuple[np.ndarray, StepStats]:
    """
    One theta step. Iterates M Y^k = h theta B Y^{k-1} + W until
    max |Y^k - Y^{k-1}| / max(1, |Y^k|) < tol_fixed_point.

    Raises:
        FixedPointError: if fp_max_iter iterations do not suffice
    """
    explicit = v_prev
    if theta < 1.0:
        explicit = v_prev + h_t * (1.0 - theta) * ops.generator(v_prev)
    w = ops.transport(h_t).apply(explicit)
    matrix, ilu = ops.system(h_t, theta)

    y_prev = np.asarray(start, dtype=float)
    differences: List[float] = []
    linear = 0
    for k in range(1, config.fp_max_iter + 1):
        rhs = w + h_t * theta * ops.apply_B(y_prev) if theta > 0.0 else w
        result = bicgstab(matrix, ilu, rhs, x0=y_prev, tol=config.tol_linear, max_iter=config.linear_max_iter)
        y = result.solution
        linear += result.iterations
        difference = float(np.max(np.abs(y - y_prev) / np.maximum(1.0, np.abs(y))))
        differences.append(difference)
        if difference < config.tol_fixed_point:
            return y, StepStats(k, linear, differences)
        y_prev = y
    raise FixedPointError(
        f"fixed-point iteration stuck at {differences[-1]:.3e} after {config.fp_max_iter} iterations",
        config.fp_max_iter,
        differences[-1],
    )


def step_residual(ops: PideOperators, v_prev: np.ndarray, v_next: np.ndarray, h_t: float, theta: float) -> float:
    """Sup-norm residual of the unsplit theta scheme."""
    lhs = v_next - h_t * theta * ops.generator(v_next)
    rhs = ops.transport(h_t).apply(v_prev + h_t * (1.0 - theta) * ops.generator(v_prev))
    return float(np.max(np.abs(lhs - rhs)))


def solve(
    payoff: PayoffSpec,
    maturity: float,
    grid: SpatialGrid,
    scheme: QuadratureScheme,
    zgrid: ZGrid,
    config: SolverConfig,
    ops: Optional[PideOperators] = None,
) -> PriceSurface:
    """Price surface at time to maturity `maturity`, marching from the payoff."""
    started = time.perf_counter()
    stats = SolveStats()
    if ops is None:
        ops = PideOperators(grid, scheme, zgrid, workers=config.threads)
    n_t = config.n_t or max(1, int(np.floor(0.5 * grid.n_x + 0.5)))
    h_t = maturity / n_t
    stats.timings["setup"] = time.perf_counter() - started

    v0 = initial_vector(payoff, grid)
    history = [v0]
    marching = time.perf_counter()

    v = v0
    if config.damping_substeps > 0:
        sub = h_t / config.damping_substeps
        for _ in range(config.damping_substeps):
            v, step_stats = step(v, ops, config, sub, 1.0, v)
            stats.record(step_stats)
    else:
        v, step_stats = step(v0, ops, config, h_t, config.theta, v0)
        stats.record(step_stats)
    history.append(v)

    for n in range(2, n_t + 1):
        start = fp_start(history, n) if config.extrapolate_start else history[-1]
        v, step_stats = step(history[-1], ops, config, h_t, config.theta, start)
        stats.record(step_stats)
        history = (history + [v])[-4:]
        logger.debug("step %d/%d: %d fixed-point iterations", n, n_t, step_stats.fp_iterations)

    stats.timings["time_stepping"] = time.perf_counter() - marching
    stats.timings["total"] = time.perf_counter() - started

    floor = float(v.min())
    if floor < -1e-8 * payoff.K:
        logger.warning("price surface dips to %.3e below zero", floor)
    logger.info(
        "solved N_x=%d N_t=%d in %.2fs (%d fixed-point iterations)",
        grid.n_x, n_t, stats.timings["total"], sum(stats.fp_iterations),
    )
    return PriceSurface(values=v, grid=grid, time=maturity, stats=stats)


def greeks(surface: PriceSurface) -> PriceSurface:
    """Delta and Gamma along each axis from the grid's finite-difference weights."""
    d1, d2 = fd_matrices(build_fd_coeffs(surface.grid))
    values = surface.as_array()
    delta = np.stack([(d1 @ values).ravel(order="F"), (d1 @ values.T).T.ravel(order="F")])
    gamma = np.stack([(d2 @ values).ravel(order="F"), (d2 @ values.T).T.ravel(order="F")])
    return replace(surface, delta=delta, gamma=gamma)


def price_at(surface: PriceSurface, x) -> float | np.ndarray:
    """Cubic tensor Lagrange interpolation of the surface; raises OutOfDomainError outside [0, x_max]^2."""
    x = np.asarray(x, dtype=float)
    values = interpolate_points(surface.grid.nodes, surface.as_array(), x.reshape(-1, 2))
    return float(values[0]) if x.ndim == 1 else values
