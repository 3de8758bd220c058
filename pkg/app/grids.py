"""Spatial grid (uniform core, sinh-stretched tail), log-spaced y-grids and SL departure points."""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from app.errors import GridError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SpatialGrid:
    """
    1-D node set x_0 = 0 < ... < x_N = x_max, identical along both axes.

    Nodes are phi(xi_m) on a uniform xi-grid, where phi is linear with slope c
    on [0, xi_int] and continues as x_int + c sinh(xi - xi_int). c = inf means
    a uniform grid.
    """
    n_x: int
    x_max: float
    x_int: float
    c: float
    nodes: np.ndarray

    @property
    def widths(self) -> np.ndarray:
        """h_{x,m} = x_m - x_{m-1}, m = 1..N."""
        return np.diff(self.nodes)

    @property
    def half_nodes(self) -> np.ndarray:
        """x_{m+1/2} for m = -1..N, including both ghost points."""
        x = self.nodes
        inner = 0.5 * (x[:-1] + x[1:])
        return np.concatenate([[-inner[0]], inner, [2.0 * self.x_max - inner[-1]]])

    @property
    def half_widths(self) -> np.ndarray:
        """h_{x,m+1/2} = x_{m+1/2} - x_{m-1/2}, m = 0..N."""
        return np.diff(self.half_nodes)

    @property
    def first_positive(self) -> float:
        return float(self.nodes[1])

    @property
    def is_uniform(self) -> bool:
        return not np.isfinite(self.c)

    @property
    def core_fraction(self) -> float:
        """Asymptotic share of nodes inside [0, x_int]."""
        return interior_fraction(self.c, self.x_int, self.x_max)

    def phi(self, xi) -> np.ndarray:
        return _phi(np.asarray(xi, dtype=float), self.c, self.x_int)

    def phi_inverse(self, x) -> np.ndarray:
        return _phi_inverse(np.asarray(x, dtype=float), self.c, self.x_int)


def _phi(xi, c, x_int):
    if not np.isfinite(c):
        return xi
    xi_int = x_int / c
    return np.where(xi <= xi_int, c * xi, x_int + c * np.sinh(xi - xi_int))


def _phi_inverse(x, c, x_int):
    if not np.isfinite(c):
        return x
    return np.where(x <= x_int, x / c, x_int / c + np.arcsinh((x - x_int) / c))


def interior_fraction(c: float, x_int: float, x_max: float) -> float:
    """F(c) = xi_int / xi_max; decreasing in c towards x_int / x_max."""
    if not np.isfinite(c):
        return x_int / x_max
    return 1.0 / (1.0 + (c / x_int) * np.arcsinh((x_max - x_int) / c))


def build_spatial_grid(n_x: int, x_max: float, x_int: float, f_target: float) -> SpatialGrid:
    """
    Grid whose stretching constant c puts a fraction f_target of the nodes in [0, x_int].

    Raises:
        GridError: if the parameters are inconsistent or no c reaches f_target
    """
    if n_x < 2:
        raise GridError("N_x must be at least 2")
    if not 0 < x_int < x_max:
        raise GridError(f"need 0 < x_int < x_max, got x_int={x_int}, x_max={x_max}")
    uniform_fraction = x_int / x_max
    if f_target < uniform_fraction - 1e-15 or f_target > 1.0:
        raise GridError(f"F_target {f_target} outside [{uniform_fraction:.6g}, 1]")

    if np.isclose(f_target, uniform_fraction, rtol=1e-14, atol=0.0):
        c = np.inf
    else:
        lo, hi = x_int * 1e-6, x_int * 1e6

        def gap(value: float) -> float:
            return interior_fraction(value, x_int, x_max) - f_target

        if gap(lo) * gap(hi) > 0:
            raise GridError(f"F_target {f_target} not reachable for c in [{lo:g}, {hi:g}]")
        c = optimize.brentq(gap, lo, hi, xtol=1e-14 * x_int, rtol=1e-14, maxiter=500)

    xi_max = float(_phi_inverse(np.float64(x_max), c, x_int))
    xi = np.linspace(0.0, xi_max, n_x + 1)
    nodes = _phi(xi, c, x_int)
    nodes[0], nodes[-1] = 0.0, x_max
    logger.debug("spatial grid N_x=%d c=%.6g", n_x, c)
    return SpatialGrid(n_x=n_x, x_max=x_max, x_int=x_int, c=float(c), nodes=nodes)


def is_7_smooth(n: int) -> bool:
    """True when n has no prime factor above 7."""
    if n < 1:
        return False
    for p in (2, 3, 5, 7):
        while n % p == 0:
            n //= p
    return n == 1


@dataclass(frozen=True)
class YGrids:
    """Log-spaced grids on which the jump sum becomes a cross-correlation."""
    n_z: int
    h_z: float
    ny_minus: int
    ny_plus: int
    ny_star: int

    @property
    def sharp_in(self) -> int:
        return 2 * self.n_z + self.ny_minus + self.ny_plus

    @property
    def sharp_out(self) -> int:
        return self.ny_minus + self.ny_plus + 1

    @property
    def y_out(self) -> np.ndarray:
        m = np.arange(-self.ny_minus, self.ny_plus + 1)
        return np.exp(m * self.h_z)

    @property
    def y_in(self) -> np.ndarray:
        m = np.arange(-self.n_z - self.ny_minus, self.n_z + self.ny_plus)
        return np.exp((m + 0.5) * self.h_z)


def build_ygrids(n_z: int, h_z: float, x_1: float, x_max: float) -> YGrids:
    """
    y-grids covering [x_1, x_max], padded on both sides until sharp_in is 7-smooth.

    N_y^- may come out negative when x_1 > 1; the grids then start above 1.
    """
    if x_1 <= 0 or x_max <= 1:
        raise GridError("need x_1 > 0 and x_max > 1")
    base_minus = int(np.ceil(-np.log(x_1) / h_z))
    base_plus = int(np.ceil(np.log(x_max) / h_z))
    star = 0
    while not is_7_smooth(2 * n_z + base_minus + base_plus + 2 * star):
        star += 1
    grids = YGrids(n_z=n_z, h_z=h_z, ny_minus=base_minus + star, ny_plus=base_plus + star, ny_star=star)
    logger.debug("y-grids: sharp_in=%d sharp_out=%d N_y*=%d", grids.sharp_in, grids.sharp_out, star)
    return grids


def sl_departure_grid(grid: SpatialGrid, kappa_w, h_t: float) -> np.ndarray:
    """Departure points x_m exp(kappa_w^(i) h_t), one row per axis."""
    if h_t <= 0:
        raise GridError("time step must be positive")
    kappa_w = np.asarray(kappa_w, dtype=float)
    return grid.nodes[None, :] * np.exp(kappa_w[:, None] * h_t)
