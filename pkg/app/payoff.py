import numpy as np

from app.grids import SpatialGrid
from app.models import PayoffSpec


def payoff_eval(spec: PayoffSpec, x) -> np.ndarray:
    """Put on the average, max(K - (x1 + x2)/2, 0); x of shape (..., 2)."""
    x = np.asarray(x, dtype=float)
    value = np.maximum(spec.K - 0.5 * (x[..., 0] + x[..., 1]), 0.0)
    return value if value.ndim else float(value)


def _ramp_cube(t):
    return np.maximum(t, 0.0) ** 3 / 6.0


def cell_average(spec: PayoffSpec, a1, b1, a2, b2):
    """
    Exact mean of the payoff over [a1, b1] x [a2, b2].

    The integral of (s - x1 - x2)_+ with s = 2K over a rectangle is the mixed
    second difference of t_+^3/6 at the four corners; measured from the lower
    corner it covers every way the kink line can cut the cell. Cells entirely
    in or out of the money short-circuit to the exact linear values.
    """
    a1, b1, a2, b2 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a1, b1, a2, b2)))
    s = 2.0 * spec.K
    w1, w2 = b1 - a1, b2 - a2
    t0 = s - a1 - a2

    straddle = 0.5 * (
        _ramp_cube(t0) - _ramp_cube(t0 - w1) - _ramp_cube(t0 - w2) + _ramp_cube(t0 - w1 - w2)
    ) / (w1 * w2)
    centroid = spec.K - 0.25 * (a1 + b1 + a2 + b2)
    value = np.where(t0 - w1 - w2 >= 0.0, centroid, np.where(t0 <= 0.0, 0.0, straddle))
    return value if value.ndim else float(value)


def kink_cells(spec: PayoffSpec, grid: SpatialGrid) -> np.ndarray:
    """Mask [m1, m2] of half-open cells whose sum range [lo, hi) contains 2K."""
    lo = grid.half_nodes[:-1]
    hi = grid.half_nodes[1:]
    s = 2.0 * spec.K
    return (lo[:, None] + lo[None, :] <= s) & (s < hi[:, None] + hi[None, :])


def initial_vector(spec: PayoffSpec, grid: SpatialGrid) -> np.ndarray:
    """Payoff on the grid, cell-averaged on the kink; flattened with m1 varying fastest."""
    x = grid.nodes
    values = np.maximum(spec.K - 0.5 * (x[:, None] + x[None, :]), 0.0)
    mask = kink_cells(spec, grid)
    m1, m2 = np.nonzero(mask)
    h = grid.half_nodes
    values[mask] = cell_average(spec, h[m1], h[m1 + 1], h[m2], h[m2 + 1])
    return values.ravel(order="F")
