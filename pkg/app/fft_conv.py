"""
Jump operator B_omega applied through circulant embedding.

On the log-spaced grids the jump sum is a 2-D cross-correlation of the
interpolated values with the weight matrix Omega. Padding Omega to
sharp_in x sharp_in makes it circular, so it costs two forward transforms and
one elementwise product per application; the output block
[0, sharp_out)^2 never wraps around.
"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
import scipy.linalg

from app.grids import YGrids
from app.spatial_ops import TensorInterpolator

logger = logging.getLogger(__name__)

_DENSE_LIMIT = 4096


@dataclass(frozen=True)
class CirculantKernel:
    sharp_in: int
    sharp_out: int
    weights: np.ndarray
    spectrum: np.ndarray
    selection_map: np.ndarray

    @property
    def first_row(self) -> np.ndarray:
        """C_{1,.}: the padded weights flattened with the first index fastest."""
        return self.weights.ravel(order="F")


def build_kernel(omega: np.ndarray, ygrids: YGrids) -> CirculantKernel:
    """
    Pad Omega into the first block of a sharp_in x sharp_in array and transform it once.

    Raises:
        ValueError: if Omega does not match the y-grids
    """
    omega = np.asarray(omega, dtype=float)
    size = 2 * ygrids.n_z
    if omega.shape != (size, size):
        raise ValueError(f"omega has shape {omega.shape}, expected {(size, size)}")
    n = ygrids.sharp_in
    if n < size:
        raise ValueError(f"sharp_in={n} smaller than the weight block {size}")

    weights = np.zeros((n, n))
    weights[:size, :size] = omega
    k = np.arange(ygrids.sharp_out)
    selection = np.add.outer(k, n * k).ravel(order="F")
    return CirculantKernel(
        sharp_in=n,
        sharp_out=ygrids.sharp_out,
        weights=weights,
        spectrum=sfft.fft2(weights),
        selection_map=selection,
    )


def circular_correlation(kernel: CirculantKernel, values: np.ndarray, workers: int | None = None) -> np.ndarray:
    """Complex result of sum_s W[s] A[k + s mod n] over the full sharp_in x sharp_in torus."""
    transformed = sfft.fft2(values, workers=workers)
    transformed *= np.conj(kernel.spectrum)
    return sfft.ifft2(transformed, workers=workers, overwrite_x=True)


def apply_B(
    kernel: CirculantKernel,
    t_in: TensorInterpolator,
    t_out: TensorInterpolator,
    v: np.ndarray,
    workers: int | None = None,
) -> np.ndarray:
    """B_omega v = T^out I~ C T^in v, without forming any of the matrices."""
    n_x = t_in.axis1.shape[1]
    grid_values = np.reshape(v, (n_x, n_x), order="F")
    on_y_in = t_in.apply_array(grid_values)
    full = circular_correlation(kernel, on_y_in, workers)
    block = full[: kernel.sharp_out, : kernel.sharp_out]
    result = block.real
    if logger.isEnabledFor(logging.DEBUG):
        scale = max(float(np.abs(result).max()), np.finfo(float).tiny)
        logger.debug("B_omega imaginary residue %.2e", float(np.abs(block.imag).max()) / scale)
    return t_out.apply_array(np.ascontiguousarray(result)).ravel(order="F")


def circulant_matrix(kernel: CirculantKernel) -> np.ndarray:
    """Dense C with C[k, j] = C_{1, (j - k) mod n}; only for small kernels."""
    if kernel.sharp_in**2 > _DENSE_LIMIT:
        raise ValueError(f"refusing to materialise a {kernel.sharp_in**2}^2 circulant")
    return scipy.linalg.circulant(kernel.first_row).T


def dense_reference(kernel: CirculantKernel, t_in: TensorInterpolator, t_out: TensorInterpolator) -> np.ndarray:
    """Explicit B_omega = T^out I~ C T^in for oracle comparisons."""
    selected = circulant_matrix(kernel)[kernel.selection_map]
    return t_out.to_sparse().toarray() @ selected @ t_in.to_sparse().toarray()
