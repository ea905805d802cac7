"""Dense third-order tensor utilities.

A spectral image is a plain float64 ndarray of shape (I, J, K): two spatial
axes and one spectral axis.  The canonical memory layout is Fortran order
(first index fastest), which makes the pixels-by-bands unfolding a zero-copy
reshape.
"""

import numpy as np
import scipy.linalg

from .errors import DimensionError


def unfold(tensor):
    """Unfold (I, J, K) into the (I*J, K) pixels-by-bands matrix.

    Row ``l`` holds the spectral fiber ``tensor[l % I, l // I, :]``, i.e.
    pixels are enumerated down the first spatial axis, then across the second.
    """
    i, j, k = tensor.shape
    return np.reshape(tensor, (i * j, k), order="F")


def refold(matrix, dims):
    """Fold a pixels-by-bands matrix back into an (I, J, K) tensor."""
    i, j, k = dims
    if matrix.shape != (i * j, k):
        raise DimensionError(
            f"cannot refold a {matrix.shape} matrix into dims {tuple(dims)}"
        )
    return np.reshape(matrix, (i, j, k), order="F")


def kron(a, b):
    """Kronecker product: block (i, j) of the result is ``a[i, j] * b``."""
    return np.kron(a, b)


def khatri_rao_col(a, b):
    """Columnwise Khatri-Rao product: column j is ``kron(a[:, j], b[:, j])``."""
    if a.shape[1] != b.shape[1]:
        raise DimensionError(
            f"columnwise Khatri-Rao needs equal column counts, got {a.shape} and {b.shape}"
        )
    return scipy.linalg.khatri_rao(a, b)


def frobenius_norm(tensor):
    """Square root of the sum of squared entries."""
    return float(np.linalg.norm(np.ravel(tensor)))


def ensure_finite(arr, label="array"):
    """Raise ValueError if ``arr`` contains NaN or infinities."""
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{label} contains non-finite entries")
    return arr
