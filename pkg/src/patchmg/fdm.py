"""Exact inverse of the vertex-patch interior Laplacian by fast diagonalization.

On a Cartesian patch the interior matrix is a Kronecker sum of 1D mass and
stiffness matrices. With the M-orthonormal generalized eigenvectors ``T`` of
``K T = M T diag(lam)`` its inverse is::

    A^{-1} = (T x ... x T) diag(1 / (lam_i + lam_j [+ lam_k])) (T x ... x T)^T

applied one direction at a time.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels as kern
from .reference_element import generalized_eigendecomposition, patch_matrices_1d

__all__ = ["FdmDecomposition", "build_fdm", "apply_fdm"]


@dataclass(frozen=True)
class FdmDecomposition:
    """Per-direction eigenpairs plus the reciprocal eigenvalue-sum tensor.

    ``T`` and ``inv_lambda`` use the kernel axis layout (z, y, x); unused
    axes carry the trivial factor ``[[1]]``.
    """

    dim: int
    degree: int
    h: float
    eigenvectors: np.ndarray
    eigenvalues: np.ndarray
    T: tuple
    inv_lambda: np.ndarray
    active: np.ndarray

    @property
    def lambda_sum(self):
        return 1.0 / self.inv_lambda

    @property
    def interior_shape(self):
        return self.inv_lambda.shape


@lru_cache(maxsize=None)
def build_fdm(p, h, d):
    """Fast-diagonalization data for a patch of ``2**d`` cells of size ``h``."""
    if not h > 0:
        raise ValueError(f"cell size must be positive, got {h}")
    pairs = generalized_eigendecomposition(patch_matrices_1d(p, h))
    T = np.ascontiguousarray(pairs.T)
    lam = pairs.Lambda
    Ts, lams = [], []
    active = np.zeros(3, dtype=np.int64)
    for a in range(3):
        if a >= 3 - d:
            Ts.append(T)
            lams.append(lam)
            active[a] = 1
        else:
            Ts.append(np.ones((1, 1)))
            lams.append(np.zeros(1))
    total = lams[0][:, None, None] + lams[1][None, :, None] + lams[2][None, None, :]
    inv = 1.0 / total
    return FdmDecomposition(d, p, float(h), T, lam, tuple(Ts), inv, active)


def apply_fdm(fdm, r):
    """Solve ``A_j d = r`` for a flat interior-local residual ``r``."""
    shape = fdm.interior_shape
    r = np.asarray(r, dtype=float)
    if r.size != np.prod(shape):
        raise ValueError(f"residual has {r.size} entries, patch interior has {np.prod(shape)}")
    r = np.ascontiguousarray(r).reshape(shape)
    out = np.empty(shape)
    kern.fdm_kernel(r, out, fdm.T, fdm.inv_lambda, fdm.active, np.empty((2,) + shape))
    return out.ravel()
