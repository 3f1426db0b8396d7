"""Brute-force references for testing: explicit Kronecker-sum assembly and
dense direct solves. Nothing here goes through the sum-factorization
kernels, so agreement with them is an independent check.
"""

from dataclasses import dataclass
from functools import reduce

import numpy as np

from .dofs import LevelSpace
from .exceptions import DecompositionError, ResourceError
from .reference_element import cell_matrices_1d, patch_matrices_1d

__all__ = [
    "DenseMatrix",
    "MAX_DENSE_SIZE",
    "global_matrices_1d",
    "assemble_dense",
    "kronecker_matvec",
    "dense_patch_matrix",
    "direct_solve",
    "dense_solution",
]

MAX_DENSE_SIZE = 20_000


@dataclass(frozen=True)
class DenseMatrix:
    """Interior block of ``A_l``; ``indices`` are the global node numbers of
    the rows (``None`` for a patch-local matrix)."""

    matrix: np.ndarray
    indices: np.ndarray | None = None

    @property
    def size(self):
        return self.matrix.shape[0]

    def matvec_global(self, u):
        """Apply to a global vector; boundary entries of the result are 0."""
        out = np.zeros(len(u))
        out[self.indices] = self.matrix @ u[self.indices]
        return out


def global_matrices_1d(p, level):
    """Assembled 1D mass and stiffness on ``2**(level+1)`` cells, boundary included."""
    n_cells = 2 ** (level + 1)
    h = 1.0 / n_cells
    Mc, Kc = cell_matrices_1d(p, h)
    n = p * n_cells + 1
    M = np.zeros((n, n))
    K = np.zeros((n, n))
    for c in range(n_cells):
        s = slice(c * p, c * p + p + 1)
        M[s, s] += Mc
        K[s, s] += Kc
    return M, K


def _kron_sum(M, K, d):
    terms = []
    for i in range(d):
        # position d-1-i in the Kronecker product is axis i (x is last)
        factors = [K if j == d - 1 - i else M for j in range(d)]
        terms.append(reduce(np.kron, factors))
    return sum(terms)


def assemble_dense(d, p, level, max_size=MAX_DENSE_SIZE):
    """Dense ``A_l`` with Dirichlet rows and columns eliminated."""
    n_int = (p * 2 ** (level + 1) - 1) ** d
    if n_int > max_size:
        raise ResourceError(f"{n_int} interior DoFs exceed the dense cap of {max_size}")
    M, K = global_matrices_1d(p, level)
    M, K = M[1:-1, 1:-1], K[1:-1, 1:-1]
    space = LevelSpace(d, p, level)
    return DenseMatrix(_kron_sum(M, K, d), space.interior_indices)


def kronecker_matvec(d, p, level, u):
    """``A_l u`` from the explicit Kronecker sum, applied factor by factor.

    Same algebra as :func:`assemble_dense` without forming the matrix, for
    levels too large for dense storage.
    """
    M, K = global_matrices_1d(p, level)
    M, K = M[1:-1, 1:-1], K[1:-1, 1:-1]
    space = LevelSpace(d, p, level)
    n = space.nodes_per_dim
    grid = np.asarray(u, dtype=float).reshape((n,) * d)[(slice(1, -1),) * d]
    out = np.zeros_like(grid)
    for i in range(d):
        t = grid
        for axis in range(d):
            mat = K if axis == d - 1 - i else M
            t = np.moveaxis(np.tensordot(mat, t, axes=([1], [axis])), 0, axis)
        out += t
    full = np.zeros((n,) * d)
    full[(slice(1, -1),) * d] = out
    return full.ravel()


def dense_patch_matrix(p, h, d):
    """Interior matrix of one vertex patch as an explicit Kronecker sum."""
    pm = patch_matrices_1d(p, h)
    return DenseMatrix(_kron_sum(pm.M, pm.K, d))


def direct_solve(A, rhs):
    """Cholesky solve of ``A x = rhs``."""
    mat = A.matrix if isinstance(A, DenseMatrix) else np.asarray(A, dtype=float)
    try:
        L = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError("matrix is not symmetric positive definite") from exc
    y = np.linalg.solve(L, rhs)
    return np.linalg.solve(L.T, y)


def dense_solution(d, p, level, b):
    """Exact discrete solution for a global right-hand side ``b``."""
    A = assemble_dense(d, p, level)
    u = np.zeros(len(b))
    u[A.indices] = direct_solve(A, np.asarray(b)[A.indices])
    return u
