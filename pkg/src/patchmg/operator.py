"""Matrix-free Laplace operator on a uniform Cartesian level."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import as_strided

from . import _kernels as kern
from .dofs import LevelSpace
from .reference_element import gauss_quadrature, shape_data_1d

__all__ = ["CellOperatorData", "cell_operator_data", "LaplaceOperator", "NO_TRACE"]

NO_TRACE = (np.zeros(0, dtype=np.int64), np.zeros(1, dtype=np.int64))


@dataclass(frozen=True)
class CellOperatorData:
    """Tables shared by every cell of a level.

    ``S[a]``/``D[a]`` are ``(n_q, p+1)`` value/gradient tables along kernel
    axis ``a`` (z, y, x); ``W`` folds the quadrature weights, the Jacobian
    determinant ``h**d`` and the ``h**-2`` gradient scaling into one tensor.
    """

    dim: int
    degree: int
    h: float
    S: tuple
    D: tuple
    W: np.ndarray
    active: np.ndarray

    @property
    def cell_shape(self):
        return tuple(s.shape[1] for s in self.S)


@lru_cache(maxsize=None)
def cell_operator_data(dim, degree, h, sign=1.0):
    quad = gauss_quadrature(degree + 1)
    shape = shape_data_1d(degree, quad)
    one, zero = np.ones((1, 1)), np.zeros((1, 1))
    S, D, w = [], [], []
    active = np.zeros(3, dtype=np.int64)
    for a in range(3):
        if a >= 3 - dim:
            S.append(np.ascontiguousarray(shape.values.T))
            D.append(np.ascontiguousarray(shape.gradients.T))
            w.append(quad.weights)
            active[a] = 1
        else:
            S.append(one)
            D.append(zero)
            w.append(np.ones(1))
    W = np.einsum("i,j,k->ijk", *w) * sign * h ** (dim - 2)
    return CellOperatorData(dim, degree, h, tuple(S), tuple(D), W, active)


def _contract(X, mat, a):
    """Apply ``mat`` (q, i) to the local index of cell axis ``a`` of a
    tensor laid out as (c_0, i_0, c_1, i_1, ...)."""
    s = X.shape
    k = 2 * a + 1
    if k == len(s) - 1:
        return (X.reshape(-1, s[-1]) @ mat.T).reshape(s[:-1] + (mat.shape[0],))
    pre = int(np.prod(s[:k]))
    post = int(np.prod(s[k + 1:]))
    Y = np.matmul(mat, X.reshape(pre, s[k], post))
    return Y.reshape(s[:k] + (mat.shape[0],) + s[k + 1:])


def _fold(X, k, p):
    """Sum the (cell, local) axis pair at position ``k`` into global nodes."""
    X = np.moveaxis(X, (k, k + 1), (-2, -1))
    s = X.shape
    c = s[-2]
    out = np.empty(s[:-2] + (c * p + 1,))
    out[..., :c * p] = X[..., :p].reshape(s[:-2] + (c * p,))
    out[..., -1] = 0.0
    out[..., p::p] += X[..., p]
    return np.moveaxis(out, -1, k)


class LaplaceOperator:
    """Action of the stiffness matrix A_l of the Q_p Laplacian with
    homogeneous Dirichlet conditions on the unit hypercube.

    Parameters
    ----------
    space : LevelSpace
        Level on which the operator acts.

    Notes
    -----
    ``cell_apply_count`` accumulates the number of per-cell kernel
    invocations issued through this object (vmult, residuals, patch
    residuals).
    """

    # doubles per vmult temporary; keeps a slab's working set in L2
    SLAB_VALUES = 1 << 15

    def __init__(self, space: LevelSpace, sign=1.0):
        self.space = space
        # sign != 1 only exists as a mutation hook for self-validation
        self.data = cell_operator_data(space.dim, space.degree, space.h, sign)
        self.cell_apply_count = 0

    @property
    def n_cells(self):
        return self.space.cells_per_dim ** self.space.dim

    def cell_apply(self, u_cell):
        """Stiffness action of one cell on lexicographic cell values."""
        shape = self.data.cell_shape
        u = np.ascontiguousarray(u_cell, dtype=float).reshape(shape)
        out = np.empty(shape)
        kern.cell_kernel(u, out, self.data.S, self.data.D, self.data.W, self.data.active,
                         np.empty((6,) + shape))
        self.cell_apply_count += 1
        return out.ravel()

    def _vmult_into(self, u, dst, sign, trace=NO_TRACE, tracing=False, metadata=False,
                    dst_id=kern.ARRAY_R):
        counter = np.zeros(1, dtype=np.int64)
        d = self.data
        kern.vmult_add(u, dst, self.space.geometry, d.S, d.D, d.W, sign, counter,
                       trace[0], trace[1], tracing, metadata, dst_id)
        self.cell_apply_count += int(counter[0])

    def vmult(self, u, out=None):
        """Return ``A u``; boundary entries of the result are zero.

        Cells are processed in slabs along the slowest axis. Within a slab
        the cell-local values are a strided view of the node grid, each
        sum-factorization step is one batched matrix product over all cells
        of the slab, and the contributions are folded back onto shared
        nodes. Slabs are sized to keep the temporaries cache resident. This
        is the fast path used as timing baseline; :meth:`residual` walks
        cells one at a time so that its memory accesses can be traced.
        """
        sp = self.space
        u = sp.check_vector(u, "u")
        d, p = sp.dim, sp.degree
        nc, n = sp.cells_per_dim, p + 1
        grid = u.reshape(sp.grid_shape)
        if out is None:
            out = np.empty(sp.n_dofs)
        res = out.reshape(sp.grid_shape)
        res[:] = 0.0
        axes = range(3 - d, 3)
        S = [self.data.S[a] for a in axes]
        D = [self.data.D[a] for a in axes]
        W = self.data.W.reshape(sum(([1, n] for _ in range(d)), []))
        cells_per_row = nc ** (d - 1)
        rows = max(1, min(nc, self.SLAB_VALUES // (cells_per_row * n ** d)))
        for r0 in range(0, nc, rows):
            nr = min(rows, nc - r0)
            shape, strides = [nr, n], [p * grid.strides[0], grid.strides[0]]
            for a in range(1, d):
                shape += [nc, n]
                strides += [p * grid.strides[a], grid.strides[a]]
            U = np.ascontiguousarray(
                as_strided(grid[r0 * p:], shape, strides, writeable=False))
            acc = None
            for g in range(d):
                X = U
                for a in range(d):
                    X = _contract(X, D[a] if a == g else S[a], a)
                X *= W
                for a in range(d):
                    X = _contract(X, (D[a] if a == g else S[a]).T, a)
                if acc is None:
                    acc = X
                else:
                    acc += X
            for k in range(d):
                acc = _fold(acc, k, p)
            res[r0 * p:(r0 + nr) * p + 1] += acc
        self.cell_apply_count += self.n_cells
        out[sp.boundary_mask] = 0.0
        return out

    def residual(self, u, b, out=None, trace=NO_TRACE, tracing=False, metadata=False):
        """Return ``b - A u`` with zero boundary entries.

        With ``tracing`` the cell-by-cell kernel runs and logs its accesses
        into ``trace``; otherwise the result comes from :meth:`vmult`.
        """
        u = self.space.check_vector(u, "u")
        b = self.space.check_vector(b, "b")
        if out is None:
            out = np.empty(self.space.n_dofs)
        if not tracing:
            self.vmult(u, out)
            np.subtract(b, out, out=out)
            out[self.space.boundary_mask] = 0.0
            return out
        kern.zero_fill(out, trace[0], trace[1], tracing, kern.ARRAY_R)
        self._vmult_into(u, out, 1.0, trace, tracing, metadata)
        kern.finish_residual(out, b, self.space.geometry, trace[0], trace[1], tracing)
        return out

    def patch_residual(self, vertex, u, b):
        """Local residual ``Pi_j b - Pi_j A_bar_j u_bar_j`` of one patch.

        Computed from the patch cells only; returned as a flat
        interior-local array in lexicographic patch order.
        """
        sp = self.space
        u = sp.check_vector(u, "u")
        b = sp.check_vector(b, "b")
        v = sp.kernel_vertices(vertex)[0]
        geo = sp.geometry
        rint = np.empty(tuple(geo[6]))
        counter = np.zeros(1, dtype=np.int64)
        d = self.data
        kern.patch_residual_alloc(u, b, v, geo, d.S, d.D, d.W, rint, counter)
        self.cell_apply_count += int(counter[0])
        return rint.ravel()
