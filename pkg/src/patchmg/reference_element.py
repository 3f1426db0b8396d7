"""One-dimensional building blocks on the reference interval [0, 1].

Everything multi-dimensional in this package is a tensor product of the
objects defined here: Gauss quadrature, Lagrange shape functions on
Gauss-Lobatto support points, 1D cell/patch mass and stiffness matrices,
and the generalized eigendecomposition used by the fast diagonalization
patch solver.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg

from .exceptions import DecompositionError

__all__ = [
    "Quadrature1D",
    "ShapeData1D",
    "PatchMatrices1D",
    "GeneralizedEigenPairs",
    "gauss_quadrature",
    "gauss_lobatto_points",
    "shape_data_1d",
    "cell_matrices_1d",
    "patch_matrices_1d",
    "generalized_eigendecomposition",
]


@dataclass(frozen=True)
class Quadrature1D:
    points: np.ndarray
    weights: np.ndarray

    @property
    def size(self):
        return len(self.points)


@dataclass(frozen=True)
class ShapeData1D:
    """Lagrange basis of degree ``degree`` tabulated at quadrature points.

    ``values[b, q]`` is phi_b(x_q) and ``gradients[b, q]`` its derivative on
    the reference interval.
    """

    degree: int
    support_points: np.ndarray
    quadrature: Quadrature1D
    values: np.ndarray
    gradients: np.ndarray


@dataclass(frozen=True)
class PatchMatrices1D:
    degree: int
    h: float
    M: np.ndarray
    K: np.ndarray


@dataclass(frozen=True)
class GeneralizedEigenPairs:
    T: np.ndarray
    Lambda: np.ndarray


def gauss_quadrature(n):
    """Gauss-Legendre rule with ``n`` points on [0, 1].

    Exact for polynomials of degree ``2n - 1``.
    """
    if n < 1:
        raise ValueError(f"number of quadrature points must be >= 1, got {n}")
    x, w = np.polynomial.legendre.leggauss(n)
    return Quadrature1D(points=0.5 * (x + 1.0), weights=0.5 * w)


@lru_cache(maxsize=None)
def _lobatto(p):
    interior = np.polynomial.legendre.Legendre.basis(p).deriv().roots()
    pts = np.concatenate(([-1.0], np.sort(interior.real), [1.0]))
    pts = 0.5 * (pts + 1.0)
    # enforce exact symmetry about 1/2
    pts = 0.5 * (pts + (1.0 - pts[::-1]))
    pts.setflags(write=False)
    return pts


def gauss_lobatto_points(p):
    """The ``p + 1`` Gauss-Lobatto points on [0, 1], endpoints included."""
    if p < 1:
        raise ValueError(f"degree must be >= 1, got {p}")
    return _lobatto(p)


def _lagrange_tables(nodes, x):
    """Values and derivatives of the Lagrange basis on ``nodes`` at ``x``."""
    n = len(nodes)
    values = np.ones((n, len(x)))
    grads = np.zeros((n, len(x)))
    for b in range(n):
        others = [nodes[k] for k in range(n) if k != b]
        denom = np.prod([nodes[b] - o for o in others])
        values[b] = np.prod([x - o for o in others], axis=0) / denom
        for m in range(len(others)):
            rest = [others[k] for k in range(len(others)) if k != m]
            grads[b] += np.prod([x - o for o in rest], axis=0) / denom
    return values, grads


def shape_data_1d(p, quad):
    if p < 1:
        raise ValueError(f"degree must be >= 1, got {p}")
    support = gauss_lobatto_points(p)
    values, grads = _lagrange_tables(support, np.asarray(quad.points, dtype=float))
    return ShapeData1D(p, support, quad, values, grads)


@lru_cache(maxsize=None)
def _reference_cell_matrices(p):
    quad = gauss_quadrature(p + 1)
    shape = shape_data_1d(p, quad)
    w = quad.weights
    M = (shape.values * w) @ shape.values.T
    K = (shape.gradients * w) @ shape.gradients.T
    # BLAS may round the two triangles differently; make symmetry exact
    return 0.5 * (M + M.T), 0.5 * (K + K.T)


def cell_matrices_1d(p, h):
    """Mass and stiffness matrix of one 1D cell of size ``h``.

    Returns ``(M_cell, K_cell)``, both ``(p+1, p+1)``.
    """
    if p < 1:
        raise ValueError(f"degree must be >= 1, got {p}")
    if not h > 0:
        raise ValueError(f"cell size must be positive, got {h}")
    M, K = _reference_cell_matrices(p)
    return h * M, K / h


def patch_matrices_1d(p, h):
    """Interior mass/stiffness matrices of a two-cell 1D patch.

    The two patch-boundary nodes are eliminated, leaving ``2p - 1`` rows.
    """
    Mc, Kc = cell_matrices_1d(p, h)
    n = 2 * p + 1
    M = np.zeros((n, n))
    K = np.zeros((n, n))
    for start in (0, p):
        M[start:start + p + 1, start:start + p + 1] += Mc
        K[start:start + p + 1, start:start + p + 1] += Kc
    return PatchMatrices1D(p, float(h), M[1:-1, 1:-1].copy(), K[1:-1, 1:-1].copy())


def generalized_eigendecomposition(K, M=None):
    """Solve ``K T = M T diag(Lambda)`` for symmetric ``K`` and SPD ``M``.

    The returned ``T`` is M-orthonormal (``T^T M T = I``).

    Parameters
    ----------
    K, M : array_like or PatchMatrices1D
        If ``K`` is a :class:`PatchMatrices1D`, its ``K`` and ``M`` are used
        and ``M`` may be omitted.
    """
    if isinstance(K, PatchMatrices1D):
        K, M = K.K, K.M
    K = np.asarray(K, dtype=float)
    M = np.asarray(M, dtype=float)
    try:
        lam, T = scipy.linalg.eigh(K, M)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError("mass matrix is not symmetric positive definite") from exc
    return GeneralizedEigenPairs(T=T, Lambda=lam)
