"""Geometric multigrid: embedding transfers, V-cycle, stationary solver."""

import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sps

from .dofs import LevelSpace
from .level import Level
from .reference_element import _lagrange_tables, gauss_lobatto_points
from .smoothers import smooth

__all__ = [
    "Prolongation1D",
    "prolongation_1d",
    "prolongate",
    "restrict",
    "assemble_rhs",
    "SolveConfig",
    "SolveResult",
    "MultigridSolver",
]


@dataclass(frozen=True)
class Prolongation1D:
    """``E_left[a, b]`` is coarse basis ``b`` evaluated at the ``a``-th
    support point of the left child cell (likewise ``E_right``)."""

    E_left: np.ndarray
    E_right: np.ndarray


@lru_cache(maxsize=None)
def prolongation_1d(p):
    pts = gauss_lobatto_points(p)
    left, _ = _lagrange_tables(pts, 0.5 * pts)
    right, _ = _lagrange_tables(pts, 0.5 + 0.5 * pts)
    return Prolongation1D(left.T.copy(), right.T.copy())


@lru_cache(maxsize=None)
def _global_prolongation_1d(p, coarse_level):
    """Sparse ``(n_fine, n_coarse)`` 1D embedding, boundary nodes included."""
    E = prolongation_1d(p)
    nc = 2 ** (coarse_level + 1)
    n_fine, n_coarse = 2 * nc * p + 1, nc * p + 1
    P = np.zeros((n_fine, n_coarse))
    for c in range(nc):
        cols = slice(c * p, c * p + p + 1)
        # shared fine nodes get identical rows from both neighbours: set, not add
        P[2 * c * p:2 * c * p + p + 1, cols] = E.E_left
        P[(2 * c + 1) * p:(2 * c + 1) * p + p + 1, cols] = E.E_right
    P[np.abs(P) < 1e-15] = 0.0
    return sps.csr_matrix(P)


def _apply_axes(P, grid):
    for axis in range(grid.ndim):
        moved = np.moveaxis(grid, axis, 0)
        shape = moved.shape
        out = P @ moved.reshape(shape[0], -1)
        grid = np.moveaxis(np.asarray(out).reshape((P.shape[0],) + shape[1:]), 0, axis)
    return grid


def prolongate(coarse, d, p, level):
    """Embed a level-``level`` vector into level ``level + 1``.

    Boundary entries of the input are treated as zero, so the map is
    ``Z_fine P Z_coarse`` with ``Z`` zeroing Dirichlet nodes.
    """
    cs, fs = LevelSpace(d, p, level), LevelSpace(d, p, level + 1)
    coarse = np.asarray(coarse, dtype=float)
    if coarse.shape != (cs.n_dofs,):
        raise ValueError(f"coarse vector has length {coarse.size}, expected {cs.n_dofs}")
    x = np.where(cs.boundary_mask, 0.0, coarse).reshape(cs.grid_shape)
    fine = _apply_axes(_global_prolongation_1d(p, level), x).ravel()
    fine[fs.boundary_mask] = 0.0
    return np.ascontiguousarray(fine)


def restrict(fine, d, p, level):
    """Transpose of :func:`prolongate`: level ``level + 1`` -> ``level``."""
    cs, fs = LevelSpace(d, p, level), LevelSpace(d, p, level + 1)
    fine = np.asarray(fine, dtype=float)
    if fine.shape != (fs.n_dofs,):
        raise ValueError(f"fine vector has length {fine.size}, expected {fs.n_dofs}")
    x = np.where(fs.boundary_mask, 0.0, fine).reshape(fs.grid_shape)
    coarse = _apply_axes(_global_prolongation_1d(p, level).T.tocsr(), x).ravel()
    coarse[cs.boundary_mask] = 0.0
    return np.ascontiguousarray(coarse)


def assemble_rhs(space, f=1.0):
    """Load vector ``b_i = int f phi_i`` for a constant source ``f``."""
    from .oracle import global_matrices_1d

    M, _ = global_matrices_1d(space.degree, space.level)
    m = M.sum(axis=1)
    b = m
    for _ in range(space.dim - 1):
        b = np.multiply.outer(m, b)
    b = f * b.ravel()
    b[space.boundary_mask] = 0.0
    return b


@dataclass
class SolveConfig:
    """V-cycle and outer iteration parameters.

    ``variant``/``ordering``/``batch_size``/``threads`` configure the patch
    smoother on every level; post-smoothing runs the schedule backwards when
    ``post_order`` is ``"reversed"``.
    """

    pre_smooth: int = 1
    post_smooth: int = 1
    post_order: str = "reversed"
    tol: float = 1e-12
    max_iter: int = 50
    variant: str = "combined_colorized"
    ordering: str = "z_curve"
    batch_size: int | None = None
    threads: int = 1

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.pre_smooth < 0 or self.post_smooth < 0 or self.pre_smooth + self.post_smooth < 1:
            raise ValueError("need pre_smooth, post_smooth >= 0 with at least one sweep")
        if self.post_order not in ("forward", "reversed"):
            raise ValueError(f"unknown post order {self.post_order!r}")
        if self.variant == "richardson":
            raise ValueError("richardson is not available as multigrid smoother")


@dataclass
class SolveResult:
    u: np.ndarray
    iterations: int
    converged: bool
    residuals: list
    timings: dict = field(default_factory=dict)

    @property
    def relative_residual(self):
        r0 = self.residuals[0]
        return self.residuals[-1] / r0 if r0 > 0 else 0.0


class MultigridSolver:
    """V-cycle solver for the Q_p Poisson problem on ``[0, 1]**dim``.

    Level 0 is the mesh with a single interior vertex; its coarse solve is
    one exact patch solve.

    Parameters
    ----------
    dim, degree : int
    level : int
        Finest level.
    config : SolveConfig, optional
    """

    def __init__(self, dim, degree, level, config=None):
        self.config = config or SolveConfig()
        self.dim, self.degree, self.finest = dim, degree, level
        self.levels = [Level.create(dim, degree, l) for l in range(level + 1)]
        cfg = self.config
        colored = cfg.variant not in ("naive", "combined")
        batch = cfg.batch_size if cfg.variant == "batched" else None
        self._pre = [lv.schedule(cfg.ordering, batch, colored) for lv in self.levels]
        self._post = [s.reversed() if cfg.post_order == "reversed" else s for s in self._pre]
        self.timings = self._zero_timings()

    @staticmethod
    def _zero_timings():
        return {"smoothing": 0.0, "residual": 0.0, "transfer": 0.0, "coarse": 0.0}

    @property
    def space(self):
        return self.levels[-1].space

    def rhs(self, f=1.0):
        return assemble_rhs(self.space, f)

    def _smooth(self, l, u, b, schedule):
        t = time.perf_counter()
        smooth(self.config.variant, self.levels[l], u, b, schedule, threads=self.config.threads)
        self.timings["smoothing"] += time.perf_counter() - t

    def v_cycle(self, l, u, b):
        """One V-cycle on level ``l`` updating ``u`` in place."""
        lv = self.levels[l]
        if l == 0:
            t = time.perf_counter()
            smooth("combined", lv, u, b, self._pre[0])
            self.timings["coarse"] += time.perf_counter() - t
            return u
        cfg = self.config
        for _ in range(cfg.pre_smooth):
            self._smooth(l, u, b, self._pre[l])
        t = time.perf_counter()
        r = lv.op.residual(u, b)
        self.timings["residual"] += time.perf_counter() - t
        t = time.perf_counter()
        bc = restrict(r, self.dim, self.degree, l - 1)
        self.timings["transfer"] += time.perf_counter() - t
        ec = np.zeros_like(bc)
        self.v_cycle(l - 1, ec, bc)
        t = time.perf_counter()
        u += prolongate(ec, self.dim, self.degree, l - 1)
        self.timings["transfer"] += time.perf_counter() - t
        for _ in range(cfg.post_smooth):
            self._smooth(l, u, b, self._post[l])
        return u

    def solve(self, b, u0=None):
        """Stationary iteration ``u <- u + V(b - A u)`` until
        ``||r_k|| <= tol ||r_0||`` or ``max_iter`` cycles."""
        self.timings = self._zero_timings()
        lv = self.levels[-1]
        b = lv.space.check_vector(b, "b")
        u = np.zeros(lv.space.n_dofs) if u0 is None else np.array(u0, dtype=float)
        u[lv.space.boundary_mask] = 0.0
        t = time.perf_counter()
        res = [float(np.linalg.norm(lv.op.residual(u, b)))]
        self.timings["residual"] += time.perf_counter() - t
        it = 0
        converged = res[0] == 0.0
        while not converged and it < self.config.max_iter:
            self.v_cycle(self.finest, u, b)
            it += 1
            t = time.perf_counter()
            res.append(float(np.linalg.norm(lv.op.residual(u, b))))
            self.timings["residual"] += time.perf_counter() - t
            converged = res[-1] <= self.config.tol * res[0]
        return SolveResult(u, it, converged, res, dict(self.timings))
