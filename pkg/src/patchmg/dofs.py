"""Degree-of-freedom numbering on one level and vertex-patch index sets.

Nodes of the continuous Q_p space on level ``l`` are numbered
lexicographically (x fastest) over a ``(p * 2**(l+1) + 1)**d`` grid. Boundary
nodes are stored explicitly and pinned to zero.
"""

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from typing import NamedTuple

import numpy as np

__all__ = [
    "n_dofs",
    "LevelSpace",
    "PatchId",
    "PatchIndexSets",
    "patch_index_sets",
    "gather",
    "scatter_add_masked",
]


def n_dofs(d, p, level):
    """Number of nodes (boundary included) of the Q_p space on ``level``."""
    return (p * 2 ** (level + 1) + 1) ** d


class PatchId(NamedTuple):
    """Vertex patch on ``level``; ``vertex`` holds (x, y[, z]) coordinates in
    units of the mesh size, each in ``1 .. 2**(level+1) - 1``."""

    level: int
    vertex: tuple


@dataclass(frozen=True)
class LevelSpace:
    """Continuous Q_p space on level ``level`` of the unit hypercube mesh."""

    dim: int
    degree: int
    level: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.degree < 1:
            raise ValueError(f"degree must be >= 1, got {self.degree}")
        if self.level < 0:
            raise ValueError(f"level must be >= 0, got {self.level}")

    @property
    def cells_per_dim(self):
        return 2 ** (self.level + 1)

    @property
    def h(self):
        return 1.0 / self.cells_per_dim

    @property
    def nodes_per_dim(self):
        return self.degree * self.cells_per_dim + 1

    @property
    def n_dofs(self):
        return self.nodes_per_dim ** self.dim

    @property
    def grid_shape(self):
        """Shape of a vector viewed as a C-ordered grid, axes (..., y, x)."""
        return (self.nodes_per_dim,) * self.dim

    def zeros(self):
        return np.zeros(self.n_dofs)

    @cached_property
    def boundary_mask(self):
        n = self.nodes_per_dim
        mask = np.zeros(self.grid_shape, dtype=bool)
        for axis in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[axis] = 0
            mask[tuple(sl)] = True
            sl[axis] = n - 1
            mask[tuple(sl)] = True
        mask = mask.ravel()
        mask.setflags(write=False)
        return mask

    @cached_property
    def interior_indices(self):
        return np.flatnonzero(~self.boundary_mask)

    def node_index(self, coords):
        """Flat index of the node with integer coordinates (x, y[, z])."""
        n = self.nodes_per_dim
        idx = 0
        for c in reversed(coords):
            idx = idx * n + int(c)
        return idx

    def node_coordinates(self):
        """Physical coordinates of all nodes, shape ``(n_dofs, dim)``, (x, y, z) columns."""
        from .reference_element import gauss_lobatto_points

        pts = gauss_lobatto_points(self.degree)
        n_cells = self.cells_per_dim
        x1 = np.concatenate(
            [(c + pts[:-1]) * self.h for c in range(n_cells)] + [np.array([1.0])]
        )
        grids = np.meshgrid(*([x1] * self.dim), indexing="ij")
        # grids[k] varies along axis k of the C-ordered grid, i.e. coordinate dim-1-k
        return np.stack([g.ravel() for g in reversed(grids)], axis=1)

    @cached_property
    def geometry(self):
        """Integer descriptor consumed by the compiled kernels."""
        p = self.degree
        geo = np.ones((8, 3), dtype=np.int64)
        geo[1, :] = 0
        geo[7, :] = 0
        for a in range(3 - self.dim, 3):
            geo[0, a] = self.nodes_per_dim
            geo[1, a] = p
            geo[2, a] = p + 1
            geo[3, a] = self.cells_per_dim
            geo[4, a] = 2
            geo[5, a] = 2 * p + 1
            geo[6, a] = 2 * p - 1
            geo[7, a] = 1
        geo.setflags(write=False)
        return geo

    def kernel_vertices(self, vertices):
        """Convert (n, dim) vertex coordinates (x, y, z) to kernel (z, y, x) layout."""
        vertices = np.asarray(vertices, dtype=np.int64).reshape(-1, self.dim)
        out = np.ones((len(vertices), 3), dtype=np.int64)
        out[:, 3 - self.dim:] = vertices[:, ::-1]
        return out

    def check_vector(self, v, name="vector"):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n_dofs,):
            raise ValueError(
                f"{name} has shape {v.shape}, expected ({self.n_dofs},) on level {self.level}"
            )
        return v


@dataclass(frozen=True)
class PatchIndexSets:
    """Global indices of one vertex patch.

    ``closure`` lists the ``(2p+1)**d`` patch nodes in lexicographic
    patch-local order, ``interior`` the ``(2p-1)**d`` nodes whose basis
    functions vanish on the patch boundary. ``cell_dofs[c]`` holds the
    ``(p+1)**d`` nodes of the c-th cell, ``write_mask[c]`` marks the closure
    nodes owned by that cell (the lexicographically first cell containing
    the node), and ``cell_local[c]`` maps cell nodes to closure positions.
    """

    closure: np.ndarray
    interior: np.ndarray
    cell_dofs: list
    write_mask: list
    cell_local: list = field(repr=False)
    interior_local: np.ndarray = field(repr=False)


def patch_index_sets(patch, p):
    """Index sets of ``patch`` (a :class:`PatchId`) for degree ``p``."""
    level, vertex = patch
    vertex = tuple(int(c) for c in vertex)
    d = len(vertex)
    space = LevelSpace(d, p, level)
    ncell = space.cells_per_dim
    if any(not 1 <= c <= ncell - 1 for c in vertex):
        raise ValueError(f"vertex {vertex} is not an interior vertex on level {level}")
    n = space.nodes_per_dim
    ncl = 2 * p + 1

    def flat(coords):
        idx = 0
        for c in reversed(coords):
            idx = idx * n + c
        return idx

    starts = [p * (c - 1) for c in vertex]
    # lexicographic: x fastest -> iterate reversed axes in product
    local_coords = [tuple(reversed(t)) for t in product(range(ncl), repeat=d)]
    closure = np.array([flat([s + c for s, c in zip(starts, lc)]) for lc in local_coords])
    is_interior = np.array([all(0 < c < ncl - 1 for c in lc) for lc in local_coords])
    interior_local = np.flatnonzero(is_interior)
    interior = closure[interior_local]

    def local_flat(lc):
        idx = 0
        for c in reversed(lc):
            idx = idx * ncl + c
        return idx

    cell_offsets = [tuple(reversed(t)) for t in product(range(2), repeat=d)]
    node_offsets = [tuple(reversed(t)) for t in product(range(p + 1), repeat=d)]
    owned = np.zeros(len(closure), dtype=bool)
    cell_dofs, write_mask, cell_local = [], [], []
    for co in cell_offsets:
        loc = np.array([local_flat([p * c + o for c, o in zip(co, no)]) for no in node_offsets])
        mask = ~owned[loc]
        owned[loc] = True
        cell_local.append(loc)
        cell_dofs.append(closure[loc])
        write_mask.append(mask)
    return PatchIndexSets(closure, interior, cell_dofs, write_mask, cell_local, interior_local)


def gather(v, idx):
    """Copy ``v[idx]``; indices are bounds-checked."""
    idx = np.asarray(idx)
    if idx.size and (idx.min() < 0 or idx.max() >= len(v)):
        raise IndexError("gather index out of range")
    return np.array(v[idx], dtype=float)


def scatter_add_masked(v, sets, local, interior_only=True):
    """Add a patch-local array into ``v`` in place, each node exactly once.

    ``local`` is either in closure layout (``len(sets.closure)``) or interior
    layout (``len(sets.interior)``). It is split per cell and written through
    the cells' ownership masks; with ``interior_only`` (the smoothing case)
    nodes on the patch boundary are left untouched.
    """
    local = np.asarray(local, dtype=float)
    if len(local) == len(sets.interior) and len(local) != len(sets.closure):
        full = np.zeros(len(sets.closure))
        full[sets.interior_local] = local
        local = full
    elif len(local) != len(sets.closure):
        raise ValueError(f"local array of length {len(local)} does not match the patch")
    if sets.closure.max() >= len(v):
        raise IndexError("scatter index out of range")
    allowed = np.zeros(len(sets.closure), dtype=bool)
    if interior_only:
        allowed[sets.interior_local] = True
    else:
        allowed[:] = True
    for loc, dofs, mask in zip(sets.cell_local, sets.cell_dofs, sets.write_mask):
        sel = mask & allowed[loc]
        v[dofs[sel]] += local[loc[sel]]
    return v
