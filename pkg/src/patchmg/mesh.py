"""Mesh hierarchy, vertex-patch enumeration, orderings, coloring, batching.

Patches are identified by their vertex: integer coordinates (x, y[, z]) in
units of the level's mesh size, each in ``1 .. 2**(level+1) - 1``. Arrays of
patches have shape ``(n_patches, dim)``.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "MeshHierarchy",
    "Schedule",
    "enumerate_patches",
    "morton_codes",
    "morton_order",
    "hierarchical_order",
    "color_patches",
    "make_schedule",
    "ORDERINGS",
]

ORDERINGS = ("z_curve", "hierarchical")


@dataclass(frozen=True)
class MeshHierarchy:
    """Uniformly refined unit hypercube; level ``l`` has ``2**(l+1)`` cells per direction."""

    dim: int
    n_levels: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.n_levels < 1:
            raise ValueError("a hierarchy needs at least one level")

    @property
    def finest_level(self):
        return self.n_levels - 1

    def cells_per_dim(self, level):
        self._check_level(level)
        return 2 ** (level + 1)

    def _check_level(self, level):
        if not 0 <= level < self.n_levels:
            raise ValueError(f"level {level} outside 0..{self.n_levels - 1}")

    def enumerate_patches(self, level):
        self._check_level(level)
        return enumerate_patches(self.dim, level)


def enumerate_patches(dim, level):
    """All interior vertices of ``level`` in lexicographic order (x fastest)."""
    if level < 0:
        raise ValueError(f"level must be >= 0, got {level}")
    n = 2 ** (level + 1) - 1
    grids = np.meshgrid(*([np.arange(1, n + 1)] * dim), indexing="ij")
    # reversed so that column 0 (x) varies fastest
    return np.stack([g.ravel() for g in reversed(grids)], axis=1).astype(np.int64)


def morton_codes(patches):
    """Bit-interleaved codes of zero-based coordinates, x in the lowest bit."""
    c = np.asarray(patches, dtype=np.int64) - 1
    dim = c.shape[1]
    nbits = int(c.max()).bit_length() if c.size else 0
    codes = np.zeros(len(c), dtype=np.int64)
    for bit in range(nbits):
        for k in range(dim):
            codes |= ((c[:, k] >> bit) & 1) << (bit * dim + k)
    return codes


def morton_order(patches):
    """Permutation sorting ``patches`` along the Z-curve."""
    return np.argsort(morton_codes(patches), kind="stable")


def _coarsest_level(patches, level):
    c = np.asarray(patches, dtype=np.int64)
    # trailing zeros common to all coordinates, capped at level
    tz = np.full(len(c), level, dtype=np.int64)
    for k in range(c.shape[1]):
        v = c[:, k]
        t = np.zeros(len(c), dtype=np.int64)
        for s in range(1, level + 1):
            t = np.where(v % (2 ** s) == 0, s, t)
        tz = np.minimum(tz, t)
    return level - tz


def hierarchical_order(patches, level=None):
    """Coarse-first ordering: vertices grouped by the coarsest level on which
    they exist, Z-curve order inside each group."""
    patches = np.asarray(patches, dtype=np.int64)
    if level is None:
        level = int(np.log2(patches.max() + 1)) - 1 if len(patches) else 0
    group = _coarsest_level(patches, level)
    return np.lexsort((morton_codes(patches), group))


def color_patches(patches):
    """Parity color of each patch: ``sum_k (v_k mod 2) 2**k``."""
    c = np.asarray(patches, dtype=np.int64)
    return ((c % 2) << np.arange(c.shape[1])).sum(axis=1)


@dataclass(frozen=True)
class Schedule:
    """Execution order of a patch loop.

    ``vertices`` lists all patches in execution order. They are cut into
    consecutive entries; entry ``e`` covers ``vertices[offsets[e]:offsets[e+1]]``
    and belongs to batch ``entry_batch[e]`` and color ``entry_color[e]``
    (``-1`` for an uncolored schedule). Patches inside one colored entry
    are pairwise cell-disjoint.
    """

    dim: int
    level: int
    vertices: np.ndarray
    offsets: np.ndarray
    entry_batch: np.ndarray
    entry_color: np.ndarray
    ordering: str
    batch_size: int | None

    @property
    def n_patches(self):
        return len(self.vertices)

    @property
    def n_entries(self):
        return len(self.offsets) - 1

    @property
    def n_batches(self):
        return int(self.entry_batch.max()) + 1 if self.n_entries else 0

    @property
    def colored(self):
        return bool(np.all(self.entry_color >= 0))

    def entries(self):
        """Yield ``(batch, color, vertices)`` triples in execution order."""
        for e in range(self.n_entries):
            yield (int(self.entry_batch[e]), int(self.entry_color[e]),
                   self.vertices[self.offsets[e]:self.offsets[e + 1]])

    def batches(self):
        """Nested ``[[(color, vertices), ...], ...]`` view by batch."""
        out = [[] for _ in range(self.n_batches)]
        for b, k, verts in self.entries():
            out[b].append((k, verts))
        return out

    def reversed(self):
        """The same entries traversed backwards, patches reversed inside each entry."""
        sizes = np.diff(self.offsets)[::-1]
        verts = np.concatenate(
            [self.vertices[self.offsets[e]:self.offsets[e + 1]][::-1]
             for e in range(self.n_entries - 1, -1, -1)]
        ) if self.n_entries else self.vertices
        offsets = np.concatenate(([0], np.cumsum(sizes)))
        return Schedule(self.dim, self.level, verts, offsets, self.entry_batch[::-1].copy(),
                        self.entry_color[::-1].copy(), self.ordering, self.batch_size)

    def to_text(self):
        """Diagnostic dump: one ``batch color: (x,y) (x,y) ...`` line per entry."""
        lines = []
        for b, k, verts in self.entries():
            coords = " ".join("(" + ",".join(str(int(c)) for c in v) + ")" for v in verts)
            lines.append(f"{b} {k}: {coords}")
        return "\n".join(lines) + "\n"


def _order_permutation(patches, ordering, level):
    if isinstance(ordering, str):
        if ordering == "z_curve":
            return morton_order(patches)
        if ordering == "hierarchical":
            return hierarchical_order(patches, level)
        if ordering == "lexicographic":
            return np.arange(len(patches))
        raise ValueError(f"unknown ordering {ordering!r}")
    perm = np.asarray(ordering, dtype=np.int64)
    if sorted(perm.tolist()) != list(range(len(patches))):
        raise ValueError("ordering is not a permutation of the patches")
    return perm


def make_schedule(patches, ordering="z_curve", batch_size=None, colored=True, level=None):
    """Build the loop structure of a smoother sweep.

    Parameters
    ----------
    patches : (n, dim) int array
        Vertices of one level, e.g. from :func:`enumerate_patches`.
    ordering : {"z_curve", "hierarchical", "lexicographic"} or permutation
        Global patch order.
    batch_size : int, optional
        Patches per run of one color. ``None`` puts each color into a single
        batch (color-by-color execution).
    colored : bool
        If False, the schedule is one entry holding the global order.
    """
    patches = np.asarray(patches, dtype=np.int64)
    if patches.ndim != 2:
        raise ValueError("patches must be an (n, dim) array")
    dim = patches.shape[1]
    if level is None:
        level = int(np.log2(patches.max() + 1)) - 1 if len(patches) else 0
    if batch_size is not None and batch_size < 1:
        raise ValueError(f"batch size must be >= 1, got {batch_size}")
    name = ordering if isinstance(ordering, str) else "custom"
    ordered = patches[_order_permutation(patches, ordering, level)]
    if not colored:
        return Schedule(dim, level, ordered, np.array([0, len(ordered)]),
                        np.zeros(1, dtype=np.int64), np.full(1, -1, dtype=np.int64),
                        name, batch_size)
    colors = color_patches(ordered)
    runs = {}
    n_batches = 0
    for k in range(2 ** dim):
        members = ordered[colors == k]
        if not len(members):
            continue
        step = len(members) if batch_size is None else batch_size
        runs[k] = [members[i:i + step] for i in range(0, len(members), step)]
        n_batches = max(n_batches, len(runs[k]))
    chunks, eb, ec = [], [], []
    for b in range(n_batches):
        for k in sorted(runs):
            if b < len(runs[k]):
                chunks.append(runs[k][b])
                eb.append(b)
                ec.append(k)
    sizes = [len(c) for c in chunks]
    verts = np.concatenate(chunks) if chunks else np.zeros((0, dim), dtype=np.int64)
    return Schedule(dim, level, verts, np.concatenate(([0], np.cumsum(sizes))).astype(np.int64),
                    np.array(eb, dtype=np.int64), np.array(ec, dtype=np.int64), name, batch_size)
