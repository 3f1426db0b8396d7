"""Multiplicative vertex-patch smoothers and the Richardson baseline.

Variants
--------
naive
    Recompute the full global residual before every patch solve. Quadratic
    cost; only a reference for small levels.
combined
    One patch loop; each patch computes its own residual from the cells of
    the patch right before its local solve.
separated_colorized
    Per color one global residual, then independent local solves for all
    patches of the color.
combined_colorized
    Per color, the combined patch update for all patches of the color.
batched
    Loop batch -> color -> patches with the combined update. The patches of
    one (batch, color) entry are split across worker threads; all workers
    meet at a barrier after every entry.
"""

import threading
from dataclasses import dataclass

import numpy as np

from . import _kernels as kern
from .operator import NO_TRACE

__all__ = [
    "VARIANTS",
    "SmoothStats",
    "local_solve",
    "local_update",
    "smooth",
    "richardson",
]

VARIANTS = ("naive", "combined", "separated_colorized", "combined_colorized", "batched", "richardson")
NAIVE_MAX_DOFS = 10_000


@dataclass
class SmoothStats:
    patches: int = 0
    global_residuals: int = 0
    cell_applies: int = 0


def local_solve(level, vertex, r, u):
    """u += Pi_j^T A_j^{-1} Pi_j r for the patch at ``vertex`` (in place)."""
    sp = level.space
    u = _inplace_vector(sp, u, "u")
    r = sp.check_vector(r, "r")
    verts = sp.kernel_vertices(vertex)
    kern.local_solves(u, r, verts, 0, 1, sp.geometry, level.fdm.T, level.fdm.inv_lambda,
                      NO_TRACE[0], NO_TRACE[1], False)
    return u


def local_update(level, vertex, u, b):
    """Combined patch update: local residual, local solve, scatter (in place)."""
    sp = level.space
    u = _inplace_vector(sp, u, "u")
    b = sp.check_vector(b, "b")
    counter = np.zeros(1, dtype=np.int64)
    _updates(level, u, b, sp.kernel_vertices(vertex), 0, 1, counter)
    level.op.cell_apply_count += int(counter[0])
    return u


def richardson(level, u, b, omega):
    """u += omega * (b - A u) (in place)."""
    if omega < 0:
        raise ValueError(f"relaxation must be non-negative, got {omega}")
    u = _inplace_vector(level.space, u, "u")
    u += omega * level.op.residual(u, b)
    return u


def _inplace_vector(space, u, name):
    if not isinstance(u, np.ndarray) or u.dtype != np.float64 or not u.flags.c_contiguous:
        raise TypeError(f"{name} must be a contiguous float64 array (updated in place)")
    space.check_vector(u, name)
    return u


def _updates(level, u, b, verts, lo, hi, counter, trace=NO_TRACE, tracing=False, metadata=False):
    d = level.op.data
    kern.local_updates(u, b, verts, lo, hi, level.space.geometry, d.S, d.D, d.W,
                       level.fdm.T, level.fdm.inv_lambda, counter,
                       trace[0], trace[1], tracing, metadata)


def _check_schedule(variant, level, schedule):
    if variant not in VARIANTS:
        raise ValueError(f"unknown smoother variant {variant!r}")
    if variant == "richardson":
        return
    if schedule is None:
        raise ValueError(f"variant {variant!r} needs a schedule")
    if schedule.dim != level.space.dim or schedule.level != level.space.level:
        raise ValueError("schedule was built for a different level")
    if variant == "naive" and level.space.n_dofs > NAIVE_MAX_DOFS:
        raise ValueError(f"naive smoother is limited to {NAIVE_MAX_DOFS} DoFs")
    if variant in ("separated_colorized", "combined_colorized", "batched") and not schedule.colored:
        raise ValueError(f"variant {variant!r} needs a colored schedule")
    if variant in ("separated_colorized", "combined_colorized") and schedule.n_batches != 1:
        raise ValueError(f"variant {variant!r} needs a single-batch schedule")


def smooth(variant, level, u, b, schedule=None, threads=1, omega=None,
           trace=None, metadata=False):
    """One smoothing sweep, updating ``u`` in place.

    Parameters
    ----------
    variant : str
        One of :data:`VARIANTS`.
    level : Level
    u, b : ndarray
        Current iterate (modified) and right-hand side.
    schedule : Schedule
        Traversal order. ``naive`` and ``combined`` walk its patches in
        sequence ignoring colors; the colorized variants need a colored
        single-batch schedule; ``batched`` follows batches and colors.
    threads : int
        Worker threads for ``batched``; ignored otherwise.
    omega : float
        Relaxation, ``richardson`` only.
    trace : tuple, optional
        ``(buffer, position)`` arrays receiving the access stream; forces a
        sequential traversal.

    Returns
    -------
    SmoothStats
    """
    _check_schedule(variant, level, schedule)
    sp = level.space
    u = _inplace_vector(sp, u, "u")
    b = sp.check_vector(b, "b")
    stats = SmoothStats()
    if variant == "richardson":
        if omega is None:
            raise ValueError("richardson needs omega")
        before = level.op.cell_apply_count
        richardson(level, u, b, omega)
        stats.global_residuals = 1
        stats.cell_applies = level.op.cell_apply_count - before
        return stats
    tracing = trace is not None
    tr = trace if tracing else NO_TRACE
    verts = sp.kernel_vertices(schedule.vertices)
    stats.patches = len(verts)
    counter = np.zeros(1, dtype=np.int64)
    before = level.op.cell_apply_count

    if variant == "naive":
        r = np.empty(sp.n_dofs)
        for n in range(len(verts)):
            level.op.residual(u, b, out=r, trace=tr, tracing=tracing, metadata=metadata)
            stats.global_residuals += 1
            kern.local_solves(u, r, verts, n, n + 1, sp.geometry, level.fdm.T,
                              level.fdm.inv_lambda, tr[0], tr[1], tracing)
    elif variant == "separated_colorized":
        r = np.empty(sp.n_dofs)
        for e in range(schedule.n_entries):
            level.op.residual(u, b, out=r, trace=tr, tracing=tracing, metadata=metadata)
            stats.global_residuals += 1
            kern.local_solves(u, r, verts, schedule.offsets[e], schedule.offsets[e + 1],
                              sp.geometry, level.fdm.T, level.fdm.inv_lambda,
                              tr[0], tr[1], tracing)
    elif variant == "batched" and threads > 1 and not tracing:
        counter = _threaded_updates(level, u, b, verts, schedule.offsets, threads)
    else:
        # combined, combined_colorized and sequential batched are the same
        # sequence of patch updates in schedule order
        _updates(level, u, b, verts, 0, len(verts), counter, tr, tracing, metadata)

    level.op.cell_apply_count += int(counter[0])
    stats.cell_applies = level.op.cell_apply_count - before
    return stats


def _threaded_updates(level, u, b, verts, offsets, threads):
    """Run every schedule entry split across ``threads`` workers with a
    barrier after each entry. Workers write disjoint patch interiors."""
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    barrier = threading.Barrier(threads)
    counters = np.zeros((threads, 1), dtype=np.int64)
    errors = []
    n_entries = len(offsets) - 1

    def work(w):
        try:
            for e in range(n_entries):
                lo, hi = int(offsets[e]), int(offsets[e + 1])
                chunk = -(-(hi - lo) // threads)
                a = min(hi, lo + w * chunk)
                z = min(hi, a + chunk)
                if a < z:
                    _updates(level, u, b, verts, a, z, counters[w])
                barrier.wait()
        except threading.BrokenBarrierError:
            pass
        except BaseException as exc:  # surfaced to the caller below
            errors.append(exc)
            barrier.abort()

    workers = [threading.Thread(target=work, args=(w,)) for w in range(threads)]
    for t in workers:
        t.start()
    for t in workers:
        t.join()
    if errors:
        raise errors[0]
    return counters.sum(axis=0)
