"""Memory-traffic model for smoother schedules.

A smoother sweep is replayed with instrumented kernels that log every
element access of the solution ``u``, the right-hand side ``b``, the global
residual ``r`` (separated variants only) and, optionally, the per-cell index
table. The resulting stream is fed to a fully associative LRU cache with
write-allocate and write-back; loads plus write-backs, expressed in doubles
per degree of freedom, rank schedules by how much they would move between
main memory and the last-level cache.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np
from numba import njit

from . import _kernels as kern
from .exceptions import ResourceError
from .smoothers import smooth

__all__ = [
    "ARRAY_NAMES",
    "AccessTrace",
    "CacheConfig",
    "TrafficReport",
    "MAX_TRACE_RECORDS",
    "record_trace",
    "simulate_lru",
    "vector_lines",
]

ARRAY_NAMES = {kern.ARRAY_U: "u", kern.ARRAY_B: "b", kern.ARRAY_R: "r", kern.ARRAY_INDEX: "index"}

# 2**25 records = 256 MiB of int64; a separated sweep at 2D, p=5, level 6
# needs about 1.8e7
MAX_TRACE_RECORDS = 1 << 25

_RECORD_DTYPE = np.dtype([("array", "u1"), ("index", "<u8"), ("flag", "u1")])


class AccessTrace:
    """Immutable element-access stream of one smoother run.

    Each record packs ``(index << 3) | (array << 1) | write`` into one
    int64; :meth:`arrays`, :meth:`indices` and :meth:`writes` decode it.

    Parameters
    ----------
    records : ndarray of int64
    n_dofs : int
        Length of the global vectors of the traced level.
    """

    def __init__(self, records, n_dofs):
        records = np.array(records, dtype=np.int64)
        records.setflags(write=False)
        self.records = records
        self.n_dofs = int(n_dofs)

    def __len__(self):
        return len(self.records)

    def __eq__(self, other):
        if not isinstance(other, AccessTrace):
            return NotImplemented
        return self.n_dofs == other.n_dofs and np.array_equal(self.records, other.records)

    def arrays(self):
        return ((self.records >> 1) & 3).astype(np.uint8)

    def indices(self):
        return self.records >> 3

    def writes(self):
        return (self.records & 1).astype(bool)

    @classmethod
    def from_fields(cls, arrays, indices, writes, n_dofs):
        arrays = np.asarray(arrays, dtype=np.int64)
        indices = np.asarray(indices, dtype=np.int64)
        writes = np.asarray(writes, dtype=np.int64)
        if np.any((arrays < 0) | (arrays > 3)):
            raise ValueError("array ids must lie in 0..3")
        if np.any(indices < 0):
            raise ValueError("indices must be non-negative")
        return cls((indices << 3) | (arrays << 1) | (writes & 1), n_dofs)

    def to_bytes(self):
        """Packed little-endian records: array id (u1), index (u8), flag (u1)."""
        out = np.empty(len(self), dtype=_RECORD_DTYPE)
        out["array"] = self.arrays()
        out["index"] = self.indices()
        out["flag"] = self.writes()
        return out.tobytes()

    @classmethod
    def from_bytes(cls, data, n_dofs):
        if len(data) % _RECORD_DTYPE.itemsize:
            raise ValueError(f"trace stream length {len(data)} is not a multiple of "
                             f"{_RECORD_DTYPE.itemsize}")
        rec = np.frombuffer(data, dtype=_RECORD_DTYPE)
        return cls.from_fields(rec["array"], rec["index"].astype(np.int64), rec["flag"], n_dofs)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path, n_dofs):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read(), n_dofs)


@dataclass(frozen=True)
class CacheConfig:
    """Fully associative LRU cache; ``capacity_lines=None`` means unbounded."""

    capacity_lines: int | None
    line_elems: int = 8

    def __post_init__(self):
        if self.capacity_lines is not None and self.capacity_lines < 1:
            raise ValueError(f"capacity must be at least one line, got {self.capacity_lines}")
        if self.line_elems < 1:
            raise ValueError(f"line size must be at least one element, got {self.line_elems}")


@dataclass(frozen=True)
class TrafficReport:
    loads: int
    writebacks: int
    doubles_per_dof: float

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict())


def vector_lines(n_dofs, line_elems=8):
    """Cache lines spanned by one global vector."""
    return -(-n_dofs // line_elems)


def record_trace(variant, schedule, level, metadata=False, max_records=MAX_TRACE_RECORDS):
    """Replay one sweep of ``variant`` along ``schedule`` and log its accesses.

    The sweep runs sequentially (the order a parallel batched run is
    equivalent to). Values of ``u`` and ``b`` do not affect the stream.

    Raises
    ------
    ResourceError
        If the sweep issues more than ``max_records`` accesses.
    """
    if variant == "richardson":
        raise ValueError("record_trace covers the patch smoothers only")
    n = level.space.n_dofs
    b = np.ones(n)
    b[level.space.boundary_mask] = 0.0
    # counting pass: an empty buffer only advances the position
    pos = np.zeros(1, dtype=np.int64)
    smooth(variant, level, np.zeros(n), b, schedule,
           trace=(np.zeros(0, dtype=np.int64), pos), metadata=metadata)
    needed = int(pos[0])
    if needed > max_records:
        raise ResourceError(f"trace needs {needed} records, cap is {max_records}")
    buf = np.empty(needed, dtype=np.int64)
    pos[0] = 0
    smooth(variant, level, np.zeros(n), b, schedule, trace=(buf, pos), metadata=metadata)
    return AccessTrace(buf, n)


@njit(cache=True)
def _lru(keys, writes, n_keys, capacity):
    slot = np.full(n_keys, -1, dtype=np.int64)
    key_of = np.empty(capacity, dtype=np.int64)
    dirty = np.zeros(capacity, dtype=np.bool_)
    prev = np.empty(capacity, dtype=np.int64)
    nxt = np.empty(capacity, dtype=np.int64)
    head = -1  # most recently used
    tail = -1  # least recently used
    used = 0
    loads = 0
    writebacks = 0
    for t in range(keys.shape[0]):
        k = keys[t]
        s = slot[k]
        if s >= 0:
            if s != head:
                # unlink and move to the front
                p, q = prev[s], nxt[s]
                nxt[p] = q
                if q >= 0:
                    prev[q] = p
                else:
                    tail = p
                prev[s] = -1
                nxt[s] = head
                prev[head] = s
                head = s
        else:
            loads += 1
            if used < capacity:
                s = used
                used += 1
            else:
                s = tail
                if dirty[s]:
                    writebacks += 1
                slot[key_of[s]] = -1
                tail = prev[s]
                if tail >= 0:
                    nxt[tail] = -1
                else:
                    head = -1
            key_of[s] = k
            dirty[s] = False
            slot[k] = s
            prev[s] = -1
            nxt[s] = head
            if head >= 0:
                prev[head] = s
            head = s
            if tail < 0:
                tail = s
        if writes[t]:
            dirty[s] = True
    for s in range(used):
        if dirty[s] and slot[key_of[s]] == s:
            writebacks += 1
    return loads, writebacks


def simulate_lru(trace, config):
    """Run ``trace`` through the cache described by ``config``.

    Lines never straddle two arrays: array ``a`` line ``l`` is its own key.

    Returns
    -------
    TrafficReport
    """
    if len(trace) == 0:
        return TrafficReport(0, 0, 0.0)
    lines = trace.indices() // config.line_elems
    arrays = trace.arrays().astype(np.int64)
    span = int(lines.max()) + 1
    keys = arrays * span + lines
    uniq, keys = np.unique(keys, return_inverse=True)
    capacity = len(uniq) if config.capacity_lines is None else min(config.capacity_lines, len(uniq))
    loads, writebacks = _lru(keys.astype(np.int64), trace.writes(), len(uniq), capacity)
    dpd = (loads + writebacks) * config.line_elems / trace.n_dofs
    return TrafficReport(int(loads), int(writebacks), float(dpd))
