from collections import OrderedDict

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from patchmg import _kernels as kern
from patchmg.dofs import PatchId, patch_index_sets
from patchmg.exceptions import ResourceError
from patchmg.level import Level
from patchmg.traffic import (
    AccessTrace,
    CacheConfig,
    TrafficReport,
    record_trace,
    simulate_lru,
    vector_lines,
)


def _reads(idx):
    return AccessTrace.from_fields(np.zeros(len(idx)), idx, np.zeros(len(idx)), max(idx) + 1)


def _reference_lru(trace, cap, line):
    cache, loads, wb = OrderedDict(), 0, 0
    for a, i, w in zip(trace.arrays(), trace.indices(), trace.writes()):
        key = (int(a), int(i) // line)
        if key in cache:
            cache.move_to_end(key)
        else:
            loads += 1
            if cap is not None and len(cache) >= cap:
                _, dirty = cache.popitem(last=False)
                wb += dirty
            cache[key] = False
        if w:
            cache[key] = True
    wb += sum(cache.values())
    return loads, wb


def test_lru_hand_examples():
    r = simulate_lru(_reads([0, 1, 0]), CacheConfig(2, 1))
    assert (r.loads, r.writebacks) == (2, 0)
    assert simulate_lru(_reads([0, 1, 0, 1]), CacheConfig(1, 1)).loads == 4


def test_unbounded_loads_distinct_lines():
    t = _reads([0, 9, 17, 3, 40, 8])
    assert simulate_lru(t, CacheConfig(None, 8)).loads == 4


def test_dirty_lines_written_back_once():
    t = AccessTrace.from_fields([0, 0, 0], [0, 0, 8], [1, 1, 0], 16)
    r = simulate_lru(t, CacheConfig(1, 8))
    assert (r.loads, r.writebacks) == (2, 1)
    assert r.doubles_per_dof == pytest.approx(3 * 8 / 16)


@given(
    n=st.integers(1, 200),
    cap=st.one_of(st.none(), st.integers(1, 12)),
    line=st.integers(1, 4),
    seed=st.integers(0, 2**16),
)
def test_lru_matches_reference(n, cap, line, seed):
    g = np.random.default_rng(seed)
    t = AccessTrace.from_fields(g.integers(0, 4, n), g.integers(0, 40, n), g.integers(0, 2, n), 40)
    r = simulate_lru(t, CacheConfig(cap, line))
    assert (r.loads, r.writebacks) == _reference_lru(t, cap, line)


def test_loads_monotone_in_capacity():
    lv = Level.create(2, 2, 3)
    t = record_trace("combined", lv.schedule("z_curve", None, False), lv)
    loads = [simulate_lru(t, CacheConfig(2**k)).loads for k in range(1, 12)]
    assert all(a >= b for a, b in zip(loads, loads[1:]))
    distinct = len(np.unique(t.arrays().astype(np.int64) * 10**9 + t.indices() // 8))
    assert simulate_lru(t, CacheConfig(None)).loads == distinct
    assert all(x >= distinct for x in loads)


def test_config_validation():
    with pytest.raises(ValueError):
        CacheConfig(0)
    with pytest.raises(ValueError):
        CacheConfig(4, 0)


def test_report_json():
    import json

    rep = TrafficReport(3, 1, 0.5)
    assert json.loads(rep.to_json()) == {"loads": 3, "writebacks": 1, "doubles_per_dof": 0.5}


def test_binary_round_trip(tmp_path):
    lv = Level.create(2, 1, 1)
    t = record_trace("combined", lv.schedule("z_curve", None, False), lv, metadata=True)
    raw = t.to_bytes()
    assert len(raw) == 10 * len(t)
    assert raw[:10] == bytes([int(t.arrays()[0])]) + int(t.indices()[0]).to_bytes(8, "little") + \
        bytes([int(t.writes()[0])])
    path = tmp_path / "trace.bin"
    t.save(path)
    assert AccessTrace.load(path, t.n_dofs) == t
    with pytest.raises(ValueError):
        AccessTrace.from_bytes(raw[:-1], t.n_dofs)


def test_traces_are_deterministic():
    lv = Level.create(2, 3, 2)
    sch = lv.schedule("z_curve", 3, True)
    assert record_trace("batched", sch, lv) == record_trace("batched", sch, lv)


def test_combined_trace_locality():
    p, level = 2, 2
    lv = Level.create(2, p, level)
    sch = lv.schedule("z_curve", None, False)
    t = record_trace("combined", sch, lv, metadata=True)
    arrays, idx = t.arrays(), t.indices()
    vector = arrays != kern.ARRAY_INDEX
    # each patch issues the same number of accesses on a uniform mesh
    per_patch = len(t) // sch.n_patches
    assert per_patch * sch.n_patches == len(t)
    for j, v in enumerate(sch.vertices):
        closure = set(patch_index_sets(PatchId(level, tuple(v)), p).closure.tolist())
        seg = slice(j * per_patch, (j + 1) * per_patch)
        assert set(idx[seg][vector[seg]].tolist()) <= closure
    assert (~vector).any() and idx[~vector].max() < lv.space.cells_per_dim**2 * (p + 1) ** 2


def _full_sweeps(idx, n):
    """Number of complete ascending passes 0..n-1 inside ``idx``."""
    ramp = np.arange(n)
    return sum(np.array_equal(idx[k:k + n], ramp) for k in np.flatnonzero(idx == 0))


def test_separated_sweeps_per_color():
    lv = Level.create(2, 2, 2)
    n = lv.space.n_dofs
    t = record_trace("separated_colorized", lv.schedule("z_curve"), lv)
    arrays, idx, w = t.arrays(), t.indices(), t.writes()
    b_reads = idx[(arrays == kern.ARRAY_B) & ~w]
    r_writes = idx[(arrays == kern.ARRAY_R) & w]
    assert _full_sweeps(b_reads, n) == 4
    # zero fill and finishing pass: two full write sweeps of r per color
    assert _full_sweeps(r_writes, n) == 2 * 4
    combined = record_trace("combined", lv.schedule("z_curve", None, False), lv)
    assert _full_sweeps(combined.indices()[combined.arrays() == kern.ARRAY_B], n) == 0


def test_trace_cap():
    lv = Level.create(2, 2, 2)
    with pytest.raises(ResourceError):
        record_trace("combined", lv.schedule("z_curve", None, False), lv, max_records=100)
    with pytest.raises(ValueError):
        record_trace("richardson", lv.schedule(), lv)


def test_ordering_effect_small_level():
    lv = Level.create(2, 3, 4)
    cap = CacheConfig(max(1, vector_lines(lv.space.n_dofs) // 20))

    def dpd(variant, ordering, colored):
        t = record_trace(variant, lv.schedule(ordering, None, colored), lv)
        return simulate_lru(t, cap).doubles_per_dof

    comb = dpd("combined", "z_curve", False)
    assert comb < dpd("combined_colorized", "z_curve", True) < dpd("separated_colorized", "z_curve", True)
    assert comb < dpd("combined", "hierarchical", False)
