from itertools import combinations
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from patchmg.dofs import PatchId, patch_index_sets
from patchmg.mesh import (
    MeshHierarchy,
    color_patches,
    enumerate_patches,
    hierarchical_order,
    make_schedule,
    morton_codes,
    morton_order,
)

GOLDEN = Path(__file__).parent / "golden"


def test_single_patch_on_level_zero():
    assert enumerate_patches(2, 0).tolist() == [[1, 1]]


def test_patch_counts():
    p = enumerate_patches(2, 1)
    assert len(p) == 9
    assert {tuple(v) for v in p} == {(x, y) for x in (1, 2, 3) for y in (1, 2, 3)}
    assert len(enumerate_patches(3, 1)) == 27


def test_hierarchy_levels():
    h = MeshHierarchy(2, 3)
    assert [h.cells_per_dim(l) for l in range(3)] == [2, 4, 8]
    assert len(h.enumerate_patches(0)) == 1
    with pytest.raises(ValueError):
        h.enumerate_patches(3)
    with pytest.raises(ValueError):
        enumerate_patches(2, -1)


def test_morton_codes_small():
    patches = np.array([[1, 1], [2, 1], [1, 2], [2, 2]])
    assert morton_codes(patches).tolist() == [0, 1, 2, 3]


def test_morton_first_four_level_one():
    p = enumerate_patches(2, 1)
    first = p[morton_order(p)][:4].tolist()
    assert first == [[1, 1], [2, 1], [1, 2], [2, 2]]


@given(d=st.integers(2, 3), level=st.integers(0, 3))
def test_morton_idempotent(d, level):
    p = enumerate_patches(d, level)
    once = p[morton_order(p)]
    assert np.array_equal(once[morton_order(once)], once)


def test_hierarchical_coarse_first():
    p = enumerate_patches(2, 1)
    order = p[hierarchical_order(p, 1)].tolist()
    assert order.index([2, 2]) < order.index([1, 1])
    assert order[0] == [2, 2]


def test_hierarchical_level_zero_equals_morton():
    p = enumerate_patches(2, 0)
    assert np.array_equal(hierarchical_order(p, 0), morton_order(p))


def test_hierarchical_group_sizes():
    p = enumerate_patches(2, 2)
    ordered = p[hierarchical_order(p, 2)]
    div4 = np.all(ordered % 4 == 0, axis=1)
    div2 = np.all(ordered % 2 == 0, axis=1) & ~div4
    assert div4.sum() == 1 and div2.sum() == 8 and (~div4 & ~div2).sum() == 40
    assert div4[:1].all() and div2[1:9].all()


def test_colors():
    assert color_patches(np.array([[3, 5]])).tolist() == [3]
    assert len(set(color_patches(enumerate_patches(2, 2)).tolist())) == 4
    assert len(set(color_patches(enumerate_patches(3, 1)).tolist())) == 8
    assert len(set(color_patches(enumerate_patches(2, 0)).tolist())) == 1


def test_batch_runs_shorter_last():
    # 9 patches of color 0 on a 2D level-2 mesh... use a synthetic single color set
    patches = np.array([[x, y] for y in (2, 4, 6) for x in (2, 4, 6)])
    s = make_schedule(patches, "z_curve", batch_size=4, level=2)
    assert np.diff(s.offsets).tolist() == [4, 4, 1]
    assert s.n_batches == 3


def test_large_batch_equals_color_loop():
    p = enumerate_patches(2, 2)
    a = make_schedule(p, "z_curve", batch_size=10_000)
    b = make_schedule(p, "z_curve", batch_size=None)
    assert a.n_batches == b.n_batches == 1
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(a.offsets, b.offsets)


def test_batch_of_one():
    p = enumerate_patches(2, 1)
    s = make_schedule(p, "z_curve", batch_size=1)
    assert np.all(np.diff(s.offsets) == 1)
    with pytest.raises(ValueError):
        make_schedule(p, "z_curve", batch_size=0)


def _cells(v):
    d = len(v)
    from itertools import product

    return {tuple(c - 1 + o for c, o in zip(v, off)) for off in product((0, 1), repeat=d)}


@pytest.mark.parametrize("d,level,nb", [(2, 2, None), (2, 3, 5), (3, 1, 2), (2, 3, 1)])
@pytest.mark.parametrize("ordering", ["z_curve", "hierarchical"])
def test_schedule_invariants(d, level, nb, ordering):
    patches = enumerate_patches(d, level)
    s = make_schedule(patches, ordering, batch_size=nb, level=level)
    # completeness, no duplicates
    assert sorted(map(tuple, s.vertices.tolist())) == sorted(map(tuple, patches.tolist()))
    # disjointness inside each entry
    for _, _, verts in s.entries():
        for a, b in combinations(verts.tolist(), 2):
            assert not (_cells(a) & _cells(b))
    # order preservation per color
    glob = patches[morton_order(patches) if ordering == "z_curve" else hierarchical_order(patches, level)]
    colors = color_patches(glob)
    for k in range(2 ** d):
        runs = [v for _, c, v in s.entries() if c == k]
        got = np.concatenate(runs) if runs else np.zeros((0, d), int)
        assert np.array_equal(got, glob[colors == k])


def test_entry_closures_vs_interiors_disjoint():
    """Interiors written by one entry are never read by another patch of it."""
    p = 2
    s = make_schedule(enumerate_patches(2, 2), "z_curve", batch_size=3, level=2)
    for _, _, verts in s.entries():
        sets = [patch_index_sets(PatchId(2, tuple(v)), p) for v in verts]
        for i, j in combinations(range(len(sets)), 2):
            assert not set(sets[i].interior) & set(sets[j].closure)


def test_reversed_schedule():
    s = make_schedule(enumerate_patches(2, 1), "z_curve")
    r = s.reversed()
    assert np.array_equal(r.vertices, s.vertices[::-1])
    assert r.entry_color.tolist() == s.entry_color.tolist()[::-1]


def test_uncolored_schedule_is_global_order():
    p = enumerate_patches(2, 2)
    s = make_schedule(p, "z_curve", colored=False)
    assert not s.colored and s.n_entries == 1
    assert np.array_equal(s.vertices, p[morton_order(p)])


def test_unknown_ordering():
    with pytest.raises(ValueError):
        make_schedule(enumerate_patches(2, 1), "hilbert")


@pytest.mark.parametrize("name,args", [
    ("schedule_2d_l1_z.txt", dict(ordering="z_curve")),
    ("schedule_2d_l2_hier_nb3.txt", dict(ordering="hierarchical", batch_size=3)),
])
def test_schedule_text_golden(name, args):
    level = 1 if "l1" in name else 2
    text = make_schedule(enumerate_patches(2, level), level=level, **args).to_text()
    assert text == (GOLDEN / name).read_text()
