import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from patchmg.fdm import apply_fdm, build_fdm
from patchmg.oracle import dense_patch_matrix

from conftest import rel


def test_linear_eigenvalue_sum():
    f = build_fdm(1, 0.5, 2)
    np.testing.assert_allclose(f.lambda_sum.ravel(), [24.0])
    np.testing.assert_allclose(f.inv_lambda.ravel(), [1 / 24])


def test_quadratic_eigenvalues_ascending():
    f = build_fdm(2, 0.25, 2)
    assert len(f.eigenvalues) == 3
    assert np.all(f.eigenvalues > 0) and np.all(np.diff(f.eigenvalues) > 0)


def test_builds_are_identical():
    a, b = build_fdm(3, 0.125, 3), build_fdm(3, 0.125, 3)
    assert np.array_equal(a.inv_lambda, b.inv_lambda)


def test_linear_patch_solve():
    np.testing.assert_allclose(apply_fdm(build_fdm(1, 0.5, 2), [1.0]), [0.375])


def test_zero_residual():
    f = build_fdm(3, 0.25, 2)
    assert not apply_fdm(f, np.zeros(25)).any()


def test_wrong_length():
    with pytest.raises(ValueError):
        apply_fdm(build_fdm(2, 0.25, 2), np.zeros(8))


def test_rejects_bad_h():
    with pytest.raises(ValueError):
        build_fdm(2, 0.0, 2)


@pytest.mark.parametrize("d", [2, 3])
@pytest.mark.parametrize("p", [1, 2, 3, 4, 5])
def test_exact_inverse(d, p, rng):
    h = 1 / 16
    A = dense_patch_matrix(p, h, d).matrix
    x = rng.standard_normal(A.shape[0])
    assert rel(apply_fdm(build_fdm(p, h, d), A @ x), x) < 1e-10


@given(p=st.integers(1, 4), d=st.integers(2, 3), seed=st.integers(0, 2**16))
def test_symmetric(p, d, seed):
    f = build_fdm(p, 0.25, d)
    g = np.random.default_rng(seed)
    n = (2 * p - 1) ** d
    r, s = g.standard_normal(n), g.standard_normal(n)
    a, b = apply_fdm(f, r) @ s, r @ apply_fdm(f, s)
    assert abs(a - b) <= 1e-11 * max(1.0, abs(a))
