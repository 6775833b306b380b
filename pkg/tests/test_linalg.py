import numpy as np
import pytest
import scipy.linalg

from sidshrink.errors import DataError, NumericalError
from sidshrink.linalg import (
    build_hankel,
    build_selectors,
    pseudo_det,
    psd_sqrt,
    toeplitz_from_col,
    toeplitz_project,
    vec,
)


def test_vec_is_column_major():
    m = np.array([[1.0, 3.0], [2.0, 4.0]])
    assert np.array_equal(vec(m), [1.0, 2.0, 3.0, 4.0])


def test_hankel_scalar_indexing():
    h = build_hankel(np.arange(10.0), block_rows=3, cols=4, start=2)
    assert h.shape == (3, 4)
    assert np.array_equal(h[0], [2, 3, 4, 5])
    # constant anti-diagonals
    for k in range(3):
        for l in range(4):
            assert h[k, l] == 2 + k + l


def test_hankel_vector_signal_row_layout():
    s = np.column_stack([np.arange(6.0), 10 + np.arange(6.0)])
    h = build_hankel(s, block_rows=2, cols=3)
    # block row k stacks both channels of sample k+l
    assert np.array_equal(h[0], [0, 1, 2])
    assert np.array_equal(h[1], [10, 11, 12])
    assert np.array_equal(h[2], [1, 2, 3])
    assert np.array_equal(h[3], [11, 12, 13])


def test_hankel_length_guard():
    with pytest.raises(DataError):
        build_hankel(np.arange(5.0), block_rows=3, cols=4)
    with pytest.raises(ValueError):
        build_hankel(np.arange(5.0), block_rows=0, cols=2)


def test_selector_toeplitz_map():
    rng = np.random.default_rng(1)
    i = 4
    sel = build_selectors(i, 6)
    e = rng.standard_normal(i)  # last row of G, left to right
    g = np.zeros((i, i))
    for k in range(i):
        for l in range(k + 1):
            g[k, l] = e[i - 1 - k + l]
    assert np.allclose(sel.b_t @ e, vec(g))
    # rows for strictly upper positions are identically zero
    upper = [k + l * i for k in range(i) for l in range(i) if k < l]
    assert np.all(sel.b_t[upper] == 0)


def test_selector_hankel_map_and_multiplicities():
    rng = np.random.default_rng(2)
    i, n = 3, 5
    sel = build_selectors(i, n)
    e = rng.standard_normal(i + n - 1)
    h = scipy.linalg.hankel(e[:i], e[i - 1:])
    assert np.allclose(sel.b_w @ e, vec(h))
    counts = np.diag(sel.b_w.T @ sel.b_w)
    expect = [min(d + 1, i, n, i + n - 1 - d) for d in range(i + n - 1)]
    assert np.array_equal(counts, expect)
    assert np.allclose(sel.b_w.T @ sel.b_w, np.diag(counts))


def test_psd_sqrt_roundtrip():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((5, 5))
    m = x @ x.T + 0.1 * np.eye(5)
    r = psd_sqrt(m)
    assert np.allclose(r @ r, m, atol=1e-10)
    r_inv = psd_sqrt(m, inverse=True)
    assert np.allclose(r_inv @ m @ r_inv, np.eye(5), atol=1e-10)


def test_psd_sqrt_clips_rounding_noise():
    m = np.diag([1.0, -1e-15])
    r = psd_sqrt(m)
    assert np.all(np.isfinite(r))
    assert r[1, 1] == 0.0


def test_psd_sqrt_inverse_rejects_singular():
    with pytest.raises(NumericalError):
        psd_sqrt(np.diag([1.0, 0.0]), inverse=True)


def test_pseudo_det_values():
    assert pseudo_det(np.diag([3.0, 2.0, 0.0])) == pytest.approx(6.0)
    assert pseudo_det(np.zeros((3, 3))) == 1.0
    # rank-r scaling: pdet(c M) = c^r pdet(M)
    rng = np.random.default_rng(4)
    m = rng.standard_normal((4, 2)) @ rng.standard_normal((2, 5))
    ratio = pseudo_det(3.0 * m) / pseudo_det(m)
    assert ratio == pytest.approx(9.0, rel=1e-10)


def test_toeplitz_project_fixed_point_and_idempotence():
    rng = np.random.default_rng(5)
    t = toeplitz_from_col(rng.standard_normal(5))
    assert np.allclose(toeplitz_project(t), t)
    m = rng.standard_normal((5, 5))
    p1 = toeplitz_project(m)
    assert np.allclose(toeplitz_project(p1), p1)


def test_toeplitz_project_is_orthogonal():
    # residual orthogonal to every lower-triangular Toeplitz direction
    rng = np.random.default_rng(6)
    m = rng.standard_normal((6, 6))
    resid = m - toeplitz_project(m)
    for _ in range(10):
        t = toeplitz_from_col(rng.standard_normal(6))
        assert abs(np.sum(resid * t)) < 1e-10


def test_toeplitz_from_col_layout():
    g = toeplitz_from_col([1.0, 2.0, 3.0])
    assert np.array_equal(g, [[1, 0, 0], [2, 1, 0], [3, 2, 1]])


def test_toeplitz_project_requires_square():
    with pytest.raises(ValueError):
        toeplitz_project(np.zeros((2, 3)))
