"""Layout conventions and multilinear primitives against brute-force oracles.

Every flattening here is first-index-fastest, so the oracles spell out the
index arithmetic explicitly instead of reusing the library's own reshapes.
"""

import functools

import numpy as np
import pytest

from glskf import tensor


def test_vectorize_first_index_fastest():
    t = np.arange(2 * 3 * 4, dtype=np.float64).reshape(2, 3, 4)
    v = tensor.vectorize(t)
    for i in range(2):
        for j in range(3):
            for k in range(4):
                assert v[i + 2 * j + 6 * k] == t[i, j, k]


def test_vectorize_devectorize_roundtrip():
    rng = np.random.default_rng(0)
    for shape in [(5,), (3, 4), (2, 3, 4), (2, 2, 2, 3)]:
        t = rng.standard_normal(shape)
        back = tensor.devectorize(tensor.vectorize(t), shape)
        assert np.array_equal(back, t)


def test_devectorize_size_mismatch():
    with pytest.raises(ValueError):
        tensor.devectorize(np.zeros(5), (2, 3))


def test_unfold_index_map():
    rng = np.random.default_rng(1)
    t = rng.standard_normal((3, 4, 5))
    for d in range(3):
        m = tensor.unfold(t, d)
        co_extents = [s for e, s in enumerate(t.shape) if e != d]
        assert m.shape == (t.shape[d], int(np.prod(co_extents)))
        for idx in np.ndindex(t.shape):
            # co-indices in original mode order, first index fastest
            col, stride = 0, 1
            for e in range(3):
                if e == d:
                    continue
                col += idx[e] * stride
                stride *= t.shape[e]
            assert m[idx[d], col] == t[idx]


def test_unfold_four_way():
    rng = np.random.default_rng(2)
    t = rng.standard_normal((2, 3, 2, 4))
    m = tensor.unfold(t, 2)
    for i, j, k, l in np.ndindex(t.shape):
        col = i + 2 * j + 6 * l
        assert m[k, col] == t[i, j, k, l]


def test_fold_inverts_unfold():
    rng = np.random.default_rng(3)
    for shape in [(4,), (3, 5), (2, 3, 4), (3, 2, 2, 2)]:
        t = rng.standard_normal(shape)
        for d in range(len(shape)):
            assert np.array_equal(tensor.fold(tensor.unfold(t, d), d, shape), t)


def test_unfold_mode_out_of_range():
    with pytest.raises(ValueError):
        tensor.unfold(np.zeros((2, 2)), 2)


def test_khatri_rao_columns_are_kroneckers():
    rng = np.random.default_rng(4)
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((5, 4))
    c = rng.standard_normal((2, 4))
    out = tensor.khatri_rao([a, b, c])
    assert out.shape == (30, 4)
    for r in range(4):
        expected = np.kron(np.kron(a[:, r], b[:, r]), c[:, r])
        assert np.allclose(out[:, r], expected, atol=1e-14)


def test_khatri_rao_single_matrix_passthrough():
    a = np.arange(6, dtype=np.float64).reshape(3, 2)
    assert np.array_equal(tensor.khatri_rao([a]), a)


def test_khatri_rao_rejects_column_mismatch():
    with pytest.raises(ValueError):
        tensor.khatri_rao([np.zeros((3, 2)), np.zeros((4, 3))])
    with pytest.raises(ValueError):
        tensor.khatri_rao([])


def test_cp_reconstruct_elementwise():
    rng = np.random.default_rng(5)
    u = [rng.standard_normal((3, 2)),
         rng.standard_normal((4, 2)),
         rng.standard_normal((5, 2))]
    t = tensor.cp_reconstruct(u)
    assert t.shape == (3, 4, 5)
    for i, j, k in np.ndindex(3, 4, 5):
        direct = sum(u[0][i, r] * u[1][j, r] * u[2][k, r] for r in range(2))
        assert abs(t[i, j, k] - direct) < 1e-12


def test_cp_reconstruct_one_mode():
    u = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.allclose(tensor.cp_reconstruct([u]), [3.0, 7.0])


def test_cp_reconstruct_rejects_rank_mismatch():
    with pytest.raises(ValueError):
        tensor.cp_reconstruct([np.zeros((3, 2)), np.zeros((4, 3))])


def test_mode_apply_matches_tensordot():
    rng = np.random.default_rng(6)
    shape = (3, 4, 5)
    t = rng.standard_normal(shape)
    x = tensor.vectorize(t)
    for d in range(3):
        a = rng.standard_normal((shape[d], shape[d]))
        y = tensor.mode_apply(a, x, shape, d)
        expected = np.moveaxis(np.tensordot(a, t, axes=(1, d)), 0, d)
        assert np.allclose(tensor.devectorize(y, shape), expected, atol=1e-13)


def test_mode_apply_accepts_sparse_operators():
    import scipy.sparse

    rng = np.random.default_rng(7)
    shape = (4, 3)
    t = rng.standard_normal(shape)
    a = rng.standard_normal((4, 4))
    sp = scipy.sparse.csr_matrix(a)
    x = tensor.vectorize(t)
    assert np.allclose(
        tensor.mode_apply(sp, x, shape, 0), tensor.mode_apply(a, x, shape, 0)
    )


def test_mode_apply_size_mismatch():
    with pytest.raises(ValueError):
        tensor.mode_apply(np.eye(3), np.zeros(8), (2, 4), 0)


def test_dense_mode_apply_edge_layouts():
    rng = np.random.default_rng(8)
    a = rng.standard_normal((4, 4))
    lead = rng.standard_normal((5, 4, 1))    # left == 1, single GEMM path
    trail = rng.standard_normal((1, 4, 6))   # right == 1
    mid = rng.standard_normal((3, 4, 2))
    for x3 in (lead, trail, mid):
        assert np.allclose(tensor.dense_mode_apply(a, x3), np.matmul(a, x3), atol=1e-13)


def test_kron_mvm_matches_explicit_kronecker():
    rng = np.random.default_rng(9)
    shape = (2, 3, 4)
    mats = [rng.standard_normal((s, s)) for s in shape]
    x = rng.standard_normal(24)
    # mode 0 varies fastest in the flat vector, so it sits rightmost
    big = functools.reduce(np.kron, [mats[2], mats[1], mats[0]])
    assert np.allclose(tensor.kron_mvm(mats, x, shape), big @ x, atol=1e-12)


def test_kron_mvm_skips_identity_entries():
    rng = np.random.default_rng(10)
    shape = (3, 2, 4)
    a = rng.standard_normal((2, 2))
    x = rng.standard_normal(24)
    big = functools.reduce(np.kron, [np.eye(4), a, np.eye(3)])
    assert np.allclose(tensor.kron_mvm([None, a, None], x, shape), big @ x, atol=1e-12)


def test_kron_mvm_size_checks():
    with pytest.raises(ValueError):
        tensor.kron_mvm([np.eye(2)], np.zeros(3), (2,))
    with pytest.raises(ValueError):
        tensor.kron_mvm([np.eye(2), np.eye(2)], np.zeros(4), (2,))
