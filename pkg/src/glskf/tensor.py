"""Dense tensor layout conventions and multilinear primitives.

Tensors are plain float64 numpy arrays. All flattening is first-index-fastest
(Fortran order): ``vectorize(t)[i1 + I1*i2 + I1*I2*i3 + ...] = t[i1, i2, i3, ...]``.
Mode-d unfolding puts index d on the rows and the remaining indices on the
columns, co-indices ordered first-index-fastest as well. Every routine here
sticks to that single convention so that Kronecker-structured operators,
Khatri-Rao products and CP reconstructions all agree on which entry is which.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "vectorize",
    "devectorize",
    "unfold",
    "fold",
    "khatri_rao",
    "cp_reconstruct",
    "kron_mvm",
    "mode_apply",
]


def vectorize(t: np.ndarray) -> np.ndarray:
    """Flatten a tensor first-index-fastest into a 1-D vector."""
    return np.ravel(t, order="F")


def devectorize(v: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Inverse of :func:`vectorize` for a given shape."""
    v = np.asarray(v)
    n = int(np.prod(shape))
    if v.size != n:
        raise ValueError(f"vector of size {v.size} does not fill shape {shape}")
    return v.reshape(shape, order="F")


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-d unfolding: shape (I_d, N/I_d), co-indices first-index-fastest."""
    t = np.asarray(t)
    if not 0 <= mode < t.ndim:
        raise ValueError(f"mode {mode} out of range for ndim {t.ndim}")
    return np.reshape(np.moveaxis(t, mode, 0), (t.shape[mode], -1), order="F")


def fold(m: np.ndarray, mode: int, shape: tuple[int, ...]) -> np.ndarray:
    """Inverse of :func:`unfold`: rebuild the tensor of the given shape."""
    shape = tuple(int(s) for s in shape)
    rest = shape[:mode] + shape[mode + 1 :]
    moved = np.reshape(np.asarray(m), (shape[mode],) + rest, order="F")
    return np.moveaxis(moved, 0, mode)


def khatri_rao(matrices: list[np.ndarray]) -> np.ndarray:
    """Column-wise Kronecker product of a list of matrices.

    ``out[:, r] = matrices[0][:, r] kron ... kron matrices[-1][:, r]``, so the
    row index of the *last* matrix varies fastest. Passing factor matrices in
    mode order D-1, ..., 0 therefore yields rows ordered first-index-fastest,
    matching :func:`vectorize`.
    """
    if not matrices:
        raise ValueError("need at least one matrix")
    r = matrices[0].shape[1]
    for m in matrices:
        if m.ndim != 2 or m.shape[1] != r:
            raise ValueError("all matrices must be 2-D with equal column counts")
    out = matrices[0]
    for m in matrices[1:]:
        # (i, j, r) -> row index i*rows(m) + j: later matrix varies fastest
        out = (out[:, None, :] * m[None, :, :]).reshape(-1, r)
    return out


def cp_reconstruct(factors: list[np.ndarray]) -> np.ndarray:
    """Sum of rank-one terms built from per-mode factor matrices.

    ``factors[d]`` has shape (I_d, R); the result has shape (I_1, ..., I_D)
    with entry ``sum_r prod_d factors[d][i_d, r]``.
    """
    if not factors:
        raise ValueError("need at least one factor matrix")
    r = factors[0].shape[1]
    for f in factors:
        if f.ndim != 2 or f.shape[1] != r:
            raise ValueError("factor matrices must share the column count")
    shape = tuple(f.shape[0] for f in factors)
    if len(factors) == 1:
        return factors[0].sum(axis=1)
    co = khatri_rao(list(reversed(factors[1:])))  # rows: i2 fastest
    m1 = factors[0] @ co.T
    return fold(m1, 0, shape)


def _op_size(op) -> int:
    if op is None:
        raise ValueError("operator entry is None")
    if hasattr(op, "n"):
        return int(op.n)
    return int(np.asarray(op.shape)[0])


def mode_apply(op, x: np.ndarray, shape: tuple[int, ...], mode: int) -> np.ndarray:
    """Apply a square operator along one mode of a vectorized tensor.

    ``x`` is the first-index-fastest flattening of a tensor with the given
    shape; the result is the flattening of the tensor with ``op`` contracted
    against index ``mode``. Accepts dense arrays, scipy sparse matrices, and
    covariance operators exposing ``apply_mode``.
    """
    shape = tuple(int(s) for s in shape)
    n = shape[mode]
    left = int(np.prod(shape[:mode], dtype=np.int64)) if mode > 0 else 1
    right = int(np.prod(shape[mode + 1 :], dtype=np.int64)) if mode + 1 < len(shape) else 1
    if _op_size(op) != n:
        raise ValueError(f"operator size {_op_size(op)} does not match extent {n} of mode {mode}")
    # A C-order (right, n, left) view of a first-index-fastest flat buffer puts
    # the target mode in the middle with no copy.
    x3 = np.ascontiguousarray(x).reshape(right, n, left)
    y3 = _apply_mode_dispatch(op, x3)
    return y3.reshape(-1)


def _apply_mode_dispatch(op, x3: np.ndarray) -> np.ndarray:
    if hasattr(op, "apply_mode"):
        return op.apply_mode(x3)
    if hasattr(op, "toarray") and not isinstance(op, np.ndarray):
        # scipy sparse: contract on a 2-D view with the mode on the rows
        right, n, left = x3.shape
        x2 = x3.transpose(1, 0, 2).reshape(n, right * left)
        y2 = op @ x2
        return np.asarray(y2).reshape(n, right, left).transpose(1, 0, 2)
    return dense_mode_apply(np.asarray(op), x3)


def dense_mode_apply(a: np.ndarray, x3: np.ndarray) -> np.ndarray:
    """Contract a dense (n, n) matrix against the middle axis of (right, n, left)."""
    right, n, left = x3.shape
    if left == 1:
        # single GEMM instead of `right` matrix-vector products
        return (x3[:, :, 0] @ a.T)[:, :, None]
    if right == 1:
        return (a @ x3[0])[None, :, :]
    return np.matmul(a, x3)


def kron_mvm(ops: list, x: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Matrix-vector product with a Kronecker product, one mode at a time.

    ``ops[d]`` acts along mode d, so the realized matrix is
    ``ops[D-1] kron ... kron ops[0]`` under the first-index-fastest vector
    layout. Entries that are None (or identity operators) are skipped. Never
    forms the Kronecker product explicitly; cost is one mode product per
    non-identity factor.
    """
    shape = tuple(int(s) for s in shape)
    if len(ops) != len(shape):
        raise ValueError(f"got {len(ops)} operators for {len(shape)} modes")
    n = int(np.prod(shape, dtype=np.int64))
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (n,):
        raise ValueError(f"vector of size {x.size} does not match shape {shape}")
    for d, op in enumerate(ops):
        if op is None or getattr(op, "is_identity", False):
            continue
        x = mode_apply(op, x, shape, d)
    return x
