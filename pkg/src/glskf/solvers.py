"""Matrix-free conjugate gradient and the two block-update system operators.

Both block updates in the alternating scheme are symmetric positive definite
linear systems that are never formed explicitly. The factor system acts on
the stacked factor matrix laid out rank-fastest; the local system acts on a
dual vector with one entry per observed cell. Warm starts matter: each outer
iteration changes the systems only slightly, so the previous solution is the
natural initial iterate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor
from .errors import NumericError

__all__ = [
    "LinearOperator",
    "CgReport",
    "cg_solve",
    "dense_solve",
    "factor_system_operator",
    "local_system_operator",
]


class LinearOperator:
    """A square operator given by its size and an apply callable."""

    def __init__(self, n: int, apply_fn):
        self.n = int(n)
        self._apply = apply_fn

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self._apply(x)

    __call__ = apply


@dataclass
class CgReport:
    iterations: int
    final_residual_norm: float
    converged: bool


def cg_solve(
    op: LinearOperator,
    b: np.ndarray,
    x0: np.ndarray | None = None,
    tol: float = 1e-6,
    max_iter: int = 1000,
    residual: str = "abs",
) -> tuple[np.ndarray, CgReport]:
    """Conjugate gradient for SPD systems, no preconditioning.

    Stops once the residual 2-norm drops below the threshold: ``tol`` itself
    for ``residual="abs"``, or ``tol * (1 + ||b||)`` for ``residual="rel"``.
    A warm start that already satisfies the threshold returns immediately
    with zero iterations. Non-finite values or nonpositive curvature abort
    with NumericError since they signal a broken or indefinite operator.
    """
    b = np.asarray(b, dtype=np.float64).ravel()
    if b.size != op.n:
        raise ValueError(f"rhs of size {b.size} for operator of size {op.n}")
    if residual == "abs":
        threshold = tol
    elif residual == "rel":
        threshold = tol * (1.0 + float(np.linalg.norm(b)))
    else:
        raise ValueError(f"residual must be 'abs' or 'rel', got {residual!r}")

    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = np.asarray(x0, dtype=np.float64).ravel().copy()
        if x.size != b.size:
            raise ValueError("x0 does not match the system size")
        r = b - np.asarray(op.apply(x), dtype=np.float64).ravel()

    rs = float(r @ r)
    rn = np.sqrt(rs)
    if not np.isfinite(rn):
        raise NumericError("non-finite residual entering conjugate gradient")
    if max_iter == 0:
        return x, CgReport(0, rn, False)
    if rn < threshold:
        return x, CgReport(0, rn, True)

    p = r.copy()
    for it in range(1, max_iter + 1):
        ap = np.asarray(op.apply(p), dtype=np.float64).ravel()
        curv = float(p @ ap)
        if not np.isfinite(curv):
            raise NumericError("non-finite values in conjugate gradient (broken operator)")
        if curv <= 0.0:
            raise NumericError("nonpositive curvature: system is not positive definite")
        alpha = rs / curv
        x += alpha * p
        r -= alpha * ap
        rs_new = float(r @ r)
        rn = np.sqrt(rs_new)
        if not np.isfinite(rn):
            raise NumericError("non-finite residual in conjugate gradient")
        if rn < threshold:
            return x, CgReport(it, rn, True)
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x, CgReport(max_iter, rn, False)


def dense_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Direct solve used as the small-scale reference path."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    if b.shape[0] != a.shape[0]:
        raise ValueError("rhs does not match the matrix")
    try:
        return np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"dense solve failed: {exc}") from None


def factor_system_operator(
    h: np.ndarray,
    mask_t: np.ndarray,
    covariance,
    rho: float,
    guard: float = 0.0,
) -> LinearOperator:
    """Normal-equation operator for one factor-matrix update.

    Acts on the factor matrix for mode d stored rank-fastest, i.e. on
    ``vec(U^T)`` of length R * I_d. ``h`` is the (N/I_d, R) co-factor matrix
    (Khatri-Rao product of the other factors), ``mask_t`` the (N/I_d, I_d)
    observation indicator of the mode-d unfolding, transposed. The data term
    is block diagonal: column i of the factor only meets rows of ``h`` where
    slab i was observed. The smoothing term applies the kernel precision
    across the I_d index for every rank component, scaled by rho. ``guard``
    adds guard * I; it is only needed when the precision is singular and some
    slab has no observations at all.
    """
    h = np.asarray(h, dtype=np.float64)
    mask_t = np.asarray(mask_t, dtype=np.float64)
    m, r = h.shape
    if mask_t.shape[0] != m:
        raise ValueError("mask unfolding does not match the co-factor matrix")
    i_d = mask_t.shape[1]
    rho = float(rho)
    guard = float(guard)

    def apply(v: np.ndarray) -> np.ndarray:
        x = np.asarray(v, dtype=np.float64).reshape((r, i_d), order="F")
        p = h @ x
        p *= mask_t
        q = h.T @ p
        if rho != 0.0:
            q = q + rho * covariance.precision_matmat(x.T).T
        if guard != 0.0:
            q = q + guard * x
        return np.ravel(q, order="F")

    return LinearOperator(r * i_d, apply)


def local_system_operator(mask, covariances: list, gamma: float, shape: tuple[int, ...]) -> LinearOperator:
    """Dual-space operator for the local-component update.

    One coordinate per observed cell, ordered first-index-fastest. Applying
    the operator pads the dual vector to the full tensor, pushes it through
    the per-mode covariances (the Kronecker-structured field covariance), and
    restricts back to the observed cells, plus gamma times the input.
    """
    idx = mask.observed_linear()
    n_full = int(np.prod(shape, dtype=np.int64))
    gamma = float(gamma)

    def apply(z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64).ravel()
        full = np.zeros(n_full)
        full[idx] = z
        full = tensor.kron_mvm(covariances, full, shape)
        return gamma * z + full[idx]

    return LinearOperator(idx.size, apply)
