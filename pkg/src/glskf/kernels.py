"""Covariance kernels, taper, graph helpers and the operator wrappers.

Covariances appear in two roles. Factor smoothing needs the precision
(inverse covariance) applied to small per-mode matrices; the local residual
needs the covariance itself applied along tensor modes inside an iterative
solve. Both roles are served by CovarianceOperator subclasses that store the
cheapest faithful representation: dense matrix, symmetric bands, or a sparse
precision that is never inverted explicitly.

Grid kernels are stationary in the index distance |i - j|. Compact support
comes from multiplying by the Bohman taper, which keeps the matrix positive
semidefinite (Schur product of PSD matrices) and banded with bandwidth
ceil(range) - 1.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from . import backend, tensor
from .errors import KernelSpecError, NumericError

__all__ = [
    "matern32",
    "squared_exponential",
    "exponential_decay",
    "bohman_taper",
    "exponential_graph_weight",
    "build_laplacian",
    "chain_laplacian",
    "qv_precision",
    "rl_precision",
    "empirical_cov",
    "KernelSpec",
    "parse_kernel",
    "build_covariance_grid",
    "CovarianceOperator",
    "IdentityCov",
    "DenseCov",
    "BandedCov",
    "SparsePrecisionCov",
    "QvPrecisionCov",
]

_JITTERS = (0.0, 1e-12, 1e-10, 1e-8)


# ---------------------------------------------------------------------------
# kernel and taper functions


def matern32(delta, lengthscale: float, variance: float = 1.0):
    """Matern covariance with smoothness 3/2 at distance ``delta``."""
    a = np.sqrt(3.0) * np.abs(np.asarray(delta, dtype=np.float64)) / lengthscale
    return variance * (1.0 + a) * np.exp(-a)

def squared_exponential(delta, lengthscale: float, variance: float = 1.0):
    d = np.asarray(delta, dtype=np.float64)
    return variance * np.exp(-(d * d) / (2.0 * lengthscale * lengthscale))

def exponential_decay(delta, lengthscale: float, variance: float = 1.0):
    """exp(-delta / lengthscale^2); also used as a graph edge weight."""
    d = np.abs(np.asarray(delta, dtype=np.float64))
    return variance * np.exp(-d / (lengthscale * lengthscale))

# alias for the graph-weight role of the same decay curve
exponential_graph_weight = exponential_decay


def bohman_taper(delta, support: float):
    """Compactly supported correlation: positive definite, exactly zero at
    distances >= support."""
    d = np.abs(np.asarray(delta, dtype=np.float64))
    u = d / support
    inside = u < 1.0
    out = np.zeros_like(u)
    ui = u[inside]
    out[inside] = (1.0 - ui) * np.cos(np.pi * ui) + np.sin(np.pi * ui) / np.pi
    if np.ndim(delta) == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# graph helpers


def build_laplacian(weights) -> scipy.sparse.csr_matrix:
    """Combinatorial Laplacian diag(W 1) - W of a symmetric weight matrix.

    Off-diagonal weights must be nonnegative; the diagonal of ``weights`` is
    ignored (self-loops carry no smoothing information here).
    """
    w = scipy.sparse.csr_matrix(weights, dtype=np.float64)
    if w.shape[0] != w.shape[1]:
        raise ValueError("weight matrix must be square")
    scale = 1.0 + (abs(w).max() if w.nnz else 0.0)
    if (abs(w - w.T) > 1e-12 * scale).nnz:
        raise ValueError("weight matrix must be symmetric")
    if w.nnz and w.data.min() < 0:
        raise ValueError("edge weights must be nonnegative")
    w = w - scipy.sparse.diags(w.diagonal())
    deg = np.asarray(w.sum(axis=1)).ravel()
    return (scipy.sparse.diags(deg) - w).tocsr()


def chain_laplacian(n: int, lengthscale: float) -> scipy.sparse.csr_matrix:
    """Laplacian of the path graph on n grid points, consecutive neighbours
    linked with the exponential decay weight at unit distance."""
    if n < 1:
        raise ValueError("need at least one grid point")
    if n == 1:
        return scipy.sparse.csr_matrix((1, 1))
    w = float(exponential_decay(1.0, lengthscale))
    off = np.full(n - 1, w)
    adj = scipy.sparse.diags([off, off], [-1, 1])
    return build_laplacian(adj)


# ---------------------------------------------------------------------------
# shared factorization helpers


def _chol_dense(matrix: np.ndarray, what: str) -> tuple[np.ndarray, float]:
    for jit in _JITTERS:
        try:
            m = matrix if jit == 0.0 else matrix + jit * np.eye(matrix.shape[0])
            return np.linalg.cholesky(m), jit
        except np.linalg.LinAlgError:
            continue
    raise NumericError(f"{what} is not positive definite (jitter up to {_JITTERS[-1]} failed)")


def _chol_banded(bands: np.ndarray, what: str) -> tuple[np.ndarray, float]:
    for jit in _JITTERS:
        b = bands.copy()
        b[0] += jit
        try:
            return scipy.linalg.cholesky_banded(b, lower=True), jit
        except np.linalg.LinAlgError:
            continue
    raise NumericError(f"{what} is not positive definite (jitter up to {_JITTERS[-1]} failed)")


class _PrecisionView:
    """Adapter so kron_mvm can route a mode product through K^{-1}."""

    def __init__(self, op: "CovarianceOperator"):
        self._op = op
        self.n = op.n
        self.is_identity = op.is_identity

    def apply_mode(self, x3: np.ndarray) -> np.ndarray:
        right, n, left = x3.shape
        x2 = x3.transpose(1, 0, 2).reshape(n, right * left)
        y2 = self._op.precision_matmat(x2)
        return y2.reshape(n, right, left).transpose(1, 0, 2)


# ---------------------------------------------------------------------------
# covariance operators


class CovarianceOperator:
    """Square covariance on one tensor mode.

    Subclasses choose the storage; the interface is covariance application
    (``apply_mode``/``matmat``), precision application (``precision_matmat``),
    the quadratic form x^T K^{-1} x, and a dense Cholesky factor for sampling.
    """

    n: int
    kind: str = "abstract"
    is_identity = False
    is_singular = False
    spec: "KernelSpec | None" = None

    # covariance side -------------------------------------------------
    def apply_mode(self, x3: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def matmat(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        one_d = x.ndim == 1
        x2 = x[:, None] if one_d else x
        y3 = self.apply_mode(np.ascontiguousarray(x2)[None, :, :])
        y = y3[0]
        return y[:, 0] if one_d else y

    # precision side ----------------------------------------------------
    def precision_matmat(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def precision(self) -> _PrecisionView:
        return _PrecisionView(self)

    def quadratic_form(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64).ravel()
        return float(x @ self.precision_matmat(x[:, None])[:, 0])

    def penalty(self, u: np.ndarray) -> float:
        """Sum of per-column quadratic forms of a (n, m) matrix."""
        u = np.asarray(u, dtype=np.float64)
        return float(np.sum(u * self.precision_matmat(u)))

    # dense views and factors -------------------------------------------
    def dense(self) -> np.ndarray:
        raise NotImplementedError

    def dense_precision(self) -> np.ndarray:
        return self.precision_matmat(np.eye(self.n))

    def cholesky_lower(self) -> np.ndarray:
        l, _ = _chol_dense(self.dense(), f"{self.kind} covariance")
        return l


class IdentityCov(CovarianceOperator):
    kind = "identity"
    is_identity = True

    def __init__(self, n: int):
        self.n = int(n)

    def apply_mode(self, x3):
        return x3

    def precision_matmat(self, x):
        return np.asarray(x, dtype=np.float64)

    def quadratic_form(self, x):
        x = np.asarray(x, dtype=np.float64).ravel()
        return float(x @ x)

    def penalty(self, u):
        u = np.asarray(u, dtype=np.float64)
        return float(np.sum(u * u))

    def dense(self):
        return np.eye(self.n)

    def cholesky_lower(self):
        return np.eye(self.n)


class DenseCov(CovarianceOperator):
    kind = "dense"

    def __init__(self, matrix: np.ndarray):
        m = np.asarray(matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("covariance must be a square matrix")
        if not np.allclose(m, m.T, atol=1e-10 * (1.0 + np.abs(m).max())):
            raise ValueError("covariance must be symmetric")
        self.matrix = 0.5 * (m + m.T)
        self.n = m.shape[0]
        self._cho = None

    def apply_mode(self, x3):
        return tensor.dense_mode_apply(self.matrix, x3)

    def _factor(self):
        if self._cho is None:
            l, jit = _chol_dense(self.matrix, "dense covariance")
            self._cho = l
        return self._cho

    def precision_matmat(self, x):
        l = self._factor()
        x = np.asarray(x, dtype=np.float64)
        y = scipy.linalg.solve_triangular(l, x, lower=True)
        return scipy.linalg.solve_triangular(l.T, y, lower=False)

    def dense(self):
        return self.matrix.copy()

    def cholesky_lower(self):
        return self._factor().copy()


class BandedCov(CovarianceOperator):
    """Symmetric banded covariance, lower-diagonal-major storage:
    ``bands[k, j]`` holds entry (j+k, j)."""

    kind = "banded"

    def __init__(self, bands: np.ndarray):
        b = np.asarray(bands, dtype=np.float64)
        if b.ndim != 2:
            raise ValueError("bands must be a 2-D array")
        self.bands = np.ascontiguousarray(b)
        self.n = b.shape[1]
        self.bandwidth = b.shape[0] - 1
        self._cb = None

    def apply_mode(self, x3):
        return backend.banded_mode_apply(self.bands, np.ascontiguousarray(x3))

    def _factor(self):
        if self._cb is None:
            cb, _ = _chol_banded(self.bands, "banded covariance")
            self._cb = cb
        return self._cb

    def precision_matmat(self, x):
        x = np.asarray(x, dtype=np.float64)
        one_d = x.ndim == 1
        y = scipy.linalg.cho_solve_banded((self._factor(), True), x[:, None] if one_d else x)
        return y[:, 0] if one_d else y

    def dense(self):
        out = np.zeros((self.n, self.n))
        for k in range(self.bands.shape[0]):
            v = self.bands[k, : self.n - k]
            out[np.arange(self.n - k) + k, np.arange(self.n - k)] = v
            out[np.arange(self.n - k), np.arange(self.n - k) + k] = v
        return out

    def cholesky_lower(self):
        cb = self._factor()
        out = np.zeros((self.n, self.n))
        for k in range(cb.shape[0]):
            out[np.arange(self.n - k) + k, np.arange(self.n - k)] = cb[k, : self.n - k]
        return out


class SparsePrecisionCov(CovarianceOperator):
    """Covariance defined through a sparse precision matrix, kept in
    precision form; covariance products go through a cached factorization."""

    kind = "sparse_precision"

    def __init__(self, precision, singular: bool = False):
        p = scipy.sparse.csr_matrix(precision, dtype=np.float64)
        if p.shape[0] != p.shape[1]:
            raise ValueError("precision must be square")
        self.precision_matrix = p
        self.n = p.shape[0]
        self.is_singular = bool(singular)
        self._solver = None

    def _factor(self):
        if self.is_singular:
            raise NumericError("singular precision: covariance side is undefined")
        if self._solver is None:
            self._solver = scipy.sparse.linalg.splu(self.precision_matrix.tocsc())
        return self._solver

    def apply_mode(self, x3):
        lu = self._factor()
        right, n, left = x3.shape
        x2 = x3.transpose(1, 0, 2).reshape(n, right * left)
        y2 = lu.solve(np.ascontiguousarray(x2))
        return y2.reshape(n, right, left).transpose(1, 0, 2)

    def precision_matmat(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.asarray(self.precision_matrix @ x)

    def quadratic_form(self, x):
        x = np.asarray(x, dtype=np.float64).ravel()
        return float(x @ (self.precision_matrix @ x))

    def dense(self):
        return self._factor().solve(np.eye(self.n))

    def dense_precision(self):
        return self.precision_matrix.toarray()


class QvPrecisionCov(CovarianceOperator):
    """Quadratic-variation smoothing precision: x^T P x is the accumulated sum
    of squared consecutive differences. P is PSD but singular (constants are
    free), so only the precision side is available; solvers that need strict
    positive definiteness add their own diagonal guard."""

    kind = "qv"
    is_singular = True

    def __init__(self, n: int):
        self.n = int(n)

    def apply_mode(self, x3):
        raise NumericError("singular precision: covariance side is undefined")

    def precision_matmat(self, x):
        x = np.asarray(x, dtype=np.float64)
        one_d = x.ndim == 1
        x2 = x[:, None] if one_d else x
        y = 2.0 * x2
        y[0] -= x2[0]
        y[-1] -= x2[-1]
        y[:-1] -= x2[1:]
        y[1:] -= x2[:-1]
        return y[:, 0] if one_d else y

    def quadratic_form(self, x):
        # accumulated left to right so the value is exactly the plain running
        # sum of squared differences, independent of vectorized summation order
        x = np.asarray(x, dtype=np.float64).ravel()
        s = 0.0
        for i in range(x.size - 1):
            d = float(x[i + 1]) - float(x[i])
            s += d * d
        return s

    def penalty(self, u):
        u = np.asarray(u, dtype=np.float64)
        if u.ndim == 1:
            return self.quadratic_form(u)
        return float(sum(self.quadratic_form(u[:, j]) for j in range(u.shape[1])))

    def dense_precision(self):
        return self.precision_matmat(np.eye(self.n))


def qv_precision(n: int) -> QvPrecisionCov:
    """Difference-penalty precision operator on an n-point grid."""
    return QvPrecisionCov(n)


def rl_precision(laplacian, variance: float = 1.0) -> SparsePrecisionCov:
    """Graph-smoothing covariance stored as its precision I + variance * L."""
    lap = scipy.sparse.csr_matrix(laplacian, dtype=np.float64)
    if variance <= 0:
        raise ValueError("variance must be positive")
    p = scipy.sparse.eye(lap.shape[0], format="csr") + variance * lap
    return SparsePrecisionCov(p)


def empirical_cov(rows: np.ndarray, jitter: float = 1e-6) -> np.ndarray:
    """Sample covariance of the rows of a (m, k) matrix, plus jitter * I.

    Columns are treated as observations (divisor k - 1). An all-zero input has
    no information; the result degenerates to jitter * I with a warning.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ValueError("expected a 2-D matrix of row variables")
    m, k = rows.shape
    if k < 2:
        raise ValueError("need at least two columns to estimate a covariance")
    if not np.all(np.isfinite(rows)):
        raise ValueError("non-finite values in covariance input")
    if not rows.any():
        warnings.warn("all-zero input: empirical covariance degenerates to jitter * I")
        return jitter * np.eye(m)
    c = np.atleast_2d(np.cov(rows))
    return c + jitter * np.eye(m)


# ---------------------------------------------------------------------------
# kernel specification grammar


_FAMILIES = {
    "matern32": {"l": 1.0, "s2": 1.0},
    "se": {"l": 1.0, "s2": 1.0},
    "exp": {"l": 1.0, "s2": 1.0},
    "rl": {"l": 1.0, "s2": 1.0},
    "identity": {},
    "qv": {},
    "empirical": {"jitter": 1e-6},
}

_NAME_RE = re.compile(r"^([a-z][a-z0-9_]*)\s*(?:\((.*)\))?$", re.DOTALL)


@dataclass(frozen=True)
class KernelSpec:
    """Parsed kernel description: a base family, parameters, optional taper."""

    family: str
    params: dict = field(default_factory=dict)
    taper: float | None = None

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise KernelSpecError(f"unknown kernel family {self.family!r}")
        defaults = _FAMILIES[self.family]
        merged = dict(defaults)
        for key, val in self.params.items():
            if key not in defaults:
                raise KernelSpecError(f"{self.family} takes no parameter {key!r}")
            merged[key] = float(val)
        for key, val in merged.items():
            if val <= 0:
                raise KernelSpecError(f"{self.family} parameter {key}={val} must be positive")
        object.__setattr__(self, "params", merged)
        if self.taper is not None:
            if self.family in ("qv", "empirical", "identity"):
                raise KernelSpecError(f"taper is not meaningful for {self.family}")
            if self.taper <= 0:
                raise KernelSpecError("taper range must be positive")
            object.__setattr__(self, "taper", float(self.taper))

    def format(self) -> str:
        base = self.family
        if self.params:
            inner = ",".join(f"{k}={v:g}" for k, v in sorted(self.params.items()))
            base = f"{base}({inner})"
        if self.taper is not None:
            base = f"{base}*bohman({self.taper:g})"
        return base

    def build(self, n: int) -> CovarianceOperator:
        return build_covariance_grid(n, self)


def _parse_args(argtext: str, *, positional_ok: bool = False) -> dict:
    out: dict = {}
    argtext = argtext.strip()
    if not argtext:
        return out
    for piece in argtext.split(","):
        piece = piece.strip()
        if "=" in piece:
            key, _, val = piece.partition("=")
            key = key.strip()
        elif positional_ok and not out:
            key, val = "_", piece
        else:
            raise KernelSpecError(f"expected key=value, got {piece!r}")
        try:
            out[key] = float(val)
        except ValueError:
            raise KernelSpecError(f"non-numeric parameter value {val!r}") from None
    return out


def parse_kernel(text: str) -> KernelSpec:
    """Parse strings like ``matern32(l=30,s2=1)``, ``rl(l=1)*bohman(10)``,
    ``identity``, ``qv`` or ``empirical(jitter=1e-6)``."""
    if not isinstance(text, str) or not text.strip():
        raise KernelSpecError("empty kernel specification")
    parts = [p.strip() for p in text.strip().split("*")]
    if len(parts) > 2:
        raise KernelSpecError("at most one taper factor is allowed")
    m = _NAME_RE.match(parts[0])
    if not m:
        raise KernelSpecError(f"cannot parse kernel {parts[0]!r}")
    family, argtext = m.group(1), m.group(2) or ""
    if family == "bohman":
        raise KernelSpecError("bohman is a taper, not a base kernel")
    params = _parse_args(argtext)
    taper = None
    if len(parts) == 2:
        mt = _NAME_RE.match(parts[1])
        if not mt or mt.group(1) != "bohman":
            raise KernelSpecError(f"expected a bohman(...) taper, got {parts[1]!r}")
        targs = _parse_args(mt.group(2) or "", positional_ok=True)
        if set(targs) - {"_", "range"}:
            raise KernelSpecError("bohman takes a single range parameter")
        if not targs:
            raise KernelSpecError("bohman needs a range, e.g. bohman(10)")
        taper = targs.get("_", targs.get("range"))
    return KernelSpec(family=family, params=params, taper=taper)


def _stationary_curve(spec: KernelSpec):
    if spec.family == "matern32":
        return lambda d: matern32(d, spec.params["l"], spec.params["s2"])
    if spec.family == "se":
        return lambda d: squared_exponential(d, spec.params["l"], spec.params["s2"])
    if spec.family == "exp":
        return lambda d: exponential_decay(d, spec.params["l"], spec.params["s2"])
    return None


def _taper_bandwidth(support: float, n: int) -> int:
    # entries vanish exactly once |i - j| >= support
    return min(int(np.ceil(support)) - 1, n - 1)


def build_covariance_grid(n: int, spec: KernelSpec) -> CovarianceOperator:
    """Materialize a kernel specification on an n-point regular grid.

    Distances are |i - j|. Tapered kernels come back banded, untapered
    stationary kernels dense, graph-smoothing kernels as sparse precisions.
    ``empirical`` starts as the identity placeholder; the model swaps in the
    estimated covariance when it refreshes.
    """
    n = int(n)
    if n < 1:
        raise ValueError("grid must have at least one point")
    op: CovarianceOperator
    if spec.family == "identity" or spec.family == "empirical":
        op = IdentityCov(n)
    elif spec.family == "qv":
        op = QvPrecisionCov(n)
    elif spec.family == "rl":
        lap = chain_laplacian(n, spec.params["l"])
        base = rl_precision(lap, spec.params["s2"])
        if spec.taper is None:
            op = base
        else:
            op = _taper_to_banded(base.dense(), spec.taper, n)
    else:
        curve = _stationary_curve(spec)
        if curve is None:
            raise KernelSpecError(f"family {spec.family!r} cannot be built on a grid")
        if spec.taper is None:
            op = DenseCov(scipy.linalg.toeplitz(curve(np.arange(n))))
        else:
            bw = _taper_bandwidth(spec.taper, n)
            taps = bohman_taper(np.arange(bw + 1), spec.taper)
            vals = curve(np.arange(bw + 1)) * taps
            bands = np.zeros((bw + 1, n))
            for k in range(bw + 1):
                bands[k, : n - k] = vals[k]
            op = BandedCov(bands)
    op.spec = spec
    return op


def _taper_to_banded(cov: np.ndarray, support: float, n: int) -> BandedCov:
    bw = _taper_bandwidth(support, n)
    bands = np.zeros((bw + 1, n))
    for k in range(bw + 1):
        t = float(bohman_taper(k, support))
        bands[k, : n - k] = np.diagonal(cov, -k) * t
    return BandedCov(bands)
