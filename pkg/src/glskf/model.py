"""Alternating estimation of the additive completion model.

The completed tensor is the sum of a smooth low-rank part (per-mode factor
matrices, kernel-smoothed columns) and a local residual field whose
covariance is a Kronecker product of per-mode covariances. Each outer
iteration updates every factor matrix in turn by conjugate gradient on its
normal equations, then, once the warm-up phase is over, updates the local
field through its dual formulation. Observed cells of the returned tensor
are the input values copied through unchanged; the model only fills the
holes.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import backend, solvers, tensor
from .kernels import CovarianceOperator, DenseCov, IdentityCov, KernelSpec, empirical_cov, parse_kernel

__all__ = [
    "ObservationMask",
    "GlskfConfig",
    "FitReport",
    "FitResult",
    "MODES",
    "objective",
    "update_factor",
    "update_local",
    "refresh_channel_cov",
    "fit",
]

MODES = ("glskf", "lstf", "lskf", "glslocal")

# diagonal guard for a singular smoothing precision when a slab has no data
_SINGULAR_GUARD = 1e-10


class ObservationMask:
    """Boolean indicator of observed cells plus the derived index views.

    All linear indices are first-index-fastest, matching
    :func:`glskf.tensor.vectorize`; per-mode views are cached since the
    solvers ask for them once per outer iteration.
    """

    def __init__(self, indicator: np.ndarray):
        ind = np.asarray(indicator)
        if ind.dtype != np.bool_:
            vals = np.unique(ind)
            if not np.isin(vals, (0, 1)).all():
                raise ValueError("mask entries must be 0/1 or boolean")
            ind = ind.astype(bool)
        self.indicator = ind
        self.shape = ind.shape
        self.size = ind.size
        self.n_observed = int(ind.sum())
        self._linear: np.ndarray | None = None
        self._mode_t: dict[int, np.ndarray] = {}

    @classmethod
    def from_linear(cls, shape: tuple[int, ...], idx: np.ndarray) -> "ObservationMask":
        flat = np.zeros(int(np.prod(shape, dtype=np.int64)), dtype=bool)
        flat[np.asarray(idx, dtype=np.int64)] = True
        return cls(tensor.devectorize(flat, tuple(shape)))

    @property
    def n_missing(self) -> int:
        return self.size - self.n_observed

    def observed_linear(self) -> np.ndarray:
        if self._linear is None:
            self._linear = np.flatnonzero(tensor.vectorize(self.indicator))
        return self._linear

    def complement_linear(self) -> np.ndarray:
        return np.flatnonzero(~tensor.vectorize(self.indicator))

    def mode_mask_t(self, mode: int) -> np.ndarray:
        """Transposed mode-d unfolding of the indicator, as float64."""
        if mode not in self._mode_t:
            self._mode_t[mode] = np.ascontiguousarray(
                tensor.unfold(self.indicator, mode).T, dtype=np.float64
            )
        return self._mode_t[mode]

    def observed_values(self, t: np.ndarray) -> np.ndarray:
        return tensor.vectorize(t)[self.observed_linear()]

    def scatter(self, values: np.ndarray) -> np.ndarray:
        """Zero-pad observed-cell values back to a full flat vector."""
        full = np.zeros(self.size)
        full[self.observed_linear()] = values
        return full


def _as_specs(kernels, ndim: int, what: str) -> list[KernelSpec]:
    if kernels is None:
        return [KernelSpec("identity") for _ in range(ndim)]
    specs = []
    for k in kernels:
        specs.append(parse_kernel(k) if isinstance(k, str) else k)
    if len(specs) != ndim:
        raise ValueError(f"{what}: got {len(specs)} kernels for {ndim} modes")
    return specs


@dataclass
class GlskfConfig:
    """Model and solver settings for one fit.

    Kernels may be given as KernelSpec objects or grammar strings, one per
    mode; None means identity everywhere. ``warmup`` outer iterations run
    factors-only before the local field joins. ``stop_tol`` is relative: the
    fit stops when the squared change of the reconstruction on observed
    cells drops below stop_tol times the squared norm of the observed data.
    """

    rank: int = 10
    rho: float = 1.0
    gamma: float = 1.0
    factor_kernels: list | None = None
    local_kernels: list | None = None
    mode: str = "glskf"
    warmup: int = 5
    max_outer: int = 50
    stop_tol: float = 1e-8
    cg_tol: float = 1e-6
    cg_max_iter: int = 1000
    cg_residual: str = "abs"
    init_scale: float = 0.1
    seed: int = 0
    empirical_mode: int | None = None
    empirical_jitter: float = 1e-6

    def uses_factors(self) -> bool:
        return self.mode != "glslocal"

    def uses_local(self) -> bool:
        return self.mode in ("glskf", "glslocal")

    def resolve(self, ndim: int) -> tuple[list[KernelSpec], list[KernelSpec], list[int]]:
        """Validate against a tensor rank and return per-mode kernel specs
        plus the modes whose local covariance is refreshed empirically."""
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.uses_factors() and self.rank < 1:
            raise ValueError("rank must be at least 1")
        for name in ("rho", "gamma", "stop_tol", "cg_tol", "init_scale", "empirical_jitter"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.warmup < 0 or self.max_outer < 1:
            raise ValueError("warmup must be >= 0 and max_outer >= 1")
        if self.cg_max_iter < 1:
            raise ValueError("cg_max_iter must be at least 1")
        if self.cg_residual not in ("abs", "rel"):
            raise ValueError("cg_residual must be 'abs' or 'rel'")

        factor_specs = _as_specs(self.factor_kernels, ndim, "factor_kernels")
        local_specs = _as_specs(self.local_kernels, ndim, "local_kernels")
        if self.mode == "lstf":
            # the non-smoothed ablation: identity factor covariances throughout
            factor_specs = [KernelSpec("identity") for _ in range(ndim)]
        for spec in factor_specs:
            if spec.family == "empirical":
                raise ValueError("empirical covariance is only available for local kernels")
        for spec in local_specs:
            if spec.family == "qv":
                raise ValueError("qv smoothing has no covariance side; use it on factors only")

        refresh = [d for d, s in enumerate(local_specs) if s.family == "empirical"]
        if self.empirical_mode is not None:
            if not 0 <= self.empirical_mode < ndim:
                raise ValueError("empirical_mode out of range")
            if local_specs[self.empirical_mode].family != "empirical":
                raise ValueError("empirical_mode must point at an 'empirical' local kernel")
            refresh = [self.empirical_mode]
        return factor_specs, local_specs, refresh


@dataclass
class ObjectiveEvent:
    iteration: int
    label: str
    value: float


@dataclass
class CgEvent:
    iteration: int
    label: str
    cg_iterations: int
    final_residual_norm: float
    converged: bool


@dataclass
class FitReport:
    mode: str
    converged: bool
    iterations: int
    final_change: float | None
    objective_trace: list[ObjectiveEvent] = field(default_factory=list)
    cg_trace: list[CgEvent] = field(default_factory=list)
    iteration_seconds: list[float] = field(default_factory=list)
    backend: str = ""

    def objective_values(self, skip_labels: tuple[str, ...] = ()) -> list[float]:
        return [e.value for e in self.objective_trace if e.label not in skip_labels]

    def total_cg_iterations(self) -> int:
        return sum(e.cg_iterations for e in self.cg_trace)


@dataclass
class FitResult:
    smooth: np.ndarray
    local: np.ndarray
    completed: np.ndarray
    factors: list[np.ndarray] | None
    report: FitReport


def objective(
    y: np.ndarray,
    mask: ObservationMask,
    factors: list[np.ndarray] | None,
    local: np.ndarray | None,
    rho: float,
    gamma: float,
    factor_ops: list[CovarianceOperator] | None,
    local_ops: list[CovarianceOperator] | None,
) -> float:
    """Penalized half-squared-error objective the block updates descend.

    Data term over observed cells only; factor columns pay rho/2 times their
    kernel-precision quadratic form; the local field pays gamma/2 times its
    Kronecker-precision quadratic form.
    """
    y_o = mask.observed_values(y)
    fit_o = np.zeros_like(y_o)
    shape = y.shape
    m_t = None
    if factors is not None:
        m_t = tensor.cp_reconstruct(factors)
        fit_o = fit_o + mask.observed_values(m_t)
    if local is not None:
        fit_o = fit_o + mask.observed_values(local)
    res = y_o - fit_o
    value = 0.5 * float(res @ res)
    if factors is not None and rho != 0.0:
        for d, u in enumerate(factors):
            value += 0.5 * rho * factor_ops[d].penalty(u)
    if local is not None and gamma != 0.0:
        r_vec = tensor.vectorize(local)
        if r_vec.any():
            pr = tensor.kron_mvm([op.precision for op in local_ops], r_vec, shape)
            value += 0.5 * gamma * float(r_vec @ pr)
    return value


def update_factor(
    d: int,
    factors: list[np.ndarray],
    g_obs: np.ndarray,
    mask: ObservationMask,
    covariance: CovarianceOperator,
    rho: float,
    *,
    cg_tol: float = 1e-6,
    cg_max_iter: int = 1000,
    cg_residual: str = "abs",
    x0: np.ndarray | None = None,
) -> tuple[np.ndarray, solvers.CgReport]:
    """Solve the mode-d factor normal equations by warm-started CG.

    ``g_obs`` is the masked working residual (data minus local field, zero at
    unobserved cells). The other factor matrices are fixed; the solution for
    mode d is exact up to the CG tolerance. Returns the new (I_d, R) factor.
    """
    shape = g_obs.shape
    ndim = g_obs.ndim
    i_d = shape[d]
    co = [factors[e] for e in reversed(range(ndim)) if e != d]
    if co:
        h = tensor.khatri_rao(co)
    else:
        h = np.ones((1, factors[d].shape[1]))
    mask_t = mask.mode_mask_t(d)
    gt = np.ascontiguousarray(tensor.unfold(g_obs, d).T)
    b = np.ravel(h.T @ gt, order="F")

    guard = 0.0
    if covariance.is_singular and (mask_t.sum(axis=0) == 0).any():
        guard = _SINGULAR_GUARD
    op = solvers.factor_system_operator(h, mask_t, covariance, rho, guard=guard)
    x_init = None if x0 is None else np.ravel(np.asarray(x0, dtype=np.float64))
    x, rep = solvers.cg_solve(
        op, b, x0=x_init, tol=cg_tol, max_iter=cg_max_iter, residual=cg_residual
    )
    return x.reshape(i_d, factors[d].shape[1]), rep


def update_local(
    l_obs: np.ndarray,
    mask: ObservationMask,
    covariances: list[CovarianceOperator],
    gamma: float,
    shape: tuple[int, ...],
    *,
    z0: np.ndarray | None = None,
    cg_tol: float = 1e-6,
    cg_max_iter: int = 1000,
    cg_residual: str = "abs",
) -> tuple[np.ndarray, np.ndarray, solvers.CgReport]:
    """Update the local field from its dual system on observed cells.

    Solves (restrict K restrict^T + gamma I) z = l_obs by warm-started CG,
    then expands r = K restrict^T z to the full grid. Returns the flat local
    field, the dual vector (the next warm start), and the CG report.
    """
    op = solvers.local_system_operator(mask, covariances, gamma, shape)
    z, rep = solvers.cg_solve(
        op, l_obs, x0=z0, tol=cg_tol, max_iter=cg_max_iter, residual=cg_residual
    )
    r_vec = tensor.kron_mvm(covariances, mask.scatter(z), shape)
    return r_vec, z, rep


def refresh_channel_cov(local: np.ndarray, mode: int, jitter: float = 1e-6) -> DenseCov:
    """Re-estimate one mode's local covariance from the current field."""
    rows = tensor.unfold(local, mode)
    return DenseCov(empirical_cov(rows, jitter=jitter))


def _check_inputs(y: np.ndarray, mask: ObservationMask) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape != mask.shape:
        raise ValueError(f"data shape {y.shape} does not match mask shape {mask.shape}")
    if y.ndim < 1:
        raise ValueError("need at least a 1-D tensor")
    if mask.n_observed == 0:
        raise ValueError("empty observed set: nothing to fit")
    if not np.all(np.isfinite(mask.observed_values(y))):
        raise ValueError("non-finite values among observed entries")
    return y


def fit(y: np.ndarray, mask: ObservationMask, config: GlskfConfig) -> FitResult:
    """Run the full alternating scheme and complete the tensor.

    Depending on ``config.mode`` the model keeps both components (glskf),
    factors only (lstf: identity covariances, lskf: kernelized), or the local
    field only (glslocal; the warm-up phase is meaningless there and is
    skipped). Observed cells of ``completed`` are the input values copied
    bitwise; only unobserved cells come from the model.
    """
    y = _check_inputs(y, mask)
    shape = y.shape
    ndim = y.ndim
    factor_specs, local_specs, refresh_modes = config.resolve(ndim)

    factor_ops = [factor_specs[d].build(shape[d]) for d in range(ndim)] if config.uses_factors() else None
    local_ops = [local_specs[d].build(shape[d]) for d in range(ndim)] if config.uses_local() else None

    rng = np.random.default_rng(config.seed)
    factors = None
    if config.uses_factors():
        factors = [config.init_scale * rng.random((shape[d], config.rank)) for d in range(ndim)]

    idx = mask.observed_linear()
    y_vec = tensor.vectorize(y)
    y_o = y_vec[idx]
    y_o_sq = float(y_o @ y_o)
    n = y.size

    m_vec = np.zeros(n)
    r_vec = np.zeros(n)
    z = np.zeros(idx.size)

    warmup_k = config.warmup if config.mode == "glskf" else 0
    cg_opts = dict(cg_tol=config.cg_tol, cg_max_iter=config.cg_max_iter, cg_residual=config.cg_residual)

    report = FitReport(
        mode=config.mode, converged=False, iterations=0, final_change=None,
        backend=backend.active_backend(),
    )

    def record_objective(k: int, label: str):
        local_t = tensor.devectorize(r_vec, shape) if config.uses_local() else None
        value = objective(y, mask, factors, local_t, config.rho, config.gamma, factor_ops, local_ops)
        report.objective_trace.append(ObjectiveEvent(k, label, value))

    if factors is not None:
        m_vec = tensor.vectorize(tensor.cp_reconstruct(factors))
    record_objective(-1, "init")

    prev_recon: np.ndarray | None = None
    for k in range(config.max_outer):
        t0 = time.perf_counter()

        if factors is not None:
            g_full = np.zeros(n)
            g_full[idx] = y_o - r_vec[idx]
            g_obs = tensor.devectorize(g_full, shape)
            for d in range(ndim):
                factors[d], rep = update_factor(
                    d, factors, g_obs, mask, factor_ops[d], config.rho,
                    x0=factors[d], **cg_opts,
                )
                report.cg_trace.append(
                    CgEvent(k, f"factor{d}", rep.iterations, rep.final_residual_norm, rep.converged)
                )
                record_objective(k, f"factor{d}")
            m_vec = tensor.vectorize(tensor.cp_reconstruct(factors))

        if config.uses_local() and k >= warmup_k:
            l_o = y_o - m_vec[idx]
            r_vec, z, rep = update_local(
                l_o, mask, local_ops, config.gamma, shape, z0=z, **cg_opts
            )
            report.cg_trace.append(
                CgEvent(k, "local", rep.iterations, rep.final_residual_norm, rep.converged)
            )
            record_objective(k, "local")
            if refresh_modes:
                local_t = tensor.devectorize(r_vec, shape)
                for d in refresh_modes:
                    local_ops[d] = refresh_channel_cov(local_t, d, jitter=config.empirical_jitter)
                # the penalty now measures against the refreshed covariance,
                # so this event starts a new descent segment
                record_objective(k, "cov_refresh")

        report.iteration_seconds.append(time.perf_counter() - t0)
        report.iterations = k + 1

        recon = m_vec[idx] + r_vec[idx]
        if k >= warmup_k:
            if prev_recon is not None:
                diff = recon - prev_recon
                change = float(diff @ diff) / (y_o_sq if y_o_sq > 0 else 1.0)
                report.final_change = change
                if change < config.stop_tol:
                    report.converged = True
                    break
            prev_recon = recon

    if report.iterations == config.max_outer and not report.converged:
        warnings.warn("stopped at max_outer without meeting the convergence tolerance")

    completed_vec = m_vec + r_vec
    completed_vec[idx] = y_o
    return FitResult(
        smooth=tensor.devectorize(m_vec, shape),
        local=tensor.devectorize(r_vec, shape),
        completed=tensor.devectorize(completed_vec, shape),
        factors=factors,
        report=report,
    )
