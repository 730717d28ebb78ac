"""Timing harnesses: operator scaling sweep and backend comparison.

The fit cost is dominated by CG iterations, so the scaling sweep reports the
per-iteration wall time of both system operators as the tensor grows with
everything else held fixed (rank, bandwidth, sampling rate). Near-linear
growth shows as a time ratio close to 2 per size doubling. The backend
comparison times the banded mode-product kernel that the compiled extension
accelerates.
"""

from __future__ import annotations

import time

import numpy as np

from . import backend, solvers, tensor
from .io import make_random_mask
from .kernels import parse_kernel

__all__ = ["scaling_run", "compare_backends"]


def _per_iteration_seconds(op, b: np.ndarray, cg_iters: int, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        solvers.cg_solve(op, b, tol=0.0, max_iter=cg_iters)
        times.append((time.perf_counter() - t0) / cg_iters)
    return float(np.median(times))


def scaling_run(
    sizes: tuple[int, ...] = (10_000, 20_000, 40_000, 80_000),
    rank: int = 8,
    bandwidth: int = 5,
    sample_rate: float = 0.5,
    cg_iters: int = 25,
    repeats: int = 5,
    seed: int = 0,
) -> list[dict]:
    """Time one CG iteration of each system operator across tensor sizes.

    Sizes must be multiples of 2000; the tensor is (50, 40, size/2000) so
    only the last extent grows. Returns one row per size with per-iteration
    times and the ratio to the previous size.
    """
    rng = np.random.default_rng(seed)
    local_spec = parse_kernel(f"matern32(l=2)*bohman({bandwidth + 1})")
    factor_spec = parse_kernel(f"matern32(l=5)*bohman({bandwidth + 1})")
    rows: list[dict] = []
    for n in sizes:
        if n % 2000 or n < 2000:
            raise ValueError(f"size {n} is not a positive multiple of 2000")
        shape = (50, 40, n // 2000)
        mask = make_random_mask(shape, sample_rate, seed=seed)

        # factor system for the first mode
        factors = [0.1 * rng.random((s, rank)) for s in shape]
        h = tensor.khatri_rao([factors[2], factors[1]])
        cov = factor_spec.build(shape[0])
        f_op = solvers.factor_system_operator(h, mask.mode_mask_t(0), cov, rho=1.0)
        f_b = rng.standard_normal(f_op.n)
        f_time = _per_iteration_seconds(f_op, f_b, cg_iters, repeats)

        # local system with banded covariances on the two fixed modes
        covs = [local_spec.build(shape[0]), local_spec.build(shape[1]), None]
        l_op = solvers.local_system_operator(mask, covs, gamma=1.0, shape=shape)
        l_b = rng.standard_normal(l_op.n)
        l_time = _per_iteration_seconds(l_op, l_b, cg_iters, repeats)

        row = {
            "n": n,
            "shape": shape,
            "n_observed": mask.n_observed,
            "factor_iter_s": f_time,
            "local_iter_s": l_time,
        }
        if rows:
            row["factor_ratio"] = f_time / rows[-1]["factor_iter_s"]
            row["local_ratio"] = l_time / rows[-1]["local_iter_s"]
        rows.append(row)
    return rows


def compare_backends(
    n_mode: int = 400,
    bandwidth: int = 9,
    co_size: int = 150,
    repeats: int = 7,
    seed: int = 0,
) -> dict:
    """Median time of the banded mode product per available backend.

    Times both extreme layouts: the banded mode leading (co-indices trail)
    and trailing (co-indices lead), which bracket what the local solver sees.
    """
    rng = np.random.default_rng(seed)
    bands = np.abs(rng.standard_normal((bandwidth + 1, n_mode)))
    bands[0] += bandwidth + 1.0
    lead = np.ascontiguousarray(rng.standard_normal((1, n_mode, co_size)))
    trail = np.ascontiguousarray(rng.standard_normal((co_size, n_mode, 1)))

    out: dict = {"n_mode": n_mode, "bandwidth": bandwidth, "co_size": co_size, "backends": {}}
    for name in backend.available_backends():
        impl = backend.get_impl(name)
        times = {}
        for label, x3 in (("mode_leading", lead), ("mode_trailing", trail)):
            samples = []
            for _ in range(repeats):
                t0 = time.perf_counter()
                impl.banded_mode_apply(bands, x3)
                samples.append(time.perf_counter() - t0)
            times[label] = float(np.median(samples))
        out["backends"][name] = times
    if {"pure", "compiled"} <= out["backends"].keys():
        out["speedup"] = {
            label: out["backends"]["pure"][label] / out["backends"]["compiled"][label]
            for label in ("mode_leading", "mode_trailing")
        }
    return out
