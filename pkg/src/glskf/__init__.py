"""Tensor completion with a smooth low-rank part plus a kernel-correlated
local residual, estimated by alternating conjugate-gradient updates."""

__version__ = "0.1.0"

from .backend import active_backend
from .io import (
    make_random_mask,
    make_synthetic,
    read_csv_long,
    read_mask,
    read_tensor,
    write_mask,
    write_tensor,
)
from .kernels import (
    BandedCov,
    CovarianceOperator,
    DenseCov,
    IdentityCov,
    KernelSpec,
    QvPrecisionCov,
    SparsePrecisionCov,
    build_covariance_grid,
    parse_kernel,
)
from .metrics import EvalReport, evaluate_completion, mae_rmse, psnr, ssim
from .model import (
    FitReport,
    FitResult,
    GlskfConfig,
    ObservationMask,
    fit,
    objective,
    update_factor,
    update_local,
)
from .solvers import CgReport, LinearOperator, cg_solve, dense_solve
from .tensor import cp_reconstruct, fold, khatri_rao, kron_mvm, unfold, vectorize

__all__ = [
    "__version__",
    "active_backend",
    "make_random_mask",
    "make_synthetic",
    "read_csv_long",
    "read_mask",
    "read_tensor",
    "write_mask",
    "write_tensor",
    "BandedCov",
    "CovarianceOperator",
    "DenseCov",
    "IdentityCov",
    "KernelSpec",
    "QvPrecisionCov",
    "SparsePrecisionCov",
    "build_covariance_grid",
    "parse_kernel",
    "EvalReport",
    "evaluate_completion",
    "mae_rmse",
    "psnr",
    "ssim",
    "FitReport",
    "FitResult",
    "GlskfConfig",
    "ObservationMask",
    "fit",
    "objective",
    "update_factor",
    "update_local",
    "CgReport",
    "LinearOperator",
    "cg_solve",
    "dense_solve",
    "cp_reconstruct",
    "fold",
    "khatri_rao",
    "kron_mvm",
    "unfold",
    "vectorize",
]
