"""Command-line interface.

Subcommands: ``complete`` fits the model and writes the completed tensor
plus a manifest that reproduces the run; ``synth`` and ``mask`` generate
test data; ``eval`` scores an estimate against ground truth on the held-out
cells; ``bench`` times the solver building blocks.

Exit codes: 0 success (and convergence), 2 the fit stopped at the iteration
cap, 64 usage errors, 65 malformed input files, 70 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, backend
from . import io as gio
from .bench import compare_backends, scaling_run
from .errors import DataFormatError, KernelSpecError, NumericError
from .kernels import parse_kernel
from .metrics import evaluate_completion
from .model import GlskfConfig, ObservationMask, fit
from .presets import get_preset

EXIT_OK = 0
EXIT_MAX_ITER = 2
EXIT_USAGE = 64
EXIT_DATA = 65
EXIT_NUMERIC = 70

_CONFIG_FIELDS = (
    "rank", "rho", "gamma", "factor_kernels", "local_kernels", "mode",
    "warmup", "max_outer", "stop_tol", "cg_tol", "cg_max_iter",
    "cg_residual", "init_scale", "seed", "empirical_mode", "empirical_jitter",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_shape(text: str) -> tuple[int, ...]:
    try:
        shape = tuple(int(p) for p in text.lower().replace(",", "x").split("x") if p)
    except ValueError:
        raise UsageError(f"cannot parse shape {text!r}; expected like 64x64x3") from None
    if not shape or any(s < 1 for s in shape):
        raise UsageError(f"shape {text!r} must be positive extents like 64x64x3")
    return shape


def _canonical_kernels(texts: list | None) -> list[str] | None:
    if texts is None:
        return None
    return [parse_kernel(t).format() if isinstance(t, str) else t.format() for t in texts]


def _config_from_settings(settings: dict) -> GlskfConfig:
    kwargs = {k: v for k, v in settings.items() if k in _CONFIG_FIELDS and v is not None}
    try:
        return GlskfConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _manifest_base(command: str, args_list: list[str]) -> dict:
    return {
        "tool": "glskf",
        "version": __version__,
        "command": command,
        "argv": args_list,
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "backend": backend.active_backend(),
    }


# ---------------------------------------------------------------------------
# complete


def _load_complete_inputs(args, manifest_inputs: dict):
    input_path = args.input or manifest_inputs.get("input")
    mask_path = args.mask or manifest_inputs.get("mask")
    shape_text = args.shape or manifest_inputs.get("shape")
    if input_path is None:
        raise UsageError("--input is required (or provide it through --from-manifest)")
    inputs_echo = {"input": input_path}
    if input_path.lower().endswith(".csv"):
        if shape_text is None:
            raise UsageError("CSV input needs --shape")
        if mask_path is not None:
            raise UsageError("CSV input derives the mask from its rows; --mask is not allowed")
        shape = _parse_shape(shape_text) if isinstance(shape_text, str) else tuple(shape_text)
        data = gio.read_csv_long(input_path, shape)
        y, mask = data.values, data.mask
        inputs_echo["shape"] = "x".join(str(s) for s in shape)
    else:
        if mask_path is None:
            raise UsageError("tensor input needs --mask")
        y = gio.read_tensor(input_path)
        mask = gio.read_mask(mask_path)
        if y.shape != mask.shape:
            raise DataFormatError(
                f"tensor shape {y.shape} does not match mask shape {mask.shape}"
            )
        inputs_echo["mask"] = mask_path
    return y, mask, inputs_echo


def cmd_complete(args) -> int:
    settings: dict = {}
    manifest_inputs: dict = {}
    if args.from_manifest:
        if args.preset:
            raise UsageError("--preset cannot be combined with --from-manifest")
        try:
            with open(args.from_manifest) as fh:
                man = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{args.from_manifest}: not valid JSON ({exc})") from None
        settings.update(man.get("config", {}))
        manifest_inputs = man.get("inputs", {})
    elif args.preset:
        try:
            preset = get_preset(args.preset)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        settings.update({k: preset[k] for k in ("rank", "rho", "gamma", "factor_kernels", "local_kernels")})

    for name in _CONFIG_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            settings[name] = value

    y, mask, inputs_echo = _load_complete_inputs(args, manifest_inputs)
    if args.preset:
        expected = get_preset(args.preset)["ndim"]
        if y.ndim != expected:
            raise UsageError(
                f"preset {args.preset!r} expects a {expected}-way tensor, got {y.ndim}-way"
            )

    settings["factor_kernels"] = _canonical_kernels(settings.get("factor_kernels"))
    settings["local_kernels"] = _canonical_kernels(settings.get("local_kernels"))
    config = _config_from_settings(settings)
    try:
        config.resolve(y.ndim)
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    os.makedirs(args.out_dir, exist_ok=True)
    t0 = time.perf_counter()
    result = fit(y, mask, config)
    wall = time.perf_counter() - t0
    rep = result.report

    paths = {
        "completed": os.path.join(args.out_dir, "completed.dten"),
        "smooth": os.path.join(args.out_dir, "smooth.dten"),
        "local": os.path.join(args.out_dir, "local.dten"),
    }
    gio.write_tensor(paths["completed"], result.completed)
    gio.write_tensor(paths["smooth"], result.smooth)
    gio.write_tensor(paths["local"], result.local)

    manifest = _manifest_base("complete", list(args.argv_echo))
    manifest["config"] = {
        name: getattr(config, name) for name in _CONFIG_FIELDS
    }
    manifest["inputs"] = inputs_echo
    manifest["outputs"] = paths
    manifest["data"] = {
        "shape": list(y.shape),
        "n_observed": mask.n_observed,
        "n_missing": mask.n_missing,
    }
    manifest["result"] = {
        "converged": rep.converged,
        "iterations": rep.iterations,
        "final_change": rep.final_change,
        "objective_first": rep.objective_trace[0].value,
        "objective_last": rep.objective_trace[-1].value,
        "total_cg_iterations": rep.total_cg_iterations(),
        "wall_seconds": wall,
    }
    manifest_path = os.path.join(args.out_dir, "manifest.json")
    _write_json(manifest_path, manifest)

    status = "converged" if rep.converged else "stopped at iteration cap"
    print(f"mode={config.mode} backend={rep.backend} iterations={rep.iterations} ({status})")
    print(f"objective {rep.objective_trace[0].value:.6g} -> {rep.objective_trace[-1].value:.6g}")
    print(f"wall {wall:.2f}s, outputs in {args.out_dir}")
    return EXIT_OK if rep.converged else EXIT_MAX_ITER


# ---------------------------------------------------------------------------
# synth / mask / eval / bench


def cmd_synth(args) -> int:
    shape = _parse_shape(args.shape)
    data = gio.make_synthetic(
        shape,
        rank=args.rank,
        factor_kernels=args.factor_kernels,
        local_kernels=args.local_kernels,
        noise_sd=args.noise_sd,
        seed=args.seed,
    )
    os.makedirs(args.out_dir, exist_ok=True)
    paths = {
        "values": os.path.join(args.out_dir, "values.dten"),
        "smooth": os.path.join(args.out_dir, "smooth.dten"),
        "local": os.path.join(args.out_dir, "local.dten"),
    }
    gio.write_tensor(paths["values"], data.values)
    gio.write_tensor(paths["smooth"], data.smooth)
    gio.write_tensor(paths["local"], data.local)
    manifest = _manifest_base("synth", list(args.argv_echo))
    manifest["settings"] = {
        "shape": list(shape),
        "rank": args.rank,
        "factor_kernels": _canonical_kernels(args.factor_kernels),
        "local_kernels": _canonical_kernels(args.local_kernels),
        "noise_sd": args.noise_sd,
        "seed": args.seed,
    }
    manifest["outputs"] = paths
    _write_json(os.path.join(args.out_dir, "manifest.json"), manifest)
    print(f"synthetic {'x'.join(str(s) for s in shape)} tensor written to {args.out_dir}")
    return EXIT_OK


def cmd_mask(args) -> int:
    shape = _parse_shape(args.shape)
    mask = gio.make_random_mask(shape, args.sample_rate, seed=args.seed)
    gio.write_mask(args.out, mask)
    print(f"mask {args.out}: {mask.n_observed}/{mask.size} cells observed")
    return EXIT_OK


def _fmt_metric(x) -> str:
    if x is None:
        return "n/a"
    if math.isinf(x):
        return "inf"
    return f"{x:.6g}"


def cmd_eval(args) -> int:
    truth = gio.read_tensor(args.truth)
    estimate = gio.read_tensor(args.estimate)
    mask = gio.read_mask(args.mask)
    try:
        report = evaluate_completion(
            truth, estimate, mask, peak=args.peak, slice_axis=args.slice_axis
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(
        f"n_eval={report.n_eval} mae={_fmt_metric(report.mae)} "
        f"rmse={_fmt_metric(report.rmse)} psnr={_fmt_metric(report.psnr)} "
        f"ssim={_fmt_metric(report.ssim)}"
    )
    if args.json:
        _write_json(args.json, report.to_dict())
    return EXIT_OK


def cmd_bench(args) -> int:
    print(f"active backend: {backend.active_backend()}")
    payload: dict = {"backend": backend.active_backend()}
    if not args.skip_scaling:
        sizes = tuple(int(s) for s in args.sizes.split(","))
        rows = scaling_run(
            sizes=sizes,
            rank=args.rank,
            bandwidth=args.bandwidth,
            cg_iters=args.cg_iters,
            repeats=args.repeats,
            seed=args.seed,
        )
        print(f"{'cells':>10} {'factor it (ms)':>15} {'ratio':>7} {'local it (ms)':>15} {'ratio':>7}")
        for row in rows:
            fr = f"{row.get('factor_ratio', float('nan')):.2f}" if "factor_ratio" in row else "-"
            lr = f"{row.get('local_ratio', float('nan')):.2f}" if "local_ratio" in row else "-"
            print(
                f"{row['n']:>10} {row['factor_iter_s'] * 1e3:>15.3f} {fr:>7} "
                f"{row['local_iter_s'] * 1e3:>15.3f} {lr:>7}"
            )
        payload["scaling"] = rows
    if args.compare_backends:
        comp = compare_backends(repeats=args.repeats, seed=args.seed)
        payload["backend_comparison"] = comp
        for name, times in comp["backends"].items():
            line = " ".join(f"{k}={v * 1e3:.3f}ms" for k, v in times.items())
            print(f"banded kernel [{name}]: {line}")
        if "speedup" in comp:
            line = " ".join(f"{k}={v:.2f}x" for k, v in comp["speedup"].items())
            print(f"compiled speedup over pure: {line}")
    if args.json:
        _write_json(args.json, payload)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> _Parser:
    parser = _Parser(prog="glskf", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    pc = sub.add_parser("complete", help="fit the model and fill missing cells")
    pc.add_argument("--input", help="observed tensor: .dten (with --mask) or long .csv (with --shape)")
    pc.add_argument("--mask", help="observation mask .dmsk for tensor input")
    pc.add_argument("--shape", help="tensor extents for CSV input, like 144x963x44")
    pc.add_argument("--out-dir", required=True, help="directory for outputs and the run manifest")
    pc.add_argument("--preset", help="kernel/weight bundle: traffic, image, video, mri")
    pc.add_argument("--from-manifest", help="rerun the configuration of an earlier manifest.json")
    pc.add_argument("--mode", choices=["glskf", "lstf", "lskf", "glslocal"], help="model variant")
    pc.add_argument("--rank", type=int)
    pc.add_argument("--rho", type=float, help="factor smoothing weight")
    pc.add_argument("--gamma", type=float, help="local field weight")
    pc.add_argument("--fk", "--factor-kernel", dest="factor_kernels", action="append", metavar="SPEC",
                    help="factor kernel per mode, repeatable, e.g. matern32(l=30)")
    pc.add_argument("--lk", "--local-kernel", dest="local_kernels", action="append", metavar="SPEC",
                    help="local kernel per mode, repeatable, e.g. matern32(l=5)*bohman(30)")
    pc.add_argument("--warmup", type=int, help="factor-only outer iterations before the local field starts")
    pc.add_argument("--max-outer", type=int)
    pc.add_argument("--stop-tol", type=float)
    pc.add_argument("--cg-tol", type=float)
    pc.add_argument("--cg-max-iter", type=int)
    pc.add_argument("--cg-residual", choices=["abs", "rel"])
    pc.add_argument("--init-scale", type=float)
    pc.add_argument("--seed", type=int)
    pc.set_defaults(func=cmd_complete)

    ps = sub.add_parser("synth", help="draw a ground-truth tensor from the model")
    ps.add_argument("--shape", required=True)
    ps.add_argument("--rank", type=int, default=3)
    ps.add_argument("--fk", "--factor-kernel", dest="factor_kernels", action="append", metavar="SPEC")
    ps.add_argument("--lk", "--local-kernel", dest="local_kernels", action="append", metavar="SPEC")
    ps.add_argument("--noise-sd", type=float, default=0.0)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--out-dir", required=True)
    ps.set_defaults(func=cmd_synth)

    pm = sub.add_parser("mask", help="draw a uniform random observation mask")
    pm.add_argument("--shape", required=True)
    pm.add_argument("--sample-rate", type=float, required=True)
    pm.add_argument("--seed", type=int, default=0)
    pm.add_argument("--out", required=True)
    pm.set_defaults(func=cmd_mask)

    pe = sub.add_parser("eval", help="score an estimate on the held-out cells")
    pe.add_argument("--truth", required=True)
    pe.add_argument("--estimate", required=True)
    pe.add_argument("--mask", required=True)
    pe.add_argument("--peak", type=float, default=1.0)
    pe.add_argument("--slice-axis", type=int, default=None,
                    help="average PSNR per slice along this axis")
    pe.add_argument("--json", help="also write the report as JSON")
    pe.set_defaults(func=cmd_eval)

    pb = sub.add_parser("bench", help="time the solver building blocks")
    pb.add_argument("--sizes", default="10000,20000,40000,80000",
                    help="comma-separated cell counts, multiples of 2000")
    pb.add_argument("--rank", type=int, default=8)
    pb.add_argument("--bandwidth", type=int, default=5)
    pb.add_argument("--cg-iters", type=int, default=25)
    pb.add_argument("--repeats", type=int, default=5)
    pb.add_argument("--seed", type=int, default=0)
    pb.add_argument("--skip-scaling", action="store_true")
    pb.add_argument("--compare-backends", action="store_true")
    pb.add_argument("--json", help="also write results as JSON")
    pb.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args_list = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(args_list)
        args.argv_echo = args_list
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KernelSpecError as exc:
        print(f"kernel spec error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"invalid settings: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
