"""Command-line interface.

Subcommands mirror the pipeline stages::

    cos2a synth              generate a synthetic ground-truth scene
    cos2a simulate           degrade a cube into a multi-resolution product
    cos2a rough              rough spectral upsampling only
    cos2a estimate-response  scene-adaptive response estimation only
    cos2a superres           the full pipeline (cube + response + trace + manifest)
    cos2a metrics            PSNR/SAM/RMSE/SSIM report for a cube pair
    cos2a calibrate          per-pixel gain calibration of a cube against a product

Exit codes: 0 success, 2 input error, 3 numerical failure, 4 contract
violation. ``--threads`` (or the ``COS2A_THREADS`` environment variable)
limits the BLAS thread pools; use ``--threads 1`` for bit-reproducible runs.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ContractViolation, InputError, NumericalError

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_CONTRACT = 4


def _add_threads(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="limit BLAS threads (default: hardware; env fallback COS2A_THREADS)",
    )


def _thread_limit(args: argparse.Namespace):
    threads = args.threads
    if threads is None:
        env = os.environ.get("COS2A_THREADS")
        if env:
            try:
                threads = int(env)
            except ValueError as exc:
                raise InputError(f"COS2A_THREADS must be an integer, got {env!r}") from exc
    if threads is None:
        return contextlib.nullcontext()
    if threads < 1:
        raise InputError("--threads must be >= 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=threads)


def _load_pipeline_config(args: argparse.Namespace):
    from .pipeline import PipelineConfig

    if getattr(args, "config", None):
        config = PipelineConfig.from_json_file(args.config)
    else:
        config = PipelineConfig()
    overrides = {}
    for flag, attr in [
        ("alpha", "alpha"),
        ("beta", "beta"),
        ("eta", "eta"),
        ("r", "r"),
        ("seed", "seed"),
        ("sensor_profile", "sensor_profile"),
        ("target_bands", "target_bands"),
        ("target_min_nm", "target_min_nm"),
        ("target_max_nm", "target_max_nm"),
    ]:
        value = getattr(args, flag, None)
        if value is not None:
            overrides[attr] = value
    if getattr(args, "lam", None) is not None:
        overrides["lambda_"] = args.lam
    return replace(config, **overrides) if overrides else config


def _add_config_overrides(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="pipeline configuration JSON")
    parser.add_argument("--lambda", dest="lam", type=float, help="anchor weight (must be 2)")
    parser.add_argument("--alpha", type=float, help="endmember volume penalty")
    parser.add_argument("--beta", type=float, help="abundance sparsity penalty")
    parser.add_argument("--eta", type=float, help="ridge strength for response estimation")
    parser.add_argument("--r", type=int, help="blur factor of the coupled solve")
    parser.add_argument("--seed", type=int, help="pipeline seed")
    parser.add_argument("--sensor-profile", dest="sensor_profile", help="sensor profile JSON")
    parser.add_argument("--target-bands", dest="target_bands", type=int)
    parser.add_argument("--target-min-nm", dest="target_min_nm", type=float)
    parser.add_argument("--target-max-nm", dest="target_max_nm", type=float)


def _read_response_arg(args: argparse.Namespace):
    from .cube import read_matrix_csv

    if getattr(args, "response", None):
        return read_matrix_csv(args.response)
    return None


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> int:
    from .cube import write_cube, write_matrix_csv
    from .scene import SceneSpec, generate_scene

    spec = SceneSpec(
        height=args.height,
        width=args.width,
        bands=args.bands,
        n_endmembers=args.endmembers,
        seed=args.seed,
        smoothness=args.smoothness,
        pure_pixel=not args.no_pure_pixels,
        noise_std=args.noise_std,
    )
    cube, truth = generate_scene(spec)
    write_cube(cube, args.out)
    if args.endmembers_out:
        write_matrix_csv(truth.a, args.endmembers_out)
    if args.abundances_out:
        write_matrix_csv(truth.s, args.abundances_out)
    print(f"wrote {args.out} ({cube.bands} bands, {cube.height}x{cube.width})")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    from .cube import read_cube, write_matrix_csv, write_product
    from .sensor import build_response, default_profile, load_profile, simulate_product

    cube = read_cube(args.cube)
    profile = load_profile(args.profile) if args.profile else default_profile()
    product = simulate_product(cube, profile)
    write_product(product, args.out)
    if args.response_out:
        write_matrix_csv(build_response(profile, cube.wavelengths_nm), args.response_out)
    print(f"wrote {args.out} ({product.n_bands} bands, {product.height}x{product.width})")
    return EXIT_OK


def cmd_rough(args: argparse.Namespace) -> int:
    from .cube import read_product, write_cube
    from .pipeline import _full_response
    from .rough import run_unfolded_admm

    product = read_product(args.product)
    config = _load_pipeline_config(args)
    wavelengths = config.target_wavelengths()
    d_full, source = _full_response(config, product, wavelengths, _read_response_arg(args))
    cube = run_unfolded_admm(
        product.as_matrix(),
        d_full,
        config.unfold,
        height=product.height,
        width=product.width,
        wavelengths_nm=wavelengths,
    )
    write_cube(cube, args.out)
    print(f"wrote {args.out} (rough solution, response from {source})")
    return EXIT_OK


def cmd_estimate_response(args: argparse.Namespace) -> int:
    from .cube import read_cube, read_product, write_matrix_csv
    from .response import estimate_response

    rough = read_cube(args.rough)
    product = read_product(args.product)
    if (rough.height, rough.width) != (product.height, product.width):
        raise InputError("rough cube and product grids differ")
    config = _load_pipeline_config(args)
    estimate = estimate_response(
        rough.as_matrix(), product.high_res_view(), config.effective_ridge()
    )
    write_matrix_csv(estimate, args.out)
    print(f"wrote {args.out} ({estimate.shape[0]}x{estimate.shape[1]} response)")
    return EXIT_OK


def cmd_superres(args: argparse.Namespace) -> int:
    from .cube import read_product, write_cube, write_matrix_csv
    from .pipeline import run_superres

    product = read_product(args.product)
    config = _load_pipeline_config(args)
    result = run_superres(product, config, _read_response_arg(args))

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cube_path = out_dir / "y_h_star.cube"
    response_path = out_dir / "response_hi.csv"
    trace_path = out_dir / "objective_trace.csv"
    manifest_path = out_dir / "manifest.json"

    write_cube(result.cube, cube_path)
    write_matrix_csv(result.response_hi, response_path)
    with open(trace_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sweep", "half_step", "objective"])
        for entry in result.trace:
            writer.writerow([entry.sweep, entry.half_step, format(entry.objective, ".17g")])
    manifest = dict(result.manifest)
    manifest["artifacts"] = {
        "cube": cube_path.name,
        "response": response_path.name,
        "trace": trace_path.name,
    }
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    print(f"wrote {cube_path}, {response_path}, {trace_path}, {manifest_path}")
    return EXIT_OK


def cmd_metrics(args: argparse.Namespace) -> int:
    from .cube import read_cube
    from .metrics import evaluate

    report = evaluate(read_cube(args.ref), read_cube(args.test))
    text = report.to_json()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.write("\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    from .cube import read_cube, read_product, write_cube
    from .pipeline import calibrate_cube

    cube = read_cube(args.cube)
    product = read_product(args.product)
    write_cube(calibrate_cube(cube, product), args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cos2a",
        description="Multi-resolution multispectral to hyperspectral super-resolution",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic ground-truth scene")
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--bands", type=int, default=172)
    p.add_argument("--endmembers", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--smoothness", type=float, default=12.0)
    p.add_argument("--no-pure-pixels", action="store_true")
    p.add_argument("--noise-std", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.add_argument("--endmembers-out", help="also write the true endmember matrix (CSV)")
    p.add_argument("--abundances-out", help="also write the true abundance matrix (CSV)")
    _add_threads(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("simulate", help="degrade a cube into a multi-resolution product")
    p.add_argument("--cube", required=True)
    p.add_argument("--profile", help="sensor profile JSON (default: bundled sentinel2a)")
    p.add_argument("--out", required=True)
    p.add_argument("--response-out", help="also write the response matrix used (CSV)")
    _add_threads(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rough", help="rough spectral upsampling only")
    p.add_argument("--product", required=True)
    p.add_argument("--response", help="full response CSV for the rough stage")
    p.add_argument("--out", required=True)
    _add_config_overrides(p)
    _add_threads(p)
    p.set_defaults(func=cmd_rough)

    p = sub.add_parser("estimate-response", help="scene-adaptive response estimation")
    p.add_argument("--rough", required=True, help="rough hyperspectral cube")
    p.add_argument("--product", required=True)
    p.add_argument("--out", required=True)
    _add_config_overrides(p)
    _add_threads(p)
    p.set_defaults(func=cmd_estimate_response)

    p = sub.add_parser("superres", help="run the full pipeline")
    p.add_argument("--product", required=True)
    p.add_argument("--response", help="full response CSV for the rough stage")
    p.add_argument("--out", required=True, help="output directory")
    _add_config_overrides(p)
    _add_threads(p)
    p.set_defaults(func=cmd_superres)

    p = sub.add_parser("metrics", help="evaluate a reconstruction against a reference")
    p.add_argument("--ref", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", help="report JSON path (default: stdout)")
    _add_threads(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("calibrate", help="per-pixel gain calibration against a product")
    p.add_argument("--cube", required=True)
    p.add_argument("--product", required=True)
    p.add_argument("--out", required=True)
    _add_threads(p)
    p.set_defaults(func=cmd_calibrate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with _thread_limit(args):
            return args.func(args)
    except ContractViolation as exc:
        print(f"cos2a: contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except NumericalError as exc:
        print(f"cos2a: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InputError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"cos2a: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    raise SystemExit(main())
