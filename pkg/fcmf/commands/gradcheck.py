"""gradcheck - Finite-difference check of the full model's backward pass"""

import argparse
import logging

from fcmf.commands.common import add_common_flags, context_from_args, resolve_config, write_run_manifest
from fcmf.exceptions import RuntimeFailure
from fcmf.schemas.config import GradCheckConfig
from fcmf.services.diagnostics_service import check_model_gradients

logger = logging.getLogger(__name__)

NAME = "gradcheck"

FLAGS = {
    "d": "hidden_size",
    "layers": "num_layers",
    "heads": "heads",
    "k_max": "k_max",
    "j_max": "j_max",
    "max_len": "max_len",
    "feature_dim": "feature_dim",
    "grid_cells": "grid_cells",
    "geometry_dim": "geometry_dim",
    "eps": "eps",
    "tol": "tol",
    "samples": "samples",
    "seed": "seed",
}


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(NAME, help="Compare analytic and numeric gradients on a toy model")
    add_common_flags(parser)
    parser.add_argument("--d", type=int, help="Hidden size")
    parser.add_argument("--layers", type=int)
    parser.add_argument("--heads", type=int)
    parser.add_argument("--k-max", type=int)
    parser.add_argument("--j-max", type=int)
    parser.add_argument("--max-len", type=int)
    parser.add_argument("--feature-dim", type=int)
    parser.add_argument("--grid-cells", type=int, help="Cells per toy image grid")
    parser.add_argument("--geometry-dim", type=int, help="Box-relation embedding width (multiple of 8)")
    parser.add_argument("--eps", type=float, help="Finite-difference step")
    parser.add_argument("--tol", type=float, help="Relative error tolerance")
    parser.add_argument("--samples", type=int, help="Coordinates to check")
    parser.add_argument("--seed", type=int)
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> int:
    ctx = context_from_args(args)
    config = resolve_config(GradCheckConfig, args, FLAGS)
    report = check_model_gradients(config)
    ctx.storage.put_json("gradcheck.json", report)
    write_run_manifest(ctx.storage, NAME, config, seed=config.seed)
    if not report.passed:
        print(f"FAIL max_rel_error={report.max_rel_error:.3e} ({len(report.failures)}/{report.checked} coordinates)")
        worst = max(report.failures, key=lambda f: f.rel_error)
        raise RuntimeFailure(
            f"gradient check failed: {worst.param}[{worst.index}] analytic {worst.analytic:.6e} "
            f"vs numeric {worst.numeric:.6e}"
        )
    print(f"PASS max_rel_error={report.max_rel_error:.3e} ({report.checked} coordinates, tol {report.tol:g})")
    return 0
