"""synth - Write a planted-signal synthetic dataset"""

import argparse
import logging

from fcmf.commands.common import add_common_flags, context_from_args, resolve_config, write_run_manifest
from fcmf.schemas.config import SynthConfig
from fcmf.services.synthetic_service import generate_synthetic

logger = logging.getLogger(__name__)

NAME = "synth"

FLAGS = {
    "seed": "seed",
    "n": "n_samples",
    "implicit_rate": "implicit_rate",
    "noise": "noise",
    "feature_dim": "feature_dim",
    "grid_cells": "grid_cells",
    "irrelevant_rate": "irrelevant_rate",
    "visual_rate": "visual_rate",
    "mean_aspects": "mean_aspects",
}


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(NAME, help="Generate a synthetic dataset with planted signal")
    add_common_flags(parser)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--n", type=int, help="Number of reviews")
    parser.add_argument("--implicit-rate", type=float, help="Share of labeled aspects with no text cue")
    parser.add_argument("--noise", type=float, help="Feature noise standard deviation")
    parser.add_argument("--feature-dim", type=int)
    parser.add_argument("--grid-cells", type=int)
    parser.add_argument("--irrelevant-rate", type=float)
    parser.add_argument("--visual-rate", type=float)
    parser.add_argument("--mean-aspects", type=float)
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> int:
    ctx = context_from_args(args)
    config = resolve_config(SynthConfig, args, FLAGS)
    dataset = generate_synthetic(config, ctx.out)
    write_run_manifest(ctx.storage, NAME, config, seed=config.seed)
    totals = dataset.recipe["totals"]
    print(
        f"Wrote {totals['reviews']} reviews, {totals['images']} images, {totals['rois']} RoIs "
        f"({totals['implicit_annotations']} implicit annotations) to {ctx.out}"
    )
    return 0
