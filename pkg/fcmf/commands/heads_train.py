"""heads-train - Fit the image / RoI category heads"""

import argparse
import logging

from fcmf.commands.common import add_common_flags, context_from_args, resolve_config
from fcmf.exceptions import ConfigurationError
from fcmf.schemas.config import HeadsConfig
from fcmf.services.dataset_service import FeatureStore, load_dataset, resolve_dataset_file
from fcmf.services.heads_service import save_heads, train_heads

logger = logging.getLogger(__name__)

NAME = "heads-train"

FLAGS = {
    "data": "data",
    "feature_dim": "feature_dim",
    "grid_cells": "grid_cells",
    "lr": "learning_rate",
    "epochs": "epochs",
    "seed": "seed",
    "holdout": "holdout_fraction",
    "threshold": "threshold",
}


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(NAME, help="Train the image and RoI category heads")
    add_common_flags(parser)
    parser.add_argument("--data", help="Dataset directory or JSONL file")
    parser.add_argument("--feature-dim", type=int)
    parser.add_argument("--grid-cells", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--holdout", type=float, help="Share of examples held out for accuracy")
    parser.add_argument("--threshold", type=float, help="Image-head probability threshold")
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> int:
    ctx = context_from_args(args)
    config = resolve_config(HeadsConfig, args, FLAGS)
    if not config.data:
        raise ConfigurationError("heads-train needs --data")
    samples = load_dataset(config.data, feature_dim=config.feature_dim, grid_cells=config.grid_cells)
    store = FeatureStore(
        resolve_dataset_file(config.data).parent, config.feature_dim, config.grid_cells, threads=ctx.threads
    )
    store.preload(samples)
    heads, report = train_heads(samples, store, config)
    # the checkpoint manifest doubles as the run manifest
    save_heads(heads, config, ctx.storage)
    ctx.storage.put_json("heads_report.json", report)
    print(
        f"Category heads: image accuracy {report.image_accuracy}, RoI accuracy {report.roi_accuracy} "
        f"({report.image_examples} images, {report.roi_examples} RoIs)"
    )
    return 0
