"""train - Joint training over one or more seeds

Artifacts under --out:
    manifest.json, seed_summary.json,
    seed_<n>/metrics.csv, seed_<n>/checkpoint/ (best dev epoch)
"""

import argparse
import logging

from fcmf.commands.common import add_common_flags, context_from_args, resolve_config, write_run_manifest
from fcmf.exceptions import ConfigurationError
from fcmf.models.perception import DEFAULT_THRESHOLD
from fcmf.schemas.config import TrainConfig
from fcmf.services.dataset_service import FeatureStore, load_dataset, resolve_dataset_file
from fcmf.services.heads_service import load_heads
from fcmf.services.training_service import train

logger = logging.getLogger(__name__)

NAME = "train"

FLAGS = {
    "data": "data",
    "lr": "learning_rate",
    "batch": "batch_size",
    "epochs": "epochs",
    "seeds": "seeds",
    "clip_norm": "clip_norm",
    "split_seed": "split_seed",
    "dev_fraction": "dev_fraction",
    "test_fraction": "test_fraction",
    "heads_checkpoint": "heads_checkpoint",
    "d": "model.hidden_size",
    "layers": "model.num_layers",
    "heads": "model.heads",
    "ffn": "model.ffn_size",
    "geometry_dim": "model.geometry_dim",
    "feature_dim": "model.feature_dim",
    "grid_cells": "model.grid_cells",
    "max_len": "model.max_len",
    "k_max": "model.k_max",
    "j_max": "model.j_max",
    "dropout": "model.dropout",
    "separate_cm_attention": "model.share_cm_attention",
    "no_aux_categories": "ablation.no_aux_categories",
    "no_geometric": "ablation.no_geometric",
    "no_visual_features": "ablation.no_visual_features",
    "no_preprocess": "ablation.no_preprocess",
}


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(NAME, help="Train FCMF models (one per seed)")
    add_common_flags(parser)
    parser.add_argument("--data", help="Dataset directory or JSONL file")
    parser.add_argument("--lr", type=float, help="Adam learning rate (default 3e-5)")
    parser.add_argument("--batch", type=int, help="Samples per batch (default 4)")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--seeds", type=int, nargs="+", help="Model seeds (default 1 2 3 4 5)")
    parser.add_argument("--clip-norm", type=float, help="Global gradient-norm cap (default 1.0)")
    parser.add_argument("--no-clip", action="store_true", help="Disable gradient clipping")
    parser.add_argument("--split-seed", type=int)
    parser.add_argument("--dev-fraction", type=float)
    parser.add_argument("--test-fraction", type=float)
    parser.add_argument("--heads-checkpoint", help="Category heads for images/RoIs without gold categories")

    model = parser.add_argument_group("model")
    model.add_argument("--d", type=int, help="Hidden size")
    model.add_argument("--layers", type=int)
    model.add_argument("--heads", type=int, help="Attention heads (default 12)")
    model.add_argument("--ffn", type=int, help="Feed-forward width (default 4d)")
    model.add_argument("--geometry-dim", type=int)
    model.add_argument("--feature-dim", type=int)
    model.add_argument("--grid-cells", type=int)
    model.add_argument("--max-len", type=int, help="Auxiliary sequence length (default 170)")
    model.add_argument("--k-max", type=int)
    model.add_argument("--j-max", type=int)
    model.add_argument("--dropout", type=float, help="Dropout rate (default 0.1)")
    model.add_argument(
        "--separate-cm-attention", action="store_const", const=False, help="One CM-attention block per image slot"
    )

    ablation = parser.add_argument_group("ablation")
    for flag in ("--no-aux-categories", "--no-geometric", "--no-visual-features", "--no-preprocess"):
        ablation.add_argument(flag, action="store_const", const=True)
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> int:
    ctx = context_from_args(args)
    config = resolve_config(TrainConfig, args, FLAGS)
    if args.no_clip:
        config = config.model_copy(update={"clip_norm": None})
    if not config.data:
        raise ConfigurationError("train needs --data")

    samples = load_dataset(
        config.data,
        feature_dim=config.model.feature_dim,
        grid_cells=config.model.grid_cells,
        lexicon=config.lexicon,
        replacements=config.replacements,
    )
    store = FeatureStore(
        resolve_dataset_file(config.data).parent,
        config.model.feature_dim,
        config.model.grid_cells,
        threads=ctx.threads,
    )
    heads, threshold = None, DEFAULT_THRESHOLD
    if config.heads_checkpoint:
        loaded = load_heads(config.heads_checkpoint)
        heads, threshold = loaded.heads, loaded.threshold

    write_run_manifest(ctx.storage, NAME, config)
    summary = train(samples, config, store, ctx.storage, heads=heads, threshold=threshold)
    for result in summary.seeds:
        test = f", test macro-F1 {result.test_f1:.4f}" if result.test_f1 is not None else ""
        print(f"seed {result.seed}: best epoch {result.best_epoch}, dev macro-F1 {result.best_dev_f1:.4f}{test}")
    print(f"mean dev macro-F1 {summary.mean_dev_f1:.4f} ± {summary.std_dev_f1:.4f} over {len(summary.seeds)} seeds")
    return 0
