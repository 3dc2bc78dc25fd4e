"""eval - Score a checkpoint (report.json, per_aspect.csv, predictions.csv)"""

import argparse
import logging

from fcmf.commands.common import add_common_flags, context_from_args, resolve_config, write_run_manifest
from fcmf.exceptions import ConfigurationError
from fcmf.schemas.config import EvalConfig
from fcmf.services.dataset_service import FeatureStore, load_dataset, resolve_dataset_file
from fcmf.services.evaluation_service import evaluate_model, write_evaluation
from fcmf.services.training_service import load_checkpoint

logger = logging.getLogger(__name__)

NAME = "eval"

FLAGS = {"checkpoint": "checkpoint", "data": "data", "flat": "flat", "exclude_none": "exclude_none"}


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(NAME, help="Evaluate a trained checkpoint on a dataset")
    add_common_flags(parser)
    parser.add_argument("--checkpoint", help="Checkpoint directory (seed_<n>/checkpoint)")
    parser.add_argument("--data", help="Dataset directory or JSONL file")
    parser.add_argument("--flat", action="store_const", const=True, help="One macro over all decisions")
    parser.add_argument("--exclude-none", action="store_const", const=True, help="Leave none out of macro averages")
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> int:
    ctx = context_from_args(args)
    config = resolve_config(EvalConfig, args, FLAGS)
    if not config.checkpoint or not config.data:
        raise ConfigurationError("eval needs --checkpoint and --data")

    checkpoint = load_checkpoint(config.checkpoint)
    train_config = checkpoint.trainer.config
    model = train_config.model
    samples = load_dataset(
        config.data,
        feature_dim=model.feature_dim,
        grid_cells=model.grid_cells,
        lexicon=train_config.lexicon,
        replacements=train_config.replacements,
    )
    store = FeatureStore(resolve_dataset_file(config.data).parent, model.feature_dim, model.grid_cells, ctx.threads)
    result = evaluate_model(checkpoint, samples, store, config)
    write_evaluation(result, ctx.storage)
    write_run_manifest(ctx.storage, NAME, config, seed=checkpoint.manifest.seed)
    report = result.report
    print(
        f"macro P {report.macro_precision:.4f}  R {report.macro_recall:.4f}  F1 {report.macro_f1:.4f} "
        f"({report.mode}, {report.n_samples} samples)"
    )
    return 0
