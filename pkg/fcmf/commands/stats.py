"""stats - Corpus statistics (stats.csv, stats.json)"""

import argparse
import logging

from fcmf.commands.common import add_common_flags, context_from_args, resolve_config, write_run_manifest
from fcmf.exceptions import ConfigurationError
from fcmf.schemas.config import StatsConfig
from fcmf.services.dataset_service import load_dataset
from fcmf.services.stats_service import dataset_stats, write_stats_csv

logger = logging.getLogger(__name__)

NAME = "stats"

FLAGS = {"data": "data", "top_n": "top_n"}


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(NAME, help="Dataset statistics and token frequencies")
    add_common_flags(parser)
    parser.add_argument("--data", help="Dataset directory or JSONL file")
    parser.add_argument("--top-n", type=int, help="Token frequency rows to keep")
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> int:
    ctx = context_from_args(args)
    config = resolve_config(StatsConfig, args, FLAGS)
    if not config.data:
        raise ConfigurationError("stats needs --data")
    samples = load_dataset(
        config.data, check_features=False, lexicon=config.lexicon, replacements=config.replacements
    )
    stats = dataset_stats(samples, top_n=config.top_n)
    ctx.out.mkdir(parents=True, exist_ok=True)
    write_stats_csv(stats, ctx.storage.path("stats.csv"))
    ctx.storage.put_json("stats.json", stats)
    write_run_manifest(ctx.storage, NAME, config)
    print(
        f"{stats.reviews} reviews, {stats.mean_tokens:.2f} tokens/review, "
        f"{stats.mean_aspects_per_review:.2f} aspects/review, {stats.images} images"
    )
    return 0
