"""agree - Inter-annotator agreement per annotation round"""

import argparse
import logging

from fcmf.commands.common import add_common_flags, context_from_args, resolve_config, write_run_manifest
from fcmf.exceptions import ConfigurationError
from fcmf.schemas.config import AgreeConfig
from fcmf.services.metrics_service import agreement_report

logger = logging.getLogger(__name__)

NAME = "agree"

FLAGS = {"rounds": "rounds", "threshold": "threshold"}
HEADER = ("round", "samples", "aspect_kappa", "sentiment_kappa", "mean_iou", "boxes", "flagged")


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(NAME, help="Cohen's kappa and box IoU between two annotators")
    add_common_flags(parser)
    parser.add_argument("--rounds", help="Directory of <round>_a.jsonl / <round>_b.jsonl pairs")
    parser.add_argument("--threshold", type=float, help="Flag rounds with any statistic below this")
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> int:
    ctx = context_from_args(args)
    config = resolve_config(AgreeConfig, args, FLAGS)
    if not config.rounds:
        raise ConfigurationError("agree needs --rounds")
    report = agreement_report(config.rounds, threshold=config.threshold)
    ctx.storage.put_json("agreement.json", report)
    ctx.storage.put_csv(
        "agreement.csv",
        HEADER,
        (
            (r.round, r.samples, repr(r.aspect_kappa), repr(r.sentiment_kappa), repr(r.mean_iou), r.boxes, r.flagged)
            for r in report.rounds
        ),
    )
    write_run_manifest(ctx.storage, NAME, config)
    for r in report.rounds:
        flag = "  FLAGGED" if r.flagged else ""
        print(
            f"{r.round}: aspect kappa {r.aspect_kappa:.4f}, sentiment kappa {r.sentiment_kappa:.4f}, "
            f"mean IoU {r.mean_iou:.4f}{flag}"
        )
    return 0
