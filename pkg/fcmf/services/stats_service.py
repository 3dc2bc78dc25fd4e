"""Stats Service - Corpus statistics and token frequencies"""

import csv
import logging
from collections import Counter
from collections.abc import Sequence
from pathlib import Path

from fcmf.schemas.report import DatasetStats, TokenCount
from fcmf.schemas.sample import ASPECTS, SENTIMENTS, MultimodalSample, SentimentLabel

logger = logging.getLogger(__name__)


def dataset_stats(samples: Sequence[MultimodalSample], top_n: int = 50) -> DatasetStats:
    """Review/token/label/image counts plus the top-N token frequencies

    An empty dataset gives all-zero counts.
    """
    labeled = [s for s in SENTIMENTS if s != SentimentLabel.NONE]
    sentiment_counts = {s.value: 0 for s in labeled}
    aspect_counts = {a.value: {s.value: 0 for s in labeled} for a in ASPECTS}
    tokens: Counter[str] = Counter()
    stats = DatasetStats()
    if not samples:
        stats.sentiment_counts = sentiment_counts
        stats.aspect_sentiment_counts = aspect_counts
        return stats

    total_tokens = 0
    total_labels = 0
    for sample in samples:
        total_tokens += len(sample.tokens)
        tokens.update(sample.tokens)
        total_labels += len(sample.labels)
        visible = set()
        for image in sample.images:
            stats.images += 1
            stats.rois += len(image.rois)
            shown = set(image.categories or ()) | {r.category for r in image.rois if r.category is not None}
            if shown:
                stats.relevant_images += 1
            else:
                stats.irrelevant_images += 1
            visible |= shown
        for aspect, label in sample.labels.items():
            sentiment_counts[label.value] += 1
            aspect_counts[aspect.value][label.value] += 1
            if aspect in visible:
                stats.text_image_annotations += 1
            else:
                stats.text_only_annotations += 1

    stats.reviews = len(samples)
    stats.mean_tokens = total_tokens / len(samples)
    stats.mean_aspects_per_review = total_labels / len(samples)
    stats.sentiment_counts = sentiment_counts
    stats.aspect_sentiment_counts = aspect_counts
    # most_common keeps first-seen order for ties; sort explicitly for stable output
    ranked = sorted(tokens.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]
    stats.top_tokens = [TokenCount(token=t, count=c) for t, c in ranked]
    logger.info(f"Computed statistics over {stats.reviews} reviews")
    return stats


def stats_rows(stats: DatasetStats) -> list[tuple[str, str]]:
    rows = [
        ("reviews", str(stats.reviews)),
        ("mean_tokens", repr(stats.mean_tokens)),
        ("mean_aspects_per_review", repr(stats.mean_aspects_per_review)),
        ("images", str(stats.images)),
        ("rois", str(stats.rois)),
        ("relevant_images", str(stats.relevant_images)),
        ("irrelevant_images", str(stats.irrelevant_images)),
        ("text_only_annotations", str(stats.text_only_annotations)),
        ("text_image_annotations", str(stats.text_image_annotations)),
    ]
    rows += [(f"sentiment_{label}", str(count)) for label, count in stats.sentiment_counts.items()]
    for aspect, counts in stats.aspect_sentiment_counts.items():
        rows += [(f"{aspect}_{label}", str(count)) for label, count in counts.items()]
    return rows


def write_stats_csv(stats: DatasetStats, path: str | Path) -> None:
    """`metric,value` block, a blank line, then a `token,count` block"""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "value"])
        writer.writerows(stats_rows(stats))
        writer.writerow([])
        writer.writerow(["token", "count"])
        writer.writerows((t.token, t.count) for t in stats.top_tokens)
