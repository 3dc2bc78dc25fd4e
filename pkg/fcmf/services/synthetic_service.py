"""Synthetic Service - Planted-signal multimodal review corpora

Each labeled aspect gets a sentiment. Explicit aspects put a cue token
(one per aspect x sentiment) into the text; implicit aspects have no text
cue and show up only as image/RoI features built from an aspect centroid
plus a sentiment offset. Irrelevant images carry pure noise.

Output directory:
    dataset.jsonl, features/*.fcmt (FCMT v1), recipe.json (planted truth)
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fcmf.numerics.rng import RngStreams
from fcmf.schemas.config import SynthConfig
from fcmf.schemas.sample import (
    ASPECTS,
    K_MAX,
    AspectCategory,
    ImageEntry,
    MultimodalSample,
    RoI,
    SentimentLabel,
)
from fcmf.services.dataset_service import write_dataset
from fcmf.utils import fcmt
from fcmf.utils.preprocessing import preprocess

logger = logging.getLogger(__name__)

RECIPE_FILENAME = "recipe.json"
FEATURES_DIR = "features"

LABELED_SENTIMENTS = (SentimentLabel.NEGATIVE, SentimentLabel.NEUTRAL, SentimentLabel.POSITIVE)

CUE_LEXICON: dict[AspectCategory, dict[SentimentLabel, str]] = {
    AspectCategory.LOCATION: {
        SentimentLabel.NEGATIVE: "xa_trung_tâm",
        SentimentLabel.NEUTRAL: "vị_trí_tạm",
        SentimentLabel.POSITIVE: "gần_biển",
    },
    AspectCategory.FOOD: {
        SentimentLabel.NEGATIVE: "đồ_ăn_dở",
        SentimentLabel.NEUTRAL: "bữa_sáng_tạm",
        SentimentLabel.POSITIVE: "món_ngon",
    },
    AspectCategory.ROOM: {
        SentimentLabel.NEGATIVE: "phòng_bẩn",
        SentimentLabel.NEUTRAL: "phòng_nhỏ",
        SentimentLabel.POSITIVE: "phòng_sạch",
    },
    AspectCategory.FACILITIES: {
        SentimentLabel.NEGATIVE: "wifi_yếu",
        SentimentLabel.NEUTRAL: "tiện_nghi_cơ_bản",
        SentimentLabel.POSITIVE: "hồ_bơi_đẹp",
    },
    AspectCategory.SERVICE: {
        SentimentLabel.NEGATIVE: "nhân_viên_thô_lỗ",
        SentimentLabel.NEUTRAL: "phục_vụ_bình_thường",
        SentimentLabel.POSITIVE: "nhân_viên_thân_thiện",
    },
    AspectCategory.PUBLIC_AREA: {
        SentimentLabel.NEGATIVE: "sảnh_ồn",
        SentimentLabel.NEUTRAL: "sảnh_tạm",
        SentimentLabel.POSITIVE: "sảnh_rộng",
    },
}

FILLER_WORDS = (
    "chúng", "tôi", "đã", "ở", "đây", "hai", "đêm", "và", "thấy", "khá",
    "là", "nói", "chung", "lần", "này", "cũng", "được", "với", "gia", "đình",
)  # fmt: skip


@dataclass(frozen=True)
class SyntheticDataset:
    samples: list[MultimodalSample]
    recipe: dict
    path: Path


def _random_box(rng: np.random.Generator) -> tuple[float, float, float, float]:
    w = round(float(rng.uniform(0.1, 0.5)), 4)
    h = round(float(rng.uniform(0.1, 0.5)), 4)
    # keep a margin so x + w stays <= 1 after rounding
    x = round(float(rng.uniform(0.0, 1.0 - w - 1e-3)), 4)
    y = round(float(rng.uniform(0.0, 1.0 - h - 1e-3)), 4)
    return (x, y, w, h)


def _render_text(words: list[str], rng: np.random.Generator) -> str:
    """Random capitalisation and doubled spaces; preprocessing undoes both"""
    rendered = [w.upper() if rng.random() < 0.2 else (w.capitalize() if rng.random() < 0.2 else w) for w in words]
    out = ""
    for i, word in enumerate(rendered):
        if i:
            out += "  " if rng.random() < 0.2 else " "
        out += word
    return out


def generate_synthetic(config: SynthConfig, out_dir: str | Path) -> SyntheticDataset:
    """Write a planted-signal dataset and its recipe

    Args:
        config: seed, size, implicit rate, feature noise, feature shapes
        out_dir: destination directory (created)

    Returns:
        SyntheticDataset with the samples as written and the recipe
    """
    out_dir = Path(out_dir)
    (out_dir / FEATURES_DIR).mkdir(parents=True, exist_ok=True)
    streams = RngStreams(config.seed)
    centroid_rng = streams.stream("centroids")
    label_rng = streams.stream("labels")
    text_rng = streams.stream("text")
    feature_rng = streams.stream("features")

    f, c = config.feature_dim, config.grid_cells
    centroids = {a: centroid_rng.normal(0.0, 1.0, size=f) for a in ASPECTS}
    offsets = {s: centroid_rng.normal(0.0, 0.5, size=f) for s in LABELED_SENTIMENTS}
    aspect_rate = min(1.0, config.mean_aspects / len(ASPECTS))

    def signal(aspects: list[AspectCategory], labels: dict[AspectCategory, SentimentLabel]) -> np.ndarray:
        return sum((centroids[a] + offsets[labels[a]] for a in aspects), np.zeros(f))

    samples: list[MultimodalSample] = []
    planted: list[dict] = []
    totals = {
        "reviews": 0,
        "tokens": 0,
        "labels": 0,
        "images": 0,
        "rois": 0,
        "relevant_images": 0,
        "irrelevant_images": 0,
        "text_only_annotations": 0,
        "text_image_annotations": 0,
        "implicit_annotations": 0,
        "sentiment_counts": {s.value: 0 for s in LABELED_SENTIMENTS},
    }

    for i in range(config.n_samples):
        sample_id = f"syn-{i:05d}"
        labels = {
            a: LABELED_SENTIMENTS[int(label_rng.integers(len(LABELED_SENTIMENTS)))]
            for a in ASPECTS
            if label_rng.random() < aspect_rate
        }
        implicit = [a for a in labels if label_rng.random() < config.implicit_rate]
        explicit = [a for a in labels if a not in implicit]
        visual = implicit + [a for a in explicit if label_rng.random() < config.visual_rate]
        visual = [a for a in ASPECTS if a in visual]

        words = [CUE_LEXICON[a][labels[a]] for a in explicit]
        words += [FILLER_WORDS[int(j)] for j in text_rng.integers(len(FILLER_WORDS), size=int(text_rng.integers(3, 9)))]
        words = [words[int(j)] for j in text_rng.permutation(len(words))]
        raw_text = _render_text(words, text_rng)

        # one or two aspects per image
        order = [visual[int(j)] for j in label_rng.permutation(len(visual))]
        groups = [sorted(order[g : g + 2], key=lambda a: a.position) for g in range(0, len(order), 2)]
        irrelevant = label_rng.random() < config.irrelevant_rate and len(groups) < K_MAX

        images: list[ImageEntry] = []
        for k, group in enumerate(groups):
            grid_ref = f"{FEATURES_DIR}/{sample_id}_img{k}.fcmt"
            grid = signal(group, labels)[None, :] + config.noise * feature_rng.normal(size=(c, f))
            fcmt.save(out_dir / grid_ref, grid)
            rois = []
            for j, aspect in enumerate(group):
                roi_ref = f"{FEATURES_DIR}/{sample_id}_img{k}_roi{j}.fcmt"
                vector = signal([aspect], labels) + config.noise * feature_rng.normal(size=f)
                fcmt.save(out_dir / roi_ref, vector)
                rois.append(RoI(feature_ref=roi_ref, box=_random_box(feature_rng), category=aspect))
            images.append(ImageEntry(feature_ref=grid_ref, categories=frozenset(group), rois=tuple(rois)))
        if irrelevant:
            k = len(images)
            grid_ref = f"{FEATURES_DIR}/{sample_id}_img{k}.fcmt"
            fcmt.save(out_dir / grid_ref, config.noise * feature_rng.normal(size=(c, f)))
            images.append(ImageEntry(feature_ref=grid_ref, categories=frozenset(), rois=()))

        sample = MultimodalSample(
            id=sample_id,
            raw_text=raw_text,
            tokens=tuple(preprocess(raw_text)),
            images=tuple(images),
            labels=labels,
        )
        samples.append(sample)
        planted.append(
            {
                "id": sample_id,
                "labels": {a.value: labels[a].value for a in ASPECTS if a in labels},
                "implicit": [a.value for a in ASPECTS if a in implicit],
                "text_cues": [a.value for a in ASPECTS if a in explicit],
                "image_aspects": [[a.value for a in group] for group in groups],
                "irrelevant_image": irrelevant,
            }
        )
        totals["reviews"] += 1
        totals["tokens"] += len(sample.tokens)
        totals["labels"] += len(labels)
        totals["images"] += len(images)
        totals["rois"] += sum(len(img.rois) for img in images)
        totals["relevant_images"] += len(groups)
        totals["irrelevant_images"] += int(irrelevant)
        totals["text_image_annotations"] += len(visual)
        totals["text_only_annotations"] += len(labels) - len(visual)
        totals["implicit_annotations"] += len(implicit)
        for label in labels.values():
            totals["sentiment_counts"][label.value] += 1

    recipe = {
        "config": config.model_dump(mode="json"),
        "cue_lexicon": {a.value: {s.value: cue for s, cue in cues.items()} for a, cues in CUE_LEXICON.items()},
        "totals": totals,
        "samples": planted,
    }
    write_dataset(samples, out_dir)
    (out_dir / RECIPE_FILENAME).write_text(json.dumps(recipe, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    logger.info(
        f"Generated {len(samples)} synthetic samples ({totals['implicit_annotations']} implicit annotations) in {out_dir}"
    )
    return SyntheticDataset(samples=samples, recipe=recipe, path=out_dir)


def load_recipe(path: str | Path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / RECIPE_FILENAME
    return json.loads(path.read_text(encoding="utf-8"))
