"""Metrics Service - Macro precision/recall/F1, Cohen's kappa, IoU and annotation agreement"""

import json
import logging
from collections.abc import Hashable, Mapping, Sequence
from pathlib import Path

from pydantic import ValidationError

from fcmf.exceptions import DataError
from fcmf.schemas.report import (
    AgreementReport,
    AgreementRound,
    ClassificationReport,
    ClassScores,
    ConfusionCounts,
    EvalReport,
)
from fcmf.schemas.sample import ASPECTS, SENTIMENTS, SampleRecord, SentimentLabel

logger = logging.getLogger(__name__)

Box = tuple[float, float, float, float]


def _ratio(num: float, den: float) -> tuple[float, bool]:
    """num / den with the 0/0 -> 0 convention; second value flags the zero division"""
    if den == 0:
        return 0.0, True
    return num / den, False


def _ordered_classes(labels: set[Hashable]) -> list[Hashable]:
    # SentimentLabel values keep their canonical order; anything else sorts by str
    canonical = [s.value for s in SENTIMENTS]
    return sorted(labels, key=lambda c: (canonical.index(str(c)) if str(c) in canonical else len(canonical), str(c)))


def macro_prf1(
    gold: Sequence[Hashable],
    pred: Sequence[Hashable],
    classes: Sequence[Hashable] | None = None,
) -> ClassificationReport:
    """Per-class and macro precision / recall / F1

    Args:
        gold: reference labels
        pred: predicted labels, aligned with gold
        classes: classes averaged over; default is every class seen in gold or pred

    Returns:
        ClassificationReport (macro = unweighted mean over classes, 0/0 -> 0)

    Raises:
        DataError: gold and pred differ in length

    Example:
        gold [A, A, B, B] against pred [A, B, B, B] gives F1 2/3 for A, 4/5 for B, macro 11/15
    """
    if len(gold) != len(pred):
        raise DataError(f"gold has {len(gold)} labels, pred has {len(pred)}")
    gold = [str(g) for g in gold]
    pred = [str(p) for p in pred]
    class_list = [str(c) for c in classes] if classes is not None else _ordered_classes(set(gold) | set(pred))

    per_class: dict[str, ClassScores] = {}
    zero_division: list[str] = []
    total = len(gold)
    for c in class_list:
        tp = sum(1 for g, p in zip(gold, pred) if g == c and p == c)
        fp = sum(1 for g, p in zip(gold, pred) if g != c and p == c)
        fn = sum(1 for g, p in zip(gold, pred) if g == c and p != c)
        precision, zp = _ratio(tp, tp + fp)
        recall, zr = _ratio(tp, tp + fn)
        f1, zf = _ratio(2 * tp, 2 * tp + fp + fn)
        if zp or zr or zf:
            zero_division.append(c)
        per_class[c] = ClassScores(
            precision=precision,
            recall=recall,
            f1=f1,
            support=tp + fn,
            counts=ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=total - tp - fp - fn),
        )

    n = len(class_list)
    return ClassificationReport(
        classes=class_list,
        per_class=per_class,
        macro_precision=sum(s.precision for s in per_class.values()) / n if n else 0.0,
        macro_recall=sum(s.recall for s in per_class.values()) / n if n else 0.0,
        macro_f1=sum(s.f1 for s in per_class.values()) / n if n else 0.0,
        total=total,
        zero_division_classes=zero_division,
    )


def build_eval_report(
    gold: Mapping[str, Sequence[str]],
    pred: Mapping[str, Sequence[str]],
    flat: bool = False,
    exclude_none: bool = False,
    n_samples: int = 0,
) -> EvalReport:
    """Score per-aspect decision lists

    Args:
        gold: aspect name -> gold labels over samples
        pred: aspect name -> predicted labels, aligned
        flat: one macro over every decision instead of the per-aspect mean
        exclude_none: leave the none class out of every macro average
        n_samples: number of samples scored (report bookkeeping)
    """

    def classes_for(g: Sequence[str], p: Sequence[str]) -> list[str]:
        seen = _ordered_classes(set(g) | set(p))
        return [c for c in seen if not (exclude_none and c == SentimentLabel.NONE.value)]

    aspects = [a for a in (x.value for x in ASPECTS) if a in gold] + sorted(set(gold) - {x.value for x in ASPECTS})
    per_aspect = {a: macro_prf1(gold[a], pred[a], classes_for(gold[a], pred[a])) for a in aspects}
    all_gold = [label for a in aspects for label in gold[a]]
    all_pred = [label for a in aspects for label in pred[a]]
    overall = macro_prf1(all_gold, all_pred, classes_for(all_gold, all_pred))

    if flat or not per_aspect:
        p, r, f = overall.macro_precision, overall.macro_recall, overall.macro_f1
    else:
        reports = list(per_aspect.values())
        p = sum(x.macro_precision for x in reports) / len(reports)
        r = sum(x.macro_recall for x in reports) / len(reports)
        f = sum(x.macro_f1 for x in reports) / len(reports)
    return EvalReport(
        mode="flat" if flat else "aspect",
        exclude_none=exclude_none,
        macro_precision=p,
        macro_recall=r,
        macro_f1=f,
        per_aspect=per_aspect,
        overall=overall,
        n_samples=n_samples,
    )


def cohen_kappa(annotator_a: Sequence[Hashable], annotator_b: Sequence[Hashable]) -> float:
    """κ = (P_o - P_e) / (1 - P_e); when P_e == 1, κ is 1 if P_o == 1 else 0

    Raises:
        DataError: empty or unequal-length inputs
    """
    if len(annotator_a) != len(annotator_b):
        raise DataError(f"annotator lists differ in length ({len(annotator_a)} vs {len(annotator_b)})")
    n = len(annotator_a)
    if n == 0:
        raise DataError("cohen_kappa needs at least one label pair")
    observed = sum(1 for a, b in zip(annotator_a, annotator_b) if a == b) / n
    labels = set(annotator_a) | set(annotator_b)
    expected = sum(
        (sum(1 for a in annotator_a if a == c) / n) * (sum(1 for b in annotator_b if b == c) / n) for c in labels
    )
    if expected == 1.0:
        return 1.0 if observed == 1.0 else 0.0
    return (observed - expected) / (1.0 - expected)


def iou(box_a: Box, box_b: Box) -> float:
    """Intersection over union of two (x, y, w, h) boxes

    Raises:
        DataError: a width or height is not positive
    """
    ax, ay, aw, ah = box_a
    bx, by, bw, bh = box_b
    if aw <= 0 or ah <= 0 or bw <= 0 or bh <= 0:
        raise DataError(f"boxes need positive width and height: {list(box_a)}, {list(box_b)}")
    iw = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    ih = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = iw * ih
    union = aw * ah + bw * bh - inter
    return inter / union


def greedy_iou_scores(boxes_a: Sequence[Box], boxes_b: Sequence[Box]) -> list[float]:
    """Pair boxes by repeatedly taking the highest remaining IoU; unmatched boxes score 0

    Returns:
        max(len(a), len(b)) scores
    """
    pairs = sorted(
        ((iou(a, b), i, j) for i, a in enumerate(boxes_a) for j, b in enumerate(boxes_b)),
        key=lambda t: (-t[0], t[1], t[2]),
    )
    used_a: set[int] = set()
    used_b: set[int] = set()
    scores: list[float] = []
    for value, i, j in pairs:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        scores.append(value)
    scores.extend([0.0] * (max(len(boxes_a), len(boxes_b)) - len(scores)))
    return scores


def _read_round(path: Path) -> dict[str, SampleRecord]:
    records: dict[str, SampleRecord] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = SampleRecord.model_validate(json.loads(line))
        except (json.JSONDecodeError, ValidationError) as e:
            raise DataError(f"{path.name} line {lineno}: {e}") from e
        records[record.id] = record
    return records


def _label(record: SampleRecord, aspect) -> str:
    return record.labels.get(aspect, SentimentLabel.NONE).value


def score_round(name: str, records_a: Mapping[str, SampleRecord], records_b: Mapping[str, SampleRecord], threshold: float) -> AgreementRound:
    """κ on aspect presence and on the 4-way sentiment per (sample, aspect), greedy IoU per image"""
    if set(records_a) != set(records_b):
        raise DataError(f"round '{name}': annotators labelled different sample ids")
    ids = sorted(records_a)
    presence_a, presence_b, sentiment_a, sentiment_b = [], [], [], []
    iou_scores: list[float] = []
    for sample_id in ids:
        a, b = records_a[sample_id], records_b[sample_id]
        for aspect in ASPECTS:
            la, lb = _label(a, aspect), _label(b, aspect)
            presence_a.append(la != SentimentLabel.NONE.value)
            presence_b.append(lb != SentimentLabel.NONE.value)
            sentiment_a.append(la)
            sentiment_b.append(lb)
        for k in range(max(len(a.images), len(b.images))):
            boxes_a = [r.box for r in a.images[k].rois] if k < len(a.images) else []
            boxes_b = [r.box for r in b.images[k].rois] if k < len(b.images) else []
            iou_scores.extend(greedy_iou_scores(boxes_a, boxes_b))

    aspect_kappa = cohen_kappa(presence_a, presence_b) if ids else 1.0
    sentiment_kappa = cohen_kappa(sentiment_a, sentiment_b) if ids else 1.0
    # no boxes on either side is full agreement
    mean_iou = sum(iou_scores) / len(iou_scores) if iou_scores else 1.0
    flagged = min(aspect_kappa, sentiment_kappa, mean_iou) < threshold
    if flagged:
        logger.warning(f"Round '{name}' below agreement threshold {threshold}")
    return AgreementRound(
        round=name,
        samples=len(ids),
        aspect_kappa=aspect_kappa,
        sentiment_kappa=sentiment_kappa,
        mean_iou=mean_iou,
        boxes=len(iou_scores),
        flagged=flagged,
    )


def agreement_report(rounds_dir: str | Path, threshold: float = 0.80) -> AgreementReport:
    """Score every <round>_a.jsonl / <round>_b.jsonl pair in a directory

    Raises:
        DataError: a round file has no partner, or the directory holds no rounds
    """
    rounds_dir = Path(rounds_dir)
    if not rounds_dir.is_dir():
        raise DataError(f"rounds directory not found: {rounds_dir}")
    names_a = {p.name[: -len("_a.jsonl")] for p in rounds_dir.glob("*_a.jsonl")}
    names_b = {p.name[: -len("_b.jsonl")] for p in rounds_dir.glob("*_b.jsonl")}
    unpaired = sorted(names_a ^ names_b)
    if unpaired:
        raise DataError(f"unpaired annotation rounds: {', '.join(unpaired)}")
    if not names_a:
        raise DataError(f"no annotation rounds in {rounds_dir}")
    rounds = [
        score_round(
            name,
            _read_round(rounds_dir / f"{name}_a.jsonl"),
            _read_round(rounds_dir / f"{name}_b.jsonl"),
            threshold,
        )
        for name in sorted(names_a)
    ]
    logger.info(f"Scored {len(rounds)} annotation rounds from {rounds_dir}")
    return AgreementReport(threshold=threshold, rounds=rounds)
