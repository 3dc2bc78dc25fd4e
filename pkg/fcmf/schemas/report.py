"""Report Schemas - Evaluation, statistics, agreement and diagnostics outputs"""

from pydantic import BaseModel, Field


class GradCheckFailure(BaseModel):
    param: str
    index: int
    analytic: float
    numeric: float
    rel_error: float


class GradCheckReport(BaseModel):
    """Finite-difference check result"""

    passed: bool
    checked: int
    max_rel_error: float
    tol: float
    eps: float
    failures: list[GradCheckFailure] = Field(default_factory=list)


class ConfusionCounts(BaseModel):
    """One-vs-rest counts for a single class"""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0


class ClassScores(BaseModel):
    precision: float
    recall: float
    f1: float
    support: int
    counts: ConfusionCounts


class ClassificationReport(BaseModel):
    """Per-class and macro precision / recall / F1 over one list of decisions

    Macro values are unweighted means over `classes`.
    """

    classes: list[str]
    per_class: dict[str, ClassScores]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    total: int
    zero_division_classes: list[str] = Field(default_factory=list)


class EvalReport(BaseModel):
    """Per-aspect breakdown plus the headline macro scores

    mode "aspect": macro over classes within each aspect, then mean over aspects.
    mode "flat": one macro over every (sample, aspect) decision.
    """

    mode: str
    exclude_none: bool
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_aspect: dict[str, ClassificationReport]
    overall: ClassificationReport
    n_samples: int


class TokenCount(BaseModel):
    token: str
    count: int


class DatasetStats(BaseModel):
    """Corpus statistics"""

    reviews: int = 0
    mean_tokens: float = 0.0
    mean_aspects_per_review: float = 0.0
    sentiment_counts: dict[str, int] = Field(default_factory=dict)
    aspect_sentiment_counts: dict[str, dict[str, int]] = Field(default_factory=dict)
    images: int = 0
    rois: int = 0
    relevant_images: int = 0
    irrelevant_images: int = 0
    text_only_annotations: int = Field(0, description="Labeled aspects absent from every image")
    text_image_annotations: int = Field(0, description="Labeled aspects shown in at least one image or RoI")
    top_tokens: list[TokenCount] = Field(default_factory=list)


class AgreementRound(BaseModel):
    round: str
    samples: int
    aspect_kappa: float
    sentiment_kappa: float
    mean_iou: float
    boxes: int
    flagged: bool


class AgreementReport(BaseModel):
    threshold: float
    rounds: list[AgreementRound]


class EpochMetrics(BaseModel):
    """One row of the metrics history CSV"""

    epoch: int
    split: str
    loss: float
    macro_p: float
    macro_r: float
    macro_f1: float


class SeedResult(BaseModel):
    seed: int
    best_epoch: int
    best_dev_f1: float
    test_f1: float | None = None
    checkpoint: str


class SeedSummary(BaseModel):
    """Mean / standard deviation over seeds"""

    seeds: list[SeedResult]
    mean_dev_f1: float
    std_dev_f1: float
    mean_test_f1: float | None = None
    std_test_f1: float | None = None


class HeadsReport(BaseModel):
    """Held-out accuracy of the category heads"""

    image_accuracy: float | None = None
    roi_accuracy: float | None = None
    image_examples: int = 0
    roi_examples: int = 0
    final_image_loss: float | None = None
    final_roi_loss: float | None = None
