"""Pydantic Schemas"""

from fcmf.schemas.config import (
    AblationFlags,
    AgreeConfig,
    CheckpointManifest,
    EvalConfig,
    GradCheckConfig,
    HeadsConfig,
    ModelConfig,
    RunManifest,
    StatsConfig,
    SynthConfig,
    TrainConfig,
)
from fcmf.schemas.report import (
    AgreementReport,
    AgreementRound,
    ClassificationReport,
    ClassScores,
    ConfusionCounts,
    DatasetStats,
    EpochMetrics,
    EvalReport,
    GradCheckReport,
    HeadsReport,
    SeedResult,
    SeedSummary,
)
from fcmf.schemas.sample import (
    ASPECTS,
    SENTIMENTS,
    AspectCategory,
    ImageEntry,
    MultimodalSample,
    RoI,
    SampleRecord,
    SentimentLabel,
)

__all__ = [
    # Sample schemas
    "ASPECTS",
    "SENTIMENTS",
    "AspectCategory",
    "SentimentLabel",
    "RoI",
    "ImageEntry",
    "MultimodalSample",
    "SampleRecord",
    # Config schemas
    "ModelConfig",
    "AblationFlags",
    "TrainConfig",
    "SynthConfig",
    "StatsConfig",
    "HeadsConfig",
    "EvalConfig",
    "GradCheckConfig",
    "AgreeConfig",
    "RunManifest",
    "CheckpointManifest",
    # Report schemas
    "GradCheckReport",
    "ConfusionCounts",
    "ClassScores",
    "ClassificationReport",
    "EvalReport",
    "DatasetStats",
    "AgreementRound",
    "AgreementReport",
    "EpochMetrics",
    "SeedResult",
    "SeedSummary",
    "HeadsReport",
]
