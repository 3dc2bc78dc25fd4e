"""Config Schemas - Validated settings for every workflow

Training defaults: learning rate 3e-5, batch size 4, 12 heads, dropout 0.1,
maximum input length 170, 7 images x 4 RoIs, five seeds. Hidden size and
layer count default to desk-scale values.
"""

import hashlib
import json

from pydantic import BaseModel, ConfigDict, Field, model_validator

from fcmf import __version__
from fcmf.schemas.report import EpochMetrics
from fcmf.schemas.sample import J_MAX, K_MAX


class ModelConfig(BaseModel):
    """Architecture hyperparameters shared by encoder, perception and fusion"""

    hidden_size: int = Field(48, gt=0, description="Model width d (48 keeps the 12 default heads dividing it)")
    num_layers: int = Field(2, ge=1, description="Encoder layers L")
    heads: int = Field(12, gt=0, description="Attention heads m (must divide d)")
    ffn_size: int | None = Field(None, gt=0, description="Feed-forward width (default 4d)")
    geometry_dim: int = Field(64, gt=0, description="Sinusoidal box-relation embedding width d_g")
    feature_dim: int = Field(2048, gt=0, description="Visual feature size F of grids and RoIs")
    grid_cells: int = Field(49, gt=0, description="Spatial cells per image grid")
    max_len: int = Field(170, gt=0, description="Auxiliary sequence length N_max")
    k_max: int = Field(K_MAX, ge=1, le=K_MAX, description="Image slots per review")
    j_max: int = Field(J_MAX, ge=1, le=J_MAX, description="RoI slots per image")
    dropout: float = Field(0.1, ge=0.0, lt=1.0)
    share_cm_attention: bool = Field(True, description="One CM-attention block shared by all image slots")

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def _check_divisibility(self):
        if self.hidden_size % self.heads != 0:
            raise ValueError(f"hidden_size {self.hidden_size} is not divisible by heads {self.heads}")
        if self.geometry_dim % 8 != 0:
            raise ValueError(f"geometry_dim {self.geometry_dim} must be a multiple of 8")
        return self

    @property
    def ffn_width(self) -> int:
        return self.ffn_size or 4 * self.hidden_size


class AblationFlags(BaseModel):
    """Switches removing one component each"""

    no_aux_categories: bool = False
    no_geometric: bool = False
    no_visual_features: bool = False
    no_preprocess: bool = False

    model_config = ConfigDict(extra="forbid")


class TrainConfig(BaseModel):
    """Joint training of encoder + fusion + classifier"""

    data: str = Field("", description="Dataset directory or JSONL file")
    model: ModelConfig = Field(default_factory=ModelConfig)
    ablation: AblationFlags = Field(default_factory=AblationFlags)
    learning_rate: float = Field(3e-5, gt=0)
    batch_size: int = Field(4, gt=0)
    epochs: int = Field(10, gt=0)
    seeds: list[int] = Field(default_factory=lambda: [1, 2, 3, 4, 5], min_length=1)
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    clip_norm: float | None = Field(1.0, description="Global gradient-norm cap; None disables clipping")
    dev_fraction: float = Field(0.15, ge=0.0, lt=1.0)
    test_fraction: float = Field(0.15, ge=0.0, lt=1.0)
    split_seed: int = 0
    heads_checkpoint: str | None = Field(None, description="Category heads used when gold categories are absent")
    lexicon: list[str] = Field(default_factory=list, description="Multi-word entries for segmentation")
    replacements: dict[str, str] = Field(default_factory=dict, description="Abbreviation table")

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def _check_split(self):
        if self.dev_fraction + self.test_fraction >= 1.0:
            raise ValueError("dev_fraction + test_fraction must leave a training split")
        return self

    def config_hash(self) -> str:
        return stable_hash(self.model_dump(mode="json"))


class SynthConfig(BaseModel):
    """Planted-signal dataset generation"""

    seed: int = 7
    n_samples: int = Field(200, ge=0)
    implicit_rate: float = Field(0.3, ge=0.0, le=1.0)
    noise: float = Field(0.1, ge=0.0)
    feature_dim: int = Field(2048, gt=0)
    grid_cells: int = Field(49, gt=0)
    irrelevant_rate: float = Field(0.2, ge=0.0, le=1.0, description="Chance of an extra image with no aspect")
    visual_rate: float = Field(0.5, ge=0.0, le=1.0, description="Chance a text-cued aspect also shows in an image")
    mean_aspects: float = Field(2.0, gt=0.0, description="Expected labeled aspects per review")

    model_config = ConfigDict(extra="forbid")


class StatsConfig(BaseModel):
    data: str = ""
    top_n: int = Field(50, ge=0)
    lexicon: list[str] = Field(default_factory=list)
    replacements: dict[str, str] = Field(default_factory=dict)

    model_config = ConfigDict(extra="forbid")


class HeadsConfig(BaseModel):
    """Separate training of the image / RoI category heads"""

    data: str = ""
    feature_dim: int = Field(2048, gt=0)
    grid_cells: int = Field(49, gt=0)
    learning_rate: float = Field(1e-2, gt=0)
    epochs: int = Field(100, gt=0)
    seed: int = 1
    holdout_fraction: float = Field(0.2, ge=0.0, lt=1.0)
    threshold: float = Field(0.5, gt=0.0, lt=1.0)

    model_config = ConfigDict(extra="forbid")


class EvalConfig(BaseModel):
    checkpoint: str = ""
    data: str = ""
    flat: bool = Field(False, description="Macro over all (sample, aspect) pairs instead of per-aspect mean")
    exclude_none: bool = False

    model_config = ConfigDict(extra="forbid")


class GradCheckConfig(BaseModel):
    hidden_size: int = Field(8, gt=0)
    num_layers: int = 1
    heads: int = 2
    k_max: int = 2
    j_max: int = 2
    max_len: int = Field(16, gt=0)
    feature_dim: int = Field(6, gt=0)
    grid_cells: int = Field(3, gt=0)
    geometry_dim: int = Field(8, gt=0)
    eps: float = 1e-5
    tol: float = 1e-4
    samples: int = Field(100, gt=0)
    seed: int = 0

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def _check_divisibility(self):
        if self.hidden_size % self.heads != 0:
            raise ValueError(f"hidden_size {self.hidden_size} is not divisible by heads {self.heads}")
        if self.geometry_dim % 8 != 0:
            raise ValueError(f"geometry_dim {self.geometry_dim} must be a multiple of 8")
        return self


class AgreeConfig(BaseModel):
    rounds: str = Field("", description="Directory of <round>_a.jsonl / <round>_b.jsonl pairs")
    threshold: float = Field(0.80, ge=-1.0, le=1.0)

    model_config = ConfigDict(extra="forbid")


class RunManifest(BaseModel):
    """Written into every artifact directory; feeding it back via --config reproduces the run"""

    tool: str = "fcmf"
    version: str = __version__
    command: str
    seed: int | None = None
    config: dict
    config_hash: str


def stable_hash(payload: dict) -> str:
    """sha256 of canonical JSON"""
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class CheckpointManifest(RunManifest):
    """manifest.json of a checkpoint directory; tensors sit beside it as FCMT v2 blobs"""

    kind: str = Field("fcmf", description='"fcmf" for the full model, "heads" for category heads')
    vocab_size: int | None = None
    epoch: int = 0
    rng_states: dict = Field(default_factory=dict)
    optimizer: dict = Field(default_factory=dict)
    history: list[EpochMetrics] = Field(default_factory=list)
