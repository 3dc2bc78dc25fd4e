"""Sample Schemas - Domain records for multimodal reviews

The raw *Record models mirror one JSONL line exactly; the domain models
(RoI, ImageEntry, MultimodalSample) add the invariants a loaded sample must
satisfy.
"""

from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, field_validator

# Images per review and RoIs per image
K_MAX = 7
J_MAX = 4


class AspectCategory(str, Enum):
    """Hotel-domain aspect categories in canonical order"""

    LOCATION = "Location"
    FOOD = "Food"
    ROOM = "Room"
    FACILITIES = "Facilities"
    SERVICE = "Service"
    PUBLIC_AREA = "PublicArea"

    @property
    def token(self) -> str:
        """Reserved vocabulary token for this aspect"""
        return _ASPECT_TOKENS[self]

    @property
    def position(self) -> int:
        """Index in canonical order"""
        return ASPECTS.index(self)

    @classmethod
    def parse(cls, name: str) -> "AspectCategory":
        """Accept canonical names plus the spaced/underscored Public Area spellings"""
        key = name.strip()
        alias = _ASPECT_ALIASES.get(key.lower().replace(" ", "").replace("_", ""))
        if alias is None:
            raise ValueError(f"unknown aspect category '{name}'")
        return alias


class SentimentLabel(str, Enum):
    """Per-aspect label; NONE means the aspect is absent from text and images"""

    NONE = "none"
    NEGATIVE = "negative"
    NEUTRAL = "neutral"
    POSITIVE = "positive"

    @property
    def position(self) -> int:
        """Class index used by the classifier (none=0 ... positive=3)"""
        return SENTIMENTS.index(self)


ASPECTS: tuple[AspectCategory, ...] = tuple(AspectCategory)
SENTIMENTS: tuple[SentimentLabel, ...] = tuple(SentimentLabel)

_ASPECT_TOKENS = {
    AspectCategory.LOCATION: "location",
    AspectCategory.FOOD: "food",
    AspectCategory.ROOM: "room",
    AspectCategory.FACILITIES: "facilities",
    AspectCategory.SERVICE: "service",
    AspectCategory.PUBLIC_AREA: "public_area",
}
_ASPECT_ALIASES = {a.value.lower(): a for a in AspectCategory}


def sort_aspects(aspects) -> list[AspectCategory]:
    """Deduplicate and order aspects canonically"""
    return sorted(set(aspects), key=lambda a: a.position)


def _parse_aspect(value):
    if isinstance(value, AspectCategory) or value is None:
        return value
    return AspectCategory.parse(str(value))


# Raw JSONL records


class RoIRecord(BaseModel):
    """One RoI as written in the dataset file"""

    feature_ref: str | None = None
    box: tuple[float, float, float, float]
    category: AspectCategory | None = None

    model_config = ConfigDict(extra="forbid")

    @field_validator("category", mode="before")
    @classmethod
    def _parse_category(cls, value):
        return _parse_aspect(value)


class ImageRecord(BaseModel):
    """One image as written in the dataset file"""

    feature_ref: str | None = None
    categories: list[AspectCategory] | None = None
    rois: list[RoIRecord] = Field(default_factory=list)

    model_config = ConfigDict(extra="forbid")

    @field_validator("categories", mode="before")
    @classmethod
    def _parse_categories(cls, value):
        if value is None:
            return None
        return [_parse_aspect(v) for v in value]


class SampleRecord(BaseModel):
    """One dataset JSONL line"""

    id: str
    text: str = ""
    images: list[ImageRecord] = Field(default_factory=list)
    labels: dict[AspectCategory, SentimentLabel] = Field(default_factory=dict)

    model_config = ConfigDict(extra="forbid")

    @field_validator("labels", mode="before")
    @classmethod
    def _parse_labels(cls, value):
        if not isinstance(value, dict):
            raise ValueError("labels must be an object")
        return {_parse_aspect(k): v for k, v in value.items()}


# Domain models


class RoI(BaseModel):
    """Region of interest: feature vector ref + normalised (x, y, w, h) box"""

    feature_ref: str
    box: tuple[float, float, float, float]
    category: AspectCategory | None = None

    model_config = ConfigDict(frozen=True)

    @field_validator("box")
    @classmethod
    def _check_box(cls, box: tuple[float, float, float, float]):
        x, y, w, h = box
        if w <= 0 or h <= 0:
            raise ValueError(f"box {list(box)} needs w > 0 and h > 0")
        if x < 0 or y < 0:
            raise ValueError(f"box {list(box)} needs x >= 0 and y >= 0")
        if x + w > 1:
            raise ValueError(f"box {list(box)} has x+w > 1")
        if y + h > 1:
            raise ValueError(f"box {list(box)} has y+h > 1")
        return box


class ImageEntry(BaseModel):
    """One image: grid feature ref, optional gold categories, RoIs"""

    feature_ref: str
    categories: frozenset[AspectCategory] | None = None
    rois: tuple[RoI, ...] = ()

    model_config = ConfigDict(frozen=True)

    @field_validator("rois")
    @classmethod
    def _check_rois(cls, rois: tuple[RoI, ...]):
        if len(rois) > J_MAX:
            raise ValueError(f"{len(rois)} RoIs exceed J_max={J_MAX}")
        return rois


class MultimodalSample(BaseModel):
    """One review: text, up to K_MAX images, sparse per-aspect labels (absent = none)"""

    id: str
    raw_text: str
    tokens: tuple[str, ...] = ()
    images: tuple[ImageEntry, ...] = ()
    labels: dict[AspectCategory, SentimentLabel] = Field(default_factory=dict)

    model_config = ConfigDict(frozen=True)

    @field_validator("images")
    @classmethod
    def _check_images(cls, images: tuple[ImageEntry, ...]):
        if len(images) > K_MAX:
            raise ValueError(f"{len(images)} images exceed K_max={K_MAX}")
        return images

    @field_validator("labels")
    @classmethod
    def _drop_explicit_none(cls, labels: dict[AspectCategory, SentimentLabel]):
        # Sparse storage: an explicit "none" is the same as absence
        return {k: v for k, v in labels.items() if v != SentimentLabel.NONE}

    def label_for(self, aspect: AspectCategory) -> SentimentLabel:
        return self.labels.get(aspect, SentimentLabel.NONE)

    def to_record(self) -> SampleRecord:
        return SampleRecord(
            id=self.id,
            text=self.raw_text,
            images=[
                ImageRecord(
                    feature_ref=img.feature_ref,
                    categories=sort_aspects(img.categories) if img.categories is not None else None,
                    rois=[RoIRecord(feature_ref=r.feature_ref, box=r.box, category=r.category) for r in img.rois],
                )
                for img in self.images
            ],
            labels={a: self.labels[a] for a in sort_aspects(self.labels)},
        )
