"""Dataset Service - Read/write review JSONL and resolve visual feature files

Dataset layout on disk:
    <dir>/dataset.jsonl            one SampleRecord per line
    <dir>/features/<ref>.fcmt      FCMT v1 feature files, refs relative to <dir>
"""

import json
import logging
from collections.abc import Iterable, Mapping
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from fcmf.exceptions import DataError, DatasetValidationError, FeatureIOError
from fcmf.schemas.sample import ImageEntry, MultimodalSample, RoI, SampleRecord
from fcmf.utils import fcmt
from fcmf.utils.preprocessing import Segmenter, preprocess

logger = logging.getLogger(__name__)

DATASET_FILENAME = "dataset.jsonl"


def resolve_dataset_file(path: str | Path) -> Path:
    """Accept either the JSONL file or the directory holding dataset.jsonl

    A path that does not exist yet is a file only when it ends in .jsonl;
    otherwise it names a dataset directory.
    """
    path = Path(path)
    if path.is_file() or (path.suffix == ".jsonl" and not path.is_dir()):
        return path
    return path / DATASET_FILENAME


def _format_validation_error(error: ValidationError) -> str:
    first = error.errors()[0]
    where = ".".join(str(part) for part in first.get("loc", ()))
    msg = first.get("msg", str(error)).removeprefix("Value error, ")
    return f"{where}: {msg}" if where else msg


class FeatureStore:
    """Loads FCMT feature files by ref, validating shapes and caching payloads

    Attributes:
        root: directory refs are resolved against
        feature_dim: expected feature size F
        grid_cells: expected number of grid cells per image
    """

    def __init__(self, root: str | Path, feature_dim: int = 2048, grid_cells: int = 49, threads: int = 1):
        self.root = Path(root)
        self.feature_dim = feature_dim
        self.grid_cells = grid_cells
        self.threads = max(1, threads)
        self._cache: dict[str, np.ndarray] = {}

    @property
    def grid_shape(self) -> tuple[int, int]:
        return (self.grid_cells, self.feature_dim)

    @property
    def roi_shape(self) -> tuple[int]:
        return (self.feature_dim,)

    def path_for(self, ref: str) -> Path:
        return self.root / ref

    def shape_of(self, ref: str) -> tuple[int, ...]:
        """Header-only read

        Raises:
            FeatureIOError: file missing or unreadable
        """
        path = self.path_for(ref)
        try:
            return fcmt.read_shape(path)
        except FileNotFoundError as e:
            raise FeatureIOError(ref, f"file not found at {path}") from e
        except (OSError, fcmt.FCMTFormatError) as e:
            raise FeatureIOError(ref, str(e)) from e

    def check_shape(self, ref: str, expected: tuple[int, ...]) -> None:
        shape = self.shape_of(ref)
        if shape != expected:
            raise FeatureIOError(ref, f"shape {shape} does not match expected {expected}")

    def load(self, ref: str, expected: tuple[int, ...]) -> np.ndarray:
        if ref not in self._cache:
            path = self.path_for(ref)
            try:
                array = fcmt.load(path)
            except FileNotFoundError as e:
                raise FeatureIOError(ref, f"file not found at {path}") from e
            except (OSError, fcmt.FCMTFormatError) as e:
                raise FeatureIOError(ref, str(e)) from e
            if array.shape != expected:
                raise FeatureIOError(ref, f"shape {array.shape} does not match expected {expected}")
            self._cache[ref] = array
        return self._cache[ref]

    def load_grid(self, ref: str) -> np.ndarray:
        return self.load(ref, self.grid_shape)

    def load_roi(self, ref: str) -> np.ndarray:
        return self.load(ref, self.roi_shape)

    def preload(self, samples: Iterable[MultimodalSample]) -> None:
        """Warm the cache for every ref in `samples` using up to `threads` workers"""
        jobs: list[tuple[str, tuple[int, ...]]] = []
        for sample in samples:
            for image in sample.images:
                jobs.append((image.feature_ref, self.grid_shape))
                jobs.extend((roi.feature_ref, self.roi_shape) for roi in image.rois)
        jobs = [job for job in dict.fromkeys(jobs) if job[0] not in self._cache]
        if not jobs:
            return
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            # map keeps submission order, so the cache fills deterministically
            for (ref, _), array in zip(jobs, pool.map(lambda job: fcmt.load(self.path_for(job[0])), jobs)):
                self._cache[ref] = array
        for ref, expected in jobs:
            if self._cache[ref].shape != expected:
                raise FeatureIOError(ref, f"shape {self._cache[ref].shape} does not match expected {expected}")
        logger.debug(f"Preloaded {len(jobs)} feature files from {self.root}")


def record_to_sample(
    record: SampleRecord,
    lexicon: Iterable[str] | Segmenter = (),
    replacements: Mapping[str, str] | None = None,
) -> MultimodalSample:
    """Validate a raw record into a domain sample (raises DataError/ValidationError)"""
    images = []
    for k, image in enumerate(record.images):
        if image.feature_ref is None:
            raise DataError(f"images.{k}.feature_ref is required")
        rois = []
        for j, roi in enumerate(image.rois):
            if roi.feature_ref is None:
                raise DataError(f"images.{k}.rois.{j}.feature_ref is required")
            rois.append(RoI(feature_ref=roi.feature_ref, box=roi.box, category=roi.category))
        categories = frozenset(image.categories) if image.categories is not None else None
        images.append(ImageEntry(feature_ref=image.feature_ref, categories=categories, rois=tuple(rois)))
    return MultimodalSample(
        id=record.id,
        raw_text=record.text,
        tokens=tuple(preprocess(record.text, lexicon=lexicon, replacements=replacements)),
        images=tuple(images),
        labels=dict(record.labels),
    )


def load_dataset(
    path: str | Path,
    feature_dim: int = 2048,
    grid_cells: int = 49,
    check_features: bool = True,
    lexicon: Iterable[str] = (),
    replacements: Mapping[str, str] | None = None,
) -> list[MultimodalSample]:
    """Load and validate a dataset JSONL file

    Args:
        path: JSONL file or directory containing dataset.jsonl
        feature_dim: expected feature size F
        grid_cells: expected grid cells per image
        check_features: verify every referenced feature file's header shape
        lexicon: multi-word entries for segmentation
        replacements: abbreviation table

    Returns:
        list[MultimodalSample]: samples in file order

    Raises:
        DatasetValidationError: malformed JSON, schema violation, bad box or
            shape-mismatched feature file (with the line number)
        FeatureIOError: a referenced feature file is missing or unreadable
    """
    file = resolve_dataset_file(path)
    store = FeatureStore(file.parent, feature_dim=feature_dim, grid_cells=grid_cells)
    segmenter = Segmenter(lexicon)
    samples: list[MultimodalSample] = []
    seen_ids: set[str] = set()
    try:
        lines = file.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError as e:
        raise DatasetValidationError(0, f"dataset file not found: {file}") from e

    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
            record = SampleRecord.model_validate(payload)
            sample = record_to_sample(record, lexicon=segmenter, replacements=replacements)
        except json.JSONDecodeError as e:
            logger.warning(f"{file}:{lineno}: malformed JSON")
            raise DatasetValidationError(lineno, f"malformed JSON: {e.msg}") from e
        except ValidationError as e:
            message = _format_validation_error(e)
            logger.warning(f"{file}:{lineno}: {message}")
            raise DatasetValidationError(lineno, message) from e
        except ValueError as e:
            raise DatasetValidationError(lineno, str(e)) from e

        if sample.id in seen_ids:
            raise DatasetValidationError(lineno, f"duplicate sample id '{sample.id}'")
        seen_ids.add(sample.id)

        if check_features:
            refs = [(image.feature_ref, store.grid_shape) for image in sample.images]
            refs += [(roi.feature_ref, store.roi_shape) for image in sample.images for roi in image.rois]
            for ref, expected in refs:
                # an unreadable file stays a FeatureIOError; a wrong shape is a data error
                try:
                    shape = store.shape_of(ref)
                except FeatureIOError:
                    logger.warning(f"{file}:{lineno}: feature '{ref}' cannot be read")
                    raise
                if shape != expected:
                    raise DatasetValidationError(
                        lineno, f"feature '{ref}': shape {shape} does not match expected {expected}"
                    )
        samples.append(sample)

    logger.info(f"Loaded {len(samples)} samples from {file}")
    return samples


def write_dataset(samples: Iterable[MultimodalSample], path: str | Path) -> Path:
    """Write samples as JSONL (feature files are not touched)

    Returns:
        Path: the JSONL file written
    """
    file = resolve_dataset_file(path)
    file.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        json.dumps(sample.to_record().model_dump(mode="json", exclude_none=True), ensure_ascii=False)
        for sample in samples
    ]
    file.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return file
