"""Storage Service - Read and write run artifacts (JSON, CSV, FCMT tensor blobs) on the local filesystem"""

import csv
import json
import logging
import shutil
from collections.abc import Iterable, Mapping
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel

from fcmf.config import settings
from fcmf.exceptions import ConfigurationError
from fcmf.schemas.config import RunManifest
from fcmf.utils import fcmt

logger = logging.getLogger(__name__)

MANIFEST_FILENAME = "manifest.json"
TENSOR_SUFFIX = ".fcmt"


class StorageService:
    """Artifact storage rooted at one run directory

    Storage Structure:
    - Manifests: {root}/manifest.json, {root}/seed_{n}/manifest.json, {root}/seed_{n}/checkpoint/manifest.json
    - Tensor blobs (flat per group): {root}/.../{group}/{parameter.name}.fcmt
    - Reports: {root}/report.json, {root}/*.csv
    """

    def __init__(self, root: str | Path | None = None):
        """Initialize storage

        Args:
            root: run directory; defaults to FCMF_OUT from settings
        """
        self.root = Path(root if root is not None else settings.FCMF_OUT)

    def path(self, key: str) -> Path:
        return self.root / key

    def child(self, key: str) -> "StorageService":
        return StorageService(self.root / key)

    def exists(self, key: str) -> bool:
        return self.path(key).exists()

    # Raw objects

    def put_bytes(self, key: str, content: bytes) -> Path:
        target = self.path(key)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(content)
        return target

    def get_bytes(self, key: str) -> bytes:
        return self.path(key).read_bytes()

    def put_text(self, key: str, content: str) -> Path:
        return self.put_bytes(key, content.encode("utf-8"))

    # Structured documents

    def put_json(self, key: str, payload: BaseModel | Mapping[str, Any] | list) -> Path:
        """Write indented JSON (pydantic models are dumped in JSON mode)"""
        if isinstance(payload, BaseModel):
            payload = payload.model_dump(mode="json")
        return self.put_text(key, json.dumps(payload, indent=2, ensure_ascii=False) + "\n")

    def get_json(self, key: str) -> Any:
        return json.loads(self.get_bytes(key).decode("utf-8"))

    def put_csv(self, key: str, header: Iterable[str], rows: Iterable[Iterable[Any]]) -> Path:
        target = self.path(key)
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(list(header))
            writer.writerows(rows)
        return target

    # Tensor blobs

    def put_tensors(self, group: str, arrays: Mapping[str, np.ndarray]) -> list[str]:
        """Write one FCMT v2 (float64) blob per array under `group`

        Returns:
            Keys written, in sorted name order
        """
        keys = []
        for name in sorted(arrays):
            key = f"{group}/{name}{TENSOR_SUFFIX}"
            self.put_bytes(key, fcmt.encode(arrays[name], version=fcmt.VERSION_F64))
            keys.append(key)
        return keys

    def get_tensors(self, group: str) -> dict[str, np.ndarray]:
        folder = self.path(group)
        if not folder.is_dir():
            raise ConfigurationError(f"tensor group not found: {folder}")
        return {p.name[: -len(TENSOR_SUFFIX)]: fcmt.load(p) for p in sorted(folder.glob(f"*{TENSOR_SUFFIX}"))}

    # Manifests

    def write_manifest(self, manifest: RunManifest, key: str = MANIFEST_FILENAME) -> Path:
        return self.put_json(key, manifest)

    def read_manifest(self, key: str = MANIFEST_FILENAME) -> dict[str, Any]:
        if not self.exists(key):
            raise ConfigurationError(f"no manifest at {self.path(key)}")
        return self.get_json(key)

    # Deletion

    def delete_object(self, key: str) -> None:
        self.path(key).unlink(missing_ok=True)

    def delete_prefix(self, key: str) -> None:
        """Remove a whole artifact directory (e.g. a superseded checkpoint)"""
        target = self.path(key)
        if target.is_dir():
            shutil.rmtree(target)
            logger.debug(f"Deleted {target}")


def get_storage_service(root: str | Path | None = None) -> StorageService:
    """Storage factory (FCMF_OUT when no root is given)"""
    return StorageService(root)
