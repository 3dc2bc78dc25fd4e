"""Shared command plumbing - common flags, config resolution, run manifests

Config precedence: model defaults < --config file < explicit flags. The
--config file is either a plain config object or a previous manifest.json
(its "config" member is used).
"""

import argparse
import json
import logging
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any, TypeVar

from pydantic import BaseModel, ValidationError

from fcmf.config import settings
from fcmf.exceptions import ConfigurationError
from fcmf.schemas.config import RunManifest, stable_hash
from fcmf.services.storage_service import StorageService

logger = logging.getLogger(__name__)

ConfigT = TypeVar("ConfigT", bound=BaseModel)


@dataclass(frozen=True)
class CommandContext:
    """Resolved common flags handed to every command"""

    out: Path
    threads: int
    storage: StorageService


def add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", default=None, help="Output directory (default: $FCMF_OUT)")
    parser.add_argument("--config", default=None, help="JSON config file or a previous manifest.json")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ERROR, CRITICAL")
    parser.add_argument("--threads", type=int, default=None, help="Worker cap (default: $FCMF_THREADS)")


def context_from_args(args: argparse.Namespace) -> CommandContext:
    out = Path(args.out if args.out is not None else settings.FCMF_OUT)
    threads = args.threads if args.threads is not None else settings.FCMF_THREADS
    if threads < 1:
        raise ConfigurationError(f"--threads must be at least 1, got {threads}")
    return CommandContext(out=out, threads=threads, storage=StorageService(out))


def load_config_file(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigurationError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"config file {path} is not valid JSON: {e.msg}") from e
    if not isinstance(payload, dict):
        raise ConfigurationError(f"config file {path} must hold a JSON object")
    if "command" in payload and isinstance(payload.get("config"), dict):
        return payload["config"]
    return payload


def _set_path(payload: dict[str, Any], dotted: str, value: Any) -> None:
    *parents, leaf = dotted.split(".")
    node = payload
    for key in parents:
        node = node.setdefault(key, {})
    node[leaf] = value


def resolve_config(model: type[ConfigT], args: argparse.Namespace, flags: Mapping[str, str]) -> ConfigT:
    """Merge defaults, the --config file and every flag that was given

    Args:
        model: config model to validate into
        args: parsed arguments
        flags: argparse dest -> dotted config field (e.g. "heads" -> "model.heads")

    Raises:
        ConfigurationError: the merged config fails validation
    """
    payload = load_config_file(args.config) if getattr(args, "config", None) else {}
    for dest, dotted in flags.items():
        value = getattr(args, dest, None)
        if value is not None:
            _set_path(payload, dotted, value)
    try:
        return model.model_validate(payload)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(part) for part in first.get("loc", ()))
        message = first.get("msg", str(e)).removeprefix("Value error, ")
        raise ConfigurationError(f"invalid {model.__name__}: {where + ': ' if where else ''}{message}") from e


def write_run_manifest(storage: StorageService, command: str, config: BaseModel, seed: int | None = None) -> None:
    payload = config.model_dump(mode="json")
    manifest = RunManifest(command=command, seed=seed, config=payload, config_hash=stable_hash(payload))
    storage.write_manifest(manifest)
    logger.debug(f"Wrote manifest for '{command}' to {storage.root}")
