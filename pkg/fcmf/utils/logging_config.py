"""
Logging Setup for the fcmf Command Line

One stderr handler on the root logger, configured once per invocation from
fcmf.main.run. Level comes from --log-level, else LOG_LEVEL. Records are
pipe-separated text, or one JSON object per record when LOG_JSON_OUTPUT=true.
Stdout stays reserved for command summaries.

Usage:
    from fcmf.utils.logging_config import setup_logging
    setup_logging("DEBUG")
"""

import json
import logging
import sys

from fcmf.config import settings


class JsonLineFormatter(logging.Formatter):
    """One JSON object per record (LOG_JSON_OUTPUT=true)"""

    def format(self, record: logging.LogRecord) -> str:
        payload = {
            "time": self.formatTime(record, "%Y-%m-%d %H:%M:%S"),
            "logger": record.name,
            "level": record.levelname,
            "message": record.getMessage(),
        }
        if record.exc_info:
            payload["exc_info"] = self.formatException(record.exc_info)
        return json.dumps(payload, ensure_ascii=False)


def _get_log_level(level_str: str) -> int:
    """Convert string log level to logging constant"""
    level_map = {
        "DEBUG": logging.DEBUG,
        "INFO": logging.INFO,
        "WARNING": logging.WARNING,
        "ERROR": logging.ERROR,
        "CRITICAL": logging.CRITICAL,
    }
    return level_map.get(level_str.upper(), logging.INFO)


def setup_logging(level: str | None = None) -> None:
    """Configure logging from Pydantic Settings

    Reads from settings:
    - LOG_LEVEL: Global log level (default: INFO), overridden by `level`
    - LOG_JSON_OUTPUT: Enable JSON structured logging (default: False)

    Args:
        level: Optional level name from the command line (--log-level)
    """
    root_level = _get_log_level(level or settings.LOG_LEVEL)

    handler = logging.StreamHandler(sys.stderr)
    if settings.LOG_JSON_OUTPUT:
        handler.setFormatter(JsonLineFormatter())
    else:
        handler.setFormatter(
            logging.Formatter(
                "%(asctime)s | %(name)-25s | %(levelname)-8s | %(message)s",
                datefmt="%Y-%m-%d %H:%M:%S",
            )
        )

    logging.basicConfig(level=root_level, handlers=[handler], force=True)

    # Noisy third-party loggers
    logging.getLogger("numpy").setLevel(logging.WARNING)
