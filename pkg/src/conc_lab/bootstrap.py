"""Startup helpers: environment configuration, caps and logging."""

from __future__ import annotations

import functools
import json
import logging
import os
from dataclasses import dataclass

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"


def env_flag(name: str, default: bool = False) -> bool:
    value = os.getenv(name)
    if value is None:
        return default
    return value.strip().lower() in {"1", "true", "yes", "y", "on"}


def env_int(name: str, default: int) -> int:
    value = os.getenv(name)
    if value is None or not value.strip():
        return default
    try:
        # accept "2e6" style caps
        return int(float(value))
    except ValueError:
        logger.warning(f"Ignoring non-numeric {name}={value!r}; using {default}")
        return default


@dataclass(frozen=True)
class Settings:
    """Process-wide knobs read from CONC_LAB_* environment variables."""

    threads: int
    product_cap: int
    enumeration_cap: int
    cost_cap: int
    support_cap: int
    log_level: str
    log_json: bool


@functools.lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings(
        threads=max(1, env_int("CONC_LAB_THREADS", os.cpu_count() or 1)),
        product_cap=env_int("CONC_LAB_PRODUCT_CAP", 2_000_000),
        enumeration_cap=env_int("CONC_LAB_ENUMERATION_CAP", 1_000_000),
        cost_cap=env_int("CONC_LAB_COST_CAP", 40_000_000),
        support_cap=env_int("CONC_LAB_SUPPORT_CAP", 1_000_000),
        log_level=os.getenv("CONC_LAB_LOG_LEVEL", "INFO").upper(),
        log_json=env_flag("CONC_LAB_LOG_JSON", False),
    )


def reset_settings() -> None:
    """Forget cached settings so the next lookup re-reads the environment."""
    get_settings.cache_clear()


def worker_count(tasks: int | None = None) -> int:
    threads = get_settings().threads
    if tasks is not None:
        threads = min(threads, max(1, tasks))
    return threads


class _JsonFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        payload = {
            "time": self.formatTime(record),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        if record.exc_info:
            payload["exc_info"] = self.formatException(record.exc_info)
        return json.dumps(payload)


def configure_logging(level: str | None = None, json_lines: bool | None = None) -> None:
    """Install the root handler once; later calls only adjust the level."""
    settings = get_settings()
    level = (level or settings.log_level).upper()
    json_lines = settings.log_json if json_lines is None else json_lines

    root = logging.getLogger()
    root.setLevel(level)
    if getattr(configure_logging, "_installed", False):
        return

    handler = logging.StreamHandler()
    handler.setFormatter(_JsonFormatter() if json_lines else logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    configure_logging._installed = True
