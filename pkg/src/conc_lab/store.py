"""Run directories: CSV tables, plot data and schema-checked JSON summaries."""

from __future__ import annotations

import csv
import functools
import hashlib
import json
import logging
import math
import shutil
from contextlib import contextmanager
from datetime import datetime, timezone
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Generator, Iterable, Sequence

import jsonschema
import numpy as np
from pydantic import BaseModel

from . import __version__
from .errors import ConfigInvalid, InputMissing
from .models import ExperimentConfig, RunSummary

logger = logging.getLogger(__name__)

SUMMARY_FILE = "summary.json"
SCHEMA_RESOURCE = "run_summary.schema.json"


def format_float(value: float) -> str:
    """17 significant digits, enough to rehydrate any double exactly."""
    return f"{float(value):.17g}"


def to_jsonable(value: Any) -> Any:
    """Convert models, numpy values and non-finite floats to plain JSON types.

    Non-finite floats become the strings "inf", "-inf" and "nan".
    """
    if isinstance(value, BaseModel):
        return to_jsonable(value.model_dump())
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isfinite(value):
            return value
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, Path):
        return str(value)
    return value


def dumps(payload: Any) -> str:
    return json.dumps(to_jsonable(payload), indent=2, sort_keys=True, allow_nan=False) + "\n"


@functools.lru_cache(maxsize=1)
def summary_schema() -> dict:
    text = resources.files("conc_lab").joinpath("schemas", SCHEMA_RESOURCE).read_text(encoding="utf-8")
    return json.loads(text)


def validate_summary(payload: dict) -> None:
    try:
        jsonschema.validate(payload, summary_schema())
    except jsonschema.ValidationError as e:
        raise ConfigInvalid(f"summary does not match schema: {e.message}") from e


def config_hash(config: ExperimentConfig) -> str:
    # output_dir does not change results
    data = config.model_dump(exclude={"output_dir"})
    return hashlib.sha256(dumps(data).encode()).hexdigest()


class RunStore:
    """Writer for the files of one run; see `open_run`."""

    def __init__(self, directory: Path):
        self.directory = directory
        self.files: list[str] = []

    def _path(self, name: str) -> Path:
        self.files.append(name)
        return self.directory / name

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        path = self._path(name)
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
        return path

    def write_plot(self, name: str, x, y) -> Path:
        """Two-column whitespace-separated curve file."""
        path = self._path(f"plot_{name}.dat")
        x = np.asarray(x, dtype=float).reshape(-1)
        y = np.asarray(y, dtype=float).reshape(-1)
        lines = [f"{format_float(a)} {format_float(b)}" for a, b in zip(x, y)]
        path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
        return path

    def write_text(self, name: str, text: str) -> Path:
        path = self._path(name)
        path.write_text(text, encoding="utf-8")
        return path

    def write_json(self, name: str, payload: Any) -> Path:
        path = self._path(name)
        path.write_text(dumps(payload), encoding="utf-8")
        return path

    def write_summary(self, summary: RunSummary, config: ExperimentConfig | None = None) -> Path:
        payload = to_jsonable(summary)
        payload["metadata"] = {
            **payload.get("metadata", {}),
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "version": __version__,
            "config_hash": config_hash(config) if config else None,
            "files": sorted(set(self.files)),
        }
        validate_summary(payload)
        return self.write_json(SUMMARY_FILE, payload)


def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    if value is None:
        return ""
    return str(value)


@contextmanager
def open_run(output_dir: str | Path) -> Generator[RunStore, None, None]:
    """Stage a run's files and move them into `output_dir` on success.

    On failure the staging directory is removed and `output_dir` keeps
    whatever it held before.
    """
    target = Path(output_dir)
    staging = target.with_name(target.name + ".partial")
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir(parents=True)
    store = RunStore(staging)
    try:
        yield store
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    if target.exists():
        shutil.rmtree(target)
    staging.rename(target)
    store.directory = target
    logger.info(f"Wrote {len(set(store.files))} files to {target}")


def write_error_summary(output_dir: str | Path, command: str, message: str, config: ExperimentConfig | None = None) -> Path:
    with open_run(output_dir) as store:
        store.write_summary(RunSummary(command=command, status="error", error=message), config)
    return Path(output_dir) / SUMMARY_FILE


def load_summary(run_dir: str | Path) -> RunSummary:
    path = Path(run_dir) / SUMMARY_FILE
    if not path.is_file():
        raise InputMissing(f"no {SUMMARY_FILE} in {run_dir}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigInvalid(f"{path}: invalid JSON ({e})") from e
    validate_summary(payload)
    return RunSummary.model_validate(payload)


def output_hashes(run_dir: str | Path) -> dict[str, str]:
    """SHA-256 of every output file, with summary metadata stripped."""
    hashes = {}
    for path in sorted(Path(run_dir).iterdir()):
        if not path.is_file():
            continue
        data = path.read_bytes()
        if path.name == SUMMARY_FILE:
            payload = json.loads(data)
            payload.pop("metadata", None)
            data = dumps(payload).encode()
        hashes[path.name] = hashlib.sha256(data).hexdigest()
    return hashes
