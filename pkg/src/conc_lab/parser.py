"""Readers for measure CSV files, experiment YAML files and grid strings."""

from __future__ import annotations

import csv
import logging
import re
from pathlib import Path
from typing import Any

import numpy as np
import yaml
from pydantic import ValidationError

from .errors import ConfigInvalid, InputMissing
from .measures import DiscreteMeasure, make_measure
from .models import ExperimentConfig

logger = logging.getLogger(__name__)

# Weight sums further than this from 1 are logged before renormalizing
RENORMALIZE_TOLERANCE = 1e-6

_GRID_PATTERN = re.compile(r"^\s*([^:]+):([^:]+):([^:]+)\s*$")


def read_measure(path: str | Path) -> DiscreteMeasure:
    """Load a measure from a CSV with header `x1,...,xd,weight`."""
    path = Path(path)
    if not path.is_file():
        raise InputMissing(f"measure file not found: {path}")

    with path.open(newline="", encoding="utf-8") as handle:
        rows = [row for row in csv.reader(handle) if row and any(cell.strip() for cell in row)]
    if not rows:
        raise ConfigInvalid(f"{path}: empty measure file")

    header = [cell.strip().lower() for cell in rows[0]]
    if len(header) < 2 or header[-1] != "weight":
        raise ConfigInvalid(f"{path}: header must be x1,...,xd,weight, got {rows[0]}")
    if len(rows) == 1:
        raise ConfigInvalid(f"{path}: no atoms")

    try:
        table = np.array([[float(cell) for cell in row] for row in rows[1:]], dtype=float)
    except ValueError as e:
        raise ConfigInvalid(f"{path}: non-numeric entry ({e})") from e
    if table.shape[1] != len(header):
        raise ConfigInvalid(f"{path}: rows have {table.shape[1]} columns, header has {len(header)}")

    points, weights = table[:, :-1], table[:, -1]
    total = float(weights.sum())
    if total > 0 and abs(total - 1.0) > RENORMALIZE_TOLERANCE:
        logger.warning(f"{path}: weights sum to {total!r}; renormalizing")
    if total > 0:
        weights = weights / total
    return make_measure(points, weights)


def write_measure(path: str | Path, mu: DiscreteMeasure) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow([f"x{i + 1}" for i in range(mu.dim)] + ["weight"])
        for x, w in zip(mu.points, mu.weights):
            writer.writerow([repr(float(v)) for v in x] + [repr(float(w))])
    return path


def parse_grid(text: str) -> np.ndarray:
    """Parse `a:b:step` (inclusive of b) or a comma-separated list."""
    text = str(text).strip()
    match = _GRID_PATTERN.match(text)
    try:
        if match:
            start, stop, step = (float(g) for g in match.groups())
            if step <= 0 or stop < start:
                raise ConfigInvalid(f"grid {text!r}: need step > 0 and b >= a")
            count = int(np.floor((stop - start) / step + 1e-9)) + 1
            return start + step * np.arange(count)
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigInvalid(f"malformed grid {text!r}; expected a:b:step or v1,v2,...") from e
    if not values:
        raise ConfigInvalid("empty grid")
    return np.asarray(values, dtype=float)


def as_grid(value: Any) -> np.ndarray:
    """Accept a grid string, a number or a YAML list."""
    if isinstance(value, str):
        return parse_grid(value)
    try:
        return np.atleast_1d(np.asarray(value, dtype=float))
    except (TypeError, ValueError) as e:
        raise ConfigInvalid(f"malformed grid {value!r}") from e


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """Read an experiment YAML file and apply flag overrides on top.

    Top-level keys are `command`, `inputs`, `seed`, `output_dir` and
    `parameters`; `overrides` uses the same layout, and its `parameters`
    entries replace file entries key by key.
    """
    data: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise InputMissing(f"config file not found: {path}")
        try:
            data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as e:
            raise ConfigInvalid(f"{path}: invalid YAML ({e})") from e
        if not isinstance(data, dict):
            raise ConfigInvalid(f"{path}: top level must be a mapping")

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "parameters":
            data["parameters"] = {**(data.get("parameters") or {}), **value}
        elif key == "inputs" and not value:
            continue
        else:
            data[key] = value

    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigInvalid(f"invalid experiment config: {e}") from e
