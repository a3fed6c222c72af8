"""Finite-support probability measures, their products and transforms."""

from __future__ import annotations

import functools
import logging
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp, xlogy

from .bootstrap import get_settings
from .errors import (
    DimensionMismatch,
    EmptySupport,
    EnumerationCapExceeded,
    GridTooLarge,
    InvalidArgument,
    InvalidPoints,
    InvalidWeights,
    NegativeWeight,
    WeightSumMismatch,
)
from .streams import StreamId, as_stream

logger = logging.getLogger(__name__)

WEIGHT_SUM_TOLERANCE = 1e-9


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array)
    array.setflags(write=False)
    return array


def as_points(points, dim: int | None = None) -> np.ndarray:
    """Coerce scalars, 1-d lists (one coordinate each) or (k, d) arrays to (k, d)."""
    array = np.asarray(points, dtype=float)
    if array.ndim == 0:
        array = array.reshape(1, 1)
    elif array.ndim == 1:
        array = array.reshape(-1, 1) if dim in (None, 1) else array.reshape(-1, dim)
    elif array.ndim != 2:
        raise InvalidPoints(f"points must be at most 2-dimensional, got shape {array.shape}")
    if dim is not None and array.shape[1] != dim:
        raise DimensionMismatch(f"expected dimension {dim}, got {array.shape[1]}")
    return array


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Probability measure on finitely many distinct points of R^d."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @functools.cached_property
    def atom_index(self) -> dict[bytes, int]:
        return {row.tobytes(): i for i, row in enumerate(self.points)}

    @functools.cached_property
    def is_sorted_line(self) -> bool:
        return self.dim == 1 and bool(np.all(np.diff(self.points[:, 0]) > 0))

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def expectation(self, values) -> float:
        return float(self.weights @ np.asarray(values, dtype=float))

    def with_weights(self, weights) -> "DiscreteMeasure":
        """Same support, new weights (zeros kept so the support is preserved)."""
        return make_measure(self.points, weights)

    def sorted(self) -> "DiscreteMeasure":
        if self.dim != 1 or self.is_sorted_line:
            return self
        order = np.argsort(self.points[:, 0], kind="stable")
        return make_measure(self.points[order], self.weights[order])

    def equals(self, other: "DiscreteMeasure", atol: float = 0.0) -> bool:
        if self.dim != other.dim or self.size != other.size:
            return False
        aligned = align_weights(other, self)
        return aligned is not None and bool(np.allclose(aligned, self.weights, rtol=0.0, atol=atol))

    def __repr__(self) -> str:
        return f"DiscreteMeasure(size={self.size}, dim={self.dim})"


def make_measure(points, weights, *, tolerance: float = WEIGHT_SUM_TOLERANCE) -> DiscreteMeasure:
    """Validate, renormalize and merge duplicate points (bitwise equality)."""
    weights = np.asarray(weights, dtype=float).reshape(-1)
    points = as_points(points)
    if points.shape[0] == 0 or weights.size == 0:
        raise EmptySupport("a measure needs at least one atom")
    if points.shape[0] != weights.size:
        raise DimensionMismatch(
            f"{points.shape[0]} points but {weights.size} weights"
        )
    if not np.all(np.isfinite(points)):
        raise InvalidPoints("points must be finite")
    if not np.all(np.isfinite(weights)):
        raise InvalidWeights("weights must be finite")
    if np.any(weights < 0):
        raise NegativeWeight(f"negative weight {weights.min()!r}")
    total = float(weights.sum())
    if abs(total - 1.0) > tolerance:
        raise WeightSumMismatch(f"weights sum to {total!r}, expected 1 within {tolerance}")

    # -0.0 and 0.0 must collide
    points = points + 0.0
    unique, first, inverse = np.unique(points, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    if unique.shape[0] < points.shape[0]:
        merged = np.bincount(inverse, weights=weights, minlength=unique.shape[0])
        order = np.argsort(first, kind="stable")
        points, weights = unique[order], merged[order]

    weights = weights / weights.sum()
    return DiscreteMeasure(_frozen(points), _frozen(weights))


def point_mass(x) -> DiscreteMeasure:
    return make_measure(as_points(x).reshape(1, -1), [1.0])


def uniform_measure(points) -> DiscreteMeasure:
    points = as_points(points)
    return make_measure(points, np.full(points.shape[0], 1.0 / max(points.shape[0], 1)))


def align_weights(nu: DiscreteMeasure, mu: DiscreteMeasure) -> np.ndarray | None:
    """nu's weights laid out on mu's support, or None when nu charges a point mu does not."""
    if nu.dim != mu.dim:
        raise DimensionMismatch(f"dimensions {nu.dim} and {mu.dim} differ")
    aligned = np.zeros(mu.size)
    index = mu.atom_index
    for row, weight in zip(nu.points, nu.weights):
        position = index.get(row.tobytes())
        if position is None:
            if weight > 0:
                return None
            continue
        aligned[position] += weight
    return aligned


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """n sample points, each of mass 1/n; duplicates are kept."""

    sample: np.ndarray

    @property
    def n(self) -> int:
        return self.sample.shape[0]

    @property
    def dim(self) -> int:
        return self.sample.shape[1]

    def to_measure(self) -> DiscreteMeasure:
        return make_measure(self.sample, np.full(self.n, 1.0 / self.n))


def empirical(sample) -> EmpiricalMeasure:
    sample = as_points(sample)
    if sample.shape[0] == 0:
        raise EmptySupport("an empirical measure needs at least one sample")
    return EmpiricalMeasure(_frozen(sample + 0.0))


def sample_indices(mu: DiscreteMeasure, n: int, stream: StreamId | int | None) -> np.ndarray:
    if int(n) != n or n < 1:
        raise InvalidArgument(f"sample size must be a positive integer, got {n!r}")
    gen = as_stream(stream).generator()
    return gen.choice(mu.size, size=int(n), p=mu.weights)


def sample_empirical(mu: DiscreteMeasure, n: int, stream: StreamId | int | None) -> EmpiricalMeasure:
    return EmpiricalMeasure(_frozen(mu.points[sample_indices(mu, n, stream)]))


def sample_counts(mu: DiscreteMeasure, n: int, trials: int, stream: StreamId | int | None) -> np.ndarray:
    """Occupation counts of `trials` independent n-samples, shape (trials, |support|)."""
    if int(n) != n or n < 1:
        raise InvalidArgument(f"sample size must be a positive integer, got {n!r}")
    gen = as_stream(stream).generator()
    return gen.multinomial(int(n), mu.weights, size=int(trials))


@dataclass(frozen=True, eq=False)
class ProductSpec:
    """mu^n, described implicitly; materialized only under the product cap."""

    base: DiscreteMeasure
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise InvalidArgument(f"number of factors must be a positive integer, got {self.n!r}")

    @property
    def outcome_count(self) -> int:
        return self.base.size ** int(self.n)

    def check_cap(self, cap: int | None = None) -> None:
        cap = get_settings().product_cap if cap is None else cap
        if self.outcome_count > cap:
            raise EnumerationCapExceeded(
                f"|support|^n = {self.base.size}^{self.n} = {self.outcome_count} exceeds cap {cap}"
            )

    def materialize(self, cap: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Outcome table of atom indices (N, n) and product weights (N,)."""
        self.check_cap(cap)
        count = self.outcome_count
        shape = (self.base.size,) * int(self.n)
        table = np.stack(np.unravel_index(np.arange(count), shape), axis=1)
        weights = np.prod(self.base.weights[table], axis=1)
        return table, weights

    def outcome_points(self, table: np.ndarray) -> np.ndarray:
        return self.base.points[table]


def product_measure(mu1: DiscreteMeasure, mu2: DiscreteMeasure) -> DiscreteMeasure:
    """mu1 (x) mu2 on R^(d1 + d2)."""
    k1, k2 = mu1.size, mu2.size
    points = np.concatenate(
        [np.repeat(mu1.points, k2, axis=0), np.tile(mu2.points, (k1, 1))], axis=1
    )
    return make_measure(points, np.outer(mu1.weights, mu2.weights).ravel())


def compositions(total: int, parts: int) -> np.ndarray:
    """All nonnegative integer vectors of length `parts` summing to `total`."""
    if parts == 1:
        return np.array([[total]], dtype=np.int64)
    if parts == 2:
        first = np.arange(total + 1, dtype=np.int64)
        return np.column_stack([first, total - first])
    blocks = []
    for first in range(total + 1):
        rest = compositions(total - first, parts - 1)
        blocks.append(np.column_stack([np.full(rest.shape[0], first, dtype=np.int64), rest]))
    return np.vstack(blocks)


def enumerate_types(k: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Occupation counts of n draws over k atoms and their log multinomial coefficients."""
    counts = compositions(int(n), int(k))
    log_coefficients = gammaln(n + 1) - gammaln(counts + 1).sum(axis=1)
    return counts, log_coefficients


def type_log_probabilities(counts: np.ndarray, log_coefficients: np.ndarray, weights) -> np.ndarray:
    """log P(L_n has these counts) under i.i.d. draws from `weights`."""
    with np.errstate(divide="ignore"):
        return log_coefficients + xlogy(counts, np.asarray(weights, dtype=float)).sum(axis=1)


def discretize_density(
    log_density: Callable[[np.ndarray], np.ndarray],
    grid_halfwidth: float,
    step: float,
    *,
    cap: int | None = None,
) -> DiscreteMeasure:
    """Pointwise density weights on the symmetric grid step * {-m, ..., m}."""
    if not grid_halfwidth > 0 or not step > 0:
        raise InvalidArgument("grid halfwidth and step must be positive")
    half = int(round(grid_halfwidth / step))
    size = 2 * half + 1
    cap = get_settings().support_cap if cap is None else cap
    if size > cap:
        raise GridTooLarge(f"grid of {size} points exceeds support cap {cap}")
    x = np.arange(-half, half + 1) * step
    log_w = np.asarray(log_density(x), dtype=float)
    weights = np.exp(log_w - log_w.max())
    return make_measure(x, weights / weights.sum())


def discretize_gaussian(
    grid_halfwidth: float,
    step: float,
    *,
    mean: float = 0.0,
    sigma: float = 1.0,
    cap: int | None = None,
) -> DiscreteMeasure:
    """N(mean, sigma^2) restricted to the centered grid; mean != 0 keeps the grid fixed."""
    if not sigma > 0:
        raise InvalidArgument("sigma must be positive")
    return discretize_density(
        lambda x: -0.5 * ((x - mean) / sigma) ** 2, grid_halfwidth, step, cap=cap
    )


def translate(mu: DiscreteMeasure, shift) -> DiscreteMeasure:
    shift = np.broadcast_to(np.asarray(shift, dtype=float), (mu.dim,))
    return make_measure(mu.points + shift, mu.weights)


def tilt(mu: DiscreteMeasure, lam) -> DiscreteMeasure:
    """Reweight by exp(<lam, x>) and renormalize; the support is unchanged."""
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (mu.dim,))
    exponent = mu.points @ lam
    log_norm = logsumexp(exponent, b=mu.weights)
    return make_measure(mu.points, mu.weights * np.exp(exponent - log_norm))


def omega(u):
    """sign(u) * max(|u|, u^2), coordinatewise."""
    u = np.asarray(u, dtype=float)
    return np.sign(u) * np.maximum(np.abs(u), u * u)


def pushforward_omega(mu: DiscreteMeasure) -> DiscreteMeasure:
    return make_measure(omega(mu.points), mu.weights)
