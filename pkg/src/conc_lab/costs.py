"""Ground costs, product metrics and two-level ball geometry."""

from __future__ import annotations

import logging
import re
from collections.abc import Iterator
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .bootstrap import get_settings
from .errors import CostSpecError, DimensionMismatch, InvalidArgument, SizeCapExceeded
from .measures import as_points

logger = logging.getLogger(__name__)

MEMBERSHIP_TOLERANCE = 1e-9
_BISECTION_STEPS = 60
_NEWTON_STEPS = 16


class CostKind(str, Enum):
    QUADRATIC = "quadratic"
    POWER = "power"
    ALPHA = "alpha"
    SG = "sg"


class ProductRule(str, Enum):
    SUM = "sum"
    LP = "lp"


def alpha(u, p: float) -> np.ndarray:
    """Two-level cost min(u^2, |u|^p)."""
    u = np.abs(np.asarray(u, dtype=float))
    return np.minimum(u * u, u**p)


_COST_PATTERN = re.compile(r"^(quadratic|sg|(power|alpha):p=([0-9eE+\-.]+))$")


@dataclass(frozen=True)
class CostSpec:
    """A ground cost c(x, y) = c(x - y) on R^d plus the rule for product spaces.

    quadratic is |x - y|^2, power is |x - y|^p, alpha sums the two-level cost
    over coordinates and sg applies the p = 1 two-level cost to |x - y|.
    """

    kind: CostKind
    p: float = 2.0
    product_rule: ProductRule = ProductRule.SUM

    def __post_init__(self):
        object.__setattr__(self, "kind", CostKind(self.kind))
        object.__setattr__(self, "product_rule", ProductRule(self.product_rule))
        object.__setattr__(self, "p", float(self.p))
        if self.kind is CostKind.QUADRATIC and self.p != 2.0:
            object.__setattr__(self, "p", 2.0)
        if self.kind is CostKind.SG and self.p != 1.0:
            object.__setattr__(self, "p", 1.0)
        if self.kind is CostKind.POWER and not self.p >= 1.0:
            raise CostSpecError(f"power cost needs p >= 1, got {self.p}")
        if self.kind is CostKind.ALPHA and not 1.0 <= self.p <= 2.0:
            raise CostSpecError(f"two-level cost needs p in [1, 2], got {self.p}")

    @classmethod
    def parse(cls, text: str) -> "CostSpec":
        match = _COST_PATTERN.match(text.strip().lower())
        if not match:
            raise CostSpecError(
                f"malformed cost {text!r}; expected quadratic | power:p=<f> | alpha:p=<f> | sg"
            )
        if match.group(2) is None:
            return cls(CostKind(match.group(1)))
        try:
            p = float(match.group(3))
        except ValueError as e:
            raise CostSpecError(f"malformed exponent in cost {text!r}") from e
        return cls(CostKind(match.group(2)), p)

    @classmethod
    def quadratic(cls) -> "CostSpec":
        return cls(CostKind.QUADRATIC)

    @classmethod
    def power(cls, p: float) -> "CostSpec":
        return cls(CostKind.POWER, p)

    @classmethod
    def two_level(cls, p: float) -> "CostSpec":
        return cls(CostKind.ALPHA, p)

    @classmethod
    def sg(cls) -> "CostSpec":
        return cls(CostKind.SG)

    def __str__(self) -> str:
        if self.kind in (CostKind.QUADRATIC, CostKind.SG):
            return self.kind.value
        return f"{self.kind.value}:p={self.p:g}"

    @property
    def is_convex_1d(self) -> bool:
        """Convex in the displacement, so monotone couplings are optimal on the line."""
        if self.kind in (CostKind.QUADRATIC, CostKind.POWER):
            return True
        return self.kind is CostKind.ALPHA and self.p == 2.0

    @property
    def exponent(self) -> float:
        """p for which the statistic is (optimal cost)^(1/p); 1 means the raw cost."""
        return self.p if self.kind in (CostKind.QUADRATIC, CostKind.POWER) else 1.0

    def displacement_cost(self, z: np.ndarray) -> np.ndarray:
        """Cost of displacement vectors z of shape (..., d)."""
        z = np.asarray(z, dtype=float)
        if self.kind is CostKind.QUADRATIC:
            return np.einsum("...j,...j->...", z, z)
        if self.kind is CostKind.POWER:
            return np.linalg.norm(z, axis=-1) ** self.p
        if self.kind is CostKind.ALPHA:
            return alpha(z, self.p).sum(axis=-1)
        return alpha(np.linalg.norm(z, axis=-1), 1.0)

    def scalar_cost(self, u: np.ndarray) -> np.ndarray:
        """Cost of one-dimensional displacements."""
        return self.displacement_cost(np.asarray(u, dtype=float)[..., None])


def inequality_exponent(spec: CostSpec) -> float:
    """q in `statistic^q <= C * H`: max(p, 2) for power costs, 1 for two-level costs."""
    if spec.kind in (CostKind.QUADRATIC, CostKind.POWER):
        return max(spec.p, 2.0)
    return 1.0


def _as_tuple(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DimensionMismatch(f"shapes {x.shape} and {y.shape} differ")
    x = x.reshape(1, -1) if x.ndim <= 1 else x
    y = y.reshape(1, -1) if y.ndim <= 1 else y
    return x, y


def eval_cost(spec: CostSpec, x, y) -> float:
    """c(x, y) for single points, or the product-rule aggregate for (n, d) tuples."""
    x, y = _as_tuple(x, y)
    if spec.product_rule is ProductRule.LP:
        distances = np.linalg.norm(x - y, axis=-1)
        return float((distances**spec.p).sum() ** (1.0 / spec.p))
    return float(spec.displacement_cost(x - y).sum())


def rho_p_n(x, y, p: float) -> float:
    """[sum_i |x^i - y^i|^p]^(1/p); 1-d inputs are tuples of scalars."""
    if not p >= 1:
        raise InvalidArgument(f"p must be >= 1, got {p}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DimensionMismatch(f"shapes {x.shape} and {y.shape} differ")
    x = x.reshape(-1, 1) if x.ndim == 1 else x
    y = y.reshape(-1, 1) if y.ndim == 1 else y
    distances = np.linalg.norm(x - y, axis=-1)
    return float((distances**p).sum() ** (1.0 / p))


def pairwise_cost(spec: CostSpec, X, Y, *, cap: int | None = None) -> np.ndarray:
    X = as_points(X)
    Y = as_points(Y)
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatch(f"dimensions {X.shape[1]} and {Y.shape[1]} differ")
    cap = get_settings().cost_cap if cap is None else cap
    if X.shape[0] * Y.shape[0] > cap:
        raise SizeCapExceeded(
            f"cost matrix {X.shape[0]}x{Y.shape[0]} exceeds cap of {cap} entries"
        )
    return spec.displacement_cost(X[:, None, :] - Y[None, :, :])


def iter_cost_rows(
    spec: CostSpec, X, Y, *, cap: int | None = None
) -> Iterator[tuple[int, np.ndarray]]:
    """Row blocks (start, block) of the cost matrix, each block within the cap."""
    X = as_points(X)
    Y = as_points(Y)
    cap = get_settings().cost_cap if cap is None else cap
    rows = max(1, cap // max(Y.shape[0], 1))
    for start in range(0, X.shape[0], rows):
        yield start, spec.displacement_cost(X[start : start + rows, None, :] - Y[None, :, :])


@dataclass(frozen=True)
class TwoLevelBallSpec:
    """B_{2,p}(r) (ball="b2p") or D_{2,1}(r) (ball="d21") in (R^d)^n."""

    n: int
    d: int
    p: float
    r: float
    ball: str = "b2p"

    def __post_init__(self):
        if not 1.0 <= self.p <= 2.0:
            raise InvalidArgument(f"p must lie in [1, 2], got {self.p}")
        if self.r < 0:
            raise InvalidArgument(f"radius must be nonnegative, got {self.r}")
        if self.ball not in ("b2p", "d21"):
            raise InvalidArgument(f"unknown ball {self.ball!r}")


def _tuple_array(point_tuple, n: int | None = None, d: int | None = None) -> np.ndarray:
    x = np.asarray(point_tuple, dtype=float)
    if n is not None and d is not None:
        if x.size != n * d:
            raise DimensionMismatch(f"expected {n}x{d} coordinates, got {x.size}")
        return x.reshape(n, d)
    return x.reshape(x.shape[0], -1) if x.ndim >= 1 else x.reshape(1, 1)


def two_level_gauge(point_tuple, p: float, ball: str = "b2p") -> float:
    """Smallest r with the tuple in B_{2,p}(r) (or D_{2,1}(r))."""
    x = _tuple_array(point_tuple)
    if ball == "d21":
        return float(alpha(np.linalg.norm(x, axis=-1), 1.0).sum())
    return float(alpha(x, p).sum())


def in_two_level_ball(point_tuple, spec: TwoLevelBallSpec) -> bool:
    x = _tuple_array(point_tuple, spec.n, spec.d)
    return two_level_gauge(x, spec.p, spec.ball) <= spec.r


def project_lp_ball_rows(X, p: float, radius) -> np.ndarray:
    """Euclidean projection of each row of X onto {|v|_p <= radius} (radius per row or shared)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    radius = np.broadcast_to(np.asarray(radius, dtype=float), (X.shape[0],))
    A = np.abs(X)
    out = X.copy()
    todo = (A**p).sum(axis=1) > radius**p
    out[todo & (radius <= 0)] = 0.0
    todo &= radius > 0
    if not np.any(todo):
        return out
    Xt, At, Rt = X[todo], A[todo], radius[todo]
    if p == 2.0:
        proj = Xt * (Rt / np.linalg.norm(Xt, axis=1))[:, None]
    elif p == 1.0:
        # soft threshold at the level that puts the l1 norm on the radius
        s = -np.sort(-At, axis=1)
        cumulative = np.cumsum(s, axis=1) - Rt[:, None]
        idx = np.arange(1, s.shape[1] + 1)
        k = np.count_nonzero(s - cumulative / idx > 0, axis=1) - 1
        theta = cumulative[np.arange(s.shape[0]), k] / (k + 1)
        proj = np.sign(Xt) * np.maximum(At - theta[:, None], 0.0)
    else:
        proj = np.sign(Xt) * _lp_projection_magnitudes(At, p, Rt)
    out[todo] = proj
    return out


def project_lp_ball(x, p: float, radius: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return project_lp_ball_rows(x.reshape(1, -1), p, radius).reshape(x.shape)


def _solve_magnitudes(A: np.ndarray, lam: np.ndarray, p: float) -> np.ndarray:
    """Root of w + lam*p*w^(p-1) = a per entry, by Newton from a lower bound."""
    c = lam[:, None] * p
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        w = np.minimum(0.5 * A, (0.5 * A / c) ** (1.0 / (p - 1.0)))
        w = np.nan_to_num(w, nan=0.0, posinf=0.0)
        for _ in range(_NEWTON_STEPS):
            g = w + c * w ** (p - 1.0) - A
            slope = 1.0 + c * (p - 1.0) * w ** (p - 2.0)
            step = np.where(w > 0, g / slope, 0.0)
            w = np.clip(w - step, 0.0, A)
    return w


def _lp_projection_magnitudes(A: np.ndarray, p: float, radius: np.ndarray) -> np.ndarray:
    """Magnitudes of the projection, with lam bisected so sum w^p = radius^p per row."""
    target = radius**p
    lo = np.zeros(A.shape[0])
    hi = np.ones(A.shape[0])
    while True:
        over = (_solve_magnitudes(A, hi, p) ** p).sum(axis=1) > target
        if not np.any(over):
            break
        hi = np.where(over, 2.0 * hi, hi)
    for _ in range(_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        over = (_solve_magnitudes(A, mid, p) ** p).sum(axis=1) > target
        lo = np.where(over, mid, lo)
        hi = np.where(over, hi, mid)
    return _solve_magnitudes(A, hi, p)


def minkowski_residuals(X, r, p: float) -> np.ndarray:
    """Per row: l2 distance to r^(1/p) B_p minus sqrt(r); <= 0 iff the row lies in the sum."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    r = np.maximum(np.broadcast_to(np.asarray(r, dtype=float), (X.shape[0],)), 0.0)
    projected = project_lp_ball_rows(X, p, r ** (1.0 / p))
    return np.linalg.norm(X - projected, axis=1) - np.sqrt(r)


def minkowski_residual(point_tuple, r: float, p: float) -> float:
    return float(minkowski_residuals(np.asarray(point_tuple, dtype=float).reshape(1, -1), r, p)[0])


def _check_minkowski_args(r, p: float) -> None:
    if np.any(np.asarray(r) < 0):
        raise InvalidArgument(f"radius must be nonnegative, got {r}")
    if not 1.0 <= p <= 2.0:
        raise InvalidArgument(f"p must lie in [1, 2], got {p}")


def in_minkowski_sum(point_tuple, r: float, p: float) -> bool:
    """Membership in sqrt(r) B_2 + r^(1/p) B_p, certified to MEMBERSHIP_TOLERANCE."""
    _check_minkowski_args(r, p)
    return minkowski_residual(point_tuple, r, p) <= MEMBERSHIP_TOLERANCE


def in_minkowski_sum_rows(X, r: float, p: float) -> np.ndarray:
    _check_minkowski_args(r, p)
    return minkowski_residuals(X, r, p) <= MEMBERSHIP_TOLERANCE


def minkowski_gauges(X, p: float, *, steps: int = 60) -> np.ndarray:
    """Per row, the smallest r with the row in sqrt(r) B_2 + r^(1/p) B_p."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    # the l2 ball alone covers radius |x|^2
    hi = (X * X).sum(axis=1)
    lo = np.zeros(X.shape[0])
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        outside = minkowski_residuals(X, mid, p) > 0
        lo = np.where(outside, mid, lo)
        hi = np.where(outside, hi, mid)
    return hi


def minkowski_gauge(point_tuple, p: float) -> float:
    return float(minkowski_gauges(np.asarray(point_tuple, dtype=float).reshape(1, -1), p)[0])


def alpha_lemma_audit(
    grid=None, ps=(1.0, 1.25, 1.5, 1.75, 2.0), *, tolerance: float = 1e-12
) -> dict:
    """Violation counts of the quasi-triangle and the 1/144 scaling inequality."""
    grid = np.linspace(0.0, 10.0, 201) if grid is None else np.asarray(grid, dtype=float)
    x, y = np.meshgrid(grid, grid, indexing="ij")
    triangle = {}
    scaling = {}
    for p in ps:
        lhs = alpha(x + y, p)
        rhs = 2.0 * alpha(x, p) + 2.0 * alpha(y, p)
        triangle[f"{p:g}"] = int(np.count_nonzero(lhs > rhs * (1 + tolerance) + tolerance))
        scaled = alpha(grid / 12.0, p)
        scaling[f"{p:g}"] = int(
            np.count_nonzero(scaled < alpha(grid, p) / 144.0 * (1 - tolerance) - tolerance)
        )
    result = {
        "grid_points": int(grid.size),
        "triangle_violations": triangle,
        "scaling_violations": scaling,
    }
    result["passed"] = not any(triangle.values()) and not any(scaling.values())
    return result


def ball_sandwich_audit(
    count: int,
    gen: np.random.Generator,
    *,
    ns=(1, 2, 3, 5),
    ds=(1, 2, 3, 5),
    ps=(1.0, 1.5, 2.0),
    rs=(0.1, 1.0, 10.0),
) -> dict:
    """Sampled check of (1/12)(sqrt(r) B_2 + r^(1/p) B_p) in B_{2,p}(r) in sqrt(r) B_2 + r^(1/p) B_p.

    Points are drawn at log-uniform scales around sqrt(r) so that both
    sides of each inclusion are exercised.
    """
    configurations = []
    for n in ns:
        for d in ds:
            for p in ps:
                for r in rs:
                    size = n * d
                    scales = np.exp(gen.uniform(np.log(1e-2), np.log(30.0), size=count))
                    X = gen.normal(size=(count, size)) * (scales * np.sqrt(r / size))[:, None]
                    in_ball = alpha(X, p).sum(axis=1) <= r
                    in_sum = in_minkowski_sum_rows(X, r, p)
                    upper = int(np.count_nonzero(in_ball & ~in_sum))
                    shrunk = alpha(X[in_sum] / 12.0, p).sum(axis=1)
                    lower = int(np.count_nonzero(shrunk > r * (1 + 1e-12)))
                    configurations.append(
                        {
                            "n": n,
                            "d": d,
                            "p": p,
                            "r": r,
                            "in_ball": int(in_ball.sum()),
                            "in_sum": int(in_sum.sum()),
                            "upper_violations": upper,
                            "lower_violations": lower,
                        }
                    )
    violations = sum(c["upper_violations"] + c["lower_violations"] for c in configurations)
    logger.info(f"Ball sandwich audit: {len(configurations)} configurations, {violations} violations")
    return {"configurations": configurations, "violations": violations, "passed": violations == 0}
