"""Entropy-side functionals and dual-side checks.

Covers relative entropy, the entropy and variance functionals, discrete
gradients and Dirichlet energies, the inf-convolution operator, the dual
exponential inequalities and the grid Poincare constant.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import eigsh
from scipy.special import logsumexp, rel_entr, xlogy

from .costs import CostKind, CostSpec, iter_cost_rows
from .errors import DimensionMismatch, DisconnectedGraph, InvalidArgument, NegativeInput
from .measures import DiscreteMeasure, align_weights, make_measure
from .models import DualBatteryReport, DualCheck, PoincareReport, SmallTReport
from .streams import StreamId, as_stream

logger = logging.getLogger(__name__)

DUAL_TOLERANCE = 1e-9
_DENSE_EIGEN_LIMIT = 1500
_BATCH_ENTRIES = 4_000_000


@dataclass(frozen=True, eq=False)
class FunctionOnSupport:
    values: np.ndarray
    measure: DiscreteMeasure

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if values.size != self.measure.size:
            raise DimensionMismatch(
                f"{values.size} values for a support of {self.measure.size} points"
            )
        object.__setattr__(self, "values", values)


def _values(f, mu: DiscreteMeasure) -> np.ndarray:
    return FunctionOnSupport(f.values if isinstance(f, FunctionOnSupport) else f, mu).values


def relative_entropy(nu: DiscreteMeasure, mu: DiscreteMeasure) -> float:
    """H(nu | mu); +inf unless nu is absolutely continuous w.r.t. mu."""
    aligned = align_weights(nu, mu)
    if aligned is None:
        return float("inf")
    return kl_weights(aligned, mu.weights)


def kl_weights(q, w) -> float | np.ndarray:
    """sum q log(q / w) along the last axis."""
    value = rel_entr(np.asarray(q, dtype=float), np.asarray(w, dtype=float)).sum(axis=-1)
    value = np.maximum(value, 0.0)
    return float(value) if np.ndim(value) == 0 else value


def entropy_functional(mu: DiscreteMeasure, f) -> float:
    values = _values(f, mu)
    if np.any(values < 0):
        raise NegativeInput("entropy functional needs f >= 0")
    mean = mu.expectation(values)
    return float(mu.weights @ xlogy(values, values) - xlogy(mean, mean))


def variance(mu: DiscreteMeasure, f) -> float:
    values = _values(f, mu)
    mean = mu.expectation(values)
    return float(mu.weights @ (values - mean) ** 2)


class GradientKind(str, Enum):
    GRID_1D = "grid_1d"
    GRAPH = "graph"
    GRAPH_MINUS = "graph_minus"


@dataclass(frozen=True)
class GradientModel:
    """Discrete gradient; `edges` are index pairs, None means the complete graph."""

    kind: GradientKind = GradientKind.GRAPH
    edges: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", GradientKind(self.kind))

    def edge_arrays(self, mu: DiscreteMeasure) -> tuple[np.ndarray, np.ndarray]:
        if self.kind is GradientKind.GRID_1D:
            if not mu.is_sorted_line:
                raise InvalidArgument("grid_1d gradients need a sorted one-dimensional support")
            i = np.arange(mu.size - 1)
            return i, i + 1
        if self.edges is None:
            i, j = np.triu_indices(mu.size, k=1)
            return i, j
        pairs = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if pairs.size and (pairs.min() < 0 or pairs.max() >= mu.size):
            raise InvalidArgument("edge index outside the support")
        return pairs[:, 0], pairs[:, 1]


def gradient_length(f, mu: DiscreteMeasure, model: GradientModel) -> np.ndarray:
    values = _values(f, mu)
    if model.kind is GradientKind.GRID_1D:
        model.edge_arrays(mu)
        if mu.size == 1:
            return np.zeros(1)
        return np.abs(np.gradient(values, mu.points[:, 0]))

    i, j = model.edge_arrays(mu)
    rho = np.linalg.norm(mu.points[i] - mu.points[j], axis=1)
    src = np.concatenate([i, j])
    dst = np.concatenate([j, i])
    rho2 = np.concatenate([rho, rho])
    diff = values[dst] - values[src]
    if model.kind is GradientKind.GRAPH_MINUS:
        slopes = np.maximum(diff, 0.0) / rho2
    else:
        slopes = np.abs(diff) / rho2
    out = np.zeros(mu.size)
    np.maximum.at(out, src, slopes)
    return out


def _energy_laplacian(mu: DiscreteMeasure, model: GradientModel) -> sp.csr_matrix:
    """L with f'Lf = sum_x mu(x) / deg(x) * sum_{y~x} ((f(y) - f(x)) / rho(x, y))^2."""
    i, j = model.edge_arrays(mu)
    k = mu.size
    degree = np.bincount(np.concatenate([i, j]), minlength=k).astype(float)
    rho = np.linalg.norm(mu.points[i] - mu.points[j], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        share = np.where(degree > 0, mu.weights / degree, 0.0)
    c = (share[i] + share[j]) / rho**2
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([j, i, i, j])
    data = np.concatenate([-c, -c, c, c])
    return sp.coo_matrix((data, (rows, cols)), shape=(k, k)).tocsr()


def dirichlet_energy(f, mu: DiscreteMeasure, model: GradientModel) -> float:
    values = _values(f, mu)
    L = _energy_laplacian(mu, model)
    return float(values @ (L @ values))


def poincare_report(mu: DiscreteMeasure, gradient: GradientModel) -> PoincareReport:
    """Sharp C in Var(f) <= C * energy(f) from the generalized eigenproblem (L, diag mu)."""
    keep = mu.weights > 0
    if not np.all(keep):
        mu = make_measure(mu.points[keep], mu.weights[keep])
        if gradient.kind is not GradientKind.GRID_1D and gradient.edges is not None:
            raise InvalidArgument("declared edges cannot be combined with zero-weight atoms")
    if mu.size == 1:
        return PoincareReport(constant=0.0, eigenvalue=None, size=1, extremal=[0.0])

    L = _energy_laplacian(mu, gradient)
    adjacency = (L != 0).astype(int)
    components, _ = connected_components(adjacency, directed=False)
    if components > 1:
        raise DisconnectedGraph(f"neighbor graph has {components} components")

    scale = 1.0 / np.sqrt(mu.weights)
    M = sp.diags(scale) @ L @ sp.diags(scale)
    if mu.size <= _DENSE_EIGEN_LIMIT:
        vals, vecs = scipy.linalg.eigh(M.toarray(), subset_by_index=[0, 1])
    else:
        vals, vecs = eigsh(M.tocsc(), k=2, sigma=-1e-3, which="LM")
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    gap = float(vals[1])
    extremal = vecs[:, 1] * scale
    logger.debug(f"Poincare eigenproblem on {mu.size} atoms: spectral gap {gap:.6g}")
    return PoincareReport(
        constant=1.0 / gap, eigenvalue=gap, size=mu.size, extremal=extremal.tolist()
    )


def poincare_constant_grid(mu: DiscreteMeasure, gradient: GradientModel) -> float:
    return poincare_report(mu, gradient).constant


def inf_convolution_batch(F, domain: DiscreteMeasure, cost: CostSpec, scale: float) -> np.ndarray:
    """Qf(x) = min_y f(y) + scale * c(x, y) over the support, for each row f of F."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if F.shape[1] != domain.size:
        raise DimensionMismatch(f"{F.shape[1]} values for {domain.size} points")
    out = np.empty_like(F)
    cap = max(domain.size, _BATCH_ENTRIES // F.shape[0])
    for start, block in iter_cost_rows(cost, domain.points, domain.points, cap=cap):
        rows = slice(start, start + block.shape[0])
        out[:, rows] = (F[:, None, :] + scale * block[None, :, :]).min(axis=2)
    return out


def _stationary_displacements(cost: CostSpec, slope: np.ndarray, scale: float) -> list[np.ndarray]:
    """Displacements u = x - y where scale * c'(u) equals the slope of f."""
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        quadratic = slope / (2.0 * scale)
        candidates = []
        if cost.kind is CostKind.QUADRATIC:
            return [quadratic]
        if cost.kind is CostKind.POWER:
            if cost.p == 1.0:
                return []
            return [np.sign(slope) * (np.abs(slope) / (cost.p * scale)) ** (1.0 / (cost.p - 1.0))]
        candidates.append(np.where(np.abs(quadratic) <= 1.0, quadratic, 0.0))
        p = cost.p
        if p > 1.0:
            outer = np.sign(slope) * (np.abs(slope) / (p * scale)) ** (1.0 / (p - 1.0))
            candidates.append(np.where(np.abs(outer) >= 1.0, outer, 0.0))
        return candidates


def _inf_convolution_interpolated(values: np.ndarray, x: np.ndarray, cost: CostSpec, scale: float) -> np.ndarray:
    """Exact minimum over the piecewise-linear interpolant of f on a sorted grid."""
    k = x.size
    if k == 1:
        return values.copy()
    y0, y1 = x[:-1], x[1:]
    f0 = values[:-1]
    slope = (values[1:] - values[:-1]) / (y1 - y0)
    out = np.empty(k)
    block = max(1, 2_000_000 // (8 * k))
    kinks = cost.kind in (CostKind.ALPHA, CostKind.SG)
    for start in range(0, k, block):
        xs = x[start : start + block, None]
        ys = [np.broadcast_to(y0, (xs.shape[0], k - 1)), np.broadcast_to(y1, (xs.shape[0], k - 1))]
        ys.append(np.broadcast_to(xs, (xs.shape[0], k - 1)))
        if kinks:
            ys.extend([xs - 1.0, xs + 1.0])
        for u in _stationary_displacements(cost, slope, scale):
            ys.append(xs - u[None, :])
        best = np.full(xs.shape[0], np.inf)
        for y in ys:
            y = np.clip(y, y0, y1)
            g = f0 + slope * (y - y0) + scale * cost.scalar_cost(xs - y)
            best = np.minimum(best, g.min(axis=1))
        out[start : start + block] = best
    return out


def inf_convolution(
    f, domain: DiscreteMeasure, cost: CostSpec, scale: float, *, interpolate: bool = False
) -> FunctionOnSupport:
    if not scale > 0:
        raise InvalidArgument(f"scale must be positive, got {scale}")
    values = _values(f, domain)
    if interpolate:
        if not domain.is_sorted_line:
            raise InvalidArgument("interpolated inf-convolution needs a sorted one-dimensional grid")
        q = _inf_convolution_interpolated(values, domain.points[:, 0], cost, scale)
    else:
        q = inf_convolution_batch(values[None, :], domain, cost, scale)[0]
    return FunctionOnSupport(np.minimum(q, values), domain)


def _dual_check(log_lhs: float, log_rhs: float) -> DualCheck:
    return DualCheck(
        lhs=float(np.exp(log_lhs)),
        rhs=float(np.exp(log_rhs)),
        log_ratio=float(log_lhs - log_rhs),
        satisfied=bool(log_lhs <= log_rhs + np.log1p(DUAL_TOLERANCE)),
    )


def check_bg_dual(mu: DiscreteMeasure, cost: CostSpec, scale: float, f) -> DualCheck:
    """int e^{Qf} dmu <= e^{int f dmu}, evaluated in logs."""
    values = _values(f, mu)
    q = inf_convolution(values, mu, cost, scale).values
    return _dual_check(float(logsumexp(q, b=mu.weights)), mu.expectation(values))


def check_tau(mu: DiscreteMeasure, cost: CostSpec, f, scale: float = 1.0) -> DualCheck:
    """int e^{Qf} dmu * int e^{-f} dmu <= 1."""
    values = _values(f, mu)
    q = inf_convolution(values, mu, cost, scale).values
    log_lhs = float(logsumexp(q, b=mu.weights) + logsumexp(-values, b=mu.weights))
    return _dual_check(log_lhs, 0.0)


def random_test_functions(
    mu: DiscreteMeasure, count: int, stream: StreamId | int | None, kind: str = "smooth"
) -> np.ndarray:
    """Rows of test functions on mu's support.

    smooth: a random linear trend plus a low-frequency perturbation whose
    slope never exceeds half the trend. spike: one atom raised or lowered.
    mixed: half of each.
    """
    gen = as_stream(stream).generator()
    k = mu.size
    if kind == "mixed":
        half = count // 2
        return np.vstack([
            random_test_functions(mu, half, StreamId(int(gen.integers(2**62)), (0,)), "smooth"),
            random_test_functions(mu, count - half, StreamId(int(gen.integers(2**62)), (1,)), "spike"),
        ])
    if kind == "spike":
        out = np.zeros((count, k))
        heights = gen.uniform(0.1, 5.0, size=count) * gen.choice([-1.0, 1.0], size=count)
        out[np.arange(count), gen.integers(0, k, size=count)] = heights
        return out
    if kind != "smooth":
        raise InvalidArgument(f"unknown test-function family {kind!r}")

    centered = mu.points - mu.mean()
    spread = float(np.sqrt(mu.weights @ (centered**2).sum(axis=1))) or 1.0
    z = centered / spread
    direction = gen.normal(size=(count, mu.dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    trend = gen.uniform(0.5, 2.0, size=count)
    linear = trend[:, None] * (direction @ z.T)
    harmonics = np.arange(1, 5)
    coefficients = gen.normal(size=(count, harmonics.size)) / harmonics**2
    coefficients *= (0.5 * trend / (np.pi * (np.abs(coefficients) * harmonics).sum(axis=1)))[:, None]
    phases = gen.uniform(0.0, 2 * np.pi, size=(count, harmonics.size))
    along = (direction @ z.T)[:, :, None]
    perturbation = (coefficients[:, None, :] * np.sin(np.pi * harmonics * along + phases[:, None, :])).sum(axis=2)
    return (linear + perturbation) / spread


def dual_battery(
    mu: DiscreteMeasure,
    cost: CostSpec,
    scale: float,
    count: int,
    stream: StreamId | int | None,
    *,
    kind: str = "smooth",
    tau: bool = False,
) -> DualBatteryReport:
    """Worst dual ratio over random test functions; reports the first violator."""
    F = random_test_functions(mu, count, stream, kind)
    Q = np.minimum(inf_convolution_batch(F, mu, cost, scale), F)
    log_lhs = logsumexp(Q, b=mu.weights[None, :], axis=1)
    if tau:
        log_lhs = log_lhs + logsumexp(-F, b=mu.weights[None, :], axis=1)
        log_rhs = np.zeros(count)
    else:
        log_rhs = F @ mu.weights
    log_ratio = log_lhs - log_rhs
    violations = np.flatnonzero(log_ratio > np.log1p(DUAL_TOLERANCE))
    worst = int(np.argmax(log_ratio))
    logger.info(
        f"Dual battery ({'tau' if tau else 'bg'}, {kind}, {count} functions): "
        f"worst ratio {np.exp(log_ratio[worst]):.12g}, {violations.size} violations"
    )
    return DualBatteryReport(
        form="tau" if tau else "bg",
        family=kind,
        scale=scale,
        count=count,
        worst_ratio=float(np.exp(log_ratio[worst])),
        violations=int(violations.size),
        violating_f=F[violations[0]].tolist() if violations.size else None,
        passed=bool(violations.size == 0),
    )


def descent_energy(f, mu: DiscreteMeasure) -> float:
    """sum mu(x) * (largest slope of decrease towards a grid neighbor)^2."""
    values = _values(f, mu)
    x = mu.points[:, 0]
    slope = np.diff(values) / np.diff(x)
    left = np.concatenate([[0.0], np.maximum(slope, 0.0)])
    right = np.concatenate([np.maximum(-slope, 0.0), [0.0]])
    return float(mu.weights @ np.maximum(left, right) ** 2)


def small_t_poincare_check(
    mu: DiscreteMeasure,
    cost: CostSpec,
    scale: float,
    f,
    t_list,
    *,
    stability_rtol: float = 5e-3,
) -> SmallTReport:
    """(int e^{Q(tf)} - e^{t int f}) / t^2 as t -> 0, against Var(f) <= (C/2) int |grad f|^2.

    C is 1 / scale. Q is taken over the piecewise-linear interpolant of f,
    so that sub-grid displacements are resolved.
    """
    if not mu.is_sorted_line:
        raise InvalidArgument("small-t expansion needs a sorted one-dimensional grid")
    values = _values(f, mu)
    t_values = np.sort(np.asarray(t_list, dtype=float))
    if t_values.size == 0 or np.any(t_values <= 0):
        raise InvalidArgument("t values must be positive")
    mean = mu.expectation(values)
    d_values = []
    for t in t_values:
        q = inf_convolution(t * values, mu, cost, scale, interpolate=True).values
        excess = mu.weights @ np.expm1(q - t * mean)
        d_values.append(float(np.exp(t * mean) * excess / t**2))
    d_values = np.asarray(d_values)

    def fit(ts, ds):
        degree = min(3, ts.size - 1)
        return float(np.polyval(np.polyfit(ts, ds, degree), 0.0)) if degree > 0 else float(ds[0])

    limit = fit(t_values, d_values)
    if t_values.size >= 5:
        alternates = [fit(t_values[1:], d_values[1:]), fit(t_values[:-1], d_values[:-1])]
        spread = max(abs(a - limit) for a in alternates)
    else:
        spread = 0.0
    constant = 1.0 / scale
    var = variance(mu, values)
    energy = float(mu.weights @ gradient_length(values, mu, GradientModel(GradientKind.GRID_1D)) ** 2)
    predicted = 0.5 * var - 0.25 * constant * descent_energy(values, mu)
    stable = spread <= stability_rtol * max(abs(limit), 1e-12) or spread <= 1e-12
    return SmallTReport(
        t_values=t_values.tolist(),
        d_values=d_values.tolist(),
        fitted_limit=limit,
        predicted_limit=predicted,
        spread=spread,
        stable=bool(stable),
        variance=var,
        energy=energy,
        constant=constant,
        residual=0.5 * constant * energy - var,
    )
