"""Exact optimal transport between finite measures.

Two exact paths: a monotone (north-west corner) coupling for costs convex in
the displacement on the line, and the transportation simplex otherwise.
Both return dual potentials alongside the plan.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import numpy as np
from scipy.optimize import linear_sum_assignment

from .costs import CostSpec, pairwise_cost
from .errors import DimensionMismatch, EnumerationCapExceeded, InvalidArgument, SizeMismatch
from .measures import DiscreteMeasure, EmpiricalMeasure, as_points, empirical, make_measure
from .simplex import northwest_corner, solve_transportation, tree_potentials

logger = logging.getLogger(__name__)

MAX_BRUTE_FORCE_ATOMS = 8


class Certificate(str, Enum):
    PERMUTATION = "permutation"
    BASIC_FEASIBLE = "basic_feasible"
    ENUMERATED = "enumerated"


@dataclass(frozen=True, eq=False)
class CouplingPlan:
    rows: np.ndarray
    cols: np.ndarray
    mass: np.ndarray
    total_cost: float
    certificate: Certificate
    row_potential: np.ndarray | None = None
    col_potential: np.ndarray | None = None
    permutation: np.ndarray | None = None

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.mass > 0))

    def entries(self) -> list[tuple[int, int, float]]:
        i, j = np.nonzero(self.mass > 0)
        return [(int(a), int(b), float(self.mass[a, b])) for a, b in zip(i, j)]


def _check_dims(nu1, nu2) -> None:
    if nu1.dim != nu2.dim:
        raise DimensionMismatch(f"dimensions {nu1.dim} and {nu2.dim} differ")


def solve_assignment(a: EmpiricalMeasure, b: EmpiricalMeasure, cost: CostSpec) -> CouplingPlan:
    """Optimal matching of two n-samples; duplicate atoms stay distinct."""
    if a.n != b.n:
        raise SizeMismatch(f"assignment needs equal sample sizes, got {a.n} and {b.n}")
    _check_dims(a, b)
    C = pairwise_cost(cost, a.sample, b.sample)
    rows, cols = linear_sum_assignment(C)
    n = a.n
    mass = np.zeros((n, n))
    mass[rows, cols] = 1.0 / n
    return CouplingPlan(
        rows=a.sample,
        cols=b.sample,
        mass=mass,
        total_cost=float(C[rows, cols].sum() / n),
        certificate=Certificate.PERMUTATION,
        permutation=cols,
    )


def assignment_bruteforce(a: EmpiricalMeasure, b: EmpiricalMeasure, cost: CostSpec) -> CouplingPlan:
    """Enumerate all n! matchings; an oracle for small n."""
    if a.n != b.n:
        raise SizeMismatch(f"assignment needs equal sample sizes, got {a.n} and {b.n}")
    if a.n > MAX_BRUTE_FORCE_ATOMS:
        raise EnumerationCapExceeded(f"{a.n}! permutations exceed the brute-force limit")
    _check_dims(a, b)
    n = a.n
    C = pairwise_cost(cost, a.sample, b.sample)
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    totals = C[np.arange(n), perms].sum(axis=1) / n
    best = int(np.argmin(totals))
    mass = np.zeros((n, n))
    mass[np.arange(n), perms[best]] = 1.0 / n
    return CouplingPlan(
        rows=a.sample,
        cols=b.sample,
        mass=mass,
        total_cost=float(totals[best]),
        certificate=Certificate.ENUMERATED,
        permutation=perms[best],
    )


def _monotone_plan(nu1: DiscreteMeasure, nu2: DiscreteMeasure, cost: CostSpec) -> CouplingPlan:
    x, y = nu1.points[:, 0], nu2.points[:, 0]
    ox = np.argsort(x, kind="stable")
    oy = np.argsort(y, kind="stable")
    flows, basis = northwest_corner(nu1.weights[ox], nu2.weights[oy])
    m, n = nu1.size, nu2.size
    basis_costs = [float(cost.scalar_cost(x[ox[i]] - y[oy[j]])) for i, j in basis]
    u_sorted, v_sorted = tree_potentials(basis, basis_costs, m, n)

    mass = np.zeros((m, n))
    total = 0.0
    for (i, j), c in zip(basis, basis_costs):
        mass[ox[i], oy[j]] = flows[(i, j)]
        total += flows[(i, j)] * c
    u = np.empty(m)
    v = np.empty(n)
    u[ox] = u_sorted
    v[oy] = v_sorted
    return CouplingPlan(
        rows=nu1.points,
        cols=nu2.points,
        mass=mass,
        total_cost=float(total),
        certificate=Certificate.BASIC_FEASIBLE,
        row_potential=u,
        col_potential=v,
    )


def solve_general(
    nu1: DiscreteMeasure, nu2: DiscreteMeasure, cost: CostSpec, *, cap: int | None = None
) -> CouplingPlan:
    """Exact optimal plan between two discrete measures."""
    _check_dims(nu1, nu2)
    if nu1.dim == 1 and cost.is_convex_1d:
        return _monotone_plan(nu1, nu2, cost)
    C = pairwise_cost(cost, nu1.points, nu2.points, cap=cap)
    solution = solve_transportation(nu1.weights, nu2.weights, C)
    return CouplingPlan(
        rows=nu1.points,
        cols=nu2.points,
        mass=solution.flow,
        total_cost=float((solution.flow * C).sum()),
        certificate=Certificate.BASIC_FEASIBLE,
        row_potential=solution.u,
        col_potential=solution.v,
    )


def solve_weights(
    q: np.ndarray, points: np.ndarray, reference: DiscreteMeasure, cost: CostSpec
) -> tuple[float, np.ndarray]:
    """Optimal cost and row potentials for weights q on `points` against `reference`.

    Zero weights are kept as rows, so the potentials cover every point.
    """
    if points.shape[1] == 1 and cost.is_convex_1d:
        nu = DiscreteMeasure(points, np.asarray(q, dtype=float))
        plan = _monotone_plan(nu, reference, cost)
        return plan.total_cost, plan.row_potential
    C = pairwise_cost(cost, points, reference.points)
    solution = solve_transportation(q, reference.weights, C)
    return float((solution.flow * C).sum()), solution.u


def monotone_cost_1d(x, wx, y, wy, cost: CostSpec) -> float:
    """Cost of the quantile coupling between two measures on the line."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    ox = np.argsort(x, kind="stable")
    oy = np.argsort(y, kind="stable")
    x, wx = x[ox], np.asarray(wx, dtype=float)[ox]
    y, wy = y[oy], np.asarray(wy, dtype=float)[oy]
    F = np.cumsum(wx)
    G = np.cumsum(wy)
    F /= F[-1]
    G /= G[-1]
    breakpoints = np.sort(np.concatenate([F, G]))
    lengths = np.diff(breakpoints, prepend=0.0)
    mid = breakpoints - 0.5 * lengths
    i = np.minimum(np.searchsorted(F, mid), x.size - 1)
    j = np.minimum(np.searchsorted(G, mid), y.size - 1)
    return float((lengths * cost.scalar_cost(x[i] - y[j])).sum())


def batch_transport_1d(Q, w, x, cost: CostSpec) -> np.ndarray:
    """Monotone transport costs from each row of Q to w, all on the sorted support x."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float).ravel()
    B, k = Q.shape
    F = np.cumsum(Q, axis=1)
    F /= F[:, -1:]
    G = np.cumsum(w)
    G /= G[-1]
    breakpoints = np.sort(np.concatenate([F, np.broadcast_to(G, (B, k))], axis=1), axis=1)
    lengths = np.diff(breakpoints, axis=1, prepend=0.0)
    mid = breakpoints - 0.5 * lengths
    if k <= 64:
        i = (F[:, None, :] < mid[:, :, None]).sum(axis=2)
    else:
        i = np.stack([np.searchsorted(F[b], mid[b]) for b in range(B)])
    i = np.minimum(i, k - 1)
    j = np.minimum(np.searchsorted(G, mid), k - 1)
    return (lengths * cost.scalar_cost(x[i] - x[j])).sum(axis=1)


def t_cost(nu1: DiscreteMeasure, nu2: DiscreteMeasure, cost: CostSpec) -> float:
    """Raw optimal transport cost."""
    _check_dims(nu1, nu2)
    if nu1.dim == 1 and cost.is_convex_1d:
        return monotone_cost_1d(nu1.points, nu1.weights, nu2.points, nu2.weights, cost)
    return solve_general(nu1, nu2, cost).total_cost


def w_p(nu1: DiscreteMeasure, nu2: DiscreteMeasure, p: float) -> float:
    if not p >= 1:
        raise InvalidArgument(f"p must be >= 1, got {p}")
    return max(t_cost(nu1, nu2, CostSpec.power(p)), 0.0) ** (1.0 / p)


def transport_statistic(nu: DiscreteMeasure, mu: DiscreteMeasure, cost: CostSpec) -> float:
    """W_p for power costs, the raw optimal cost for two-level costs."""
    return max(t_cost(nu, mu, cost), 0.0) ** (1.0 / cost.exponent)


def empirical_transport_fn(mu: DiscreteMeasure, x) -> float:
    """F_n(x) = W_2(L_n^x, mu)."""
    sample = as_points(x, mu.dim)
    return w_p(empirical(sample).to_measure(), mu, 2.0)


def subgradient_norms(mu: DiscreteMeasure, x, step: float = 1e-5) -> np.ndarray:
    """Central-difference estimates of |grad_i F_n|(x), one per sample point."""
    sample = as_points(x, mu.dim).copy()
    n, d = sample.shape
    grads = np.zeros((n, d))
    for i in range(n):
        for j in range(d):
            original = sample[i, j]
            sample[i, j] = original + step
            up = empirical_transport_fn(mu, sample)
            sample[i, j] = original - step
            down = empirical_transport_fn(mu, sample)
            sample[i, j] = original
            grads[i, j] = (up - down) / (2.0 * step)
    return np.linalg.norm(grads, axis=1)


def check_plan(plan: CouplingPlan, nu1: DiscreteMeasure, nu2: DiscreteMeasure, cost: CostSpec) -> dict:
    """Marginal errors, cost consistency and (when potentials exist) the dual gap."""
    C = pairwise_cost(cost, plan.rows, plan.cols)
    report = {
        "row_error": float(np.abs(plan.mass.sum(axis=1) - nu1.weights).max()),
        "col_error": float(np.abs(plan.mass.sum(axis=0) - nu2.weights).max()),
        "cost_error": float(abs((plan.mass * C).sum() - plan.total_cost)),
        "min_mass": float(plan.mass.min()),
    }
    if plan.row_potential is not None:
        reduced = C - plan.row_potential[:, None] - plan.col_potential[None, :]
        report["min_reduced_cost"] = float(reduced.min())
        dual = float(plan.row_potential @ nu1.weights + plan.col_potential @ nu2.weights)
        report["duality_gap"] = float(abs(plan.total_cost - dual))
    return report


def _to_counts(weights: np.ndarray, max_denominator: int) -> tuple[list[int], int]:
    fractions = [Fraction(float(w)).limit_denominator(max_denominator) for w in weights]
    for w, f in zip(weights, fractions):
        if abs(float(f) - w) > 1e-12:
            raise InvalidArgument(f"weight {w!r} is not a fraction with denominator <= {max_denominator}")
    denominator = math.lcm(*(f.denominator for f in fractions))
    return [int(f * denominator) for f in fractions], denominator


def atom_splitting_oracle(
    nu1: DiscreteMeasure, nu2: DiscreteMeasure, cost: CostSpec, max_denominator: int = 6
) -> float:
    """Split rational atoms into unit atoms and solve the resulting assignment."""
    counts1, den1 = _to_counts(nu1.weights, max_denominator)
    counts2, den2 = _to_counts(nu2.weights, max_denominator)
    total = math.lcm(den1, den2)
    a = np.repeat(nu1.points, [c * (total // den1) for c in counts1], axis=0)
    b = np.repeat(nu2.points, [c * (total // den2) for c in counts2], axis=0)
    return solve_assignment(empirical(a), empirical(b), cost).total_cost


def random_rational_measure(
    points, denominator: int, gen: np.random.Generator
) -> DiscreteMeasure:
    """Weights k_i / denominator with random positive k_i (needs |points| <= denominator)."""
    points = as_points(points)
    k = points.shape[0]
    cuts = np.sort(gen.choice(np.arange(1, denominator), size=k - 1, replace=False))
    counts = np.diff(np.concatenate([[0], cuts, [denominator]]))
    return make_measure(points, counts / denominator)
