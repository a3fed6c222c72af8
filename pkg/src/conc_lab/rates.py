"""Large-deviation side of transport inequalities.

The rate function inf{H(nu | mu) : S(nu, mu) > t}, where S is the
transport statistic of the cost, is computed two ways: a penalty
optimizer over the simplex and an exhaustive grid oracle for supports of
at most four atoms. The exact law of the empirical measure on a finite
support gives exact tails, and Monte Carlo tails carry Wilson intervals.
"""

from __future__ import annotations

import functools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import logsumexp
from scipy.stats import binomtest

from .bootstrap import get_settings, worker_count
from .costs import CostSpec, inequality_exponent, pairwise_cost
from .errors import (
    EnumerationCapExceeded,
    EventEmpty,
    Infeasible,
    InvalidArgument,
    SupportTooLarge,
)
from .functionals import kl_weights, relative_entropy
from .measures import (
    DiscreteMeasure,
    ProductSpec,
    align_weights,
    compositions,
    enumerate_types,
    make_measure,
    sample_counts,
    tilt,
    type_log_probabilities,
)
from .models import DSCheck, ExactTail, MeanEstimate, SanovReport, TailEstimate
from .simplex import dual_vertices
from .streams import StreamId, as_stream
from .transport import batch_transport_1d, solve_weights, transport_statistic

logger = logging.getLogger(__name__)

STRICT_MARGIN = 1e-9
ORACLE_RESOLUTION = {1: 1.0, 2: 1e-5, 3: 1e-3, 4: 1e-2}
HINT_RESOLUTION = {2: 1e-3, 3: 1e-2, 4: 5e-2}
MAX_ORACLE_ATOMS = 4
_FLOOR = 1e-12
_ROW_BLOCK = 20_000


class RateMethod(str, Enum):
    GRID_ORACLE = "grid_oracle"
    PENALTY_OPTIMIZER = "penalty_optimizer"


@dataclass(frozen=True, eq=False)
class RatePoint:
    value: float
    minimizer: DiscreteMeasure | None
    attained: bool = True
    statistic: float = 0.0
    bound: float | None = None


@dataclass(frozen=True, eq=False)
class RateCurve:
    thresholds: np.ndarray
    rates: np.ndarray
    minimizers: list[DiscreteMeasure | None]
    method: RateMethod
    gap_to_oracle: np.ndarray | None = None
    statistics: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _positive_part(mu: DiscreteMeasure) -> DiscreteMeasure:
    """Atoms of zero mass carry infinite entropy cost, so the search drops them."""
    keep = mu.weights > 0
    if np.all(keep):
        return mu
    return make_measure(mu.points[keep], mu.weights[keep])


def raw_costs(Q, mu: DiscreteMeasure, cost: CostSpec) -> np.ndarray:
    """Optimal cost from each row of weights Q (on mu's support) to mu."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if mu.dim == 1 and cost.is_convex_1d:
        order = np.argsort(mu.points[:, 0], kind="stable")
        x = mu.points[order, 0]
        Q = Q[:, order]
        out = np.empty(Q.shape[0])
        for start in range(0, Q.shape[0], _ROW_BLOCK):
            out[start : start + _ROW_BLOCK] = batch_transport_1d(
                Q[start : start + _ROW_BLOCK], mu.weights[order], x, cost
            )
        return out
    if mu.size <= MAX_ORACLE_ATOMS:
        U, V = _vertices(cost, mu.points.tobytes(), mu.dim)
        offsets = V @ mu.weights
        out = np.empty(Q.shape[0])
        for start in range(0, Q.shape[0], _ROW_BLOCK):
            out[start : start + _ROW_BLOCK] = (Q[start : start + _ROW_BLOCK] @ U.T + offsets).max(axis=1)
        return out
    return np.array([solve_weights(q, mu.points, mu, cost)[0] for q in Q])


@functools.lru_cache(maxsize=64)
def _vertices(cost: CostSpec, points: bytes, dim: int) -> tuple[np.ndarray, np.ndarray]:
    support = np.frombuffer(points, dtype=float).reshape(-1, dim)
    return dual_vertices(pairwise_cost(cost, support, support))


def statistic_table(Q, mu: DiscreteMeasure, cost: CostSpec) -> np.ndarray:
    """S(q, mu) per row: W_p for power costs, the raw cost otherwise."""
    return np.maximum(raw_costs(Q, mu, cost), 0.0) ** (1.0 / cost.exponent)


def max_statistic(mu: DiscreteMeasure, cost: CostSpec) -> float:
    """max of S(nu, mu) over the simplex; S is convex in nu, so a vertex attains it."""
    return float(statistic_table(np.eye(mu.size), mu, cost).max())


def _check_threshold(mu: DiscreteMeasure, cost: CostSpec, t: float) -> None:
    if not t >= 0:
        raise InvalidArgument(f"threshold must be nonnegative, got {t}")
    top = max_statistic(mu, cost)
    if t + STRICT_MARGIN > top:
        raise Infeasible(f"threshold {t} exceeds the largest attainable statistic {top:.6g}")


def rate_function_oracle(
    mu: DiscreteMeasure, cost: CostSpec, t: float, grid_resolution: float | None = None
) -> RatePoint:
    """Exhaustive minimum over the simplex grid of the given resolution."""
    mu = _positive_part(mu)
    k = mu.size
    if k > MAX_ORACLE_ATOMS:
        raise SupportTooLarge(f"grid oracle handles at most {MAX_ORACLE_ATOMS} atoms, got {k}")
    if t == 0:
        return RatePoint(0.0, mu, attained=False, bound=0.0)
    _check_threshold(mu, cost, t)
    h = grid_resolution or ORACLE_RESOLUTION[k]
    m = max(1, int(round(1.0 / h)))
    Q = compositions(m, k) / m
    S = statistic_table(Q, mu, cost)
    feasible = np.flatnonzero(S >= t + STRICT_MARGIN)
    H = kl_weights(Q[feasible], mu.weights)
    best = int(np.argmin(H))
    q = Q[feasible[best]]
    lipschitz = 2.0 + float(np.abs(np.log(mu.weights)).max()) + abs(math.log(1.0 / m))
    bound = k * lipschitz / m
    logger.debug(f"Grid oracle on {Q.shape[0]} points at resolution 1/{m}: {H[best]:.10g}")
    return RatePoint(
        float(H[best]), mu.with_weights(q), statistic=float(S[feasible[best]]), bound=bound
    )


def project_floored_simplex(v: np.ndarray, floor: float = _FLOOR) -> np.ndarray:
    """Euclidean projection onto {q >= floor, sum q = 1} by the sort-based rule."""
    k = v.size
    mass = 1.0 - k * floor
    y = v - floor
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - mass
    index = np.arange(1, k + 1)
    active = u - css / index > 0
    rank = index[active][-1]
    theta = css[active][-1] / rank
    return np.maximum(y - theta, 0.0) + floor


class _PenaltySolver:
    """Projected gradient on H(q | w) + rho * (t + margin - S(q))_+^2, rho x10 per round."""

    rounds = 6
    inner_steps = 100

    def __init__(self, mu: DiscreteMeasure, cost: CostSpec, t: float):
        self.mu = mu
        self.cost = cost
        self.target = t + STRICT_MARGIN
        self.w = mu.weights

    def statistic(self, q: np.ndarray) -> float:
        return float(statistic_table(q[None, :], self.mu, self.cost)[0])

    def statistic_gradient(self, q: np.ndarray) -> tuple[float, np.ndarray]:
        total, u = solve_weights(q, self.mu.points, self.mu, self.cost)
        total = max(total, 0.0)
        e = self.cost.exponent
        if e == 1.0:
            return total, u
        if total <= 1e-300:
            return 0.0, u * 1e6
        return total ** (1.0 / e), (1.0 / e) * total ** (1.0 / e - 1.0) * u

    def objective(self, q: np.ndarray, rho: float) -> float:
        shortfall = max(self.target - self.statistic(q), 0.0)
        return float(kl_weights(q, self.w)) + rho * shortfall**2

    def minimize(self, start: np.ndarray) -> np.ndarray:
        q = project_floored_simplex(start)
        rho = 10.0
        for _ in range(self.rounds):
            step = 1.0
            for _ in range(self.inner_steps):
                s, ds = self.statistic_gradient(q)
                shortfall = max(self.target - s, 0.0)
                grad = np.log(q / self.w) + 1.0 - 2.0 * rho * shortfall * ds
                value = float(kl_weights(q, self.w)) + rho * shortfall**2
                step = min(step * 2.0, 1.0)
                while step > 1e-14:
                    candidate = project_floored_simplex(q - step * grad)
                    move = candidate - q
                    if self.objective(candidate, rho) <= value + 1e-4 * float(grad @ move):
                        break
                    step *= 0.5
                else:
                    break
                if np.abs(move).max() < 1e-13:
                    break
                q = candidate
            rho *= 10.0
        return q

    def repair(self, q: np.ndarray) -> np.ndarray | None:
        """Smallest point of the ray from w through q with S >= target (S and H grow along it)."""
        direction = q - self.w
        if np.abs(direction).max() < 1e-15:
            return None
        negative = direction < 0
        reach = float(np.min(self.w[negative] / -direction[negative])) if negative.any() else 1.0

        def point(lam: float) -> np.ndarray:
            p = np.maximum(self.w + lam * direction, 0.0)
            return p / p.sum()

        if self.statistic(point(reach)) < self.target:
            return None
        lo, hi = 0.0, reach
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if self.statistic(point(mid)) >= self.target:
                hi = mid
            else:
                lo = mid
        return point(hi)


def _optimize(mu: DiscreteMeasure, cost: CostSpec, t: float, stream: StreamId, starts: int) -> RatePoint:
    solver = _PenaltySolver(mu, cost, t)
    gen = stream.generator()
    k = mu.size
    initial = list(gen.dirichlet(np.ones(k), size=starts))
    initial.extend(np.eye(k) * (1 - k * _FLOOR) + _FLOOR)
    if k in HINT_RESOLUTION:
        hint = rate_function_oracle(mu, cost, t, HINT_RESOLUTION[k])
        initial.append(hint.minimizer.weights)

    def run(start: np.ndarray) -> np.ndarray | None:
        return solver.repair(solver.minimize(start))

    with ThreadPoolExecutor(max_workers=worker_count(len(initial))) as pool:
        candidates = list(pool.map(run, initial))

    best: tuple[float, np.ndarray] | None = None
    for q in candidates:
        if q is None or solver.statistic(q) < solver.target:
            continue
        value = float(kl_weights(q, mu.weights))
        if best is None or value < best[0]:
            best = (value, q)
    if best is None:
        raise Infeasible(f"no feasible point found for threshold {t}")
    value, q = best
    return RatePoint(value, mu.with_weights(q), statistic=solver.statistic(q))


def rate_function(
    mu: DiscreteMeasure,
    cost: CostSpec,
    t: float,
    method: RateMethod | str = RateMethod.PENALTY_OPTIMIZER,
    *,
    stream: StreamId | int | None = None,
    starts: int = 16,
) -> RatePoint:
    """inf{H(nu | mu) : S(nu, mu) >= t + 1e-9} over measures on mu's support."""
    method = RateMethod(method)
    if not t >= 0:
        raise InvalidArgument(f"threshold must be nonnegative, got {t}")
    if t == 0:
        logger.warning("Rate at t = 0 is an infimum over nu != mu; reporting 0, not attained")
        return RatePoint(0.0, mu, attained=False)
    if method is RateMethod.GRID_ORACLE:
        return rate_function_oracle(mu, cost, t)
    positive = _positive_part(mu)
    _check_threshold(positive, cost, t)
    return _optimize(positive, cost, t, as_stream(stream), starts)


def rate_curve(
    mu: DiscreteMeasure,
    cost: CostSpec,
    thresholds,
    method: RateMethod | str = RateMethod.PENALTY_OPTIMIZER,
    *,
    stream: StreamId | int | None = None,
    with_oracle: bool = False,
) -> RateCurve:
    """Rates over a threshold grid, repaired to be nondecreasing.

    Infeasible thresholds get rate +inf and no minimizer.
    """
    method = RateMethod(method)
    ts = np.asarray(thresholds, dtype=float)
    order = np.argsort(ts)
    ts = ts[order]
    base = as_stream(stream)
    points: list[RatePoint | None] = []
    for i, t in enumerate(ts):
        try:
            points.append(rate_function(mu, cost, float(t), method, stream=base.child(i)))
        except Infeasible:
            points.append(None)
    rates = np.array([p.value if p else np.inf for p in points])
    minimizers = [p.minimizer if p else None for p in points]
    stats = np.array([p.statistic if p else np.nan for p in points])

    # a minimizer feasible for a larger threshold is feasible for every smaller one
    for i in range(ts.size - 2, -1, -1):
        if rates[i + 1] < rates[i]:
            rates[i], minimizers[i], stats[i] = rates[i + 1], minimizers[i + 1], stats[i + 1]

    gaps = None
    if with_oracle:
        gaps = np.full(ts.size, np.nan)
        for i, t in enumerate(ts):
            if np.isfinite(rates[i]):
                gaps[i] = abs(rates[i] - rate_function_oracle(mu, cost, float(t)).value)
    logger.info(f"Rate curve ({method.value}, {cost}): {ts.size} thresholds, max rate {np.max(rates[np.isfinite(rates)], initial=0.0):.6g}")
    return RateCurve(ts, rates, minimizers, method, gaps, stats)


def default_thresholds(mu: DiscreteMeasure, cost: CostSpec, count: int = 24) -> np.ndarray:
    """Geometric thresholds from 1e-3 to 0.95 of the largest attainable statistic."""
    top = max_statistic(_positive_part(mu), cost)
    return top * np.geomspace(1e-3, 0.95, count)


def best_constant(
    mu: DiscreteMeasure, cost: CostSpec, curve: RateCurve | None = None, *, stream=None
) -> float:
    """sup of S^q / H over the minimizer family of a rate curve."""
    if curve is None:
        if _positive_part(mu).size == 1:
            return 0.0
        curve = rate_curve(mu, cost, default_thresholds(mu, cost), stream=stream)
    q = inequality_exponent(cost)
    best = 0.0
    for nu in curve.minimizers:
        if nu is None:
            continue
        h = relative_entropy(nu, mu)
        if h > 0:
            best = max(best, transport_statistic(nu, mu, cost) ** q / h)
    logger.info(f"Best constant over the minimizer family ({cost}): {best:.6g}")
    return best


def best_constant_tilts(
    mu: DiscreteMeasure,
    cost: CostSpec,
    count: int,
    stream: StreamId | int | None,
    *,
    max_tilt: float = 2.0,
    min_tilt: float = 0.05,
) -> float:
    """sup of S^q / H over random exponential tilts of mu.

    Tilt sizes are drawn in units of mu's standard deviation, so a grid
    Gaussian gets translates of at most `max_tilt` standard deviations.
    """
    gen = as_stream(stream).generator()
    centered = mu.points - mu.mean()
    spread = float(np.sqrt(mu.weights @ (centered**2).sum(axis=1))) or 1.0
    q = inequality_exponent(cost)
    best = 0.0
    for _ in range(count):
        direction = gen.normal(size=mu.dim)
        direction /= np.linalg.norm(direction)
        size = gen.uniform(min_tilt, max_tilt) / spread
        nu = tilt(mu, size * direction)
        h = relative_entropy(nu, mu)
        if h > 1e-14:
            best = max(best, transport_statistic(nu, mu, cost) ** q / h)
    return best


def _type_table(mu: DiscreteMeasure, cost: CostSpec, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    k = mu.size
    count = math.comb(n + k - 1, k - 1)
    cap = get_settings().support_cap
    if count > cap:
        raise EnumerationCapExceeded(f"{count} types of {n} draws over {k} atoms exceed cap {cap}")
    counts, log_coefficients = enumerate_types(k, n)
    return counts, log_coefficients, statistic_table(counts / n, mu, cost)


def exact_tail(
    mu: DiscreteMeasure, cost: CostSpec, n: int, t_list, *, closed: bool = False
) -> list[ExactTail]:
    """P(S(L_n, mu) > t) from the exact law of the type of n draws.

    With `closed` the event is S >= t, so a threshold on the 1/n lattice
    stays on its lattice point for every n.
    """
    counts, log_coefficients, stats = _type_table(mu, cost, n)
    log_p = type_log_probabilities(counts, log_coefficients, mu.weights)
    margin = -STRICT_MARGIN if closed else STRICT_MARGIN
    tails = []
    for t in np.atleast_1d(np.asarray(t_list, dtype=float)):
        hit = stats >= t + margin
        log_tail = float(logsumexp(log_p[hit])) if hit.any() else -np.inf
        tails.append(
            ExactTail(
                n=n,
                t=float(t),
                probability=float(np.exp(log_tail)),
                log_probability=log_tail,
                rate=float(-log_tail / n) if np.isfinite(log_tail) else None,
            )
        )
    return tails


def exact_mean(mu: DiscreteMeasure, cost: CostSpec, n: int) -> float:
    counts, log_coefficients, stats = _type_table(mu, cost, n)
    return float(np.exp(type_log_probabilities(counts, log_coefficients, mu.weights)) @ stats)


def extrapolate_rate(n_list, rates) -> tuple[float, float]:
    """Fit r_n - log(n) / (2n) = r_inf + c / n; returns (r_inf, c).

    From four sample sizes on, an e / n^2 term joins the fit.
    """
    n = np.asarray(n_list, dtype=float)
    r = np.asarray(rates, dtype=float)
    if n.size < 2:
        raise InvalidArgument("extrapolation needs at least two sample sizes")
    columns = [np.ones_like(n), 1.0 / n]
    if n.size >= 4:
        columns.append(1.0 / n**2)
    coefficients, *_ = np.linalg.lstsq(np.column_stack(columns), r - np.log(n) / (2.0 * n), rcond=None)
    return float(coefficients[0]), float(coefficients[1])


def ds_lower_bound_check(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    n: int,
    t: float,
    cost: CostSpec,
    *,
    cap: int | None = None,
) -> DSCheck:
    """Both sides of the change-of-measure lower bound, by enumerating every outcome in X^n.

    With A = {S(L_n, mu) > t}:
    (1/n) log(mu^n(A) e^{nH}) >= -H nu^n(A^c) / nu^n(A) + (1/n) log nu^n(A) - 1 / (n e nu^n(A)).
    """
    cap = 1_000_000 if cap is None else cap
    weights_nu = align_weights(nu, mu)
    if weights_nu is None:
        raise InvalidArgument("nu charges a point outside mu's support")
    table, mu_weights = ProductSpec(mu, n).materialize(cap)
    nu_weights = np.prod(weights_nu[table], axis=1)
    counts = np.stack([(table == j).sum(axis=1) for j in range(mu.size)], axis=1)
    types, inverse = np.unique(counts, axis=0, return_inverse=True)
    stats = statistic_table(types / n, mu, cost)[inverse.reshape(-1)]
    event = stats >= t + STRICT_MARGIN

    nu_event = float(nu_weights[event].sum())
    if nu_event <= 0:
        raise EventEmpty(f"nu^n gives the event S(L_n, mu) > {t} no mass at n = {n}")
    mu_event = float(mu_weights[event].sum())
    if mu_event <= 0:
        raise EventEmpty(f"mu^n gives the event S(L_n, mu) > {t} no mass at n = {n}")
    entropy = kl_weights(weights_nu, mu.weights)
    lhs = math.log(mu_event) / n + entropy
    rhs = -entropy * (1.0 - nu_event) / nu_event + math.log(nu_event) / n - 1.0 / (n * math.e * nu_event)
    slack = lhs - rhs
    return DSCheck(
        n=n,
        t=float(t),
        cost=str(cost),
        entropy=float(entropy),
        mu_event=mu_event,
        nu_event=nu_event,
        lhs=lhs,
        rhs=rhs,
        slack=slack,
        passed=bool(slack >= -1e-12),
    )


def random_ds_configs(count: int, stream: StreamId | int | None, *, max_n: int = 8) -> list[dict]:
    """Random (mu, nu, n, t, cost) on 2- and 3-point supports with a nu-charged event."""
    gen = as_stream(stream).generator()
    configs = []
    while len(configs) < count:
        k = int(gen.integers(2, 4))
        points = np.sort(gen.choice(np.arange(-10, 11), size=k, replace=False)) / 10.0
        mu = make_measure(points, gen.dirichlet(np.ones(k)))
        nu = make_measure(points, gen.dirichlet(np.ones(k)))
        n = int(gen.integers(1, max_n + 1))
        cost = CostSpec.power(float(gen.choice([1.0, 2.0])))
        counts, _, stats = _type_table(mu, cost, n)
        charged = stats[np.all((counts == 0) | (nu.weights > 0), axis=1)]
        if charged.max() <= 2 * STRICT_MARGIN:
            continue
        t = float(gen.uniform(0.0, 0.95) * charged.max())
        configs.append({"mu": mu, "nu": nu, "n": n, "t": t, "cost": cost})
    return configs


def sanov_battery(
    configs: list[dict] | None = None, *, count: int = 100, stream=0, max_n: int = 8
) -> SanovReport:
    """Exact checks of the change-of-measure bound over a list of configurations."""
    configs = random_ds_configs(count, stream, max_n=max_n) if configs is None else configs
    checks = []
    for config in configs:
        checks.append(
            ds_lower_bound_check(config["mu"], config["nu"], config["n"], config["t"], config["cost"])
        )
    worst = min((c.slack for c in checks), default=float("inf"))
    failures = sum(not c.passed for c in checks)
    logger.info(f"Sanov battery: {len(checks)} configurations, worst slack {worst:.6g}, {failures} failures")
    return SanovReport(checks=checks, worst_slack=worst, failures=failures, passed=failures == 0)


def wilson_interval(hits: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    if trials <= 0:
        return 0.0, 1.0
    ci = binomtest(int(hits), int(trials)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def sample_statistics(
    mu: DiscreteMeasure, cost: CostSpec, n: int, trials: int, stream: StreamId, block: int = 10_000
) -> np.ndarray:
    """S(L_n, mu) for `trials` independent samples; block b always uses stream.child(b)."""
    blocks = [(b, min(block, trials - b * block)) for b in range(math.ceil(trials / block))]

    def run(task: tuple[int, int]) -> np.ndarray:
        index, size = task
        counts = sample_counts(mu, n, size, stream.child(index))
        types, inverse = np.unique(counts, axis=0, return_inverse=True)
        return statistic_table(types / n, mu, cost)[inverse.reshape(-1)]

    with ThreadPoolExecutor(max_workers=worker_count(len(blocks))) as pool:
        parts = list(pool.map(run, blocks))
    return np.concatenate(parts) if parts else np.zeros(0)


def tail_estimate(n: int, t: float, hits: int, trials: int) -> TailEstimate:
    low, high = wilson_interval(hits, trials)
    p_hat = hits / trials
    censored = hits == 0
    return TailEstimate(
        n=n,
        t=float(t),
        trials=trials,
        hits=int(hits),
        p_hat=p_hat,
        ci_low=low,
        ci_high=high,
        rate_hat=math.log(trials) / n if censored else -math.log(p_hat) / n,
        censored=censored,
    )


def mc_tail(
    mu: DiscreteMeasure,
    cost: CostSpec,
    n: int,
    t_list,
    trials: int,
    stream: StreamId | int | None,
    *,
    closed: bool = False,
) -> tuple[list[TailEstimate], float, float]:
    """Monte Carlo P(S(L_n, mu) > t) per t, plus the sample median and mean of S."""
    if trials < 1:
        raise InvalidArgument("trials must be at least 1")
    stats = sample_statistics(mu, cost, n, trials, as_stream(stream))
    margin = -STRICT_MARGIN if closed else STRICT_MARGIN
    estimates = []
    for t in np.atleast_1d(np.asarray(t_list, dtype=float)):
        hits = int(np.count_nonzero(stats >= t + margin))
        estimate = tail_estimate(n, float(t), hits, trials)
        if estimate.censored:
            logger.warning(f"No exceedances of t={t:g} at n={n}; reporting rate lower bound")
        estimates.append(estimate)
    return estimates, float(np.median(stats)), float(stats.mean())


def empirical_mean_convergence(
    mu: DiscreteMeasure, cost: CostSpec, n_list, trials: int, stream: StreamId | int | None
) -> list[MeanEstimate]:
    """Estimated E[S(L_n, mu)] per n with normal-approximation intervals."""
    base = as_stream(stream)
    rows = []
    for i, n in enumerate(n_list):
        stats = sample_statistics(mu, cost, int(n), trials, base.child(i))
        mean = float(stats.mean())
        error = float(stats.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
        try:
            exact = exact_mean(mu, cost, int(n))
        except EnumerationCapExceeded:
            exact = None
        rows.append(
            MeanEstimate(
                n=int(n),
                mean=mean,
                std_error=error,
                ci_low=mean - 1.96 * error,
                ci_high=mean + 1.96 * error,
                exact=exact,
            )
        )
    return rows
