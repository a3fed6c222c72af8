"""Concentration profiles of product measures.

Exact enlargement probabilities on enumerated product spaces, Monte Carlo
profiles of the empirical transport functional, the Marton bound derived
from a transport constant, and the two directions of the equivalence
between transport inequalities and dimension-free concentration.
"""

from __future__ import annotations

import logging
import math
from enum import Enum

import numpy as np

from .bootstrap import get_settings
from .costs import (
    CostKind,
    CostSpec,
    alpha,
    alpha_lemma_audit,
    inequality_exponent,
    minkowski_gauges,
)
from .errors import ConfigInvalid, InvalidArgument, SizeCapExceeded
from .functionals import relative_entropy
from .measures import DiscreteMeasure, ProductSpec, empirical, uniform_measure
from .models import (
    ChainCheck,
    ConcentrationProfile,
    EquivalenceConfig,
    EquivalenceReport,
    LipschitzReport,
    ProfileConstants,
    SubgradientReport,
    TwoLevelReport,
)
from .rates import (
    STRICT_MARGIN,
    best_constant,
    default_thresholds,
    exact_tail,
    extrapolate_rate,
    mc_tail,
    rate_curve,
    sample_statistics,
    statistic_table,
    tail_estimate,
)
from .streams import StreamId, as_stream
from .transport import solve_assignment, subgradient_norms, transport_statistic

logger = logging.getLogger(__name__)

SET_TOLERANCE = 1e-12
B_CLAMP = (0.5, 2.0 * math.e)
SUBLEVEL_LEVELS = (0.5, 0.6, 0.7, 0.8, 0.9)
MIN_PROFILE_TRIALS = 1000


class Enlargement(str, Enum):
    RHO2 = "rho2"
    RHO_P = "rho_p"
    TWO_LEVEL = "two_level"
    MINKOWSKI = "minkowski"
    SG = "sg"


class SetFamily(str, Enum):
    RANDOM_HALF = "random_half"
    SUBLEVEL_FN = "sublevel_Fn"


def marton_profile(C: float) -> ProfileConstants:
    """mu(A^r) >= 1 - exp(-(r - r0)^2 / C) with r0 = sqrt(C log 2), for mu(A) >= 1/2."""
    if not C > 0:
        raise InvalidArgument(f"constant must be positive, got {C}")
    return ProfileConstants(a=1.0 / C, b=1.0, r0=math.sqrt(C * math.log(2.0)), exponent=2.0)


def profile_bound(r, a: float, b: float, r0: float = 0.0, exponent: float = 2.0) -> np.ndarray:
    """max(0, 1 - b exp(-a (r - r0)^q)) for r >= r0, and 0 below r0."""
    r = np.asarray(r, dtype=float)
    excess = np.maximum(r - r0, 0.0)
    bound = 1.0 - b * np.exp(-a * excess**exponent)
    return np.where(r >= r0, np.clip(bound, 0.0, 1.0), 0.0)


def _bound_of(constants: ProfileConstants, r) -> np.ndarray:
    return profile_bound(r, constants.a, constants.b, constants.r0, constants.exponent)


def product_distances(
    mu: DiscreteMeasure,
    n: int,
    enlargement: Enlargement | str,
    *,
    p: float = 2.0,
    cap: int | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Outcome table, product weights and the gauge matrix D of the enlargement.

    x lies in the r-enlargement of A iff min over a in A of D[x, a] <= r.
    """
    enlargement = Enlargement(enlargement)
    table, weights = ProductSpec(mu, n).materialize(cap)
    N = table.shape[0]
    cost_cap = get_settings().cost_cap
    if N * N > cost_cap:
        raise SizeCapExceeded(f"{N}x{N} enlargement matrix exceeds cap of {cost_cap} entries")

    delta = mu.points[:, None, :] - mu.points[None, :, :]
    rho = np.linalg.norm(delta, axis=-1)
    if enlargement is Enlargement.MINKOWSKI:
        return table, weights, _minkowski_distances(mu, table, p)
    if enlargement is Enlargement.RHO2:
        per_factor = rho**2
    elif enlargement is Enlargement.RHO_P:
        per_factor = rho**p
    elif enlargement is Enlargement.TWO_LEVEL:
        per_factor = alpha(delta, p).sum(axis=-1)
    else:
        per_factor = alpha(rho, 1.0)

    D = np.zeros((N, N))
    for i in range(n):
        column = table[:, i]
        D += per_factor[np.ix_(column, column)]
    if enlargement is Enlargement.RHO2:
        D = np.sqrt(D)
    elif enlargement is Enlargement.RHO_P:
        D = D ** (1.0 / p)
    return table, weights, D


def _minkowski_distances(mu: DiscreteMeasure, table: np.ndarray, p: float) -> np.ndarray:
    """Gauges of x - a in sqrt(r) B_2 + r^(1/p) B_p, computed once per distinct |x - a| pattern."""
    N, n = table.shape
    points = mu.points
    diffs = np.abs(points[table][:, None, :, :] - points[table][None, :, :, :]).reshape(N * N, -1)
    patterns, inverse = np.unique(np.sort(diffs, axis=1), axis=0, return_inverse=True)
    gauges = minkowski_gauges(patterns, p)
    return gauges[inverse.reshape(-1)].reshape(N, N)


def random_half_sets(weights: np.ndarray, count: int, gen: np.random.Generator) -> np.ndarray:
    """Boolean masks: prefixes of random orderings, cut once their mass reaches 1/2."""
    N = weights.size
    masks = np.zeros((count, N), dtype=bool)
    for s in range(count):
        order = gen.permutation(N)
        cut = int(np.searchsorted(np.cumsum(weights[order]), 0.5 - SET_TOLERANCE)) + 1
        masks[s, order[:cut]] = True
    return masks


def transport_functional(mu: DiscreteMeasure, table: np.ndarray) -> np.ndarray:
    """F_n(x) = W_2(L_n^x, mu) for every outcome row of an index table."""
    n = table.shape[1]
    counts = np.stack([(table == j).sum(axis=1) for j in range(mu.size)], axis=1)
    types, inverse = np.unique(counts, axis=0, return_inverse=True)
    return statistic_table(types / n, mu, CostSpec.quadratic())[inverse.reshape(-1)]


def sublevel_sets(
    mu: DiscreteMeasure, table: np.ndarray, weights: np.ndarray, levels=SUBLEVEL_LEVELS
) -> np.ndarray:
    """{x : F_n(x) <= m} with m the smallest value whose sublevel mass reaches each level."""
    F = transport_functional(mu, table)
    order = np.argsort(F, kind="stable")
    cumulative = np.cumsum(weights[order])
    masks = []
    for level in levels:
        m = F[order[min(int(np.searchsorted(cumulative, level - SET_TOLERANCE)), F.size - 1)]]
        masks.append(F <= m)
    return np.array(masks)


def exact_product_concentration(
    mu: DiscreteMeasure,
    n: int,
    enlargement: Enlargement | str,
    set_family: SetFamily | str,
    r_list,
    *,
    constants: ProfileConstants | None = None,
    count: int = 1000,
    stream: StreamId | int | None = None,
    p: float = 2.0,
    cap: int | None = None,
) -> ConcentrationProfile:
    """Exact mu^n(A^r) over a set family; `observed` is the worst set at each r."""
    enlargement = Enlargement(enlargement)
    set_family = SetFamily(set_family)
    r_values = np.asarray(r_list, dtype=float)
    table, weights, D = product_distances(mu, n, enlargement, p=p, cap=cap)
    if set_family is SetFamily.RANDOM_HALF:
        masks = random_half_sets(weights, count, as_stream(stream).generator())
    else:
        masks = sublevel_sets(mu, table, weights)
    logger.info(
        f"Exact concentration: {weights.size} outcomes, {masks.shape[0]} sets ({set_family.value}), "
        f"{enlargement.value} enlargement"
    )

    guaranteed = _bound_of(constants, r_values) if constants else np.zeros_like(r_values)
    observed = np.ones_like(r_values)
    violations = 0
    for mask in masks:
        if weights[mask].sum() < 0.5 - SET_TOLERANCE:
            continue
        distance = D[:, mask].min(axis=1)
        mass = np.array([weights[distance <= r + SET_TOLERANCE].sum() for r in r_values])
        observed = np.minimum(observed, mass)
        violations += int(np.count_nonzero(mass < guaranteed - SET_TOLERANCE))
    return ConcentrationProfile(
        n=n,
        family=set_family.value,
        enlargement=enlargement.value,
        method="exact",
        r_values=r_values.tolist(),
        observed=observed.tolist(),
        guaranteed=guaranteed.tolist(),
        constants=constants,
        sets_tested=int(masks.shape[0]),
        violations=violations,
        passed=violations == 0,
    )


def fit_concentration_rate(r, tail, hits, exponent: float = 2.0) -> ProfileConstants | None:
    """Weighted least squares of log tail = log b - a (r - r0)^q, r0 on a grid, b clamped.

    Weights are the hit counts (the inverse variance of log p_hat); censored
    points are left out. Returns None with fewer than two usable points.
    """
    r = np.asarray(r, dtype=float)
    tail = np.asarray(tail, dtype=float)
    weight = np.asarray(hits, dtype=float)
    best: tuple[float, ProfileConstants] | None = None
    lo_b, hi_b = np.log(B_CLAMP[0]), np.log(B_CLAMP[1])
    for r0 in np.linspace(0.0, 0.5 * r.max(), 26) if r.size else []:
        use = (r >= r0) & (weight > 0) & (tail > 0)
        if np.count_nonzero(use) < 2:
            continue
        x = (r[use] - r0) ** exponent
        y = np.log(tail[use])
        w = weight[use]
        design = np.column_stack([np.ones_like(x), -x]) * np.sqrt(w)[:, None]
        (log_b, a), *_ = np.linalg.lstsq(design, y * np.sqrt(w), rcond=None)
        if not lo_b <= log_b <= hi_b:
            log_b = float(np.clip(log_b, lo_b, hi_b))
            a = float((w * x * (log_b - y)).sum() / max((w * x * x).sum(), 1e-300))
        residual = float((w * (y - log_b + a * x) ** 2).sum())
        if a > 0 and (best is None or residual < best[0]):
            best = (residual, ProfileConstants(a=float(a), b=float(np.exp(log_b)), r0=float(r0), exponent=exponent))
    return best[1] if best else None


def mc_concentration_profile(
    mu: DiscreteMeasure,
    n: int,
    cost: CostSpec,
    r_list,
    trials: int,
    stream: StreamId | int | None,
    *,
    constants: ProfileConstants | None = None,
    threshold_factor: float = 1.0,
    radius_scale: float | None = None,
) -> ConcentrationProfile:
    """Sublevel family of the statistic: P(S > factor * m_n + scale * r) per r.

    The default scale is n^(-1/q), matching the Lipschitz constant of the
    statistic under the product metric.
    """
    if trials < MIN_PROFILE_TRIALS:
        raise ConfigInvalid(f"a Monte Carlo profile needs at least {MIN_PROFILE_TRIALS} trials, got {trials}")
    q = inequality_exponent(cost)
    r_values = np.asarray(r_list, dtype=float)
    scale = n ** (-1.0 / q) if radius_scale is None else radius_scale
    stats = sample_statistics(mu, cost, n, trials, as_stream(stream))
    median = float(np.median(stats))
    estimates = []
    for r in r_values:
        hits = int(np.count_nonzero(stats >= threshold_factor * median + scale * r + STRICT_MARGIN))
        estimates.append(tail_estimate(n, float(r), hits, trials))
    tails = np.array([e.p_hat for e in estimates])
    fitted = fit_concentration_rate(r_values, tails, [e.hits for e in estimates], q)
    reference = constants or fitted
    guaranteed = _bound_of(reference, r_values) if reference else np.zeros_like(r_values)
    ci_low = np.array([1.0 - e.ci_high for e in estimates])
    violations = int(np.count_nonzero(np.array([1.0 - e.ci_low for e in estimates]) < guaranteed - SET_TOLERANCE))
    return ConcentrationProfile(
        n=n,
        family="sublevel_statistic",
        enlargement=f"{threshold_factor:g}*median + {scale:.6g}*r",
        method="monte_carlo",
        r_values=r_values.tolist(),
        observed=(1.0 - tails).tolist(),
        guaranteed=guaranteed.tolist(),
        ci_low=ci_low.tolist(),
        ci_high=[1.0 - e.ci_low for e in estimates],
        tails=estimates,
        median=median,
        constants=reference,
        fitted=fitted,
        sets_tested=1,
        violations=violations,
        passed=violations == 0 if constants else True,
    )


def _minimizer_ratios(mu: DiscreteMeasure, cost: CostSpec, thresholds) -> list[tuple[float, float]]:
    """(S^q, H) over the rate-curve minimizers at the given thresholds."""
    curve = rate_curve(mu, cost, thresholds)
    q = inequality_exponent(cost)
    pairs = []
    for nu in curve.minimizers:
        if nu is not None:
            pairs.append((transport_statistic(nu, mu, cost) ** q, relative_entropy(nu, mu)))
    return pairs


def _marton_metric(cost: CostSpec) -> float:
    """Product metric on which the Marton bound of a transport constant holds.

    W_1 constants tensorize additively on the l1 product metric (so the
    constant scales with n); W_2 constants are dimension-free on rho_2^n.
    """
    if cost.kind in (CostKind.QUADRATIC, CostKind.POWER) and cost.p in (1.0, 2.0):
        return cost.p
    raise InvalidArgument(f"Marton profiles need a W_1 or W_2 cost, got {cost}")


def _tail_rates(
    mu: DiscreteMeasure, cost: CostSpec, n: int, u_values, config: EquivalenceConfig, stream: StreamId
) -> np.ndarray:
    """-(1/n) log P(S(L_n, mu) >= u), exact when the types can be enumerated."""
    try:
        tails = [e.probability for e in exact_tail(mu, cost, n, u_values, closed=True)]
    except SizeCapExceeded:
        estimates, _, _ = mc_tail(mu, cost, n, u_values, config.trials, stream, closed=True)
        tails = [e.p_hat for e in estimates]
    with np.errstate(divide="ignore"):
        return -np.log(np.asarray(tails)) / n


def equivalence_experiment(
    mu: DiscreteMeasure, direction: str, config: EquivalenceConfig | None = None
) -> EquivalenceReport:
    """Transport constant to concentration, concentration to transport constant, or both.

    t2_to_concentration certifies C* over the rate-curve minimizers and checks
    the Marton profile of the tensorized constant n * C* on the l1 product
    metric. concentration_to_t2 extrapolates tail rates in n and takes
    C = max_u u^q / r_inf(u), then checks S^q <= C H (1 + slack) over the
    minimizer family.
    """
    config = config or EquivalenceConfig()
    if direction not in ("t2_to_concentration", "concentration_to_t2", "both"):
        raise InvalidArgument(f"unknown direction {direction!r}")
    cost = CostSpec.parse(config.cost)
    stream = StreamId(config.seed)
    q = inequality_exponent(cost)
    report = EquivalenceReport(direction=direction, cost=str(cost), slack=config.slack)
    trivial = int(np.count_nonzero(mu.weights > 0)) == 1

    if direction in ("t2_to_concentration", "both"):
        c_star = 0.0 if trivial else best_constant(mu, cost, stream=stream.child(0))
        report.transport_constant = c_star
        if c_star > 0:
            metric_p = _marton_metric(cost)
            constants = marton_profile(config.exact_n * c_star if metric_p == 1.0 else c_star)
            profile = exact_product_concentration(
                mu,
                config.exact_n,
                Enlargement.RHO_P,
                SetFamily.RANDOM_HALF,
                config.r_grid(),
                constants=constants,
                count=config.set_count,
                stream=stream.child(1),
                p=metric_p,
            )
            report.profile = profile
            report.profile_violations = profile.violations

    if direction in ("concentration_to_t2", "both"):
        if trivial:
            report.concentration_constant = 0.0
        else:
            u_values = np.asarray(config.u_values, dtype=float)
            rows = np.array(
                [_tail_rates(mu, cost, n, u_values, config, stream.child(2, i)) for i, n in enumerate(config.n_list)]
            )
            limits = []
            for j, u in enumerate(u_values):
                finite = np.isfinite(rows[:, j])
                if np.count_nonzero(finite) >= 2:
                    r_inf, _ = extrapolate_rate(np.asarray(config.n_list)[finite], rows[finite, j])
                    limits.append((float(u), r_inf))
            report.extrapolated_rates = {f"{u:g}": r for u, r in limits}
            c_conc = max((u**q / r for u, r in limits if r > 0), default=0.0)
            report.concentration_constant = c_conc
            pairs = _minimizer_ratios(mu, cost, u_values)
            worst = max((s / (c_conc * h) for s, h in pairs if h > 0 and c_conc > 0), default=0.0)
            report.worst_minimizer_ratio = worst
            report.minimizer_check = worst <= 1.0 + config.slack

    if direction == "both" and report.transport_constant and report.concentration_constant:
        a, b = report.transport_constant, report.concentration_constant
        report.relative_gap = abs(a - b) / max(a, b)
        report.agreement = report.relative_gap <= config.slack

    checks = [
        report.profile_violations == 0 if report.profile_violations is not None else True,
        report.minimizer_check if report.minimizer_check is not None else True,
        report.agreement if report.agreement is not None else True,
    ]
    report.passed = all(checks)
    logger.info(
        f"Equivalence ({direction}): transport constant {report.transport_constant}, "
        f"concentration constant {report.concentration_constant}, passed={report.passed}"
    )
    return report


def two_level_experiment(
    mu: DiscreteMeasure,
    p: float,
    n: int,
    r_list,
    trials: int,
    stream: StreamId | int | None = None,
    *,
    exact_n: int | None = 6,
    set_count: int = 200,
) -> TwoLevelReport:
    """Constant chain of the two-level equivalence.

    Forward: a fitted exponential profile of the statistic at 2 m_n + 288 r / n
    must give S <= (288 / a) H over the minimizer family. Converse: the
    certified constant C gives mu^n(A + B_{2,p}(r)) >= 1 - 2 exp(-r / 2C),
    checked exactly on a small product space.
    """
    if not 1.0 <= p <= 2.0:
        raise InvalidArgument(f"p must lie in [1, 2], got {p}")
    base = as_stream(stream)
    cost = CostSpec.two_level(p)
    audit = alpha_lemma_audit(ps=(p,))

    profile = mc_concentration_profile(
        mu, n, cost, r_list, trials, base.child(0), threshold_factor=2.0, radius_scale=288.0 / n
    )
    trivial = int(np.count_nonzero(mu.weights > 0)) == 1
    thresholds = None if trivial else default_thresholds(mu, cost, count=12)
    pairs = [] if trivial else _minimizer_ratios(mu, cost, thresholds)
    max_ratio = max((s / h for s, h in pairs if h > 0), default=0.0)

    forward = None
    if profile.fitted is not None:
        factor = 288.0 / profile.fitted.a
        forward = ChainCheck(
            name="fitted_profile_to_transport",
            factor=factor,
            max_ratio=max_ratio,
            passed=max_ratio <= factor,
        )

    converse = None
    if not trivial and max_ratio > 0 and exact_n:
        constants = ProfileConstants(a=1.0 / (2.0 * max_ratio), b=2.0, r0=0.0, exponent=1.0)
        exact = exact_product_concentration(
            mu,
            exact_n,
            Enlargement.TWO_LEVEL,
            SetFamily.RANDOM_HALF,
            r_list,
            constants=constants,
            count=set_count,
            stream=base.child(1),
            p=p,
        )
        converse = ChainCheck(
            name="transport_to_two_level_profile",
            factor=2.0 * max_ratio,
            max_ratio=max_ratio,
            passed=exact.passed,
            profile=exact,
        )
    passed = audit["passed"] and all(c.passed for c in (forward, converse) if c is not None)
    return TwoLevelReport(
        p=p,
        n=n,
        audit=audit,
        profile=profile,
        certified_constant=max_ratio,
        forward=forward,
        converse=converse,
        passed=passed,
    )


def lipschitz_battery(
    pairs: int,
    stream: StreamId | int | None,
    *,
    n_list=(2, 5, 10),
    d_list=(1, 3),
    atoms: int = 10,
) -> LipschitzReport:
    """sqrt(n) |F_n(x) - F_n(y)| / rho_2^n(x, y) and the convexity bound on random pairs.

    mu is uniform on `atoms` random points, so W_2(L_n^x, mu) is an
    assignment problem once each sample point is repeated atoms / n times.
    """
    gen = as_stream(stream).generator()
    quadratic = CostSpec.quadratic()
    configs = [(n, d) for n in n_list for d in d_list]
    if any(atoms % n for n, _ in configs):
        raise InvalidArgument("atom count must be a multiple of every sample size")
    worst_ratio = 0.0
    worst_convexity = -np.inf
    per_config = max(1, pairs // len(configs))
    for n, d in configs:
        support = gen.normal(size=(atoms, d))
        target = empirical(support)

        def F(x: np.ndarray) -> float:
            cost = solve_assignment(empirical(np.repeat(x, atoms // n, axis=0)), target, quadratic).total_cost
            return math.sqrt(max(cost, 0.0))

        for _ in range(per_config):
            x = gen.normal(size=(n, d))
            y = x + gen.normal(size=(n, d)) * math.exp(gen.uniform(-4.0, 1.0))
            rho = float(np.sqrt(((x - y) ** 2).sum()))
            if rho == 0:
                continue
            worst_ratio = max(worst_ratio, math.sqrt(n) * abs(F(x) - F(y)) / rho)
            coupling = solve_assignment(empirical(x), empirical(y), quadratic).total_cost
            worst_convexity = max(worst_convexity, coupling - rho**2 / n)
    passed = worst_ratio <= 1.0 + 1e-9 and worst_convexity <= 1e-12
    logger.info(f"Lipschitz battery: worst ratio {worst_ratio:.12g}, passed={passed}")
    return LipschitzReport(
        pairs=per_config * len(configs),
        worst_ratio=worst_ratio,
        worst_convexity_excess=float(worst_convexity),
        passed=passed,
    )


def subgradient_battery(
    points: int,
    stream: StreamId | int | None,
    *,
    n_list=(2, 5, 10),
    d: int = 1,
    atoms: int = 10,
    step: float = 1e-5,
    tolerance: float = 1e-3,
) -> SubgradientReport:
    """Finite-difference check of sum_i |grad_i F_n|^2 <= 1/n at random points."""
    gen = as_stream(stream).generator()
    worst = -np.inf
    per_n = max(1, points // len(n_list))
    for n in n_list:
        mu = uniform_measure(gen.normal(size=(atoms, d)))
        for _ in range(per_n):
            x = gen.normal(size=(n, d))
            total = float((subgradient_norms(mu, x, step) ** 2).sum())
            worst = max(worst, total - 1.0 / n)
    passed = worst <= tolerance
    logger.info(f"Subgradient battery: worst excess {worst:.3g} over 1/n, passed={passed}")
    return SubgradientReport(points=per_n * len(n_list), worst_excess=float(worst), tolerance=tolerance, passed=passed)
