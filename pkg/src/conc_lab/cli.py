"""Command-line entry point.

Every subcommand is an experiment: it reads its inputs, runs, and writes
CSV tables, plot data and a `summary.json` into its own output directory.
Exit codes: 0 all checks pass, 1 a check failed, 2 invalid config,
3 missing input.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable

import numpy as np
from pydantic import ValidationError

from .bootstrap import configure_logging, worker_count
from .concentration import (
    Enlargement,
    SetFamily,
    equivalence_experiment,
    exact_product_concentration,
    marton_profile,
    mc_concentration_profile,
    two_level_experiment,
)
from .costs import CostKind, CostSpec
from .errors import CheckFailed, ConcLabError, ConfigInvalid
from .functionals import DUAL_TOLERANCE, GradientKind, GradientModel, dual_battery, poincare_report
from .measures import DiscreteMeasure, make_measure
from .models import (
    CheckResult,
    CommandParameters,
    ConcentrateParameters,
    ConcentrationProfile,
    DualParameters,
    EquivalenceConfig,
    EquivalenceParameters,
    ExperimentConfig,
    ProfileConstants,
    RateParameters,
    RunSummary,
    SanovParameters,
    TransportParameters,
    TwoLevelParameters,
)
from .parser import as_grid, load_config, read_measure
from .rates import best_constant, default_thresholds, rate_curve, sanov_battery
from .report import REPORT_HEADER, build_report, csv_rows, render_markdown
from .store import RunStore, open_run, write_error_summary
from .transport import check_plan, solve_general

logger = logging.getLogger(__name__)

PLAN_TOLERANCE = 1e-9
DS_TOLERANCE = 1e-12

Outcome = tuple[list[CheckResult], dict[str, Any]]
Handler = Callable[[ExperimentConfig, RunStore], Outcome]

COMMANDS: dict[str, Handler] = {}


def command(name: str) -> Callable[[Handler], Handler]:
    def register(handler: Handler) -> Handler:
        COMMANDS[name] = handler
        return handler

    return register


def _parameters(config: ExperimentConfig, model: type[CommandParameters]) -> Any:
    try:
        return model.model_validate(config.parameters)
    except ValidationError as e:
        raise ConfigInvalid(f"invalid parameters for {config.command}: {e}") from e


def _measures(config: ExperimentConfig, count: int) -> list[DiscreteMeasure]:
    if len(config.inputs) < count:
        raise ConfigInvalid(f"{config.command} needs {count} measure file(s), got {len(config.inputs)}")
    return [read_measure(path) for path in config.inputs[:count]]


def _measure_or_two_point(config: ExperimentConfig) -> DiscreteMeasure:
    if config.inputs:
        return read_measure(config.inputs[0])
    logger.info("No measure given; using uniform {0, 1}")
    return make_measure([[0.0], [1.0]], [0.5, 0.5])


def _write_profile(store: RunStore, name: str, profile: ConcentrationProfile) -> None:
    ci_low = profile.ci_low or [None] * len(profile.r_values)
    ci_high = profile.ci_high or [None] * len(profile.r_values)
    store.write_csv(
        f"{name}.csv",
        ["r", "observed", "guaranteed", "ci_low", "ci_high"],
        zip(profile.r_values, profile.observed, profile.guaranteed, ci_low, ci_high),
    )
    store.write_plot(f"{name}_observed", profile.r_values, profile.observed)
    store.write_plot(f"{name}_guaranteed", profile.r_values, profile.guaranteed)


def _profile_check(name: str, profile: ConcentrationProfile) -> CheckResult:
    return CheckResult(name=name, passed=profile.violations == 0, measured=profile.violations, threshold=0)


@command("transport")
def run_transport(config: ExperimentConfig, store: RunStore) -> Outcome:
    params = _parameters(config, TransportParameters)
    nu1, nu2 = _measures(config, 2)
    cost = CostSpec.parse(params.cost)
    logger.info(f"Solving transport: {nu1.size}x{nu2.size} atoms, cost {cost}")
    plan = solve_general(nu1, nu2, cost)
    audit = check_plan(plan, nu1, nu2, cost)
    if params.write_plan:
        store.write_csv("plan.csv", ["i", "j", "mass"], plan.entries())

    marginal = max(audit["row_error"], audit["col_error"])
    checks = [
        CheckResult(name="plan_marginals", passed=marginal <= PLAN_TOLERANCE, measured=marginal, threshold=PLAN_TOLERANCE)
    ]
    if "duality_gap" in audit:
        gap_tolerance = PLAN_TOLERANCE * max(1.0, abs(plan.total_cost))
        checks.append(
            CheckResult(
                name="duality_gap",
                passed=audit["duality_gap"] <= gap_tolerance,
                measured=audit["duality_gap"],
                threshold=gap_tolerance,
            )
        )
    results = {
        "cost": plan.total_cost,
        "plan_nnz": plan.nnz,
        "certificate": plan.certificate.value,
        "audit": audit,
    }
    return checks, results


@command("rate")
def run_rate(config: ExperimentConfig, store: RunStore) -> Outcome:
    params = _parameters(config, RateParameters)
    (mu,) = _measures(config, 1)
    cost = CostSpec.parse(params.cost)
    thresholds = default_thresholds(mu, cost) if params.t_grid is None else as_grid(params.t_grid)
    curve = rate_curve(
        mu, cost, thresholds, params.method, stream=config.seed, with_oracle=params.with_oracle
    )
    gaps = curve.gap_to_oracle if curve.gap_to_oracle is not None else np.full(curve.thresholds.size, np.nan)
    store.write_csv(
        "rate_curve.csv",
        ["t", "rate", "statistic", "gap_to_oracle"],
        zip(curve.thresholds, curve.rates, curve.statistics, gaps),
    )
    finite = np.isfinite(curve.rates)
    store.write_plot("rate", curve.thresholds[finite], curve.rates[finite])

    increments = np.diff(curve.rates[finite])
    worst_drop = float(-increments.min()) if increments.size else 0.0
    checks = [CheckResult(name="rate_nondecreasing", passed=worst_drop <= 0.0, measured=worst_drop, threshold=0.0)]
    results = {
        "cost": str(cost),
        "method": curve.method.value,
        "thresholds": curve.thresholds,
        "rates": curve.rates,
        "best_constant": best_constant(mu, cost, curve),
        "max_gap_to_oracle": float(np.nanmax(gaps)) if np.any(np.isfinite(gaps)) else None,
    }
    return checks, results


@command("sanov-check")
def run_sanov(config: ExperimentConfig, store: RunStore) -> Outcome:
    params = _parameters(config, SanovParameters)
    report = sanov_battery(count=params.count, stream=config.seed, max_n=params.max_n)
    header = ["n", "t", "cost", "entropy", "mu_event", "nu_event", "lhs", "rhs", "slack", "passed"]
    store.write_csv("sanov_checks.csv", header, ([getattr(c, h) for h in header] for c in report.checks))
    checks = [
        CheckResult(
            name="ds_lower_bound", passed=report.passed, measured=report.worst_slack, threshold=-DS_TOLERANCE
        )
    ]
    results = {"count": len(report.checks), "worst_slack": report.worst_slack, "failures": report.failures}
    return checks, results


def _enlargement_for(cost: CostSpec) -> tuple[Enlargement, float]:
    if cost.kind is CostKind.QUADRATIC:
        return Enlargement.RHO2, 2.0
    if cost.kind is CostKind.POWER:
        return Enlargement.RHO_P, cost.p
    if cost.kind is CostKind.ALPHA:
        return Enlargement.TWO_LEVEL, cost.p
    return Enlargement.SG, 1.0


def _guarantee(cost: CostSpec, n: int, constant: float | None) -> ProfileConstants | None:
    """Profile implied by a transport constant, when one is known for this cost."""
    if constant is None:
        return None
    if cost.kind is CostKind.QUADRATIC or (cost.kind is CostKind.POWER and cost.p == 2.0):
        return marton_profile(constant)
    if cost.kind is CostKind.POWER and cost.p == 1.0:
        # T1 tensorizes with constant n * C on the l1 product metric
        return marton_profile(n * constant)
    if cost.kind is CostKind.ALPHA:
        return ProfileConstants(a=1.0 / (2.0 * constant), b=2.0, r0=0.0, exponent=1.0)
    return None


@command("concentrate")
def run_concentrate(config: ExperimentConfig, store: RunStore) -> Outcome:
    params = _parameters(config, ConcentrateParameters)
    (mu,) = _measures(config, 1)
    cost = CostSpec.parse(params.cost)
    r_values = as_grid(params.r_grid)

    if params.family == "random":
        enlargement, p = _enlargement_for(cost)
        constants = _guarantee(cost, params.n, params.constant)
        profile = exact_product_concentration(
            mu,
            params.n,
            enlargement,
            SetFamily.RANDOM_HALF,
            r_values,
            constants=constants,
            count=params.set_count,
            stream=config.seed,
            p=p,
        )
    else:
        quadratic = cost.kind is CostKind.QUADRATIC
        constants = marton_profile(params.constant) if params.constant and quadratic else None
        profile = mc_concentration_profile(
            mu, params.n, cost, r_values, params.trials, config.seed, constants=constants
        )

    _write_profile(store, "profile", profile)
    checks = [_profile_check("profile_violations", profile)] if constants else []
    results = {"profile": profile.model_dump(exclude={"tails"}), "fitted": profile.fitted}
    return checks, results


@command("dual-check")
def run_dual(config: ExperimentConfig, store: RunStore) -> Outcome:
    params = _parameters(config, DualParameters)
    (mu,) = _measures(config, 1)
    cost = CostSpec.parse(params.cost)
    if params.scale is None and params.constant is None:
        raise ConfigInvalid("dual-check needs a scale or a constant")
    scale = params.scale if params.scale is not None else 1.0 / params.constant

    report = dual_battery(mu, cost, scale, params.count, config.seed, kind=params.family, tau=params.tau)
    checks = [
        CheckResult(
            name=f"{report.form}_dual",
            passed=report.passed,
            measured=report.worst_ratio,
            threshold=1.0 + DUAL_TOLERANCE,
        )
    ]
    results: dict[str, Any] = {"dual": report}
    if params.poincare:
        kind = GradientKind.GRID_1D if mu.is_sorted_line else GradientKind.GRAPH
        poincare = poincare_report(mu, GradientModel(kind))
        results["poincare"] = poincare.model_dump(exclude={"extremal"})
        if mu.dim == 1:
            store.write_plot("poincare_extremal", mu.points[:, 0], poincare.extremal)
    return checks, results


@command("equivalence")
def run_equivalence(config: ExperimentConfig, store: RunStore) -> Outcome:
    params = _parameters(config, EquivalenceParameters)
    mu = _measure_or_two_point(config)
    experiment = EquivalenceConfig(seed=config.seed, **params.model_dump(exclude={"direction"}))
    report = equivalence_experiment(mu, params.direction, experiment)

    checks = []
    if report.profile is not None:
        _write_profile(store, "marton_profile", report.profile)
        checks.append(_profile_check("marton_profile", report.profile))
    if report.minimizer_check is not None:
        checks.append(
            CheckResult(
                name="minimizer_ratio",
                passed=report.minimizer_check,
                measured=report.worst_minimizer_ratio,
                threshold=1.0 + report.slack,
            )
        )
    if report.agreement is not None:
        checks.append(
            CheckResult(
                name="constant_agreement",
                passed=report.agreement,
                measured=report.relative_gap,
                threshold=report.slack,
            )
        )
    return checks, {"equivalence": report.model_dump(exclude={"profile"})}


@command("two-level")
def run_two_level(config: ExperimentConfig, store: RunStore) -> Outcome:
    params = _parameters(config, TwoLevelParameters)
    mu = _measure_or_two_point(config)
    report = two_level_experiment(
        mu,
        params.p,
        params.n,
        as_grid(params.r_grid),
        params.trials,
        config.seed,
        exact_n=params.exact_n,
        set_count=params.set_count,
    )
    _write_profile(store, "profile", report.profile)

    checks = [CheckResult(name="alpha_lemmas", passed=bool(report.audit["passed"]))]
    for link in (report.forward, report.converse):
        if link is not None:
            checks.append(
                CheckResult(name=link.name, passed=link.passed, measured=link.max_ratio, threshold=link.factor)
            )
    results = {
        "p": report.p,
        "certified_constant": report.certified_constant,
        "fitted": report.profile.fitted,
        "audit": report.audit,
        "forward": report.forward,
        "converse": report.converse.model_dump(exclude={"profile"}) if report.converse else None,
    }
    return checks, results


@command("report")
def run_report(config: ExperimentConfig, store: RunStore) -> Outcome:
    report = build_report(config.inputs)
    store.write_csv("report.csv", REPORT_HEADER, csv_rows(report))
    store.write_text("report.md", render_markdown(report))
    failed = [row.check for row in report.failed]
    checks = [CheckResult(name="all_checks_pass", passed=report.passed, measured=len(failed), threshold=0)]
    return checks, {"runs": len(config.inputs), "checks": len(report.rows), "failed": failed}


def run(config: ExperimentConfig) -> int:
    """Run one experiment into its output directory and return the exit code."""
    handler = COMMANDS[config.command]
    logger.info(f"Running {config.command} into {config.output_dir}")
    try:
        with open_run(config.output_dir) as store:
            checks, results = handler(config, store)
            status = "pass" if all(c.passed for c in checks) else "fail"
            summary = RunSummary(command=config.command, status=status, checks=checks, results=results)
            store.write_summary(summary, config)
    except ConcLabError as e:
        logger.error(f"{config.command} failed: {e}")
        write_error_summary(config.output_dir, config.command, str(e), config)
        return e.exit_code

    if summary.failed_checks:
        logger.error(f"Failed checks: {', '.join(summary.failed_checks)}")
        return CheckFailed.exit_code
    logger.info(f"{config.command}: {len(checks)} checks pass")
    return 0


def run_many(configs: list[ExperimentConfig]) -> list[int]:
    """Run independent experiments concurrently; each owns its output directory."""
    targets = [Path(c.output_dir).resolve() for c in configs]
    if len(set(targets)) != len(targets):
        raise ConfigInvalid("experiments run together need distinct output directories")
    with ThreadPoolExecutor(max_workers=worker_count(len(configs))) as pool:
        return list(pool.map(run, configs))


def _int_list(text: str) -> list[int]:
    return [int(v) for v in as_grid(text)]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in as_grid(text)]


def _bool(text: str) -> bool:
    return text.strip().lower() in {"1", "true", "yes", "y", "on"}


# (flag, parameter, type, help) per subcommand; None type means a string flag
FLAGS: dict[str, list[tuple[str, str, Any, str]]] = {
    "transport": [
        ("--cost", "cost", None, "quadratic | power:p=<f> | alpha:p=<f> | sg"),
        ("--write-plan", "write_plan", _bool, "Write plan.csv (default true)"),
    ],
    "rate": [
        ("--cost", "cost", None, "Cost string"),
        ("--t-grid", "t_grid", None, "Thresholds as a:b:step or v1,v2,..."),
        ("--method", "method", None, "grid_oracle | penalty_optimizer"),
        ("--with-oracle", "with_oracle", _bool, "Report the gap to the grid oracle"),
    ],
    "sanov-check": [
        ("--count", "count", int, "Random configurations"),
        ("--max-n", "max_n", int, "Largest product size"),
    ],
    "concentrate": [
        ("--n", "n", int, "Product size"),
        ("--cost", "cost", None, "Cost string"),
        ("--family", "family", None, "random | sublevel"),
        ("--r-grid", "r_grid", None, "Radii as a:b:step"),
        ("--trials", "trials", int, "Monte Carlo trials"),
        ("--set-count", "set_count", int, "Random sets"),
        ("--constant", "constant", float, "Transport constant to check"),
    ],
    "dual-check": [
        ("--cost", "cost", None, "Cost string"),
        ("--scale", "scale", float, "Inf-convolution scale"),
        ("--constant", "constant", float, "Use scale = 1/constant"),
        ("--count", "count", int, "Random test functions"),
        ("--family", "family", None, "smooth | spike | mixed"),
        ("--tau", "tau", _bool, "Check the (tau) form"),
        ("--poincare", "poincare", _bool, "Also report the Poincare constant"),
    ],
    "equivalence": [
        ("--direction", "direction", None, "t2_to_concentration | concentration_to_t2 | both"),
        ("--cost", "cost", None, "Cost string"),
        ("--slack", "slack", float, "Relative tolerance"),
        ("--exact-n", "exact_n", int, "Product size of the exact check"),
        ("--set-count", "set_count", int, "Random sets"),
        ("--n-list", "n_list", _int_list, "Sample sizes, e.g. 10,20,40,80"),
        ("--u-values", "u_values", _float_list, "Deviation levels"),
        ("--trials", "trials", int, "Monte Carlo trials"),
    ],
    "two-level": [
        ("--p", "p", float, "Exponent in [1, 2]"),
        ("--n", "n", int, "Sample size"),
        ("--r-grid", "r_grid", None, "Radii as a:b:step"),
        ("--trials", "trials", int, "Monte Carlo trials"),
        ("--exact-n", "exact_n", int, "Product size of the converse check"),
        ("--set-count", "set_count", int, "Random sets"),
    ],
    "report": [],
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conc-lab", description="Transportation-cost inequalities and concentration experiments"
    )
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    subparsers = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("inputs", nargs="*", help="Measure CSVs (run directories for report)")
    common.add_argument("--measure", action="append", default=[], help="Measure CSV; may repeat")
    common.add_argument("--config", type=Path, help="Experiment YAML file; flags override it")
    common.add_argument("--seed", type=int, help="Root seed")
    common.add_argument("--output-dir", help="Run directory")

    for name, flags in FLAGS.items():
        sub = subparsers.add_parser(name, parents=[common], help=f"Run the {name} experiment")
        for flag, dest, kind, text in flags:
            sub.add_argument(flag, dest=dest, type=kind, default=None, help=text)

    batch = subparsers.add_parser("run", help="Run experiment YAML files concurrently")
    batch.add_argument("configs", nargs="+", type=Path, help="Experiment YAML files")
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    parameters = {}
    for _, dest, _, _ in FLAGS[args.command]:
        value = getattr(args, dest)
        if value is not None:
            parameters[dest] = value
    return {
        "command": args.command,
        "inputs": list(args.measure) + list(args.inputs),
        "seed": args.seed,
        "output_dir": args.output_dir,
        "parameters": parameters,
    }


def main(argv: list[str] | None = None) -> int:
    """Main entry point for the conc-lab CLI."""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        if args.command == "run":
            codes = run_many([load_config(path) for path in args.configs])
            return max(codes, default=0)
        return run(load_config(args.config, _overrides(args)))
    except ConcLabError as e:
        logger.error(str(e))
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
