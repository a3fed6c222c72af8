"""Pydantic models for experiment reports, configs and run summaries."""

from __future__ import annotations

from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class DualCheck(BaseModel):
    """One evaluation of an exponential-moment dual inequality."""

    lhs: float = Field(description="Log of the left-hand exponential moment")
    rhs: float = Field(description="Log of the right-hand side")
    log_ratio: float = Field(description="lhs - rhs; positive means the inequality fails")
    satisfied: bool = Field(description="Whether exp(log_ratio) <= 1 + tolerance")


class DualBatteryReport(BaseModel):
    """Worst case of a dual inequality over a random function family."""

    form: Literal["bg", "tau"] = Field(description="Single inf-convolution or (tau) form")
    family: str = Field(description="Test function family (smooth, spike, mixed)")
    scale: float = Field(description="Inf-convolution scale 1/C")
    count: int = Field(description="Number of functions tested")
    worst_ratio: float = Field(description="Largest lhs/rhs ratio observed")
    violations: int = Field(description="Functions with ratio > 1 + 1e-9")
    violating_f: list[float] | None = Field(
        default=None, description="Values of the first violating function, if any"
    )
    passed: bool = Field(description="True when no function violates")


class PoincareReport(BaseModel):
    """Spectral gap of a weighted neighbor graph."""

    constant: float = Field(description="Poincare constant 1/lambda_2")
    eigenvalue: float | None = Field(default=None, description="Smallest nonzero eigenvalue")
    size: int = Field(description="Support size")
    extremal: list[float] = Field(description="Eigenfunction attaining the constant")


class SmallTReport(BaseModel):
    """Second-order expansion of the dual functional as t -> 0."""

    t_values: list[float] = Field(description="Scales at which D(t) was computed")
    d_values: list[float] = Field(description="Normalized dual defect D(t)")
    fitted_limit: float = Field(description="Polynomial extrapolation of D(t) to t = 0")
    predicted_limit: float = Field(description="Var/2 - (C/4) descent energy")
    spread: float = Field(description="Spread of the extrapolation over sub-windows")
    stable: bool = Field(description="Whether the extrapolation is stable within rtol")
    variance: float = Field(description="Var_mu(f)")
    energy: float = Field(description="Grid Dirichlet energy of f")
    constant: float = Field(description="Transport constant C = 1/scale")
    residual: float = Field(description="(C/2) energy - Var; nonnegative when consistent")


class TailEstimate(BaseModel):
    """Monte Carlo estimate of P(S_n > t), or P(S_n >= t) for closed events."""

    n: int = Field(description="Sample size of the empirical measure")
    t: float = Field(description="Threshold")
    trials: int = Field(description="Number of independent trials")
    hits: int = Field(description="Trials whose statistic falls in the event")
    p_hat: float = Field(description="hits / trials")
    ci_low: float = Field(description="Lower Wilson bound")
    ci_high: float = Field(description="Upper Wilson bound")
    rate_hat: float = Field(description="-(1/n) log p_hat, or log(trials)/n when censored")
    censored: bool = Field(description="True when no trial hit the threshold")


class ExactTail(BaseModel):
    """Tail probability computed by enumerating empirical types."""

    n: int = Field(description="Sample size")
    t: float = Field(description="Threshold")
    probability: float = Field(description="P(S_n >= t)")
    log_probability: float = Field(description="log P(S_n >= t)")
    rate: float | None = Field(default=None, description="-(1/n) log P, None if P = 0")


class MeanEstimate(BaseModel):
    """Mean of the empirical transport statistic at one n."""

    n: int = Field(description="Sample size")
    mean: float = Field(description="Sample mean of S_n")
    std_error: float = Field(description="Standard error of the mean")
    ci_low: float = Field(description="Lower 95% normal bound")
    ci_high: float = Field(description="Upper 95% normal bound")
    exact: float | None = Field(default=None, description="Exact E[S_n] when enumerable")


class DSCheck(BaseModel):
    """Exact check of the finite-n entropy lower bound for one event."""

    n: int = Field(description="Product size")
    t: float = Field(description="Threshold defining the event")
    cost: str = Field(description="Cost string")
    entropy: float = Field(description="H(nu|mu)")
    mu_event: float = Field(description="mu^n(A)")
    nu_event: float = Field(description="nu^n(A)")
    lhs: float = Field(description="log mu^n(A) / n + H")
    rhs: float = Field(description="Lower bound computed from nu^n(A)")
    slack: float = Field(description="lhs - rhs")
    passed: bool = Field(description="slack >= -1e-12")


class SanovReport(BaseModel):
    """Battery of entropy lower-bound checks."""

    checks: list[DSCheck] = Field(description="Individual checks")
    worst_slack: float = Field(description="Smallest slack observed")
    failures: int = Field(description="Checks with negative slack")
    passed: bool = Field(description="True when no check fails")


class ProfileConstants(BaseModel):
    """Constants of a profile 1 - b exp(-a (r - r0)^exponent)."""

    a: float = Field(description="Decay rate")
    b: float = Field(description="Prefactor")
    r0: float = Field(default=0.0, description="Offset below which the bound is trivial")
    exponent: float = Field(default=2.0, description="Power of (r - r0)")


class ConcentrationProfile(BaseModel):
    """Observed versus guaranteed enlargement mass over a radius grid."""

    n: int = Field(description="Product size")
    family: str = Field(description="Set family tested")
    enlargement: str = Field(description="Enlargement rule")
    method: Literal["exact", "monte_carlo"] = Field(description="How masses were obtained")
    r_values: list[float] = Field(description="Radius grid")
    observed: list[float] = Field(description="Worst enlargement mass at each radius")
    guaranteed: list[float] = Field(description="Profile lower bound at each radius")
    ci_low: list[float] | None = Field(default=None, description="Lower Wilson bound of the mass")
    ci_high: list[float] | None = Field(default=None, description="Upper Wilson bound of the mass")
    tails: list[TailEstimate] | None = Field(default=None, description="Per-radius tail estimates")
    median: float | None = Field(default=None, description="Median of the statistic")
    constants: ProfileConstants | None = Field(default=None, description="Constants of the bound tested")
    fitted: ProfileConstants | None = Field(default=None, description="Constants fitted to the tail")
    sets_tested: int = Field(description="Number of candidate sets")
    violations: int = Field(description="(set, radius) pairs below the guarantee")
    passed: bool = Field(description="True when there are no violations")


class ChainCheck(BaseModel):
    """One link of a constant chain between inequalities."""

    name: str = Field(description="Link name")
    factor: float = Field(description="Constant implied by the link")
    max_ratio: float = Field(description="Observed sup of cost/entropy")
    passed: bool = Field(description="Whether the observed ratio respects the factor")
    profile: ConcentrationProfile | None = Field(
        default=None, description="Exact profile used by the link, if any"
    )


class TwoLevelReport(BaseModel):
    """Two-level cost lemma audit plus both directions of its equivalence."""

    p: float = Field(description="Exponent of the two-level cost")
    n: int = Field(description="Sample size of the Monte Carlo profile")
    audit: dict[str, Any] = Field(description="alpha_p lemma audit")
    profile: ConcentrationProfile = Field(description="Monte Carlo concentration profile")
    certified_constant: float = Field(description="Sup cost/entropy over the minimizer family")
    forward: ChainCheck | None = Field(default=None, description="Profile to transport link")
    converse: ChainCheck | None = Field(default=None, description="Transport to profile link")
    passed: bool = Field(description="Audit and both links hold")


class LipschitzReport(BaseModel):
    pairs: int = Field(description="Random pairs tested")
    worst_ratio: float = Field(description="Max of sqrt(n) |F(x) - F(y)| / rho(x, y)")
    worst_convexity_excess: float = Field(description="Max of T(Lx, Ly) - mean rho^2")
    passed: bool = Field(description="Ratio <= 1 + 1e-9 and no convexity excess")


class SubgradientReport(BaseModel):
    points: int = Field(description="Random points tested")
    worst_excess: float = Field(description="Max of sum |grad_i F|^2 - 1/n")
    tolerance: float = Field(description="Allowed excess")
    passed: bool = Field(description="worst_excess <= tolerance")


class EquivalenceConfig(BaseModel):
    """Knobs of the equivalence round-trip experiment."""

    cost: str = Field(default="power:p=1", description="Cost string")
    seed: int = Field(default=0, description="Root seed")
    slack: float = Field(default=0.3, description="Relative tolerance of the agreement")
    exact_n: int = Field(default=10, description="Product size of the exact profile check")
    set_count: int = Field(default=1000, description="Random sets in the exact profile check")
    u_values: list[float] = Field(
        default=[0.1, 0.2, 0.3], description="Deviation levels for tail rates"
    )
    n_list: list[int] = Field(default=[10, 20, 40, 80], description="Sample sizes for tail rates")
    trials: int = Field(default=100_000, description="Monte Carlo trials when enumeration is too large")
    r_min: float = Field(default=0.0, description="Smallest radius of the profile grid")
    r_max: float = Field(default=6.0, description="Largest radius of the profile grid")
    r_step: float = Field(default=0.25, description="Radius grid step")

    def r_grid(self) -> np.ndarray:
        count = int(round((self.r_max - self.r_min) / self.r_step)) + 1
        return self.r_min + self.r_step * np.arange(max(count, 1))


class EquivalenceReport(BaseModel):
    """Constants obtained in each direction and their agreement."""

    direction: str = Field(description="t2_to_concentration, concentration_to_t2 or both")
    cost: str = Field(description="Cost string")
    slack: float = Field(description="Relative tolerance")
    transport_constant: float | None = Field(default=None, description="Certified transport constant")
    profile: ConcentrationProfile | None = Field(default=None, description="Exact Marton profile check")
    profile_violations: int | None = Field(default=None, description="Violations of the Marton profile")
    concentration_constant: float | None = Field(
        default=None, description="Constant max_u u^q / r_inf(u) from tail rates"
    )
    extrapolated_rates: dict[str, float] | None = Field(
        default=None, description="Extrapolated tail rate per deviation level"
    )
    worst_minimizer_ratio: float | None = Field(
        default=None, description="Max S^q / (C H) over the minimizer family"
    )
    minimizer_check: bool | None = Field(default=None, description="worst ratio <= 1 + slack")
    relative_gap: float | None = Field(default=None, description="|C_T - C_conc| / max")
    agreement: bool | None = Field(default=None, description="relative_gap <= slack")
    passed: bool = Field(default=False, description="All performed checks hold")


Command = Literal[
    "transport",
    "rate",
    "sanov-check",
    "concentrate",
    "dual-check",
    "equivalence",
    "two-level",
    "report",
]


class ExperimentConfig(BaseModel):
    """One experiment: a subcommand, its inputs and parameters."""

    command: Command = Field(description="Subcommand to run")
    inputs: list[str] = Field(default_factory=list, description="Input file paths")
    parameters: dict[str, Any] = Field(default_factory=dict, description="Subcommand parameters")
    seed: int = Field(default=0, ge=0, lt=2**64, description="Root seed")
    output_dir: str = Field(default="runs/latest", description="Directory owned by this run")


class CheckResult(BaseModel):
    """Pass/fail of one asserted invariant."""

    name: str = Field(description="Check name")
    passed: bool = Field(description="Whether the check holds")
    measured: float | None = Field(default=None, description="Measured value")
    threshold: float | None = Field(default=None, description="Value it is compared against")


class RunSummary(BaseModel):
    """Machine-readable summary written as summary.json."""

    command: str = Field(description="Subcommand that produced the run")
    status: Literal["pass", "fail", "error"] = Field(description="Overall outcome")
    checks: list[CheckResult] = Field(default_factory=list, description="Asserted checks")
    results: dict[str, Any] = Field(default_factory=dict, description="Command-specific payload")
    error: str | None = Field(default=None, description="Error message when status is error")
    metadata: dict[str, Any] = Field(default_factory=dict, description="Timestamp, version, config hash")

    @property
    def failed_checks(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]


class CommandParameters(BaseModel):
    """Base for per-subcommand parameters; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")


class TransportParameters(CommandParameters):
    cost: str = Field(default="quadratic", description="Cost string")
    write_plan: bool = Field(default=True, description="Also write the plan as CSV (i, j, mass)")


class RateParameters(CommandParameters):
    cost: str = Field(default="quadratic", description="Cost string")
    t_grid: str | list[float] | None = Field(
        default=None, description="Thresholds as a:b:step or a list; default is a geometric grid"
    )
    method: Literal["grid_oracle", "penalty_optimizer"] = Field(
        default="penalty_optimizer", description="Rate solver"
    )
    with_oracle: bool = Field(default=False, description="Report the gap to the grid oracle")


class SanovParameters(CommandParameters):
    count: int = Field(default=100, ge=1, description="Random configurations")
    max_n: int = Field(default=8, ge=1, description="Largest product size")


class ConcentrateParameters(CommandParameters):
    n: int = Field(default=10, ge=1, description="Product size")
    cost: str = Field(default="quadratic", description="Cost string; selects the enlargement")
    family: Literal["random", "sublevel"] = Field(
        default="random", description="random: exact random half-sets; sublevel: Monte Carlo sublevel sets"
    )
    r_grid: str | list[float] = Field(default="0:3:0.25", description="Radii as a:b:step or a list")
    trials: int = Field(default=100_000, ge=1000, description="Monte Carlo trials")
    set_count: int = Field(default=1000, ge=1, description="Random sets for the exact family")
    constant: float | None = Field(
        default=None, gt=0, description="Transport constant whose Marton profile is checked"
    )


class DualParameters(CommandParameters):
    cost: str = Field(default="quadratic", description="Cost string")
    scale: float | None = Field(default=None, gt=0, description="Inf-convolution scale")
    constant: float | None = Field(default=None, gt=0, description="Use scale = 1/constant")
    count: int = Field(default=1000, ge=1, description="Random test functions")
    family: Literal["smooth", "spike", "mixed"] = Field(default="smooth", description="Test function family")
    tau: bool = Field(default=False, description="Check the (tau) form")
    poincare: bool = Field(default=False, description="Also report the Poincare constant")


class EquivalenceParameters(CommandParameters):
    direction: Literal["t2_to_concentration", "concentration_to_t2", "both"] = Field(
        default="both", description="Which directions to run"
    )
    cost: str = Field(default="power:p=1", description="Cost string")
    slack: float = Field(default=0.3, gt=0, description="Relative tolerance")
    exact_n: int = Field(default=10, ge=1, description="Product size of the exact profile check")
    set_count: int = Field(default=1000, ge=1, description="Random sets in the exact check")
    n_list: list[int] = Field(default=[10, 20, 40, 80], description="Sample sizes for tail rates")
    u_values: list[float] = Field(default=[0.1, 0.2, 0.3], description="Deviation levels")
    trials: int = Field(default=100_000, ge=1, description="Monte Carlo trials")


class TwoLevelParameters(CommandParameters):
    p: float = Field(default=1.5, ge=1.0, le=2.0, description="Exponent of the two-level cost")
    n: int = Field(default=50, ge=1, description="Sample size of the Monte Carlo profile")
    r_grid: str | list[float] = Field(default="0:2:0.25", description="Radii")
    trials: int = Field(default=20_000, ge=1000, description="Monte Carlo trials")
    exact_n: int = Field(default=6, ge=1, description="Product size of the exact converse check")
    set_count: int = Field(default=200, ge=1, description="Random sets in the converse check")
