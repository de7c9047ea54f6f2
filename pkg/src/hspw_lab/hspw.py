"""Both sides of the weighted Hardy inequality, its sharp constant, and a
search for near-extremal test functions.

The inequality checked is

    || u/d ||_{L_p(mu_alpha)} <= K(p) || grad u ||_{L_p(mu_alpha)},
    K(p) = p / (p + alpha - n),   p > n - alpha.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .calculus import NormValue, apply_hardy_operator, gradient_lp_norm, weighted_lp_norm
from .domain import Domain, Interval
from .errors import (
    BudgetExhausted,
    DegenerateInput,
    InfeasibleFamily,
    NoConvergence,
    OutOfRange,
    RhsDivergent,
)
from .fields import ScalarField, power_profile_field
from .quadrature import QuadratureConfig
from .search import restarted_nelder_mead

__all__ = [
    "hardy_constant",
    "HspwReport",
    "verify_hspw",
    "TrialFamily",
    "power_family",
    "half_line_domain",
    "SharpnessResult",
    "sharpness_search",
    "hardy_ratio",
    "tol_slack",
    "MIN_EXPONENT_GAP",
    "SLACK_FACTOR",
]

# p must clear n - alpha by this much; closer, K blows up and the
# integrands sit on the edge of integrability
MIN_EXPONENT_GAP = 1e-3
SLACK_FACTOR = 10.0

CSV_COLUMNS = ("p", "alpha", "n", "lhs", "rhs", "K", "ratio", "slack", "pass")


def hardy_constant(p: float, alpha: float, n: int) -> float:
    """``K(p; alpha, n) = p / (p + alpha - n)`` for ``p > n - alpha``."""
    if not alpha < n:
        raise OutOfRange(f"need alpha < n, got alpha = {alpha}, n = {n}")
    if not p > n - alpha:
        raise OutOfRange(f"need p > n - alpha = {n - alpha}, got p = {p}")
    return p / (p + alpha - n)


def tol_slack(*norms: NormValue, factor: float = SLACK_FACTOR) -> float:
    """Relative slack: ``factor`` times the summed relative error estimates."""
    return float(factor * sum(v.rel_error for v in norms))


@dataclass(frozen=True)
class HspwReport:
    p: float
    alpha: float
    n: int
    lhs: NormValue
    rhs: NormValue
    K: float
    ratio: float
    slack: float
    tol_slack: float
    passed: bool
    vacuous: bool = False
    label: str = ""

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "alpha": self.alpha,
            "n": self.n,
            "lhs": self.lhs.to_dict(),
            "rhs": self.rhs.to_dict(),
            "K": self.K,
            "ratio": self.ratio,
            "slack": self.slack,
            "tol_slack": self.tol_slack,
            "pass": self.passed,
            "vacuous": self.vacuous,
            "label": self.label,
        }

    def csv_row(self) -> dict:
        return {
            "p": self.p,
            "alpha": self.alpha,
            "n": self.n,
            "lhs": self.lhs.value,
            "rhs": self.rhs.value,
            "K": self.K,
            "ratio": self.ratio,
            "slack": self.slack,
            "pass": self.passed,
        }


def _check_exponents(p, alpha, n):
    if not alpha < n:
        raise OutOfRange(f"need alpha < n, got alpha = {alpha}, n = {n}")
    if p < n - alpha + MIN_EXPONENT_GAP:
        raise OutOfRange(
            f"p = {p} is within {MIN_EXPONENT_GAP} of n - alpha = {n - alpha}; "
            "the verifier excludes that sliver"
        )


def verify_hspw(u: ScalarField, dom: Domain, alpha: float, p: float,
                cfg: QuadratureConfig = QuadratureConfig(), label: str = "") -> HspwReport:
    """Evaluate both sides and compare their ratio with ``K(p)``.

    ``u = 0`` gives a vacuous (passing) report with ``ratio = nan``.
    """
    n = dom.n
    _check_exponents(p, alpha, n)
    K = hardy_constant(p, alpha, n)
    rhs = gradient_lp_norm(u, dom, alpha, p, cfg)
    if rhs.divergent_flag:
        raise RhsDivergent(f"gradient of {u.name} is not in L_p(mu_alpha) for p = {p}, alpha = {alpha}")
    lhs = weighted_lp_norm(apply_hardy_operator(u, dom), dom, alpha, p, cfg)
    if rhs.value == 0.0:
        if lhs.value == 0.0:
            return HspwReport(p, alpha, n, lhs, rhs, K, math.nan, math.nan, 0.0, True, True, label)
        raise DegenerateInput("zero gradient norm with a nonzero left side")
    if lhs.divergent_flag:
        # a divergent left side fails outright; its infinite error must not widen the slack
        slack_tol = tol_slack(rhs)
        return HspwReport(p, alpha, n, lhs, rhs, K, math.inf, -math.inf, slack_tol, False, False, label)
    ratio = lhs.value / rhs.value
    slack_tol = tol_slack(lhs, rhs)
    passed = bool(ratio <= K * (1.0 + slack_tol))
    return HspwReport(p, alpha, n, lhs, rhs, K, ratio, K - ratio, slack_tol, passed, False, label)


# -- sharpness -------------------------------------------------------------

@dataclass(frozen=True)
class TrialFamily:
    """Parametrized test functions; ``bounds`` is the parameter box."""

    bounds: Sequence[tuple]
    instantiate: Callable[[np.ndarray], ScalarField]
    description: str = ""


def half_line_domain(max_cutoff: float) -> Interval:
    """``(0, 2 M)``: on the support ``(0, M]`` of the power family ``d(t) = t``."""
    return Interval(0.0, 2.0 * max_cutoff)


def power_family(dom: Domain, beta_range=(0.52, 1.5), cutoff_range=(2.0, 64.0)) -> TrialFamily:
    """``u(x) = g(d(x))`` with ``g(t) = t^beta`` on ``(0, 1]`` decaying linearly
    to zero on ``[1, M]``; parameters ``(beta, M)``."""

    def make(theta):
        beta, M = float(theta[0]), float(theta[1])
        return power_profile_field(dom, beta, M)

    return TrialFamily(
        bounds=[tuple(beta_range), tuple(cutoff_range)],
        instantiate=make,
        description="power profile t^beta with linear cutoff on [1, M]",
    )


@dataclass
class SharpnessResult:
    best_ratio: float
    best_theta: Optional[np.ndarray]
    gap_to_K: float
    K: float
    evaluations: int
    exhausted: bool
    feasible: int
    history: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "best_ratio": self.best_ratio,
            "best_theta": None if self.best_theta is None else [float(v) for v in self.best_theta],
            "gap_to_K": self.gap_to_K,
            "K": self.K,
            "evaluations": self.evaluations,
            "budget_exhausted": self.exhausted,
            "feasible_evaluations": self.feasible,
        }


def hardy_ratio(u, dom, alpha, p, cfg) -> float:
    """``||T u|| / ||grad u||``, or ``nan`` when either side is unusable."""
    try:
        rhs = gradient_lp_norm(u, dom, alpha, p, cfg)
        if rhs.divergent_flag or rhs.value == 0.0:
            return math.nan
        lhs = weighted_lp_norm(apply_hardy_operator(u, dom), dom, alpha, p, cfg)
    except NoConvergence:
        return math.nan
    if lhs.divergent_flag:
        return math.nan
    return lhs.value / rhs.value


def sharpness_search(family: TrialFamily, dom: Domain, alpha: float, p: float,
                     cfg: QuadratureConfig = QuadratureConfig(), search_budget: int = 500,
                     restarts: int = 5, seed: int = 0) -> SharpnessResult:
    """Maximize the Hardy ratio over the family by restarted simplex descent.

    The ratio is scale invariant, so no normalization of ``u`` is needed.  The
    best ratio found is a lower bound for the supremum over all ``u``.
    """
    n = dom.n
    _check_exponents(p, alpha, n)
    K = hardy_constant(p, alpha, n)
    if search_budget < 1:
        raise BudgetExhausted("search budget must allow at least one evaluation")
    feasible = 0

    def objective(theta):
        nonlocal feasible
        r = hardy_ratio(family.instantiate(theta), dom, alpha, p, cfg)
        if math.isnan(r):
            return math.inf
        feasible += 1
        return -r

    res = restarted_nelder_mead(objective, family.bounds, budget=search_budget,
                                restarts=restarts, seed=seed)
    if feasible == 0:
        raise InfeasibleFamily(
            f"all {res.evaluations} trial functions gave a divergent or undefined side"
        )
    best = -res.fun
    return SharpnessResult(best, res.x, K - best, K, res.evaluations, res.exhausted, feasible,
                           history=[(x, -v) for x, v in res.history])
