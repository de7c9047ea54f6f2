"""Dilations ``V_lam u(x) = u(lam x)`` and the scaling of the two functionals

    L_a[u] = ( integral |u|^q d^(-a) )^(1/q),
    R_h[u] = ( integral |grad u|^p d^(-h) )^(1/p)

on ``R^d x R^r_+``.  With ``n = d + r``, a change of variables gives
``L_a[V_lam u] = lam^((a-n)/q) L_a[u]`` and
``R_h[V_lam u] = lam^((p-n+h)/p) R_h[u]``, so a bound ``L <= G R`` uniform
in ``lam`` needs ``(a - n)/q = 1 + (h - n)/p``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .calculus import NormValue, _check_p, _lp, gradient_magnitude, norm_from_integral
from .domain import Box, Domain, HalfSpaceProduct
from .errors import (
    DegenerateInput,
    DimensionTooLarge,
    NonpositiveLambda,
    NoSolution,
    SupportEscapesDomain,
)
from .fields import Factor, ProductField, ScalarField
from .parallel import ordered_map
from .quadrature import IntegralResult, QuadratureConfig

__all__ = [
    "ExponentConfig",
    "DilationReport",
    "ProbeReport",
    "ExponentRelation",
    "functional_L",
    "functional_R",
    "dilate",
    "default_lambda_grid",
    "verify_scaling_laws",
    "exponent_relation",
    "necessity_probe",
    "predicted_slopes",
]

_EPS = np.finfo(float).eps
_MAX_TENSOR_DIM = 3


@dataclass(frozen=True)
class ExponentConfig:
    """Exponents of the two functionals; one of ``p, q, a, h`` may be ``None``
    when it is to be solved for."""

    p: Optional[float]
    q: Optional[float]
    a: Optional[float]
    h: Optional[float]
    n: int
    d: Optional[int] = None
    r: Optional[int] = None

    def __post_init__(self):
        for name in ("p", "q"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v >= 1.0):
                raise ValueError(f"{name} must lie in [1, inf), got {v}")
        for name in ("a", "h"):
            v = getattr(self, name)
            if v is not None and not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
        if self.n < 1:
            raise ValueError("n must be positive")
        if (self.d is None) != (self.r is None):
            raise ValueError("give both d and r or neither")
        if self.d is not None and (self.d < 1 or self.r < 1 or self.d + self.r != self.n):
            raise ValueError("need d, r >= 1 and d + r = n")
        if sum(getattr(self, k) is None for k in ("p", "q", "a", "h")) > 1:
            raise ValueError("at most one of p, q, a, h may be left unknown")

    def with_value(self, name: str, value: float) -> "ExponentConfig":
        vals = {k: getattr(self, k) for k in ("p", "q", "a", "h", "n", "d", "r")}
        vals[name] = value
        return ExponentConfig(**vals)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("p", "q", "a", "h", "n", "d", "r")}


def predicted_slopes(ecfg: ExponentConfig) -> tuple:
    """``((a - n)/q, (p - n + h)/p)``."""
    n = ecfg.n
    return (ecfg.a - n) / ecfg.q, (ecfg.p - n + ecfg.h) / ecfg.p


# -- dilation ---------------------------------------------------------------

def dilate(u: ScalarField, lam: float) -> ScalarField:
    """``x -> u(lam x)``, gradient ``lam (grad u)(lam x)``, support scaled by ``1/lam``.

    Repeated dilations collapse onto the original field, so
    ``dilate(dilate(u, l1), l2)`` evaluates ``u((l1 l2) x)``.
    """
    lam = float(lam)
    if not (lam > 0 and math.isfinite(lam)):
        raise NonpositiveLambda(f"dilation factor must be positive and finite, got {lam}")
    if isinstance(u, ProductField):
        return ProductField([f.dilated(lam) for f in u.factors], name=u.name)
    base = u.meta.get("dilation_base", u)
    total = u.meta.get("dilation", 1.0) * lam
    if total == 1.0:
        return base

    def ev(X):
        return base.evaluate(total * np.asarray(X, dtype=float))

    grad = None
    if base.gradient is not None:
        def grad(X):
            return total * base.gradient(total * np.asarray(X, dtype=float))

    support = None
    if base.support is not None:
        support = Box(tuple(base.support.lo_arr / total), tuple(base.support.hi_arr / total))
    return ScalarField(
        evaluate=ev,
        gradient=grad,
        support=support,
        vanishes_near_boundary=base.vanishes_near_boundary,
        distance_breaks=tuple(b / total for b in base.distance_breaks),
        name=f"V[{total:g}]{base.name}",
        meta={"dilation_base": base, "dilation": total},
    )


# -- factorized quadrature for product fields --------------------------------

_PANELS0 = 16
_NODES = 16


def _factor_integral(g, lo, hi, weight_power=0.0, max_doublings=8) -> tuple:
    """``integral_lo^hi g(s) s^(-weight_power) ds`` by composite Gauss, panel
    count doubled until two results agree to a few ulps."""
    x0, w0 = np.polynomial.legendre.leggauss(_NODES)
    x0, w0 = 0.5 * (x0 + 1.0), 0.5 * w0

    def rule(panels):
        edges = np.linspace(lo, hi, panels + 1)
        h = np.diff(edges)
        s = (edges[:-1, None] + h[:, None] * x0).ravel()
        w = (h[:, None] * w0).ravel()
        vals = g(s)
        if weight_power != 0.0:
            vals = vals * s ** (-weight_power)
        return math.fsum(w * vals), math.fsum(w * np.abs(vals))

    prev, _ = rule(_PANELS0)
    panels = _PANELS0
    for _ in range(max_doublings):
        panels *= 2
        cur, absum = rule(panels)
        err = abs(cur - prev)
        if err <= 64 * _EPS * absum:
            return cur, max(err, 64 * _EPS * absum)
        prev = cur
    return cur, err


def _factorizable(u, dom) -> bool:
    return isinstance(u, ProductField) and isinstance(dom, HalfSpaceProduct) and dom.r == 1


def _check_factor_supports(u: ProductField, dom: HalfSpaceProduct):
    t = dom.truncation
    for i, fac in enumerate(u.factors):
        lo, hi = fac.support
        if lo < t.lo[i] or hi > t.hi[i]:
            raise SupportEscapesDomain(
                f"factor {i} has support [{lo:g}, {hi:g}] outside the truncation [{t.lo[i]:g}, {t.hi[i]:g}]"
            )
    if u.factors[-1].support[0] <= 0.0:
        raise SupportEscapesDomain("the normal factor must vanish near the boundary y = 0")


def _factor_moments(fac: Factor, power: float, weight_power: float, derivative=False):
    lo, hi = fac.support
    if derivative:
        g = lambda s: np.abs(fac.deriv(s)) ** power  # noqa: E731
    else:
        g = lambda s: np.abs(fac(s)) ** power  # noqa: E731
    return _factor_integral(g, lo, hi, weight_power)


def _factorized_L(u: ProductField, dom: HalfSpaceProduct, a: float, q: float) -> IntegralResult:
    _check_factor_supports(u, dom)
    facs = u.factors
    value, rel = 1.0, 0.0
    for i, fac in enumerate(facs):
        w = a if i == len(facs) - 1 else 0.0
        v, e = _factor_moments(fac, q, w)
        value *= v
        rel += e / v if v > 0 else 0.0
    return IntegralResult(value, abs(value) * rel, 0, True, False)


def _factorized_R2(u: ProductField, dom: HalfSpaceProduct, h: float) -> IntegralResult:
    """``integral |grad u|^2 y^(-h)`` as a sum of products of 1-D integrals."""
    _check_factor_supports(u, dom)
    facs = u.factors
    last = len(facs) - 1
    plain = [_factor_moments(f, 2.0, h if i == last else 0.0) for i, f in enumerate(facs)]
    deriv = [_factor_moments(f, 2.0, h if i == last else 0.0, derivative=True) for i, f in enumerate(facs)]
    terms, errs = [], []
    for i in range(len(facs)):
        val = deriv[i][0]
        rel = deriv[i][1] / val if val > 0 else 0.0
        for k in range(len(facs)):
            if k != i:
                val *= plain[k][0]
                rel += plain[k][1] / plain[k][0] if plain[k][0] > 0 else 0.0
        terms.append(val)
        errs.append(abs(val) * rel)
    return IntegralResult(math.fsum(terms), math.fsum(errs), 0, True, False)


def functional_L(u: ScalarField, dom: Domain, a: float, q: float,
                 cfg: QuadratureConfig = QuadratureConfig()) -> NormValue:
    """``( integral |u|^q d^(-a) )^(1/q)``; any real ``a``.

    Product fields on ``R^d x R_+`` are integrated factor by factor, which
    works in any dimension; other fields go through the tensor quadrature
    (``n <= 3``).
    """
    _check_p(q)
    if _factorizable(u, dom):
        return norm_from_integral(_factorized_L(u, dom, a, q), q, a)
    if dom.n > _MAX_TENSOR_DIM:
        raise DimensionTooLarge(f"n = {dom.n} needs a product field on a halfspace product with r = 1")
    return _lp(u, dom, a, q, cfg)


def functional_R(u: ScalarField, dom: Domain, h: float, p: float,
                 cfg: QuadratureConfig = QuadratureConfig()) -> NormValue:
    """``( integral |grad u|^p d^(-h) )^(1/p)``; factorized for product fields when ``p = 2``."""
    _check_p(p)
    if _factorizable(u, dom) and p == 2.0:
        return norm_from_integral(_factorized_R2(u, dom, h), p, h)
    if dom.n > _MAX_TENSOR_DIM:
        raise DimensionTooLarge(
            f"n = {dom.n}: only p = 2 with a product field factorizes the gradient term"
        )
    return _lp(gradient_magnitude(u, dom), dom, h, p, cfg)


# -- scaling experiments ------------------------------------------------------

def default_lambda_grid() -> list:
    """Nine factors log-spaced over ``[1/8, 8]``."""
    return [float(v) for v in 2.0 ** np.linspace(-3.0, 3.0, 9)]


def _check_split(dom: HalfSpaceProduct, ecfg: ExponentConfig):
    if not isinstance(dom, HalfSpaceProduct):
        raise TypeError("dilation experiments need a halfspace_product domain")
    if ecfg.n != dom.n:
        raise ValueError(f"exponent config has n = {ecfg.n}, domain has n = {dom.n}")
    if ecfg.d is not None and (ecfg.d, ecfg.r) != (dom.d, dom.r):
        raise ValueError(f"exponent config split ({ecfg.d}, {ecfg.r}) differs from the domain's ({dom.d}, {dom.r})")
    for k in ("p", "q", "a", "h"):
        if getattr(ecfg, k) is None:
            raise ValueError(f"{k} is unknown; solve the exponent relation first")


def _check_dilated_support(u: ScalarField, dom: HalfSpaceProduct, lam: float):
    if u.support is None:
        raise SupportEscapesDomain("dilation experiments need fields with a declared compact support")
    t = dom.truncation
    lo, hi = u.support.lo_arr / lam, u.support.hi_arr / lam
    if np.any(lo < t.lo_arr) or np.any(hi > t.hi_arr):
        raise SupportEscapesDomain(
            f"support of V[{lam:g}]u is [{lo.tolist()}, {hi.tolist()}], outside the truncation box"
        )
    if np.any(lo[dom.d:] <= 0.0):
        raise SupportEscapesDomain("the support must stay away from the boundary y = 0")


def _fit_slope(lams, values) -> float:
    x = np.log(np.asarray(lams, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


@dataclass
class DilationReport:
    lambdas: list
    L_values: list
    R_values: list
    fitted_L_slope: float
    fitted_R_slope: float
    predicted_L_slope: float
    predicted_R_slope: float
    relation_residual: float
    empirical_G: float
    trivial_grid: bool
    pointwise_L_ok: list
    pointwise_R_ok: list
    L_errors: list = field(default_factory=list)
    R_errors: list = field(default_factory=list)
    ecfg: Optional[ExponentConfig] = None

    @property
    def pointwise_pass(self) -> bool:
        return all(self.pointwise_L_ok) and all(self.pointwise_R_ok)

    def to_dict(self) -> dict:
        return {
            "lambdas": list(self.lambdas),
            "L_values": list(self.L_values),
            "R_values": list(self.R_values),
            "L_errors": list(self.L_errors),
            "R_errors": list(self.R_errors),
            "fitted_L_slope": self.fitted_L_slope,
            "fitted_R_slope": self.fitted_R_slope,
            "predicted_L_slope": self.predicted_L_slope,
            "predicted_R_slope": self.predicted_R_slope,
            "relation_residual": self.relation_residual,
            "empirical_G": self.empirical_G,
            "trivial_grid": self.trivial_grid,
            "pointwise_L_ok": list(self.pointwise_L_ok),
            "pointwise_R_ok": list(self.pointwise_R_ok),
            "pointwise_pass": self.pointwise_pass,
            "exponents": None if self.ecfg is None else self.ecfg.to_dict(),
        }


def _evaluate_grid(u, dom, ecfg, lams, cfg):
    for lam in lams:
        _check_dilated_support(u, dom, lam)

    def both(lam):
        v = dilate(u, lam)
        return functional_L(v, dom, ecfg.a, ecfg.q, cfg), functional_R(v, dom, ecfg.h, ecfg.p, cfg)

    return ordered_map(both, lams)


def _pointwise(values, base, lams, slope):
    ok = []
    for nv, lam in zip(values, lams):
        if base.value <= 0 or nv.value <= 0:
            ok.append(False)
            continue
        dev = abs(math.log(nv.value) - math.log(base.value) - slope * math.log(lam))
        ok.append(dev <= nv.rel_error + base.rel_error + 64 * _EPS * (1.0 + abs(slope * math.log(lam))))
    return ok


def verify_scaling_laws(u: ScalarField, dom: HalfSpaceProduct, ecfg: ExponentConfig,
                        lambda_grid: Optional[Sequence[float]] = None,
                        cfg: QuadratureConfig = QuadratureConfig()) -> DilationReport:
    """Evaluate ``L`` and ``R`` on dilations of ``u``, fit log-log slopes and
    check the exact scaling law at every grid point against ``lam = 1``."""
    _check_split(dom, ecfg)
    lams = default_lambda_grid() if lambda_grid is None else [float(v) for v in lambda_grid]
    if not lams:
        raise ValueError("empty lambda grid")
    for lam in lams:
        if not lam > 0:
            raise NonpositiveLambda(f"dilation factor must be positive, got {lam}")
    results = _evaluate_grid(u, dom, ecfg, lams + [1.0], cfg)
    base_L, base_R = results[-1]
    Ls = [r[0] for r in results[:-1]]
    Rs = [r[1] for r in results[:-1]]
    if base_L.value <= 0 or base_R.value <= 0 or any(v.value <= 0 for v in Ls + Rs):
        raise DegenerateInput("L[u] and R[u] must be positive to compare scaling exponents")
    pL, pR = predicted_slopes(ecfg)
    trivial = len(set(lams)) < 2
    if trivial:
        fL = fR = 0.0
    else:
        fL = _fit_slope(lams, [v.value for v in Ls])
        fR = _fit_slope(lams, [v.value for v in Rs])
    residual = exponent_relation(ecfg).residual
    emp_G = max(l.value / r.value for l, r in zip(Ls, Rs))
    return DilationReport(
        lambdas=lams,
        L_values=[v.value for v in Ls],
        R_values=[v.value for v in Rs],
        fitted_L_slope=fL,
        fitted_R_slope=fR,
        predicted_L_slope=pL,
        predicted_R_slope=pR,
        relation_residual=residual,
        empirical_G=emp_G,
        trivial_grid=trivial,
        pointwise_L_ok=_pointwise(Ls, base_L, lams, pL),
        pointwise_R_ok=_pointwise(Rs, base_R, lams, pR),
        L_errors=[v.error_estimate for v in Ls],
        R_errors=[v.error_estimate for v in Rs],
        ecfg=ecfg,
    )


# -- the exponent relation ---------------------------------------------------

@dataclass(frozen=True)
class ExponentRelation:
    residual: float
    solve_for: Optional[str]
    value: Optional[float]
    config: ExponentConfig

    def to_dict(self) -> dict:
        return {"residual": self.residual, "solve_for": self.solve_for, "value": self.value,
                "exponents": self.config.to_dict()}


def _residual(e: ExponentConfig) -> float:
    n = e.n
    return (e.a - n) / e.q - 1.0 - (e.h - n) / e.p


def exponent_relation(ecfg: ExponentConfig, solve_for: Optional[str] = None) -> ExponentRelation:
    """Residual of ``(a - n)/q = 1 + (h - n)/p``, optionally after solving
    for one of ``a, h, p, q``."""
    if solve_for is None:
        missing = [k for k in ("p", "q", "a", "h") if getattr(ecfg, k) is None]
        if missing:
            raise ValueError(f"{missing[0]} is unknown; pass solve_for={missing[0]!r}")
        return ExponentRelation(_residual(ecfg), None, None, ecfg)
    if solve_for not in ("a", "h", "p", "q"):
        raise ValueError(f"can only solve for a, h, p or q, not {solve_for!r}")
    others = [k for k in ("p", "q", "a", "h") if k != solve_for]
    if any(getattr(ecfg, k) is None for k in others):
        raise ValueError(f"solving for {solve_for} needs {', '.join(others)}")
    n, p, q, a, h = ecfg.n, ecfg.p, ecfg.q, ecfg.a, ecfg.h
    if solve_for == "a":
        value = n + q * (1.0 + (h - n) / p)
    elif solve_for == "h":
        value = n + p * ((a - n) / q - 1.0)
    elif solve_for == "q":
        denom = 1.0 + (h - n) / p
        if denom == 0.0:
            raise NoSolution("1 + (h - n)/p = 0: no finite q")
        value = (a - n) / denom
    else:
        denom = (a - n) / q - 1.0
        if denom == 0.0:
            raise NoSolution("(a - n)/q = 1: no finite p")
        value = (h - n) / denom
    if solve_for in ("p", "q") and not (math.isfinite(value) and value >= 1.0):
        raise NoSolution(f"{solve_for} = {value:g} lies outside [1, inf)")
    solved = ecfg.with_value(solve_for, float(value))
    return ExponentRelation(_residual(solved), solve_for, float(value), solved)


# -- necessity probe -----------------------------------------------------------

@dataclass
class ProbeReport:
    lambdas: list
    ratios: list
    observed_slope: float
    residual: float
    empirical_G: float
    insufficient_data: bool
    consistent_with_relation: bool
    ecfg: Optional[ExponentConfig] = None

    def to_dict(self) -> dict:
        return {
            "lambdas": list(self.lambdas),
            "ratios": list(self.ratios),
            "observed_slope": self.observed_slope,
            "residual": self.residual,
            "slope_minus_residual": self.observed_slope - self.residual,
            "empirical_G": self.empirical_G,
            "insufficient_data": self.insufficient_data,
            "consistent_with_relation": self.consistent_with_relation,
            "exponents": None if self.ecfg is None else self.ecfg.to_dict(),
        }


def necessity_probe(u: ScalarField, dom: HalfSpaceProduct, ecfg: ExponentConfig,
                    lambda_grid: Optional[Sequence[float]] = None,
                    cfg: QuadratureConfig = QuadratureConfig(), slope_tol: float = 1e-6) -> ProbeReport:
    """Log-log slope of ``L[V_lam u] / R[V_lam u]`` over the grid.

    A nonzero slope means the ratio is unbounded as ``lam -> 0`` or
    ``lam -> inf``; a zero slope is only consistent with a uniform bound.
    """
    _check_split(dom, ecfg)
    lams = default_lambda_grid() if lambda_grid is None else [float(v) for v in lambda_grid]
    if not lams:
        raise ValueError("empty lambda grid")
    for lam in lams:
        if not lam > 0:
            raise NonpositiveLambda(f"dilation factor must be positive, got {lam}")
    results = _evaluate_grid(u, dom, ecfg, lams, cfg)
    if any(l.value <= 0 or r.value <= 0 for l, r in results):
        raise DegenerateInput("the probe needs L[u] > 0 and R[u] > 0")
    ratios = [l.value / r.value for l, r in results]
    residual = exponent_relation(ecfg).residual
    insufficient = len(set(lams)) < 2
    slope = math.nan if insufficient else _fit_slope(lams, ratios)
    consistent = (not insufficient) and abs(slope) <= slope_tol
    return ProbeReport(lams, ratios, slope, residual, max(ratios), insufficient, consistent, ecfg)
