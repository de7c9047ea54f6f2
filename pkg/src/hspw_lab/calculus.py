"""Gradients, the Hardy operator ``T[u] = u/d``, and weighted ``L_p`` norms."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import Domain, _as_points
from .errors import InvalidP, PointOutsideDomain
from .fields import ScalarField
from .quadrature import (
    IntegralResult,
    QuadratureConfig,
    _check_alpha,
    _integrate,
    measure_of_superlevel,
)

__all__ = [
    "NormValue",
    "gradient_at",
    "gradient_many",
    "gradient_magnitude",
    "apply_hardy_operator",
    "weighted_lp_norm",
    "gradient_lp_norm",
    "sobolev_norm",
    "tail_function",
]

_FD_REL = 1e-6


@dataclass(frozen=True)
class NormValue:
    """A weighted norm; ``value`` is ``inf`` when the integral diverges."""

    value: float
    p: float
    alpha: float
    error_estimate: float
    divergent_flag: bool = False

    @property
    def rel_error(self) -> float:
        if self.divergent_flag:
            return math.inf
        return self.error_estimate / self.value if self.value > 0 else 0.0

    def to_dict(self):
        return {
            "value": None if self.divergent_flag else self.value,
            "p": self.p,
            "alpha": self.alpha,
            "error_estimate": None if self.divergent_flag else self.error_estimate,
            "divergent_flag": self.divergent_flag,
        }


def gradient_many(u: ScalarField, dom: Domain, X) -> np.ndarray:
    """Gradient at interior points; finite differences when none is declared.

    Central differences with step ``max(1e-6, 1e-6 |x|)`` per axis, switched to
    one-sided (and shortened if needed) where the stencil would leave ``dom``.
    """
    X = _as_points(X, dom.n)
    if u.gradient is not None:
        return np.asarray(u.gradient(X), dtype=float)
    n = dom.n
    h = np.maximum(_FD_REL, _FD_REL * np.linalg.norm(X, axis=1))
    short = 0.5 * dom.distance_many(X)
    G = np.empty_like(X)
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        fwd_ok = dom.contains_many(X + h[:, None] * e)
        bwd_ok = dom.contains_many(X - h[:, None] * e)
        neither = ~(fwd_ok | bwd_ok)
        up = np.where(fwd_ok, h, np.where(neither, short, 0.0))
        down = np.where(bwd_ok, h, np.where(neither, short, 0.0))
        G[:, i] = (u.evaluate(X + up[:, None] * e) - u.evaluate(X - down[:, None] * e)) / (up + down)
    return G


def gradient_at(u: ScalarField, x, dom: Domain) -> np.ndarray:
    P = _as_points(x, dom.n)
    if not dom.contains_many(P)[0]:
        raise PointOutsideDomain(f"{np.ravel(x).tolist()} is not in the open interior")
    return gradient_many(u, dom, P)[0]


def gradient_magnitude(u: ScalarField, dom: Domain) -> ScalarField:
    """The field ``|grad u|`` (Euclidean length)."""

    def ev(X):
        return np.linalg.norm(gradient_many(u, dom, X), axis=1)

    return ScalarField(
        evaluate=ev,
        support=u.support,
        distance_breaks=u.distance_breaks,
        name=f"|grad {u.name}|",
    )


def apply_hardy_operator(u: ScalarField, dom: Domain) -> ScalarField:
    """``T[u](x) = u(x) / d(x)`` on the open interior."""

    def ev(X):
        X = np.asarray(X, dtype=float)
        d = dom.distance_many(X)
        if np.any(d <= 0):
            raise PointOutsideDomain("T[u] is undefined on or outside the boundary")
        return u.evaluate(X) / d

    return ScalarField(
        evaluate=ev,
        support=u.support,
        vanishes_near_boundary=False,
        distance_breaks=u.distance_breaks,
        name=f"T[{u.name}]",
    )


def _check_p(p):
    if not (math.isfinite(p) and p >= 1):
        raise InvalidP(f"p must satisfy 1 <= p < inf, got {p}")


def power_integrand(f: ScalarField, p: float) -> ScalarField:
    def ev(X):
        return np.abs(f.evaluate(X)) ** p

    return ScalarField(evaluate=ev, support=f.support, distance_breaks=f.distance_breaks,
                       name=f"|{f.name}|^{p:g}")


def norm_from_integral(res: IntegralResult, p: float, alpha: float) -> NormValue:
    if res.divergent_flag:
        return NormValue(math.inf, p, alpha, math.inf, True)
    I = max(res.value, 0.0)
    value = I ** (1.0 / p)
    # d(I^(1/p)) = (1/p) I^(1/p - 1) dI
    err = value * res.error_estimate / (p * I) if I > 0 else res.error_estimate ** (1.0 / p)
    return NormValue(value, p, alpha, err, False)


def _lp(f: ScalarField, dom: Domain, alpha: float, p: float, cfg: QuadratureConfig) -> NormValue:
    return norm_from_integral(_integrate(power_integrand(f, p), dom, alpha, cfg), p, alpha)


def weighted_lp_norm(u: ScalarField, dom: Domain, alpha: float, p: float,
                     cfg: QuadratureConfig = QuadratureConfig()) -> NormValue:
    """``( integral |u|^p d^(-alpha) dx )^(1/p)``.

    Raises :class:`~hspw_lab.errors.NoConvergence` when the quadrature can
    neither converge nor prove divergence.
    """
    _check_p(p)
    _check_alpha(alpha)
    return _lp(u, dom, alpha, p, cfg)


def gradient_lp_norm(u: ScalarField, dom: Domain, alpha: float, p: float,
                     cfg: QuadratureConfig = QuadratureConfig()) -> NormValue:
    """Weighted ``L_p`` norm of ``|grad u|``."""
    _check_p(p)
    _check_alpha(alpha)
    return _lp(gradient_magnitude(u, dom), dom, alpha, p, cfg)


def sobolev_norm(u: ScalarField, dom: Domain, p: float, cfg: QuadratureConfig = QuadratureConfig(),
                 convention: str = "literal") -> float:
    """``W^1_p`` norm.

    ``convention="literal"`` computes ``|grad u|_p^(1/p) + |u|_p``, with the
    extra ``1/p`` power on the gradient term; ``"standard"`` computes
    ``|grad u|_p + |u|_p``.
    """
    if convention not in ("literal", "standard"):
        raise ValueError(f"unknown Sobolev convention {convention!r}")
    g = gradient_lp_norm(u, dom, 0.0, p, cfg)
    f = weighted_lp_norm(u, dom, 0.0, p, cfg)
    if g.divergent_flag or f.divergent_flag:
        return math.inf
    gterm = g.value ** (1.0 / p) if convention == "literal" else g.value
    return gterm + f.value


def tail_function(u: ScalarField, dom: Domain, alpha: float, level: float,
                  cfg: QuadratureConfig = QuadratureConfig()) -> float:
    """``mu_alpha{x : |u(x)| > level}``."""
    res = measure_of_superlevel(dom, alpha, u, level, cfg)
    return math.inf if res.divergent_flag else res.value
