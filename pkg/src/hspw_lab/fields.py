"""Test functions ``u`` on a domain, with optional analytic gradients.

Fields evaluate on point arrays of shape ``(N, n)`` and return ``(N,)``;
gradients return ``(N, n)``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .domain import Ball, Box, ConvexPolytope, Domain, HalfSpaceProduct, inradius

__all__ = [
    "ScalarField",
    "ProductField",
    "Factor",
    "zero_field",
    "constant_field",
    "linear_combination",
    "expression_field",
    "bump_field",
    "bubble_field",
    "distance_field",
    "power_profile_field",
    "polynomial_bump_factor",
    "default_product_field",
    "field_from_spec",
]


@dataclass(frozen=True)
class ScalarField:
    """A scalar test function.

    ``support`` is a box outside of which the field is identically zero.
    ``distance_breaks`` lists distance-to-boundary values at which a radial
    profile has kinks; quadrature splits its cells there.
    """

    evaluate: Callable[[np.ndarray], np.ndarray]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    support: Optional[Box] = None
    vanishes_near_boundary: bool = False
    distance_breaks: tuple = ()
    name: str = "field"
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    def __call__(self, X):
        return self.evaluate(np.asarray(X, dtype=float))

    def scaled(self, c: float) -> "ScalarField":
        return linear_combination([(c, self)], name=f"{c!r}*{self.name}")


def _guarded(fn, support):
    """Force exact zeros outside the declared support box."""
    if support is None:
        return fn
    lo, hi = support.lo_arr, support.hi_arr

    def wrapped(X):
        X = np.asarray(X, dtype=float)
        inside = np.all((X > lo) & (X < hi), axis=1)
        out = fn(X)
        if out.ndim == 1:
            return np.where(inside, out, 0.0)
        return np.where(inside[:, None], out, 0.0)

    return wrapped


def zero_field(n: int) -> ScalarField:
    return ScalarField(
        evaluate=lambda X: np.zeros(len(X)),
        gradient=lambda X: np.zeros((len(X), n)),
        vanishes_near_boundary=True,
        name="zero",
    )


def constant_field(n: int, value: float) -> ScalarField:
    return ScalarField(
        evaluate=lambda X: np.full(len(X), float(value)),
        gradient=lambda X: np.zeros((len(X), n)),
        name=f"const:{value!r}",
    )


def linear_combination(terms: Sequence[tuple], name=None) -> ScalarField:
    """``sum c_i u_i``; the gradient exists when every term has one."""
    terms = [(float(c), u) for c, u in terms]

    def ev(X):
        return sum(c * u.evaluate(X) for c, u in terms)

    grad = None
    if all(u.gradient is not None for _, u in terms):
        def grad(X):
            return sum(c * u.gradient(X) for c, u in terms)

    supports = [u.support for _, u in terms]
    support = None
    if all(s is not None for s in supports):
        lo = np.min([s.lo_arr for s in supports], axis=0)
        hi = np.max([s.hi_arr for s in supports], axis=0)
        support = Box(tuple(lo), tuple(hi))
    breaks = tuple(sorted({b for _, u in terms for b in u.distance_breaks}))
    return ScalarField(
        evaluate=ev,
        gradient=grad,
        support=support,
        vanishes_near_boundary=all(u.vanishes_near_boundary for _, u in terms),
        distance_breaks=breaks,
        name=name or " + ".join(f"{c!r}*{u.name}" for c, u in terms),
    )


# -- expression fields (sympy) -----------------------------------------

_SYMBOL_ALIASES = {1: ["t"], 2: ["x", "y"], 3: ["x", "y", "z"]}


def expression_field(expr: str, n: int, support: Optional[Box] = None) -> ScalarField:
    """Field from an algebraic expression with a symbolic gradient.

    Variables are ``x1..xn``; ``t`` (n = 1) and ``x, y, z`` are accepted too.
    """
    import sympy as sp

    xs = sp.symbols(" ".join(f"x{i + 1}" for i in range(n)), real=True)
    xs = (xs,) if n == 1 else tuple(xs)
    local = {f"x{i + 1}": xs[i] for i in range(n)}
    for i, alias in enumerate(_SYMBOL_ALIASES.get(n, [])):
        local[alias] = xs[i]
    try:
        e = sp.sympify(expr, locals=local)
    except (sp.SympifyError, SyntaxError, TypeError) as exc:
        raise ValueError(f"cannot parse expression {expr!r}: {exc}") from None
    unknown = e.free_symbols - set(xs)
    if unknown:
        raise ValueError(f"unknown symbols in {expr!r}: {sorted(map(str, unknown))}")
    f = sp.lambdify(xs, e, "numpy")
    partials = [sp.lambdify(xs, sp.diff(e, v), "numpy") for v in xs]

    def ev(X):
        X = np.asarray(X, dtype=float)
        return np.broadcast_to(np.asarray(f(*X.T), dtype=float), (len(X),)).copy()

    def grad(X):
        X = np.asarray(X, dtype=float)
        cols = [np.broadcast_to(np.asarray(g(*X.T), dtype=float), (len(X),)) for g in partials]
        return np.stack(cols, axis=1)

    return ScalarField(
        evaluate=_guarded(ev, support),
        gradient=_guarded(grad, support),
        support=support,
        name=f"poly:{expr}",
    )


# -- builtins tied to a domain -------------------------------------------

def bump_field(center, radius: float) -> ScalarField:
    """``exp(1 - 1/(1 - |z|^2))`` with ``z = (x - center)/radius``; peak value 1."""
    c = np.asarray(center, dtype=float)
    n = len(c)
    rho = float(radius)

    def _s(X):
        Z = (np.asarray(X, dtype=float) - c) / rho
        return Z, np.einsum("ij,ij->i", Z, Z)

    def ev(X):
        _, s = _s(X)
        out = np.zeros_like(s)
        m = s < 1.0
        out[m] = np.exp(1.0 - 1.0 / (1.0 - s[m]))
        return out

    def grad(X):
        Z, s = _s(X)
        out = np.zeros_like(Z)
        m = s < 1.0
        sm = s[m]
        val = np.exp(1.0 - 1.0 / (1.0 - sm))
        # d/dx exp(1 - 1/(1-s)) = val * (-1/(1-s)^2) * 2 z / rho
        out[m] = (val * (-2.0 / (rho * (1.0 - sm) ** 2)))[:, None] * Z[m]
        return out

    return ScalarField(
        evaluate=ev,
        gradient=grad,
        support=Box(tuple(c - rho), tuple(c + rho)),
        vanishes_near_boundary=True,
        name="bump",
        meta={"center": c.tolist(), "radius": rho},
    )


def bubble_field(dom: Domain, k: float = 1.0) -> ScalarField:
    """Polynomial-type field vanishing to order ``k`` on the boundary.

    Box/interval: ``prod_i (4 (x_i - lo_i)(hi_i - x_i) / w_i^2)^k``;
    ball: ``(1 - |x - c|^2 / R^2)^k``; polytope: ``prod_j (m_j / m_j(c))^k``
    with face margins ``m_j``.
    """
    k = float(k)
    if isinstance(dom, Box):
        lo, hi, w = dom.lo_arr, dom.hi_arr, dom.widths

        def base(X):
            return 4.0 * (X - lo) * (hi - X) / w**2

        def dbase(X):
            return 4.0 * (hi + lo - 2.0 * X) / w**2

        def ev(X):
            return np.prod(np.clip(base(X), 0, None) ** k, axis=1)

        def grad(X):
            B = np.clip(base(X), 0, None)
            P = B**k
            out = np.empty_like(X)
            for i in range(X.shape[1]):
                others = np.prod(np.delete(P, i, axis=1), axis=1)
                out[:, i] = k * B[:, i] ** (k - 1) * dbase(X)[:, i] * others
            return out

    elif isinstance(dom, Ball):
        c, R = dom.center(), dom.radius

        def ev(X):
            s = 1.0 - np.sum((X - c) ** 2, axis=1) / R**2
            return np.clip(s, 0, None) ** k

        def grad(X):
            s = np.clip(1.0 - np.sum((X - c) ** 2, axis=1) / R**2, 0, None)
            return (k * s ** (k - 1) * (-2.0 / R**2))[:, None] * (X - c)

    elif isinstance(dom, ConvexPolytope):
        A, b = dom.A, dom.b
        scale = b - A @ dom.center()

        def ev(X):
            M = np.clip((b - X @ A.T) / scale, 0, None)
            return np.prod(M**k, axis=1)

        def grad(X):
            M = np.clip((b - X @ A.T) / scale, 0, None)
            P = M**k
            out = np.zeros_like(X)
            for j in range(len(b)):
                others = np.prod(np.delete(P, j, axis=1), axis=1)
                out += (k * M[:, j] ** (k - 1) * others)[:, None] * (-A[j] / scale[j])
            return out

    else:
        raise ValueError(f"bubble field is not defined on {type(dom).__name__}")
    return ScalarField(evaluate=ev, gradient=grad, vanishes_near_boundary=True, name=f"bubble:{k:g}")


def distance_field(dom: Domain) -> ScalarField:
    """``u = d(x)``; the gradient is the inward normal of the nearest face."""
    return ScalarField(
        evaluate=lambda X: dom.distance_many(X),
        gradient=lambda X: dom.distance_gradient_many(X),
        name="distance",
    )


def power_profile(beta: float, cutoff: float):
    """Profile ``t^beta`` on ``(0, 1]``, linear decay to 0 on ``[1, cutoff]``."""
    beta = float(beta)
    M = float(cutoff)

    def g(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        inner = (t > 0) & (t <= 1.0)
        out[inner] = t[inner] ** beta
        if M > 1.0:
            tail = (t > 1.0) & (t < M)
            out[tail] = (M - t[tail]) / (M - 1.0)
        return out

    def dg(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        inner = (t > 0) & (t <= 1.0)
        out[inner] = beta * t[inner] ** (beta - 1.0)
        if M > 1.0:
            tail = (t > 1.0) & (t < M)
            out[tail] = -1.0 / (M - 1.0)
        return out

    return g, dg


def power_profile_field(dom: Domain, beta: float, cutoff: float = 1.0) -> ScalarField:
    """``u(x) = g(d(x))`` with the power profile ``g`` of :func:`power_profile`."""
    g, dg = power_profile(beta, cutoff)

    def ev(X):
        return g(dom.distance_many(X))

    def grad(X):
        return dg(dom.distance_many(X))[:, None] * dom.distance_gradient_many(X)

    breaks = (1.0,) if cutoff <= 1.0 else (1.0, float(cutoff))
    return ScalarField(
        evaluate=ev,
        gradient=grad,
        vanishes_near_boundary=beta > 0,
        distance_breaks=breaks,
        name=f"power:{beta:g},{cutoff:g}",
        meta={"beta": float(beta), "cutoff": float(cutoff)},
    )


# -- product fields ------------------------------------------------------

@dataclass(frozen=True)
class Factor:
    """One-dimensional factor ``phi`` supported on ``[lo, hi]``."""

    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]
    lo: float
    hi: float
    scale: float = 1.0  # evaluates phi(scale * s)

    def __call__(self, s):
        return self.f(self.scale * np.asarray(s, dtype=float))

    def deriv(self, s):
        return self.scale * self.df(self.scale * np.asarray(s, dtype=float))

    @property
    def support(self):
        return self.lo / self.scale, self.hi / self.scale

    def dilated(self, lam: float) -> "Factor":
        return replace(self, scale=self.scale * lam)


def polynomial_bump_factor(center: float, half_width: float, power: int = 4) -> Factor:
    """``(1 - s^2)^power`` with ``s = (x - center)/half_width`` on its support."""
    c, w, k = float(center), float(half_width), int(power)

    def f(x):
        s = (np.asarray(x, dtype=float) - c) / w
        return np.where(np.abs(s) < 1, (1.0 - s * s) ** k, 0.0)

    def df(x):
        s = (np.asarray(x, dtype=float) - c) / w
        return np.where(np.abs(s) < 1, k * (1.0 - s * s) ** (k - 1) * (-2.0 * s / w), 0.0)

    return Factor(f, df, c - w, c + w)


class ProductField(ScalarField):
    """``u(x) = prod_i phi_i(x_i)``; keeps its factors for factorized quadrature."""

    def __init__(self, factors: Sequence[Factor], name: str = "product"):
        factors = tuple(factors)
        n = len(factors)

        def ev(X):
            X = np.asarray(X, dtype=float)
            out = np.ones(len(X))
            for i, fac in enumerate(factors):
                out = out * fac(X[:, i])
            return out

        def grad(X):
            X = np.asarray(X, dtype=float)
            vals = np.stack([fac(X[:, i]) for i, fac in enumerate(factors)], axis=1)
            out = np.empty_like(X)
            for i, fac in enumerate(factors):
                others = np.prod(np.delete(vals, i, axis=1), axis=1) if n > 1 else 1.0
                out[:, i] = fac.deriv(X[:, i]) * others
            return out

        lo = [fac.support[0] for fac in factors]
        hi = [fac.support[1] for fac in factors]
        super().__init__(
            evaluate=ev,
            gradient=grad,
            support=Box(tuple(lo), tuple(hi)),
            vanishes_near_boundary=True,
            name=name,
            meta={"factors": factors},
        )

    @property
    def factors(self):
        return self.meta["factors"]


def default_product_field(dom: HalfSpaceProduct) -> ProductField:
    """Product of polynomial bumps placed well inside the truncation box.

    Supports are sized so that dilations by factors in ``[1/8, 8]`` stay
    inside the truncation box when it is large enough (see README).
    """
    facs = []
    t = dom.truncation
    for i in range(dom.d):
        lo, hi = t.lo[i], t.hi[i]
        facs.append(polynomial_bump_factor(0.0 if lo < 0.0 < hi else 0.5 * (lo + hi), 0.25))
    for j in range(dom.r):
        facs.append(polynomial_bump_factor(0.75, 0.25))
    return ProductField(facs, name="productbump")


# -- name strings ----------------------------------------------------------

_POWER_RE = re.compile(r"^power:([^,]+)(?:,(.+))?$")


def field_from_spec(spec: str, dom: Domain) -> ScalarField:
    """Resolve a CLI field name: ``zero``, ``bump``, ``poly:<expr>``,
    ``power:beta[,cutoff]``, ``distance``, ``bubble:k``, ``productbump``."""
    spec = spec.strip()
    n = dom.n
    if spec == "zero":
        return zero_field(n)
    if spec == "bump":
        c = dom.center()
        return bump_field(c, 0.5 * inradius(dom))
    if spec.startswith("poly:"):
        return expression_field(spec[5:], n)
    m = _POWER_RE.match(spec)
    if m:
        beta = float(m.group(1))
        cutoff = float(m.group(2)) if m.group(2) else 1.0
        if not math.isfinite(beta) or beta <= 0:
            raise ValueError("power exponent must be positive")
        return power_profile_field(dom, beta, cutoff)
    if spec == "distance":
        return distance_field(dom)
    if spec.startswith("bubble"):
        k = float(spec.split(":", 1)[1]) if ":" in spec else 1.0
        return bubble_field(dom, k)
    if spec == "productbump":
        if not isinstance(dom, HalfSpaceProduct):
            raise ValueError("productbump needs a halfspace_product domain")
        return default_product_field(dom)
    raise ValueError(f"unknown field name {spec!r}")
