"""Integration against ``mu_alpha(dx) = dx / d(x)^alpha`` on a domain.

Each domain is split into regions on which the distance to the boundary is a
single coordinate ``t`` (exactly, except for polytopes where ``t`` is the
distance to one facet plane).  Along ``t`` the region is cut into geometric
layers ``[T s^(j+1), T s^j]`` with grading ratio ``s``; level ``k`` of the
partial-sum sequence uses layers ``0..k-1`` plus one innermost cell
``[0, T s^k]``.  Every cell carries a tensor Gauss-Legendre rule.  The
partial sums are extrapolated with Wynn's epsilon algorithm, whose
differences give the error estimate; a second pass at doubled tangential
and in-layer resolution checks the smooth part of the integrand.

Fields whose support box stays at positive distance from the boundary skip
the grading and use a uniform tensor rule on the support box.  Outside
half-space products the graded scheme is the fallback when that rule stalls
on a kink of ``d(x)`` inside the box.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.special import roots_jacobi

from .domain import Ball, Box, ConvexPolytope, Domain, HalfSpaceProduct
from .errors import (
    DimensionTooLarge,
    InvalidAlpha,
    NoConvergence,
    SupportError,
    SupportEscapesDomain,
    UnboundedIntegrand,
)

__all__ = [
    "QuadratureConfig",
    "IntegralResult",
    "integrate_weighted",
    "measure_of_superlevel",
    "graded_partial_sums",
]

_EPS = np.finfo(float).eps
_MAX_POINTS_PER_BATCH = 1_000_000
_MAX_INTERIOR_POINTS = 3_000_000
# increments shrinking slower than s**0.01 per level count as non-contracting
_NONCONTRACTING_EXPONENT = 0.01


@dataclass(frozen=True)
class QuadratureConfig:
    base_order: int = 8
    grading_ratio: float = 0.5
    max_depth: Optional[int] = None
    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    divergence_growth_threshold: float = 1.25
    divergence_window: int = 5
    max_refinements: Optional[int] = None
    superlevel_depth: Optional[int] = None
    extrapolate: bool = True

    def __post_init__(self):
        if int(self.base_order) != self.base_order or self.base_order < 2:
            raise ValueError("base_order must be an integer >= 2")
        if not 0.0 < self.grading_ratio < 1.0:
            raise ValueError("grading_ratio must lie in (0, 1)")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not self.divergence_growth_threshold > 1:
            raise ValueError("divergence_growth_threshold must exceed 1")
        if self.divergence_window < 2:
            raise ValueError("divergence_window must be >= 2")

    def depth(self, n: int) -> int:
        if self.max_depth is not None:
            return int(self.max_depth)
        return {1: 24, 2: 12}.get(n, 8)

    def refinements(self, n: int) -> int:
        if self.max_refinements is not None:
            return int(self.max_refinements)
        return {1: 12, 2: 5}.get(n, 2)

    def bisection_depth(self, n: int) -> int:
        if self.superlevel_depth is not None:
            return int(self.superlevel_depth)
        return {1: 30, 2: 8}.get(n, 5)

    def tolerance(self, value: float) -> float:
        return max(self.abs_tol, self.rel_tol * abs(value))

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class IntegralResult:
    value: float
    error_estimate: float
    cells_used: int
    converged: bool
    divergent_flag: bool
    depth: int = 0
    resolution: int = 1

    def __post_init__(self):
        assert not (self.converged and self.divergent_flag)


# -- rules ----------------------------------------------------------------

@lru_cache(maxsize=None)
def _gauss01(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def _jacobi01(order: int, alpha: float):
    # weight t^(-alpha) on [0, 1]
    x, w = roots_jacobi(order, 0.0, -alpha)
    return 0.5 * (x + 1.0), w * 0.5 ** (1.0 - alpha)


def _rule_1d(a: float, b: float, order: int, res: int, breaks=()):
    """Composite Gauss rule on [a, b]: ``res`` equal pieces, also cut at ``breaks``."""
    pts = [a, b] + [c for c in breaks if a < c < b]
    pts = sorted(set(pts))
    x0, w0 = _gauss01(order)
    nodes, weights = [], []
    for lo, hi in zip(pts[:-1], pts[1:]):
        edges = np.linspace(lo, hi, res + 1)
        h = np.diff(edges)
        nodes.append((edges[:-1, None] + h[:, None] * x0).ravel())
        weights.append((h[:, None] * w0).ravel())
    return np.concatenate(nodes), np.concatenate(weights)


@lru_cache(maxsize=None)
def _tangential_rule(order: int, res: int, m: int):
    """Tensor rule on the unit cube [0,1]^m with ``res`` cells per axis."""
    if m == 0:
        return np.zeros((1, 0)), np.ones(1)
    x, w = _rule_1d(0.0, 1.0, order, res)
    grids = np.meshgrid(*([x] * m), indexing="ij")
    wgrids = np.meshgrid(*([w] * m), indexing="ij")
    S = np.stack([g.ravel() for g in grids], axis=1)
    W = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return S, W


# -- regions ---------------------------------------------------------------

class _Region:
    """Parametrization ``(t, s) -> x`` with ``t`` the distance coordinate."""

    def __init__(self, t_max, m, mapping, exact=True):
        self.t_max = float(t_max)
        self.m = m
        self._mapping = mapping
        self.exact = exact

    def map(self, t, S):
        """Points for every pair (t_i, S_j), flattened t-major.

        Returns ``X (Nt*Ns, n)``, ``jac (Nt*Ns,)``, and ``t`` repeated.
        """
        X, jac = self._mapping(t, S)
        return X, jac, np.repeat(t, len(S))


def _interval_regions(lo, hi):
    T = 0.5 * (hi - lo)

    def low(t, S):
        return (lo + t)[:, None], np.ones_like(t)

    def high(t, S):
        return (hi - t)[:, None], np.ones_like(t)

    return [_Region(T, 0, low), _Region(T, 0, high)]


def _box_regions(box: Box):
    n = box.n
    if n == 1:
        return _interval_regions(box.lo[0], box.hi[0])
    lo, hi, w = box.lo_arr, box.hi_arr, box.widths
    T = 0.5 * w.min()
    regions = []
    for i in range(n):
        others = [j for j in range(n) if j != i]
        for side in (0, 1):
            def mapping(t, S, i=i, side=side, others=others):
                Nt, Ns = len(t), len(S)
                X = np.empty((Nt, Ns, n))
                X[:, :, i] = (lo[i] + t if side == 0 else hi[i] - t)[:, None]
                jac = np.ones((Nt, Ns))
                for k, j in enumerate(others):
                    span = w[j] - 2.0 * t
                    X[:, :, j] = lo[j] + t[:, None] + S[None, :, k] * span[:, None]
                    jac *= span[:, None]
                return X.reshape(Nt * Ns, n), jac.ravel()

            regions.append(_Region(T, n - 1, mapping))
    return regions


def _ball_regions(ball: Ball):
    n, c, R = ball.n, ball.center(), ball.radius
    if n == 1:
        return _interval_regions(c[0] - R, c[0] + R)
    if n == 2:
        def mapping(t, S):
            rho = (R - t)[:, None]
            th = 2.0 * np.pi * S[None, :, 0]
            X = np.stack([c[0] + rho * np.cos(th), c[1] + rho * np.sin(th)], axis=-1)
            jac = np.broadcast_to(2.0 * np.pi * rho, X.shape[:2])
            return X.reshape(-1, 2), jac.ravel()
    elif n == 3:
        def mapping(t, S):
            rho = (R - t)[:, None]
            cphi = 1.0 - 2.0 * S[None, :, 0]
            sphi = np.sqrt(np.clip(1.0 - cphi**2, 0.0, None))
            th = 2.0 * np.pi * S[None, :, 1]
            X = np.stack(
                [c[0] + rho * sphi * np.cos(th), c[1] + rho * sphi * np.sin(th), c[2] + rho * cphi],
                axis=-1,
            )
            jac = np.broadcast_to(4.0 * np.pi * rho**2, X.shape[:2])
            return X.reshape(-1, 3), jac.ravel()
    else:
        raise DimensionTooLarge(f"ball quadrature supports n <= 3, got n = {n}")
    return [_Region(R, n - 1, mapping)]


def _polytope_regions(poly: ConvexPolytope):
    """Pyramids from the Chebyshev center over each boundary simplex."""
    n, c = poly.n, poly.center()
    if n == 1:
        box = poly.bounding_box()
        return _interval_regions(box.lo[0], box.hi[0])
    from scipy.spatial import ConvexHull

    V = poly.vertices()
    hull = ConvexHull(V)
    regions = []
    for simplex, eq in zip(hull.simplices, hull.equations):
        normal, off = eq[:-1], eq[-1]
        h = -(normal @ c + off)
        if h <= 0:
            continue
        P = V[simplex]
        if n == 2:
            v0, v1 = P
            length = np.linalg.norm(v1 - v0)

            def face(S, v0=v0, v1=v1, length=length):
                return v0 + S[:, :1] * (v1 - v0), np.full(len(S), length)
        else:
            v0, v1, v2 = P
            area2 = np.linalg.norm(np.cross(v1 - v0, v2 - v0))

            def face(S, v0=v0, v1=v1, v2=v2, area2=area2):
                s1, s2 = S[:, :1], S[:, 1:2]
                Y = v0 + s1 * (v1 - v0) + s1 * s2 * (v2 - v1)
                return Y, area2 * S[:, 0]

        def mapping(t, S, face=face, h=h):
            Y, dA = face(S)
            rho = (1.0 - t / h)[:, None, None]
            X = c + rho * (Y[None, :, :] - c)
            jac = (rho[:, :, 0] ** (n - 1)) * dA[None, :]
            return X.reshape(-1, n), jac.ravel()

        regions.append(_Region(h, n - 1, mapping, exact=False))
    return regions


def _halfspace_regions(dom: HalfSpaceProduct, support: Box):
    d, r, n = dom.d, dom.r, dom.n
    lo, hi = support.lo_arr.copy(), support.hi_arr.copy()
    lo[d:] = np.maximum(lo[d:], 0.0)
    xw = hi[:d] - lo[:d]
    Y = hi[d:]
    T = Y.min()
    regions = []
    for i in range(r):
        others = [j for j in range(r) if j != i]

        def mapping(t, S, i=i, others=others):
            Nt, Ns = len(t), len(S)
            X = np.empty((Nt, Ns, n))
            jac = np.full((Nt, Ns), float(np.prod(xw)))
            for k in range(d):
                X[:, :, k] = lo[k] + S[None, :, k] * xw[k]
            X[:, :, d + i] = t[:, None]
            for k, j in enumerate(others):
                span = Y[j] - t
                X[:, :, d + j] = t[:, None] + S[None, :, d + k] * span[:, None]
                jac *= span[:, None]
            return X.reshape(Nt * Ns, n), jac.ravel()

        regions.append(_Region(T, n - 1, mapping))
    return regions


def _regions(dom: Domain, support: Optional[Box]):
    if isinstance(dom, HalfSpaceProduct):
        return _halfspace_regions(dom, support)
    if isinstance(dom, Box):
        return _box_regions(dom)
    if isinstance(dom, Ball):
        return _ball_regions(dom)
    if isinstance(dom, ConvexPolytope):
        return _polytope_regions(dom)
    raise TypeError(f"no quadrature regions for {type(dom).__name__}")


# -- helpers ----------------------------------------------------------------

def _as_callable(f):
    if hasattr(f, "evaluate"):
        return f.evaluate, getattr(f, "support", None), tuple(getattr(f, "distance_breaks", ()))
    return f, None, ()


def _check_halfspace_support(dom: HalfSpaceProduct, support: Optional[Box]):
    if support is None:
        raise SupportError("fields on a half-space product domain must declare a support box")
    t = dom.truncation
    lo = t.lo_arr.copy()
    lo[dom.d:] = np.minimum(lo[dom.d:], 0.0) - 1.0
    if not (np.all(support.lo_arr >= lo) and np.all(support.hi_arr <= t.hi_arr)):
        raise SupportEscapesDomain(
            f"support {support.lo}..{support.hi} is not inside the truncation box"
        )


def _support_is_interior(dom: Domain, support: Optional[Box]) -> bool:
    if support is None:
        return False
    if isinstance(dom, HalfSpaceProduct):
        return bool(np.all(support.lo_arr[dom.d:] > 0))
    # every domain here is convex: corners inside with d > 0 puts the box inside
    corners = np.array(np.meshgrid(*zip(support.lo, support.hi), indexing="ij")).reshape(dom.n, -1).T
    return bool(np.all(dom.contains_many(corners)) and np.all(dom.distance_many(corners) > 0))


def _weight(dist, power):
    if power == 0:
        return 1.0
    with np.errstate(divide="ignore", over="ignore"):
        return dist ** (-power)


def _sum_ordered(values) -> float:
    return math.fsum(values)


# -- graded scheme -------------------------------------------------------

def _cells(T, sigma, depth, breaks):
    """Layer cells (j = 0..depth-1), inner cells (k = 0..depth), outer cells.

    Grading starts at the smallest profile break below ``T``; the stretch
    above it is a fixed outer part, itself cut geometrically, shared by every
    partial sum.  Otherwise
    an inner cell straddling the break keeps the partial sums flat for a few
    levels, which looks like convergence.
    """
    inside = [b for b in breaks if 0.0 < b < T]
    start = min(inside) if inside else T
    layers = [(start * sigma ** (j + 1), start * sigma**j) for j in range(depth)]
    inner = [(0.0, start * sigma**k) for k in range(depth + 1)]
    outer = []
    hi = T
    while hi > start:
        lo = max(hi * sigma, start)
        outer.append((lo, hi))
        hi = lo
    return layers, inner, outer


def _cell_sums(func, region, power, cells, order, res, breaks):
    """Integral and absolute integral over each t-cell of one region."""
    S, Ws = _tangential_rule(order, res, region.m)
    t_nodes, t_w, ids = [], [], []
    for idx, (a, b) in enumerate(cells):
        x, w = _rule_1d(a, b, order, res, breaks)
        t_nodes.append(x)
        t_w.append(w)
        ids.append(np.full(len(x), idx))
    t_all = np.concatenate(t_nodes)
    w_all = np.concatenate(t_w)
    id_all = np.concatenate(ids)
    rows_per_batch = max(1, _MAX_POINTS_PER_BATCH // len(S))
    G = np.empty(len(t_all))
    Gabs = np.empty(len(t_all))
    for start in range(0, len(t_all), rows_per_batch):
        sl = slice(start, start + rows_per_batch)
        t = t_all[sl]
        X, jac, tt = region.map(t, S)
        vals = np.asarray(func(X), dtype=float)
        if region.exact:
            dist = tt
        else:
            dist = np.minimum(tt, _region_distance(region, X))
        F = vals * _weight(dist, power) * jac
        if not np.all(np.isfinite(F)):
            bad = ~np.isfinite(F)
            if np.any(tt[bad] > 1e-3 * region.t_max):
                raise UnboundedIntegrand("integrand is not finite away from the boundary")
            F = np.where(bad, np.inf, F)
        F = F.reshape(len(t), len(S))
        G[sl] = F @ Ws
        Gabs[sl] = np.abs(F) @ Ws
    sums = np.bincount(id_all, weights=w_all * G, minlength=len(cells))
    abs_sums = np.bincount(id_all, weights=w_all * Gabs, minlength=len(cells))
    return sums, abs_sums, len(t_all) * len(S)


def _region_distance(region, X):
    dom = getattr(region, "domain", None)
    return dom.distance_many(X) if dom is not None else np.full(len(X), np.inf)


def _partial_sums(func, regions, power, cfg: QuadratureConfig, res: int, depth: int, breaks):
    sigma = cfg.grading_ratio
    per_layer = [[] for _ in range(depth)]
    per_inner = [[] for _ in range(depth + 1)]
    abs_layer = [[] for _ in range(depth)]
    abs_inner = [[] for _ in range(depth + 1)]
    points = 0
    outer_sum, outer_abs = [], []
    for region in regions:
        layers, inner, outer = _cells(region.t_max, sigma, depth, breaks)
        sums, abs_sums, npts = _cell_sums(func, region, power, layers + inner + outer,
                                          cfg.base_order, res, breaks)
        points += npts
        for j in range(depth):
            per_layer[j].append(sums[j])
            abs_layer[j].append(abs_sums[j])
        for k in range(depth + 1):
            per_inner[k].append(sums[depth + k])
            abs_inner[k].append(abs_sums[depth + k])
        outer_sum.extend(sums[2 * depth + 1:])
        outer_abs.extend(abs_sums[2 * depth + 1:])
    S, A = [], []
    flat_layers = list(outer_sum)
    flat_abs = list(outer_abs)
    for k in range(depth + 1):
        if k > 0:
            flat_layers.extend(per_layer[k - 1])
            flat_abs.extend(abs_layer[k - 1])
        S.append(_sum_ordered(flat_layers + per_inner[k]))
        A.append(_sum_ordered(flat_abs + abs_inner[k]))
    return np.array(S), np.array(A), points


def _wynn(seq) -> float:
    """Wynn epsilon extrapolation; returns the deepest even-column estimate."""
    seq = [float(v) for v in seq]
    best = seq[-1]
    prev = [0.0] * (len(seq) + 1)
    cur = seq
    col = 0
    while len(cur) > 1:
        nxt = []
        for i in range(len(cur) - 1):
            diff = cur[i + 1] - cur[i]
            if diff == 0.0 or not math.isfinite(diff):
                return best
            nxt.append(prev[i + 1] + 1.0 / diff)
        prev, cur = cur, nxt
        col += 1
        if col % 2 == 0:
            if not math.isfinite(cur[-1]):
                return best
            best = cur[-1]
    return best


@dataclass
class _SequenceVerdict:
    status: str  # "converged" | "divergent" | "unresolved"
    value: float
    error: float
    level: int


def _analyze(S, A, cfg: QuadratureConfig) -> _SequenceVerdict:
    sigma = cfg.grading_ratio
    window = cfg.divergence_window
    thr = cfg.divergence_growth_threshold
    contract = sigma**_NONCONTRACTING_EXPONENT
    depth = len(S) - 1
    delta = np.diff(S)
    noise = 64.0 * _EPS * A
    estimates = []
    grow_run = 0
    stall_run = 0
    last_value, last_err = float(S[-1]), math.inf
    for k in range(0, depth + 1):
        if k >= 1:
            if not math.isfinite(S[k]) or (S[k - 1] != 0 and S[k] * S[k - 1] > 0 and abs(S[k]) > thr * abs(S[k - 1])):
                grow_run += 1
            else:
                grow_run = 0
        if k >= 2:
            dk, dk1 = delta[k - 1], delta[k - 2]
            if (
                abs(dk) > noise[k]
                and dk * dk1 > 0
                and abs(dk) >= contract * abs(dk1)
            ):
                stall_run += 1
            else:
                stall_run = 0
        if grow_run >= window or stall_run >= window or not math.isfinite(S[k]):
            return _SequenceVerdict("divergent", math.inf, math.inf, k)

        if cfg.extrapolate and k >= 2:
            est = _wynn(S[max(0, k - 9): k + 1])
        else:
            est = float(S[k])
        estimates.append(est)
        if k < 3:
            continue
        quiet = abs(delta[k - 1]) <= noise[k] and abs(delta[k - 2]) <= noise[k]
        if not quiet and (grow_run or stall_run):
            # Wynn maps a geometrically growing sequence to its anti-limit;
            # never accept while the increments fail to contract
            continue
        if quiet:
            est = float(S[k])
            err = abs(delta[k - 1]) + abs(delta[k - 2])
        elif cfg.extrapolate:
            err = abs(est - estimates[-2]) + abs(est - estimates[-3])
        else:
            g = delta[k - 1] / delta[k - 2] if delta[k - 2] != 0 else 0.0
            err = abs(delta[k - 1]) * (g / (1.0 - g) if 0.5 <= g < 1.0 else 1.0)
        err = max(err, 64.0 * _EPS * A[k])
        last_value, last_err = est, err
        if err <= cfg.tolerance(est):
            return _SequenceVerdict("converged", est, err, k)
    return _SequenceVerdict("unresolved", last_value, last_err, depth)


def graded_partial_sums(f, dom: Domain, alpha: float, cfg: QuadratureConfig = QuadratureConfig(), res: int = 1):
    """Raw partial sums ``S_0..S_depth`` of the graded scheme (no extrapolation)."""
    func, support, breaks = _as_callable(f)
    regions = _prepare_regions(dom, support)
    S, _, _ = _partial_sums(func, regions, alpha, cfg, res, cfg.depth(dom.n), breaks)
    return S


def _prepare_regions(dom, support):
    if isinstance(dom, HalfSpaceProduct):
        _check_halfspace_support(dom, support)
    regions = _regions(dom, support)
    for reg in regions:
        reg.domain = dom
    return regions


def _graded(func, dom, power, cfg, support, breaks) -> IntegralResult:
    regions = _prepare_regions(dom, support)
    n = dom.n
    depth = cfg.depth(n)
    prev = None
    cells_used = 0
    last = None
    for step in range(cfg.refinements(n) + 1):
        res = 2**step
        S, A, pts = _partial_sums(func, regions, power, cfg, res, depth, breaks)
        cells_used += pts // cfg.base_order ** n
        verdict = _analyze(S, A, cfg)
        if verdict.status == "divergent":
            return IntegralResult(float(S[-1]), math.inf, cells_used, False, True, verdict.level, res)
        if prev is not None and verdict.status == "converged":
            err = verdict.error + abs(verdict.value - prev)
            last = IntegralResult(verdict.value, err, cells_used, False, False, verdict.level, res)
            if err <= cfg.tolerance(verdict.value):
                return replace(last, converged=True)
        elif verdict.status == "converged":
            last = IntegralResult(verdict.value, verdict.error, cells_used, False, False, verdict.level, res)
        prev = verdict.value if verdict.status == "converged" else None
    raise NoConvergence(
        "graded quadrature did not reach tolerance within max_depth/refinements", result=last
    )


# -- interior scheme --------------------------------------------------------

def _interior(func, dom, power, cfg, support: Box) -> IntegralResult:
    n = dom.n
    order = cfg.base_order
    prev = None
    cells_used = 0
    res = 1
    last = None
    while True:
        npts = (order * res) ** n
        if npts > _MAX_INTERIOR_POINTS:
            break
        value, absval = _tensor_box(func, dom, power, support, order, res)
        cells_used += res**n
        if prev is not None:
            err = max(abs(value - prev), 64.0 * _EPS * absval)
            last = IntegralResult(value, err, cells_used, False, False, 0, res)
            if err <= cfg.tolerance(value):
                return replace(last, converged=True)
        prev = value
        res *= 2
    raise NoConvergence("interior tensor quadrature did not reach tolerance", result=last)


def _tensor_box(func, dom, power, box: Box, order, res):
    n = box.n
    rules = [_rule_1d(box.lo[i], box.hi[i], order, res) for i in range(n)]
    # iterate over the first axis to bound memory
    x0, w0 = rules[0]
    if n > 1:
        grids = np.meshgrid(*[r[0] for r in rules[1:]], indexing="ij")
        wgrids = np.meshgrid(*[r[1] for r in rules[1:]], indexing="ij")
        rest = np.stack([g.ravel() for g in grids], axis=1)
        wrest = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    else:
        rest = np.zeros((1, 0))
        wrest = np.ones(1)
    rows = max(1, _MAX_POINTS_PER_BATCH // len(rest))
    partial, partial_abs = [], []
    for start in range(0, len(x0), rows):
        xs = x0[start:start + rows]
        X = np.concatenate(
            [np.repeat(xs, len(rest))[:, None], np.tile(rest, (len(xs), 1))], axis=1
        )
        vals = np.asarray(func(X), dtype=float) * _weight(dom.distance_many(X), power)
        if not np.all(np.isfinite(vals)):
            raise UnboundedIntegrand("integrand is not finite inside the support")
        F = vals.reshape(len(xs), len(rest))
        partial.extend((w0[start:start + rows] * (F @ wrest)).tolist())
        partial_abs.extend((w0[start:start + rows] * (np.abs(F) @ wrest)).tolist())
    return math.fsum(partial), math.fsum(partial_abs)


# -- public ---------------------------------------------------------------

def _integrate(f, dom: Domain, power: float, cfg: QuadratureConfig) -> IntegralResult:
    """Weighted integral without the ``alpha < n`` admissibility check."""
    if dom.n > 3:
        raise DimensionTooLarge(
            f"tensor quadrature is limited to n <= 3 (got n = {dom.n}); "
            "use product fields on a half-space product domain"
        )
    func, support, breaks = _as_callable(f)
    if isinstance(dom, HalfSpaceProduct):
        _check_halfspace_support(dom, support)
        if _support_is_interior(dom, support):
            return _interior(func, dom, power, cfg, support)
    elif _support_is_interior(dom, support):
        try:
            return _interior(func, dom, power, cfg, support)
        except NoConvergence:
            # a kink of d(x) across the support box slows the tensor rule
            pass
    return _graded(func, dom, power, cfg, support, breaks)


def _check_alpha(alpha):
    # alpha >= n is allowed: divergence is detected, not presumed
    if not math.isfinite(alpha):
        raise InvalidAlpha(f"alpha must be finite, got {alpha}")


def integrate_weighted(f, dom: Domain, alpha: float, cfg: QuadratureConfig = QuadratureConfig()) -> IntegralResult:
    """``integral over dom of f(x) d(x)^(-alpha) dx``.

    ``f`` is a :class:`~hspw_lab.fields.ScalarField` or a callable on
    ``(N, n)`` point arrays.  Divergence is reported through
    ``divergent_flag`` rather than a large value.  ``alpha >= n`` is accepted;
    whether the integral is finite then depends on how fast ``f`` vanishes.
    """
    _check_alpha(alpha)
    return _integrate(f, dom, alpha, cfg)


# -- superlevel sets -----------------------------------------------------

def measure_of_superlevel(dom: Domain, alpha: float, f, level: float,
                          cfg: QuadratureConfig = QuadratureConfig()) -> IntegralResult:
    """``mu_alpha{x : |f(x)| > level}`` by classify-and-bisect on graded cells.

    A cell whose Gauss samples all exceed the level counts fully, one with no
    sample above counts zero, and mixed cells are bisected.  Cells still mixed
    at the bisection limit contribute the midpoint of ``[0, full]`` and half the
    gap goes into the error estimate.
    """
    _check_alpha(alpha)
    if level < 0:
        raise ValueError("level must be >= 0")
    if dom.n > 3:
        raise DimensionTooLarge("superlevel measure is limited to n <= 3")
    func, support, _ = _as_callable(f)
    regions = _prepare_regions(dom, support)
    order = cfg.base_order
    depth = cfg.depth(dom.n)
    max_bisect = cfg.bisection_depth(dom.n)
    sigma = cfg.grading_ratio
    values, gaps = [], []
    cells = 0
    divergent = False

    def full_measure(region, a, b, box_lo, box_hi):
        S0, Ws0 = _gauss_box(order, box_lo, box_hi)
        if a == 0.0 and region.exact:
            if alpha >= 1.0:
                return math.inf
            x, w = _jacobi01(order, float(alpha))
            t = a + (b - a) * x
            wt = w * (b - a) ** (1.0 - alpha)
            X, jac, _ = region.map(t, S0)
            F = jac.reshape(len(t), len(S0))
        else:
            x, w = _gauss01(order)
            t = a + (b - a) * x
            wt = w * (b - a)
            X, jac, tt = region.map(t, S0)
            dist = tt if region.exact else np.minimum(tt, dom.distance_many(X))
            F = (jac * _weight(dist, alpha)).reshape(len(t), len(S0))
        return float(wt @ (F @ Ws0))

    def classify(region, a, b, box_lo, box_hi):
        x, _ = _gauss01(order)
        t = a + (b - a) * x
        S0, _ = _gauss_box(order, box_lo, box_hi)
        X, _, _ = region.map(t, S0)
        above = np.abs(np.asarray(func(X), dtype=float)) > level
        return above.all(), above.any()

    def visit(region, a, b, box_lo, box_hi, depth_left):
        nonlocal cells, divergent
        cells += 1
        all_above, any_above = classify(region, a, b, box_lo, box_hi)
        if all_above:
            full = full_measure(region, a, b, box_lo, box_hi)
            if not math.isfinite(full):
                divergent = True
                return
            values.append(full)
            return
        if not any_above:
            return
        if depth_left == 0:
            full = full_measure(region, a, b, box_lo, box_hi)
            if not math.isfinite(full):
                divergent = True
                return
            values.append(0.5 * full)
            gaps.append(0.5 * full)
            return
        mid_t = 0.5 * (a + b)
        for ta, tb in ((a, mid_t), (mid_t, b)):
            for lo_c, hi_c in _split_box(box_lo, box_hi):
                visit(region, ta, tb, lo_c, hi_c, depth_left - 1)

    for region in regions:
        T = region.t_max
        lo0 = np.zeros(region.m)
        hi0 = np.ones(region.m)
        for j in range(depth):
            visit(region, T * sigma ** (j + 1), T * sigma**j, lo0, hi0, max_bisect)
        visit(region, 0.0, T * sigma**depth, lo0, hi0, max_bisect)
        if divergent:
            break
    if divergent:
        return IntegralResult(math.inf, math.inf, cells, False, True)
    value = math.fsum(values)
    err = math.fsum(gaps)
    return IntegralResult(value, err, cells, err <= cfg.tolerance(value), False, depth)


def _gauss_box(order, lo, hi):
    m = len(lo)
    if m == 0:
        return np.zeros((1, 0)), np.ones(1)
    S, W = _tangential_rule(order, 1, m)
    span = np.asarray(hi) - np.asarray(lo)
    return np.asarray(lo) + S * span, W * np.prod(span)


def _split_box(lo, hi):
    m = len(lo)
    if m == 0:
        return [(lo, hi)]
    mid = 0.5 * (np.asarray(lo) + np.asarray(hi))
    out = []
    for corner in range(2**m):
        clo = np.array(lo, dtype=float)
        chi = np.array(hi, dtype=float)
        for ax in range(m):
            if corner >> ax & 1:
                clo[ax] = mid[ax]
            else:
                chi[ax] = mid[ax]
        out.append((clo, chi))
    return out
