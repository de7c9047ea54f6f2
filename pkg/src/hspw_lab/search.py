"""Restarted Nelder-Mead simplex descent on a box.

The search works in unit-cube coordinates and projects trial points back
into the box.  Evaluations are cached and counted against a global budget;
since no step depends on the remaining budget, a run with budget ``B`` is a
prefix of the run with any larger budget.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["SearchResult", "restarted_nelder_mead"]


class _Stop(Exception):
    pass


@dataclass
class SearchResult:
    x: np.ndarray
    fun: float
    evaluations: int
    exhausted: bool
    history: list = field(default_factory=list)


class _Objective:
    def __init__(self, func, lower, upper, budget):
        self.func = func
        self.lower = lower
        self.upper = upper
        self.budget = budget
        self.cache = {}
        self.history = []
        self.best = (None, math.inf)

    def to_box(self, z):
        return self.lower + np.clip(z, 0.0, 1.0) * (self.upper - self.lower)

    def __call__(self, z):
        z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
        key = tuple(z.tolist())
        if key in self.cache:
            return self.cache[key]
        if len(self.cache) >= self.budget:
            raise _Stop
        x = self.to_box(z)
        val = float(self.func(x))
        if math.isnan(val):
            val = math.inf
        self.cache[key] = val
        self.history.append((x.copy(), val))
        if val < self.best[1]:
            self.best = (x.copy(), val)
        return val


def _nelder_mead(obj, z0, step, xtol, ftol, max_iter):
    k = len(z0)
    simplex = [np.clip(z0, 0, 1)]
    for i in range(k):
        z = simplex[0].copy()
        z[i] = z[i] + step if z[i] + step <= 1.0 else z[i] - step
        simplex.append(z)
    values = [obj(z) for z in simplex]
    for _ in range(max_iter):
        order = np.argsort(values, kind="stable")
        simplex = [simplex[i] for i in order]
        values = [values[i] for i in order]
        spread = max(np.max(np.abs(z - simplex[0])) for z in simplex[1:])
        finite = all(math.isfinite(v) for v in values)
        if spread < xtol and (not finite or values[-1] - values[0] <= ftol * (1 + abs(values[0]))):
            break
        centroid = np.mean(simplex[:-1], axis=0)
        worst = simplex[-1]
        zr = np.clip(centroid + (centroid - worst), 0, 1)
        fr = obj(zr)
        if values[0] <= fr < values[-2]:
            simplex[-1], values[-1] = zr, fr
            continue
        if fr < values[0]:
            ze = np.clip(centroid + 2.0 * (centroid - worst), 0, 1)
            fe = obj(ze)
            if fe < fr:
                simplex[-1], values[-1] = ze, fe
            else:
                simplex[-1], values[-1] = zr, fr
            continue
        if fr < values[-1]:
            zc = np.clip(centroid + 0.5 * (zr - centroid), 0, 1)
        else:
            zc = np.clip(centroid + 0.5 * (worst - centroid), 0, 1)
        fc = obj(zc)
        if fc < min(fr, values[-1]):
            simplex[-1], values[-1] = zc, fc
            continue
        best = simplex[0]
        for i in range(1, k + 1):
            simplex[i] = best + 0.5 * (simplex[i] - best)
            values[i] = obj(simplex[i])


def restarted_nelder_mead(func, bounds, budget=500, restarts=5, seed=0, step=0.15,
                          xtol=1e-4, ftol=1e-10, max_iter=400) -> SearchResult:
    """Minimize ``func`` over the box ``bounds = [(lo, hi), ...]``.

    The first start is the box center, later starts are uniform draws from a
    generator seeded with ``seed``.  Stops after ``restarts`` starts or once
    ``budget`` distinct evaluations have been spent.
    """
    lower = np.array([b[0] for b in bounds], dtype=float)
    upper = np.array([b[1] for b in bounds], dtype=float)
    obj = _Objective(func, lower, upper, budget)
    rng = np.random.default_rng(seed)
    k = len(bounds)
    exhausted = False
    try:
        if k == 0:
            obj(np.zeros(0))
        else:
            for i in range(restarts):
                z0 = np.full(k, 0.5) if i == 0 else rng.uniform(0.0, 1.0, size=k)
                _nelder_mead(obj, z0, step, xtol, ftol, max_iter)
    except _Stop:
        exhausted = True
    x, fun = obj.best
    if x is None and obj.history:
        x, fun = obj.history[0]
    return SearchResult(x=x, fun=fun, evaluations=len(obj.cache), exhausted=exhausted,
                        history=obj.history)
