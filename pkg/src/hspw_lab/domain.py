"""Proper subdomains of R^n and the distance to their boundary.

Every domain works on point arrays of shape ``(N, n)``; single points are
accepted as 1-D sequences by the module-level helpers.  Boundary points are
never inside: the Hardy operator divides by the distance, so ``d = 0`` is
excluded everywhere.

The letter ``d`` is used by the half-space construction for the dimension of
the unrestricted factor.  Here it is always ``HalfSpaceProduct.d`` and never
the distance, which is spelled out in full.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import DegenerateDomain, PointOutsideDomain

__all__ = [
    "Interval",
    "Box",
    "Ball",
    "ConvexPolytope",
    "HalfSpaceProduct",
    "distance_to_boundary",
    "contains",
    "bounding_box",
    "domain_from_json",
    "domain_to_json",
]

_NORMAL_TOL = 1e-12


def _as_points(X, n):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, n) if n > 1 else X.reshape(-1, 1)
    if X.shape[-1] != n:
        raise ValueError(f"expected points in R^{n}, got shape {X.shape}")
    return X


class Domain:
    """Common interface.  Subclasses are frozen dataclasses."""

    n: int

    def contains_many(self, X) -> np.ndarray:
        raise NotImplementedError

    def distance_many(self, X) -> np.ndarray:
        """Distance to the boundary for interior points (no containment check)."""
        raise NotImplementedError

    def distance_gradient_many(self, X) -> np.ndarray:
        """Gradient of the distance function where it is differentiable."""
        raise NotImplementedError

    def bounding_box(self) -> "Box":
        raise NotImplementedError

    def center(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def is_bounded(self) -> bool:
        return True


@dataclass(frozen=True)
class Box(Domain):
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi) or not lo:
            raise DegenerateDomain("box bounds must be nonempty and of equal length")
        if any(not (a < b) for a, b in zip(lo, hi)):
            raise DegenerateDomain(f"box has empty interior: lo={lo}, hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def n(self):
        return len(self.lo)

    @property
    def lo_arr(self):
        return np.array(self.lo)

    @property
    def hi_arr(self):
        return np.array(self.hi)

    @property
    def widths(self):
        return self.hi_arr - self.lo_arr

    @property
    def volume(self):
        return float(np.prod(self.widths))

    def contains_many(self, X):
        X = _as_points(X, self.n)
        return np.all((X > self.lo_arr) & (X < self.hi_arr), axis=1)

    def distance_many(self, X):
        X = _as_points(X, self.n)
        return np.minimum(X - self.lo_arr, self.hi_arr - X).min(axis=1)

    def distance_gradient_many(self, X):
        X = _as_points(X, self.n)
        margins = np.concatenate([X - self.lo_arr, self.hi_arr - X], axis=1)
        k = np.argmin(margins, axis=1)
        G = np.zeros_like(X)
        rows = np.arange(len(X))
        axis = k % self.n
        G[rows, axis] = np.where(k < self.n, 1.0, -1.0)
        return G

    def bounding_box(self):
        return self

    def center(self):
        return 0.5 * (self.lo_arr + self.hi_arr)

    def scaled(self, factor: float) -> "Box":
        """The box ``{x / factor : x in self}`` (used for dilated supports)."""
        return Box(tuple(self.lo_arr / factor), tuple(self.hi_arr / factor))

    def contains_box(self, other: "Box", strict=False) -> bool:
        if strict:
            return bool(np.all(other.lo_arr > self.lo_arr) and np.all(other.hi_arr < self.hi_arr))
        return bool(np.all(other.lo_arr >= self.lo_arr) and np.all(other.hi_arr <= self.hi_arr))

    def corners(self) -> np.ndarray:
        grids = np.meshgrid(*[(a, b) for a, b in zip(self.lo, self.hi)], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)


@dataclass(frozen=True)
class Interval(Box):
    """One-dimensional box ``(lo, hi)``."""

    def __init__(self, lo: float, hi: float):
        Box.__init__(self, (float(lo),), (float(hi),))

    @property
    def length(self):
        return self.hi[0] - self.lo[0]


@dataclass(frozen=True)
class Ball(Domain):
    center_: tuple
    radius: float

    def __init__(self, center, radius):
        c = tuple(float(v) for v in np.atleast_1d(center))
        if not c:
            raise DegenerateDomain("ball center must be nonempty")
        if not radius > 0:
            raise DegenerateDomain(f"ball radius must be positive, got {radius}")
        object.__setattr__(self, "center_", c)
        object.__setattr__(self, "radius", float(radius))

    @property
    def n(self):
        return len(self.center_)

    def center(self):
        return np.array(self.center_)

    def contains_many(self, X):
        X = _as_points(X, self.n)
        return np.linalg.norm(X - self.center(), axis=1) < self.radius

    def distance_many(self, X):
        X = _as_points(X, self.n)
        return self.radius - np.linalg.norm(X - self.center(), axis=1)

    def distance_gradient_many(self, X):
        X = _as_points(X, self.n)
        v = X - self.center()
        r = np.linalg.norm(v, axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            G = -v / r
        return np.where(r > 0, G, 0.0)

    def bounding_box(self):
        c = self.center()
        return Box(tuple(c - self.radius), tuple(c + self.radius))


@dataclass(frozen=True)
class ConvexPolytope(Domain):
    """``{x : normal_i . x < offset_i for all faces i}`` with unit outward normals.

    The half-space description makes non-convex input unrepresentable; the
    polytope must be bounded with nonempty interior.
    """

    normals: tuple
    offsets: tuple
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __init__(self, faces):
        normals, offsets = [], []
        for normal, offset in faces:
            a = np.asarray(normal, dtype=float)
            if abs(np.linalg.norm(a) - 1.0) > _NORMAL_TOL:
                raise DegenerateDomain(f"face normal {a.tolist()} is not a unit vector")
            normals.append(tuple(a))
            offsets.append(float(offset))
        if not normals:
            raise DegenerateDomain("polytope needs at least one face")
        dims = {len(a) for a in normals}
        if len(dims) != 1:
            raise DegenerateDomain("face normals have inconsistent dimensions")
        object.__setattr__(self, "normals", tuple(normals))
        object.__setattr__(self, "offsets", tuple(offsets))
        object.__setattr__(self, "_cache", {})
        center, radius = self._chebyshev()
        if radius <= 1e-12:
            raise DegenerateDomain("polytope has empty interior")
        self._cache["center"] = center
        self._cache["inradius"] = radius
        self.bounding_box()  # raises on unbounded input

    @classmethod
    def from_halfspaces(cls, A, b):
        """Build from ``A x < b`` with arbitrary (nonzero) row scaling."""
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        norms = np.linalg.norm(A, axis=1)
        if np.any(norms == 0):
            raise DegenerateDomain("zero face normal")
        return cls([(A[i] / norms[i], b[i] / norms[i]) for i in range(len(b))])

    @property
    def n(self):
        return len(self.normals[0])

    @property
    def A(self):
        return np.array(self.normals)

    @property
    def b(self):
        return np.array(self.offsets)

    def _chebyshev(self):
        A, b = self.A, self.b
        n = A.shape[1]
        c = np.zeros(n + 1)
        c[-1] = -1.0
        A_ub = np.hstack([A, np.ones((len(b), 1))])
        bounds = [(None, None)] * n + [(0, None)]
        res = linprog(c, A_ub=A_ub, b_ub=b, bounds=bounds, method="highs")
        if res.status == 3:
            raise DegenerateDomain("polytope is unbounded")
        if not res.success:
            raise DegenerateDomain(f"polytope interior LP failed: {res.message}")
        return res.x[:n], res.x[-1]

    def center(self):
        return self._cache["center"].copy()

    @property
    def inradius(self):
        return self._cache["inradius"]

    def contains_many(self, X):
        X = _as_points(X, self.n)
        return np.all(X @ self.A.T < self.b, axis=1)

    def distance_many(self, X):
        X = _as_points(X, self.n)
        return (self.b - X @ self.A.T).min(axis=1)

    def distance_gradient_many(self, X):
        X = _as_points(X, self.n)
        k = np.argmin(self.b - X @ self.A.T, axis=1)
        return -self.A[k]

    def bounding_box(self):
        if "bbox" not in self._cache:
            A, b, n = self.A, self.b, self.n
            lo, hi = np.empty(n), np.empty(n)
            for i in range(n):
                c = np.zeros(n)
                c[i] = 1.0
                for sign, store in ((1.0, lo), (-1.0, hi)):
                    res = linprog(sign * c, A_ub=A, b_ub=b, bounds=[(None, None)] * n, method="highs")
                    if res.status == 3 or not res.success:
                        raise DegenerateDomain("polytope is unbounded")
                    store[i] = res.x[i]
            self._cache["bbox"] = Box(tuple(lo), tuple(hi))
        return self._cache["bbox"]

    def vertices(self) -> np.ndarray:
        if "vertices" not in self._cache:
            from scipy.spatial import HalfspaceIntersection

            hs = np.hstack([self.A, -self.b[:, None]])
            self._cache["vertices"] = HalfspaceIntersection(hs, self.center()).intersections
        return self._cache["vertices"]


@dataclass(frozen=True)
class HalfSpaceProduct(Domain):
    """``R^d x R^r_+``: the last ``r`` coordinates are positive.

    ``truncation`` only bounds quadrature; its faces are not boundary.
    """

    d: int
    r: int
    truncation: Box

    def __post_init__(self):
        if int(self.d) != self.d or int(self.r) != self.r or self.d < 1 or self.r < 1:
            raise DegenerateDomain(f"need positive integers d, r; got d={self.d}, r={self.r}")
        if not isinstance(self.truncation, Box):
            object.__setattr__(self, "truncation", Box(*self.truncation))
        if self.truncation.n != self.d + self.r:
            raise DegenerateDomain("truncation box dimension must equal d + r")
        if np.any(self.truncation.hi_arr[self.d:] <= 0):
            raise DegenerateDomain("truncation box misses the positive half-space")

    @property
    def n(self):
        return self.d + self.r

    @property
    def is_bounded(self):
        return False

    def contains_many(self, X):
        X = _as_points(X, self.n)
        return np.all(X[:, self.d:] > 0, axis=1)

    def distance_many(self, X):
        X = _as_points(X, self.n)
        return X[:, self.d:].min(axis=1)

    def distance_gradient_many(self, X):
        X = _as_points(X, self.n)
        k = np.argmin(X[:, self.d:], axis=1)
        G = np.zeros_like(X)
        G[np.arange(len(X)), self.d + k] = 1.0
        return G

    def bounding_box(self):
        return self.truncation

    def center(self):
        c = self.truncation.center()
        y = c[self.d:]
        c[self.d:] = np.where(y > 0, y, 0.5 * self.truncation.hi_arr[self.d:])
        return c


def contains(dom: Domain, x) -> bool:
    return bool(dom.contains_many(_as_points(x, dom.n))[0])


def distance_to_boundary(dom: Domain, x) -> float:
    """Distance from an interior point to the boundary of ``dom``."""
    P = _as_points(x, dom.n)
    if not dom.contains_many(P)[0]:
        raise PointOutsideDomain(f"{np.ravel(x).tolist()} is not in the open interior")
    return float(dom.distance_many(P)[0])


def bounding_box(dom: Domain) -> Box:
    return dom.bounding_box()


def inradius(dom: Domain) -> float:
    """Distance from ``dom.center()`` to the boundary."""
    return float(dom.distance_many(dom.center()[None, :])[0])


# -- JSON ---------------------------------------------------------------

def domain_from_json(doc: dict) -> Domain:
    """Parse ``{"type": ..., ...}``.  Raises ``KeyError``/``ValueError`` or
    :class:`DegenerateDomain` on bad input."""
    kind = doc["type"]
    if kind == "interval":
        return Interval(doc["lo"], doc["hi"])
    if kind == "box":
        return Box(tuple(doc["lo"]), tuple(doc["hi"]))
    if kind == "ball":
        return Ball(doc["center"], doc["radius"])
    if kind == "polytope":
        faces = doc["faces"]
        return ConvexPolytope.from_halfspaces([f["normal"] for f in faces], [f["offset"] for f in faces])
    if kind == "halfspace_product":
        trunc = doc["truncation"]
        return HalfSpaceProduct(int(doc["d"]), int(doc["r"]), Box(tuple(trunc["lo"]), tuple(trunc["hi"])))
    raise ValueError(f"unknown domain type {kind!r}")


def domain_to_json(dom: Domain) -> dict:
    if isinstance(dom, Interval):
        return {"type": "interval", "lo": dom.lo[0], "hi": dom.hi[0]}
    if isinstance(dom, Box):
        return {"type": "box", "lo": list(dom.lo), "hi": list(dom.hi)}
    if isinstance(dom, Ball):
        return {"type": "ball", "center": list(dom.center_), "radius": dom.radius}
    if isinstance(dom, ConvexPolytope):
        return {
            "type": "polytope",
            "faces": [{"normal": list(a), "offset": b} for a, b in zip(dom.normals, dom.offsets)],
        }
    if isinstance(dom, HalfSpaceProduct):
        t = dom.truncation
        return {"type": "halfspace_product", "d": dom.d, "r": dom.r,
                "truncation": {"lo": list(t.lo), "hi": list(t.hi)}}
    raise TypeError(type(dom))
