"""Exact explanation generators used by a truthful data scientist.

Counterfactuals are L2-nearest oppositely-labeled points. Anchors are regions
around the query whose points mostly share its label; three shapes exist:
axis-aligned boxes, rays ``{lambda * x : lambda > 0}`` (the worst case for
homogeneous linear classifiers), and intervals on the ``f``-axis of an
extended threshold.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DegenerateHypothesisError, DomainError
from .hypotheses import ExtendedThreshold, LinearClassifier, et_predict, sign_pm


@dataclass(frozen=True, eq=False)
class CounterfactualPoint:
    x_prime: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x_prime", np.asarray(self.x_prime, dtype=float))

    kind = "counterfactual"

    def payload(self):
        return list(self.x_prime)


@dataclass(frozen=True, eq=False)
class AnchorRegion:
    """Common fields of all anchor shapes: precision ``tau`` and ``coverage``."""

    tau: float
    coverage: float

    def contains(self, x) -> bool:
        return bool(self.mask(np.atleast_2d(np.asarray(x, dtype=float)))[0])

    def mask(self, X) -> np.ndarray:
        """Row-wise membership of ``X`` in the region."""
        raise NotImplementedError

    def sample(self, n, rng):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class BoxAnchor(AnchorRegion):
    lower: np.ndarray = None
    upper: np.ndarray = None

    kind = "box"

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise DomainError("box needs lower <= upper coordinatewise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def volume(self):
        return float(np.prod(self.upper - self.lower))

    def mask(self, X):
        X = np.atleast_2d(X)
        return np.all((X >= self.lower) & (X <= self.upper), axis=1)

    def sample(self, n, rng):
        if n > 0 and np.any(self.upper == self.lower):
            warnings.warn("box anchor has zero volume; no points sampled")
            return np.empty((0, self.lower.size))
        return rng.uniform(self.lower, self.upper, size=(n, self.lower.size))

    def payload(self):
        return [*self.lower, *self.upper, self.tau, self.coverage]


@dataclass(frozen=True, eq=False)
class RayAnchor(AnchorRegion):
    direction: np.ndarray = None

    kind = "ray"

    def __post_init__(self):
        u = np.asarray(self.direction, dtype=float)
        n = np.linalg.norm(u)
        if n == 0:
            raise DegenerateHypothesisError("ray anchor needs a non-zero direction")
        # leave unit vectors alone so transcripts round-trip bit-exactly
        object.__setattr__(self, "direction", u if abs(n - 1.0) <= 1e-15 else u / n)

    def mask(self, X):
        X = np.atleast_2d(X)
        lam = X @ self.direction
        off = np.max(np.abs(X - lam[:, None] * self.direction), axis=1)
        return (lam > 0) & (off <= 1e-12 * np.maximum(1.0, lam))

    def sample(self, n, rng):
        lam = 2.0 - rng.uniform(0.0, 2.0, size=n)  # (0, 2]
        return lam[:, None] * self.direction[None, :]

    def payload(self):
        return [*self.direction, self.tau, self.coverage]


@dataclass(frozen=True, eq=False)
class IntervalAnchor(AnchorRegion):
    """Interval ``[lo, hi]`` on the ``f``-axis at a fixed value ``g``."""

    lo: float = 0.0
    hi: float = 0.0
    g: int = 0

    kind = "interval"

    def __post_init__(self):
        if self.lo > self.hi:
            raise DomainError("interval needs lo <= hi")

    def mask(self, X):
        X = np.atleast_2d(X)
        return (X[:, 1] == self.g) & (X[:, 0] >= self.lo) & (X[:, 0] <= self.hi)

    def sample(self, n, rng):
        if n > 0 and self.lo == self.hi:
            warnings.warn("interval anchor has zero length; no points sampled")
            return np.empty((0, 2))
        v = rng.uniform(self.lo, self.hi, size=n)
        return np.column_stack([v, np.full(n, float(self.g))])

    def payload(self):
        return [self.lo, self.hi, self.g, self.tau, self.coverage]


def sample_anchor(a: AnchorRegion, n: int, seed=0):
    if n < 0:
        raise DomainError("n must be non-negative")
    return a.sample(n, np.random.default_rng(seed))


# -- counterfactuals ----------------------------------------------------------


def default_gamma(x):
    return 1e-6 * max(1.0, float(np.max(np.abs(x))) if np.size(x) else 1.0)


def counterfactual_lc(h: LinearClassifier, x, gamma: Optional[float] = None) -> CounterfactualPoint:
    """Project ``x`` onto the decision hyperplane and step ``gamma`` past it."""
    x = np.asarray(x, dtype=float)
    w = h.w
    ww = float(w @ w)
    if ww == 0:
        raise DegenerateHypothesisError("zero weight vector has no decision boundary")
    if gamma is None:
        gamma = default_gamma(x)
    if gamma <= 0:
        raise DomainError("gamma must be positive")
    m = float(h.margin(x))
    lam = m / ww
    side = 1.0 if m >= 0 else -1.0
    xp = x - lam * w - gamma * side * w / math.sqrt(ww)
    return CounterfactualPoint(xp)


ET_METRICS = ("additive", "l2")


def counterfactual_et(h: ExtendedThreshold, v: float, g: int, metric: str = "additive") -> CounterfactualPoint:
    """Nearest oppositely-labeled point of an extended threshold.

    On each line ``g'`` the nearest opposite point is either ``(v, g')``
    itself (when already opposite) or the threshold point ``(theta_g', g')``.
    Threshold points stand for the limit of the opposite side and are deemed
    oppositely labeled. Ties go to the query's own line.

    ``metric="additive"`` charges ``|dv| + |dg|``: switching ``g`` costs a
    full unit on top of the move along ``f``. Under this cost the queries
    ``(l, 0)`` and ``(u, 1)`` always reveal both thresholds. ``metric="l2"``
    uses ``sqrt(dv^2 + dg^2)``, under which they can both reveal the same
    threshold (e.g. theta1=0.9, theta2=0).
    """
    if metric not in ET_METRICS:
        raise ConfigurationError(f"unknown ET counterfactual metric {metric!r}")
    y = et_predict(h, v, g)
    best = None
    for gp in (g, 1 - g):
        theta = h.theta1 if gp == 0 else h.theta2
        if gp != g and et_predict(h, v, gp) != y:
            cand = (v, gp)
        else:
            cand = (theta, gp)
        dv, dg = abs(cand[0] - v), abs(cand[1] - g)
        dist = dv + dg if metric == "additive" else math.hypot(dv, dg)
        if best is None or dist < best[0]:
            best = (dist, cand)
    return CounterfactualPoint(np.array(best[1], dtype=float))


# -- anchors ------------------------------------------------------------------


def box_coverage(lower, upper, domain=(0.0, 1.0)):
    """Volume fraction of the box inside the reference box ``domain^d``."""
    dlo, dhi = domain
    inter = np.clip(np.minimum(upper, dhi) - np.maximum(lower, dlo), 0.0, None)
    return float(np.prod(inter / (dhi - dlo)))


def anchor_lc(
    h: LinearClassifier,
    x,
    mode: str = "typical",
    side: Optional[float] = None,
    volume: Optional[float] = None,
    n_samples: int = 1000,
    seed=0,
    domain=(0.0, 1.0),
    coverage_samples=None,
) -> AnchorRegion:
    """Anchor for a linear classifier.

    ``worst_case`` returns the ray through ``x`` (homogeneous ``h`` only).
    ``typical`` returns the axis-aligned box of edge ``side`` (or of total
    ``volume``) centered at ``x``; its precision is estimated from
    ``n_samples`` uniform points. Coverage is the volume fraction of the
    reference box ``domain^d``, or the empirical fraction of
    ``coverage_samples`` (draws from D) when those are given.
    """
    x = np.asarray(x, dtype=float)
    if mode == "worst_case":
        if not h.homogeneous and h.b != 0.0:
            raise ConfigurationError("ray anchors are only valid for homogeneous classifiers")
        if not np.any(x):
            raise DegenerateHypothesisError("cannot anchor a ray at the origin")
        return RayAnchor(tau=1.0, coverage=0.0, direction=x)
    if mode != "typical":
        raise ConfigurationError(f"unknown anchor mode {mode!r}")
    if side is None:
        side = volume ** (1.0 / x.size) if volume is not None else 0.2
    if side <= 0:
        raise DomainError("anchor box needs positive side length")
    lower, upper = x - side / 2, x + side / 2
    rng = np.random.default_rng(seed)
    pts = rng.uniform(lower, upper, size=(n_samples, x.size))
    tau = float(np.mean(h.predict(pts) == h.predict(x)))
    if coverage_samples is not None:
        cs = np.asarray(coverage_samples, dtype=float)
        coverage = float(np.mean(np.all((cs >= lower) & (cs <= upper), axis=1)))
    else:
        coverage = box_coverage(lower, upper, domain)
    return BoxAnchor(tau=tau, coverage=coverage, lower=lower, upper=upper)


def interval_precision(h: ExtendedThreshold, lo, hi, g, y):
    """Exact fraction of ``[lo, hi] x {g}`` labeled ``y``."""
    theta = h.theta1 if g == 0 else h.theta2
    if hi == lo:
        return float(et_predict(h, lo, g) == y)
    above = min(max(hi - max(lo, theta), 0.0), hi - lo) / (hi - lo)
    return above if y == 1 else 1.0 - above


def anchor_et(h: ExtendedThreshold, v: float, g: int, c: float) -> IntervalAnchor:
    """Worst-case interval anchor of length ``c`` on the query's label side."""
    if c <= 0:
        raise DomainError("coverage length must be positive")
    if c > h.hi - h.lo:
        raise DomainError("coverage length exceeds the range of f")
    y = et_predict(h, v, g)
    lo, hi = (v - c, v) if y == -1 else (v, v + c)
    lo, hi = max(lo, h.lo), min(hi, h.hi)
    lo, hi = min(lo, v), max(hi, v)  # keep the query inside after clipping
    tau = interval_precision(h, lo, hi, g, y)
    return IntervalAnchor(tau=tau, coverage=(hi - lo) / (h.hi - h.lo), lo=lo, hi=hi, g=g)


__all__ = [
    "AnchorRegion",
    "BoxAnchor",
    "CounterfactualPoint",
    "IntervalAnchor",
    "RayAnchor",
    "anchor_et",
    "anchor_lc",
    "box_coverage",
    "counterfactual_et",
    "counterfactual_lc",
    "ET_METRICS",
    "default_gamma",
    "interval_precision",
    "sample_anchor",
]
