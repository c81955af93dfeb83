"""Hypothesis classes, pairs and the feature-sensitivity score.

Two classes are supported:

* :class:`LinearClassifier` -- ``h(x) = sign(<w, x> + b)``.
* :class:`ExtendedThreshold` -- a two-threshold rule over ``(v, g)`` where
  ``v = f(x')`` is a black-box scalar of the non-interest features and
  ``g in {0, 1}`` is the feature of interest; it predicts +1 iff
  ``v >= theta_g`` (``theta_0 = theta1``, ``theta_1 = theta2``).

Everywhere ``sign(0) = +1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from ._io import fmt, fmt_all
from .errors import DegenerateHypothesisError, DomainError, ProtocolError


def sign_pm(z):
    """Elementwise sign with the ``sign(0) = +1`` convention, as ints."""
    z = np.asarray(z)
    out = np.where(z >= 0, 1, -1)
    return int(out) if out.ndim == 0 else out


# -- linear classifiers -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LinearClassifier:
    w: np.ndarray
    b: float = 0.0
    homogeneous: bool = False

    def __post_init__(self):
        w = np.array(self.w, dtype=float).reshape(-1)
        if w.size == 0 or not np.all(np.isfinite(w)):
            raise DomainError("weights must be a non-empty finite vector")
        if not math.isfinite(self.b):
            raise DomainError("bias must be finite")
        if self.homogeneous and self.b != 0.0:
            raise DomainError("homogeneous classifier must have b = 0")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", float(self.b))

    @property
    def d(self) -> int:
        return self.w.size

    @property
    def feature_index(self) -> Optional[int]:
        return None

    def margin(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.d:
            raise ProtocolError(f"expected dimension {self.d}, got {X.shape[-1]}")
        return X @ self.w + self.b

    def predict(self, X):
        return sign_pm(self.margin(X))

    def normalized(self) -> "LinearClassifier":
        """Return the same classifier scaled to ``||w||_2 = 1``."""
        n = np.linalg.norm(self.w)
        if n == 0:
            raise DegenerateHypothesisError("zero weight vector")
        return LinearClassifier(self.w / n, self.b / n, self.homogeneous)

    def __repr__(self):
        return f"LinearClassifier(w={self.w.tolist()}, b={self.b})"


def lc_predict(h: LinearClassifier, x) -> int:
    x = np.asarray(x, dtype=float)
    if x.shape != (h.d,):
        raise ProtocolError(f"expected a vector of dimension {h.d}, got shape {x.shape}")
    return h.predict(x)


# -- extended thresholds ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ExtendedThreshold:
    """Two-threshold classifier over ``(v, g)``; ``f`` maps raw features to ``v``."""

    theta1: float
    theta2: float
    lo: float = -1.0
    hi: float = 1.0
    f: Optional[Callable] = field(default=None, repr=False)
    f_name: str = "identity"

    def __post_init__(self):
        vals = (self.theta1, self.theta2, self.lo, self.hi)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError("thresholds and range must be finite")
        if not self.lo < self.hi:
            raise DomainError(f"empty range [{self.lo}, {self.hi}]")
        for t in (self.theta1, self.theta2):
            if not self.lo <= t <= self.hi:
                raise DomainError(f"threshold {t} outside [{self.lo}, {self.hi}]")
        for name in ("theta1", "theta2", "lo", "hi"):
            object.__setattr__(self, name, float(getattr(self, name)))

    d = 2
    feature_index = 1

    def threshold(self, g):
        return np.where(np.asarray(g) == 0, self.theta1, self.theta2)

    def value(self, x_prime):
        """Evaluate the black-box ``f`` on raw non-interest features."""
        if self.f is None:
            return np.asarray(x_prime, dtype=float)[..., 0]
        return self.f(x_prime)

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != 2:
            raise ProtocolError(f"extended thresholds take (v, g) points, got {X.shape}")
        v, g = X[..., 0], X[..., 1]
        if not np.all((g == 0) | (g == 1)):
            raise ProtocolError("feature of interest must be 0 or 1")
        return sign_pm(v - self.threshold(g))


def et_predict(h: ExtendedThreshold, v: float, g: int) -> int:
    if g not in (0, 1):
        raise DomainError(f"g must be 0 or 1, got {g!r}")
    return sign_pm(v - (h.theta1 if g == 0 else h.theta2))


def et_to_linear(h: ExtendedThreshold) -> LinearClassifier:
    """Rewrite ``h`` as a 2-D linear classifier over ``(f(x'), g)``."""
    return LinearClassifier(np.array([1.0, h.theta1 - h.theta2]), -h.theta1)


Hypothesis = Union[LinearClassifier, ExtendedThreshold]


# builtin stand-ins for the black-box f


def affine_f(weights, bias=0.0):
    weights = np.asarray(weights, dtype=float)

    def f(x_prime):
        return np.asarray(x_prime, dtype=float) @ weights + bias

    return f


def random_affine_f(dim, seed=0):
    """Affine map with random unit weights; ``|f| <= 1`` on the unit ball."""
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(dim)
    return affine_f(w / np.linalg.norm(w))


def table_f(table: dict):
    """Lookup on the first raw feature; unknown keys raise KeyError."""

    def f(x_prime):
        x_prime = np.atleast_2d(np.asarray(x_prime, dtype=float))
        out = np.array([table[float(k)] for k in x_prime[:, 0]], dtype=float)
        return out if out.size > 1 else out[0]

    return f


# -- pairs and scores ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Pair:
    xi: np.ndarray
    xj: np.ndarray
    s: int

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        xj = np.asarray(self.xj, dtype=float)
        if xi.shape != xj.shape or xi.ndim != 1:
            raise DomainError("pair members must be vectors of equal dimension")
        if not 0 <= self.s < xi.size:
            raise DomainError(f"feature index {self.s} out of range")
        others = np.arange(xi.size) != self.s
        if not np.array_equal(xi[others], xj[others]):
            raise DomainError("pair members must agree off the feature of interest")
        if {xi[self.s], xj[self.s]} != {0.0, 1.0}:
            raise DomainError("feature of interest must take the values 0 and 1")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "xj", xj)


def responsive_pair(h: Hypothesis, p: Pair) -> bool:
    return bool(h.predict(p.xi) != h.predict(p.xj))


@dataclass
class PairSampler:
    """Draws pairs by sampling a base point and toggling feature ``s``.

    ``kind`` selects the base distribution of the non-interest coordinates:
    ``"box"`` (uniform on ``[lo, hi]`` per coordinate), ``"ball"`` (uniform in
    the ball of radius ``hi`` of dimension ``d - 1``) or ``"rows"`` (uniform
    over the rows of ``rows``, an ``n x d`` matrix whose column ``s`` is ignored).
    """

    d: int
    s: Optional[int] = None
    kind: str = "box"
    lo: float = 0.0
    hi: float = 1.0
    rows: Optional[np.ndarray] = None
    seed: int = 0

    def __post_init__(self):
        if self.s is None:
            self.s = self.d - 1
        if not 0 <= self.s < self.d:
            raise DomainError(f"feature index {self.s} out of range for d={self.d}")
        if self.kind not in ("box", "ball", "rows"):
            raise DomainError(f"unknown sampler kind {self.kind!r}")
        if self.kind == "rows":
            if self.rows is None or np.asarray(self.rows).shape[1:] != (self.d,):
                raise DomainError("rows sampler needs an n x d matrix")
            self.rows = np.asarray(self.rows, dtype=float)

    def base_points(self, n, rng):
        k = self.d - 1
        if self.kind == "box":
            base = rng.uniform(self.lo, self.hi, size=(n, k))
        elif self.kind == "ball":
            g = rng.standard_normal((n, k))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            base = g * (self.hi * rng.uniform(size=(n, 1)) ** (1.0 / k))
        else:
            idx = rng.integers(0, len(self.rows), size=n)
            base = np.delete(self.rows[idx], self.s, axis=1)
        return base

    def sample(self, n, rng=None):
        """Return ``(Xi, Xj)``: ``n`` pairs with ``x_s = 0`` and ``x_s = 1``."""
        if rng is None:
            rng = np.random.default_rng(self.seed)
        base = self.base_points(n, rng)
        xi = np.insert(base, self.s, 0.0, axis=1)
        xj = np.insert(base, self.s, 1.0, axis=1)
        return xi, xj

    def pairs(self, n, rng=None):
        xi, xj = self.sample(n, rng)
        return [Pair(a, b, self.s) for a, b in zip(xi, xj)]


def dimension_constant(d: int) -> float:
    """``2^(d-2) / (pi^((d-1)/2) * Gamma((d+1)/2))``, evaluated in log space."""
    if int(d) != d or d < 2:
        raise DomainError(f"dimension constant needs integer d >= 2, got {d}")
    logc = (d - 2) * math.log(2.0) - 0.5 * (d - 1) * math.log(math.pi) - math.lgamma((d + 1) / 2)
    return math.exp(logc)


def slab_constant(d: int) -> float:
    """``2^(d-2) / V_{d-1}`` with ``V_k`` the volume of the unit ``k``-ball.

    This is the slab-over-ball ratio before simplification:
    ``2^(d-2) * Gamma((d+1)/2) / pi^((d-1)/2)``. It agrees with
    :func:`dimension_constant` at ``d = 3`` only; for ``d >= 4`` the latter is
    smaller than the true worst-case ratio (see the score-bound tests).
    """
    if int(d) != d or d < 2:
        raise DomainError(f"slab constant needs integer d >= 2, got {d}")
    logc = (d - 2) * math.log(2.0) + math.lgamma((d + 1) / 2) - 0.5 * (d - 1) * math.log(math.pi)
    return math.exp(logc)


def score_upper_bound_lc(h: LinearClassifier, s: Optional[int] = None, constant=dimension_constant) -> float:
    """Upper bound ``c * |w_s| / ||w'||`` on the responsive-pair fraction.

    Meant for inputs whose non-interest part lies in the unit ball. ``constant``
    maps ``d`` to ``c``.
    """
    s = h.d - 1 if s is None else s
    w_rest = np.delete(h.w, s)
    n = np.linalg.norm(w_rest)
    if n == 0:
        raise DegenerateHypothesisError("cannot normalize: all non-interest weights are zero")
    return constant(h.d) * abs(h.w[s]) / n


def score_et(h: ExtendedThreshold) -> float:
    return abs(h.theta2 - h.theta1) / (h.hi - h.lo)


def score_monte_carlo(h: Hypothesis, sampler: PairSampler, n: int) -> float:
    if n < 1:
        raise DomainError("need at least one sampled pair")
    xi, xj = sampler.sample(n)
    return float(np.mean(h.predict(xi) != h.predict(xj)))


@dataclass
class HypothesisPool:
    members: Sequence[Hypothesis]
    scores: Optional[np.ndarray] = None

    def __post_init__(self):
        self.members = list(self.members)
        if not self.members:
            raise DomainError("hypothesis pool must be nonempty")
        if self.scores is not None:
            self.scores = np.asarray(self.scores, dtype=float)
            if self.scores.shape != (len(self.members),):
                raise DomainError("one score per member required")

    def __len__(self):
        return len(self.members)

    def score_with(self, fn):
        if self.scores is None:
            self.scores = np.array([fn(h) for h in self.members], dtype=float)
        return self.scores

    def labels(self, X):
        """Member-by-point label matrix."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if all(isinstance(h, LinearClassifier) for h in self.members):
            W = np.stack([h.w for h in self.members])
            b = np.array([h.b for h in self.members])
            return sign_pm(W @ X.T + b[:, None])
        return np.stack([h.predict(X) for h in self.members])


# -- text records -------------------------------------------------------------


def to_record(h: Hypothesis) -> str:
    if isinstance(h, LinearClassifier):
        return ",".join(["lc", str(h.d), *fmt_all(h.w), fmt(h.b), str(int(h.homogeneous))])
    return ",".join(["et", fmt(h.theta1), fmt(h.theta2), fmt(h.lo), fmt(h.hi), h.f_name])


def from_record(line: str, f_registry: Optional[dict] = None) -> Hypothesis:
    parts = line.strip().split(",")
    tag = parts[0]
    try:
        if tag == "lc":
            d = int(parts[1])
            if len(parts) != d + 4:
                raise ValueError("field count")
            w = [float(v) for v in parts[2 : 2 + d]]
            return LinearClassifier(np.array(w), float(parts[2 + d]), bool(int(parts[3 + d])))
        if tag == "et":
            t1, t2, lo, hi = (float(v) for v in parts[1:5])
            name = parts[5] if len(parts) > 5 else "identity"
            f = None if name == "identity" else (f_registry or {})[name]
            return ExtendedThreshold(t1, t2, lo, hi, f=f, f_name=name)
    except (ValueError, IndexError, KeyError) as exc:
        raise DomainError(f"malformed hypothesis record {line!r}: {exc}") from exc
    raise DomainError(f"unknown hypothesis tag {tag!r}")
