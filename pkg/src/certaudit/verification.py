"""Auditor-side checks of explanations from a possibly untruthful DS.

Anchor claims (precision and coverage) are checked by sampling, with the
Hoeffding tail ``2 exp(-2 delta^2 n)`` reported next to the verdict.
Counterfactual claims are checked by sampling shrinking balls around the
query: a differently labeled point closer than the claimed ``x'`` proves the
claim was not minimal. Finding nothing proves nothing.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, UnverifiableError
from .explanations import AnchorRegion, BoxAnchor, CounterfactualPoint, box_coverage
from .protocol import DataScientist, Query, Response


class Status(str, enum.Enum):
    CONSISTENT = "Consistent"
    FLAGGED = "Flagged"

    def __str__(self):
        return self.value


class PostFlagPolicy(str, enum.Enum):
    """What the harness does after a flagged explanation."""

    STOP = "stop"
    ESTIMATE = "estimate"
    BASELINE = "baseline"


DEFAULT_POST_FLAG_POLICY = PostFlagPolicy.BASELINE


@dataclass(frozen=True)
class Verdict:
    status: Status
    estimate: float
    bound: float
    claimed: float = float("nan")
    samples: int = 0

    @property
    def flagged(self) -> bool:
        return self.status is Status.FLAGGED


def hoeffding_bound(delta_gap: float, n: int) -> float:
    """``Pr(|tau - tau_hat| >= delta) <= 2 exp(-2 delta^2 n)``."""
    return 2.0 * math.exp(-2.0 * delta_gap * delta_gap * n)


class CountingOracle:
    """Wraps a label oracle and counts the labels it hands out."""

    def __init__(self, oracle):
        self.oracle = oracle
        self.count = 0

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        self.count += len(X)
        if hasattr(self.oracle, "hypothesis"):
            return np.asarray(self.oracle.hypothesis.predict(X))
        return np.asarray(self.oracle(X))


def _check(n, delta_gap):
    if n < 1:
        raise DomainError("need at least one sample")
    if delta_gap < 0:
        raise DomainError("delta_gap must be non-negative")


def _verdict(claimed, estimate, delta_gap, n, bound=None):
    status = Status.FLAGGED if abs(claimed - estimate) > delta_gap else Status.CONSISTENT
    return Verdict(status, estimate, hoeffding_bound(delta_gap, n) if bound is None else bound, claimed, n)


def sample_in_region(a: AnchorRegion, dist_sampler: Callable, n: int, rng, max_rounds: int = 1000):
    """``n`` draws from ``D`` restricted to ``a`` by rejection.

    ``dist_sampler(k, rng)`` returns ``k`` draws from ``D``. A sampler that
    already draws inside the region is accepted as is.
    """
    kept, total = [], 0
    for _ in range(max_rounds):
        X = np.atleast_2d(dist_sampler(max(n, 64), rng))
        inside = X[a.mask(X)]
        kept.append(inside)
        total += len(inside)
        if total >= n:
            return np.concatenate(kept)[:n]
    if total == 0:
        raise UnverifiableError("the anchor region has no mass under D")
    raise UnverifiableError(f"only {total} of {n} draws landed in the anchor region")


def verify_anchor_precision(
    a: AnchorRegion,
    claimed_tau: float,
    label_oracle,
    dist_sampler: Callable,
    n: int,
    delta_gap: float,
    label: int,
    seed=0,
) -> Verdict:
    """Estimate the precision of ``a`` from ``n`` region draws labeled by the oracle.

    ``label`` is the query's label. Flagged iff ``|claimed_tau - tau_hat| > delta_gap``.
    """
    _check(n, delta_gap)
    rng = np.random.default_rng(seed)
    X = sample_in_region(a, dist_sampler, n, rng)
    oracle = label_oracle if isinstance(label_oracle, CountingOracle) else CountingOracle(label_oracle)
    tau_hat = float(np.mean(oracle(X) == label))
    return _verdict(claimed_tau, tau_hat, delta_gap, n)


def verify_anchor_coverage(
    a: AnchorRegion,
    claimed_c: float,
    dist_sampler: Optional[Callable],
    n: int,
    delta_gap: float,
    domain=None,
    seed=0,
) -> Verdict:
    """Check the coverage claim of ``a``.

    With ``domain=(lo, hi)`` (``D`` uniform on the box ``[lo, hi]^d``) and a
    box anchor the coverage is the exact volume ratio and the bound is zero.
    Otherwise it is the fraction of ``n`` draws from ``D`` inside ``a``.
    """
    _check(n, delta_gap)
    if domain is not None and isinstance(a, BoxAnchor):
        return _verdict(claimed_c, box_coverage(a.lower, a.upper, domain), delta_gap, n, bound=0.0)
    if dist_sampler is None:
        raise DomainError("need a sampler for D or a box domain")
    X = np.atleast_2d(dist_sampler(n, np.random.default_rng(seed)))
    c_hat = float(np.mean(a.mask(X)))
    return _verdict(claimed_c, c_hat, delta_gap, n)


@dataclass
class DishonestDataScientist(DataScientist):
    """DS that labels truthfully but misreports explanations.

    Anchor precisions are inflated by ``tau_inflation`` (capped at one) and
    counterfactuals are pushed away from the query: ``x' -> x + far * (x' - x)``.
    """

    tau_inflation: float = 0.0
    far: float = 1.0

    def respond(self, query) -> Response:
        r = super().respond(query)
        e = r.explanation
        if isinstance(e, AnchorRegion) and self.tau_inflation:
            e = replace(e, tau=min(1.0, e.tau + self.tau_inflation))
        elif isinstance(e, CounterfactualPoint) and self.far != 1.0:
            x = query.x if isinstance(query, Query) else np.asarray(query, dtype=float)
            e = CounterfactualPoint(x + self.far * (e.x_prime - x))
        return Response(r.label, e)


@dataclass(frozen=True)
class CounterfactualCheck:
    label_ok: bool
    improved: Optional[np.ndarray]
    final_radius: float
    queries: int
    iterations: int


def uniform_ball(center, radius, n, rng):
    center = np.asarray(center, dtype=float)
    d = center.size
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.uniform(size=(n, 1)) ** (1.0 / d)
    return center + r * g


def verify_counterfactual(
    x,
    claimed_xp,
    label_oracle,
    k_iters: int,
    n_per_iter: int,
    seed=0,
    label_x: Optional[int] = None,
) -> CounterfactualCheck:
    """Look for a differently labeled point closer to ``x`` than ``claimed_xp``.

    One oracle query checks that ``claimed_xp`` flips the label (``label_x``
    is the label the DS already returned for ``x``; when omitted it costs one
    more query). Each iteration labels ``n_per_iter`` uniform points of the
    ball ``B(x, r)``; the closest flipped point becomes the new ``x'`` and
    ``r`` shrinks to its distance. An iteration without a flipped point ends
    the search.
    """
    if k_iters < 1 or n_per_iter < 1:
        raise DomainError("k_iters and n_per_iter must be at least 1")
    x = np.asarray(x, dtype=float)
    xp = np.asarray(claimed_xp, dtype=float)
    oracle = CountingOracle(label_oracle)
    y = int(oracle(x)[0]) if label_x is None else int(label_x)
    radius = float(np.linalg.norm(x - xp))
    if int(oracle(xp)[0]) == y:
        return CounterfactualCheck(False, None, radius, oracle.count, 0)
    rng = np.random.default_rng(seed)
    improved = None
    it = 0
    while it < k_iters:
        it += 1
        P = uniform_ball(x, radius, n_per_iter, rng)
        flipped = oracle(P) != y
        if not flipped.any():
            break
        dist = np.linalg.norm(P[flipped] - x, axis=1)
        i = int(np.argmin(dist))
        if dist[i] >= radius:
            break
        radius = float(dist[i])
        improved = P[flipped][i]
    return CounterfactualCheck(True, improved, radius, oracle.count, it)


__all__ = [
    "CounterfactualCheck",
    "CountingOracle",
    "DishonestDataScientist",
    "DEFAULT_POST_FLAG_POLICY",
    "PostFlagPolicy",
    "Status",
    "Verdict",
    "hoeffding_bound",
    "sample_in_region",
    "uniform_ball",
    "verify_anchor_coverage",
    "verify_anchor_precision",
    "verify_counterfactual",
]
