"""Auditing strategies.

Every auditor is an :class:`~certaudit.protocol.AuditStrategy` driven by
:func:`~certaudit.protocol.run_session`; the ``*_audit`` functions are thin
wrappers that build the strategy and run the session.

* ``baseline``: random pairs, no explanations.
* ``lc-counterfactual``: one counterfactual recovers the direction of ``w``.
* ``lc-anchor``: ellipsoid active learning with optional anchor augmentation.
* ``et-counterfactual``: two counterfactuals recover both thresholds.
* ``et-anchor``: binary search for a responsive midpoint.
* ``general``: greedy search-space reduction over a finite pool and grid.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from typing import List, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, ProtocolError, UntruthfulDSError
from .explanations import AnchorRegion, CounterfactualPoint, sample_anchor
from .hypotheses import ExtendedThreshold, HypothesisPool, LinearClassifier, PairSampler, dimension_constant
from .protocol import (
    AuditConfig,
    AuditReport,
    AuditStrategy,
    DataScientist,
    Decision,
    Query,
    Response,
    _query_seed,
    run_session,
)
from .version_space import Ellipsoid, LabeledSet, estimate_ellipsoid, synthesize_query

log = logging.getLogger(__name__)


def _require(ds, cls, method):
    if not isinstance(ds.hypothesis, cls):
        raise ConfigurationError(f"auditor expects a {cls.__name__}, got {type(ds.hypothesis).__name__}")
    if ds.method != method:
        raise ConfigurationError(f"auditor expects {method!r} explanations, DS provides {ds.method!r}")


# -- baseline -----------------------------------------------------------------


def required_pairs(epsilon: float, delta: float) -> int:
    """Number of random pairs ``m = ceil(ln(1/delta) / epsilon)``."""
    if not (0.0 < epsilon < 1.0 and 0.0 < delta < 1.0):
        raise DomainError("epsilon and delta must lie strictly between 0 and 1")
    m = -math.log(delta) / epsilon
    # absorb rounding noise when the bound is an integer, e.g. eps=0.5, delta=1/e
    return max(1, math.ceil(m - 1e-12 * m))


class BaselineAuditor(AuditStrategy):
    """Query ``m`` random pairs; Yes iff one of them is responsive."""

    name = "baseline"

    def __init__(self, sampler: PairSampler, m: int, seed=0):
        self.sampler = sampler
        self.m = m
        xi, xj = sampler.sample(m, np.random.default_rng(seed))
        self._queue = [x for pair in zip(xi, xj) for x in pair]
        self._labels: List[int] = []
        self.witness: Optional[int] = None

    def check(self, ds):
        if ds.d != self.sampler.d:
            raise ConfigurationError(f"sampler has dimension {self.sampler.d}, DS expects {ds.d}")

    def next_query(self):
        k = len(self._labels)
        return self._queue[k] if k < len(self._queue) else None

    def observe(self, query, response):
        self._labels.append(response.label)
        k = len(self._labels)
        if k % 2 == 0 and self.witness is None and self._labels[-1] != self._labels[-2]:
            self.witness = k // 2 - 1

    def decide(self):
        return Decision.YES if self.witness is not None else Decision.NO

    fallback = decide

    def diagnostics(self):
        return {"pairs": self.m, "witness_pair": self.witness}


def baseline_audit(ds: DataScientist, sampler: PairSampler, cfg: AuditConfig) -> AuditReport:
    """Random-pair auditor; ``cfg.seed`` drives the pair draws."""
    m = required_pairs(cfg.epsilon, cfg.delta)
    return run_session(BaselineAuditor(sampler, m, cfg.seed), ds, cfg)


# -- linear classifiers, counterfactuals --------------------------------------


class LinearCounterfactualAuditor(AuditStrategy):
    """One query ``x``; ``x - x'`` is parallel to ``w``."""

    name = "lc-counterfactual"

    def __init__(self, s: Optional[int] = None, query=None, tolerance=1e-9, seed=0, max_retries=1):
        self.s = s
        self.query = None if query is None else np.asarray(query, dtype=float)
        self.tolerance = tolerance
        self.max_retries = max_retries
        self._rng = np.random.default_rng(seed)
        self.w_hat: Optional[np.ndarray] = None
        self.retries = 0
        self._pending = None

    def check(self, ds):
        _require(ds, LinearClassifier, "counterfactual")
        d = ds.d
        if self.s is None:
            self.s = d - 1
        if self.query is None:
            self.query = np.ones(d)
        if self.query.shape != (d,):
            raise ProtocolError(f"query has dimension {self.query.size}, DS expects {d}")
        self._pending = self.query

    def next_query(self):
        x, self._pending = self._pending, None
        return x

    def observe(self, query, response):
        e = response.explanation
        if not isinstance(e, CounterfactualPoint):
            raise ProtocolError("expected a counterfactual explanation")
        w_hat = query.x - e.x_prime
        if np.all(np.isfinite(w_hat)) and np.any(w_hat):
            self.w_hat = w_hat
        elif self.retries < self.max_retries:
            self.retries += 1
            log.info("counterfactual coincides with the query; retrying with a perturbed point")
            self._pending = query.x + self._rng.uniform(-1.0, 1.0, size=query.x.size)
        else:
            raise ProtocolError("counterfactual coincides with the query")

    def decide(self):
        if self.w_hat is None:
            return Decision.NO
        w = self.w_hat
        return Decision.YES if abs(w[self.s]) > self.tolerance * np.max(np.abs(w)) else Decision.NO

    def recovered(self):
        if self.w_hat is None:
            return None
        return {"direction": self.w_hat / np.linalg.norm(self.w_hat)}

    def diagnostics(self):
        return {"retries": self.retries}


def audit_lc_counterfactual(ds: DataScientist, cfg: AuditConfig, query=None) -> AuditReport:
    s = cfg.feature_index(ds.d)
    strat = LinearCounterfactualAuditor(s, query=query, tolerance=cfg.tolerance, seed=cfg.seed)
    return run_session(strat, ds, cfg)


# -- linear classifiers, anchors ----------------------------------------------


def default_rounds(d: int, epsilon: float) -> int:
    """``ceil(4 d log2(2c/eps))`` learning rounds, at least one."""
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    c = dimension_constant(d)
    return max(1, math.ceil(4 * d * math.log2(2 * c / epsilon)))


class LinearAnchorAuditor(AuditStrategy):
    """Active learning of a homogeneous linear classifier with an ellipsoid.

    After ``warmup_size`` points (a random unit ``u``, then ``-u``, and so on)
    each round queries the synthesized direction, adds the query and
    ``aug_size`` points of its anchor (all carrying the query's label) to the
    labeled set and re-estimates the ellipsoid. The final center ``mu`` is
    scaled so that its non-interest part has unit norm and the decision is
    ``|w_s| > eps / (2c)``.

    Anchors with precision one are sampled by the auditor; for anchors with
    lower precision the DS supplies same-label points from the region (an
    auditor cannot label points itself).
    """

    name = "lc-anchor"

    def __init__(
        self,
        epsilon: float,
        s: Optional[int] = None,
        aug_size: int = 0,
        warmup_size: int = 2,
        rounds: Optional[int] = None,
        seed=0,
        incremental: bool = True,
        order: str = "insertion",
    ):
        if aug_size < 0 or warmup_size < 1:
            raise DomainError("aug_size must be >= 0 and warmup_size >= 1")
        if epsilon <= 0:
            raise DomainError("epsilon must be positive")
        self.epsilon = epsilon
        self.s = s
        self.aug_size = aug_size
        self.warmup_size = warmup_size
        self.rounds = rounds
        self.seed = seed
        self.incremental = incremental
        self.order = order
        self.ds = None
        self.labeled: Optional[LabeledSet] = None
        self.ellipsoid: Optional[Ellipsoid] = None
        self.history: List[np.ndarray] = []
        self.augmented = 0
        self._warm: List[np.ndarray] = []
        self._asked = 0

    def check(self, ds):
        _require(ds, LinearClassifier, "anchor")
        if ds.hypothesis.b != 0.0:
            raise ConfigurationError("the anchor auditor handles homogeneous classifiers only")
        d = ds.d
        if d < 2:
            raise DomainError("need d >= 2")
        self.ds = ds
        if self.s is None:
            self.s = d - 1
        if self.rounds is None:
            self.rounds = default_rounds(d, self.epsilon)
        self.c = dimension_constant(d)
        self.threshold = self.epsilon / (2 * self.c)
        self.labeled = LabeledSet(d)
        self.ellipsoid = Ellipsoid.unit_ball(d)
        rng = np.random.default_rng(self.seed)
        for i in range(self.warmup_size):
            if i % 2 == 0:
                u = rng.standard_normal(d)
                u /= np.linalg.norm(u)
                self._warm.append(u)
            else:
                self._warm.append(-self._warm[-1])

    def next_query(self):
        if self._asked < self.warmup_size:
            return self._warm[self._asked]
        if self._asked < self.warmup_size + self.rounds:
            return synthesize_query(self.ellipsoid, seed=0)
        return None

    def _augment(self, query, response):
        a = response.explanation
        if self.aug_size == 0 or not isinstance(a, AnchorRegion):
            return
        if a.tau >= 1.0:
            pts = sample_anchor(a, self.aug_size, _query_seed(self.seed, query.x))
        else:
            pts = self.ds.same_label_points(query, a, self.aug_size)
        pts = pts[np.any(pts != 0, axis=1)]
        if len(pts):
            self.labeled.extend(pts, response.label)
            self.augmented += len(pts)

    def observe(self, query, response):
        warm = self._asked < self.warmup_size
        self._asked += 1
        self.labeled.add(query.x, response.label)
        if not warm:
            self._augment(query, response)
        start = self.ellipsoid if self.incremental else None
        self.ellipsoid = estimate_ellipsoid(self.labeled, start=start, order=self.order)
        self.history.append(self.ellipsoid.mu.copy())

    def w_hat(self):
        mu = self.ellipsoid.mu
        rest = np.linalg.norm(np.delete(mu, self.s))
        if rest == 0:
            return None
        return mu / rest

    def decide(self):
        w = self.w_hat()
        if w is None:
            # all mass on the feature of interest
            return Decision.YES if self.ellipsoid.mu[self.s] != 0 else Decision.NO
        return Decision.YES if abs(w[self.s]) > self.threshold else Decision.NO

    fallback = decide

    def recovered(self):
        mu = self.ellipsoid.mu
        n = np.linalg.norm(mu)
        out = {"threshold": self.threshold, "rounds": self.rounds}
        if n > 0:
            out["direction"] = mu / n
        w = self.w_hat()
        if w is not None:
            out["w_s"] = float(w[self.s])
        return out

    def diagnostics(self):
        return {"constraints": len(self.labeled), "augmented": self.augmented}


def audit_lc_anchor(
    ds: DataScientist,
    cfg: AuditConfig,
    aug_size: int = 0,
    warmup_size: int = 2,
    T: Optional[int] = None,
) -> AuditReport:
    s = cfg.feature_index(ds.d)
    strat = LinearAnchorAuditor(cfg.epsilon, s, aug_size, warmup_size, T, seed=cfg.seed)
    return run_session(strat, ds, cfg)


# -- extended thresholds, counterfactuals -------------------------------------


class ThresholdCounterfactualAuditor(AuditStrategy):
    """Queries ``(l, 0)`` and ``(u, 1)``; the explanations are the two threshold points."""

    name = "et-counterfactual"

    def __init__(self, tolerance=1e-9):
        self.tolerance = tolerance
        self.theta = {}
        self._queue = []

    def check(self, ds):
        _require(ds, ExtendedThreshold, "counterfactual")
        h = ds.hypothesis
        self.lo, self.hi = h.lo, h.hi
        self._queue = [np.array([h.lo, 0.0]), np.array([h.hi, 1.0])]

    def next_query(self):
        return self._queue.pop(0) if self._queue else None

    def observe(self, query, response):
        e = response.explanation
        if not isinstance(e, CounterfactualPoint) or e.x_prime.shape != (2,) or e.x_prime[1] not in (0.0, 1.0):
            raise ProtocolError("expected a counterfactual point (v, g) with g in {0, 1}")
        g = int(e.x_prime[1])
        if g in self.theta:
            raise ProtocolError(f"both explanations reveal the threshold for g={g}")
        self.theta[g] = float(e.x_prime[0])

    def decide(self):
        if len(self.theta) < 2:
            return Decision.NO
        gap = abs(self.theta[0] - self.theta[1])
        return Decision.YES if gap > self.tolerance * (self.hi - self.lo) else Decision.NO

    def recovered(self):
        if len(self.theta) < 2:
            return None
        t1, t2 = self.theta[0], self.theta[1]
        return {"theta1": t1, "theta2": t2, "score": abs(t2 - t1) / (self.hi - self.lo)}


def audit_et_counterfactual(ds: DataScientist, cfg: AuditConfig) -> AuditReport:
    return run_session(ThresholdCounterfactualAuditor(cfg.tolerance), ds, cfg)


# -- extended thresholds, anchors ---------------------------------------------


def et_anchor_steps(epsilon: float) -> int:
    """Smallest ``t`` with ``2^-t <= epsilon``."""
    if not 0.0 < epsilon <= 1.0:
        raise DomainError("epsilon must lie in (0, 1]")
    t = 0
    while 2.0 ** (-t) > epsilon:
        t += 1
    return t


class ThresholdAnchorAuditor(AuditStrategy):
    """Binary search over ``[l, u]`` for a midpoint where the two lines disagree.

    Both thresholds stay inside ``[theta_min, theta_max]``: equal labels
    ``-1`` mean both thresholds lie above the midpoint, equal labels ``+1``
    mean both lie at or below it. After ``t`` quiet steps the interval has
    length ``(u - l) 2^-t``, so a normalized gap above ``epsilon`` is found
    within ``et_anchor_steps(epsilon)`` steps.
    """

    name = "et-anchor"

    def __init__(self, epsilon: float):
        self.steps = et_anchor_steps(epsilon)
        self.epsilon = epsilon
        self.step = 0
        self.found = False
        self.lengths: List[float] = []
        self._labels: List[int] = []

    def check(self, ds):
        _require(ds, ExtendedThreshold, "anchor")
        self.lo, self.hi = ds.hypothesis.lo, ds.hypothesis.hi
        self.tmin, self.tmax = self.lo, self.hi

    @property
    def mid(self):
        return 0.5 * (self.tmin + self.tmax)

    def next_query(self):
        if self.found:
            return None
        if len(self._labels) == 1:
            return np.array([self.mid, 1.0])
        if self.step >= self.steps:
            return None
        return np.array([self.mid, 0.0])

    def observe(self, query, response):
        self._labels.append(response.label)
        if len(self._labels) < 2:
            return
        y0, y1 = self._labels
        self._labels = []
        self.step += 1
        if y0 != y1:
            self.found = True
            return
        if y0 == -1:
            self.tmin = self.mid
        else:
            self.tmax = self.mid
        self.lengths.append(self.tmax - self.tmin)

    def decide(self):
        return Decision.YES if self.found else Decision.NO

    fallback = decide

    def recovered(self):
        return {"theta_min": self.tmin, "theta_max": self.tmax}

    def diagnostics(self):
        return {"steps": self.step, "max_steps": self.steps}


def audit_et_anchor(ds: DataScientist, cfg: AuditConfig, epsilon: Optional[float] = None) -> AuditReport:
    eps = cfg.epsilon if epsilon is None else epsilon
    return run_session(ThresholdAnchorAuditor(eps), ds, cfg)


# -- general auditor ----------------------------------------------------------

N_CONSISTENCY_SAMPLES = 64


def member_oracle(ds: DataScientist, h) -> DataScientist:
    """A DS with the same explanation settings as ``ds`` but holding ``h``."""
    return dataclasses.replace(ds, hypothesis=h)


def _explanations_equal(a, b, atol=1e-12):
    if a is None or b is None:
        return a is None and b is None
    if a.kind != b.kind:
        return False
    pa, pb = np.asarray(a.payload(), float), np.asarray(b.payload(), float)
    return pa.shape == pb.shape and bool(np.allclose(pa, pb, rtol=0, atol=atol))


class GeneralAuditor(AuditStrategy):
    """Greedy search-space reduction over a finite pool and query grid.

    Each round picks the unqueried grid point maximizing the worst case, over
    the label/explanation outcomes that surviving members would produce, of
    ``|S_t| / |S_t+1|``. Survivors must agree with the label and the
    explanation:

    * counterfactual ``x'``: for linear pools ``h(x') = -y``; for other pools
      the member's own counterfactual at ``x`` must equal ``x'``;
    * anchor with precision one: ``h`` labels ``y`` on 64 points drawn from
      the region; anchors with lower precision only constrain the label.

    Stops with Yes once every survivor scores above ``epsilon`` and with No
    once every survivor scores at most ``epsilon``. If no grid point can
    shrink the survivors any further the verdict is No and ``undecided`` is
    set in the diagnostics.
    """

    name = "general"

    def __init__(self, pool: HypothesisPool, scores, grid, epsilon: float, n_consistency=N_CONSISTENCY_SAMPLES, seed=0):
        self.pool = pool
        self.scores = np.asarray(scores, dtype=float)
        if self.scores.shape != (len(pool),):
            raise DomainError("one score per pool member required")
        self.grid = np.atleast_2d(np.asarray(grid, dtype=float))
        if len(self.grid) == 0:
            raise DomainError("query grid must be nonempty")
        self.epsilon = epsilon
        self.n_consistency = n_consistency
        self.seed = seed
        self.alive = np.ones(len(pool), dtype=bool)
        self.queried = np.zeros(len(self.grid), dtype=bool)
        self.survivors: List[int] = [len(pool)]
        self.undecided = False
        self._verdict: Optional[Decision] = None
        self._linear = all(isinstance(h, LinearClassifier) for h in pool.members)

    def check(self, ds):
        if self.grid.shape[1] != ds.d:
            raise ProtocolError(f"grid has dimension {self.grid.shape[1]}, DS expects {ds.d}")
        self.method = ds.method
        self.labels = self.pool.labels(self.grid)  # members x grid
        self._oracles = [member_oracle(ds, h) for h in self.pool.members]
        self._outcomes = [None] * len(self.grid)

    # consistency -------------------------------------------------------------

    def _member_explanations(self, j):
        x = self.grid[j]
        return [o.respond(Query(x)).explanation for o in self._oracles]

    def consistent(self, j, y, e, own=None):
        """Mask of pool members consistent with outcome ``(y, e)`` at grid point ``j``."""
        mask = self.labels[:, j] == y
        if e is None:
            return mask
        if isinstance(e, CounterfactualPoint):
            if self._linear:
                return mask & (self.pool.labels(e.x_prime)[:, 0] == -y)
            own = self._member_explanations(j) if own is None else own
            return mask & np.array([_explanations_equal(o, e) for o in own])
        if isinstance(e, AnchorRegion):
            if e.tau < 1.0:
                return mask
            pts = sample_anchor(e, self.n_consistency, _query_seed(self.seed, self.grid[j]))
            if len(pts) == 0:
                return mask
            return mask & np.all(self.pool.labels(pts) == y, axis=1)
        raise ProtocolError(f"unsupported explanation {type(e).__name__}")

    def outcomes(self, j):
        """``(producers, consistent)`` boolean matrices, one row per distinct outcome."""
        if self._outcomes[j] is None:
            own = self._member_explanations(j) if self.method != "none" else [None] * len(self.pool)
            keys, prod, cons = {}, [], []
            for i, e in enumerate(own):
                y = int(self.labels[i, j])
                key = (y,) if e is None else (y, e.kind, tuple(np.asarray(e.payload(), float).tolist()))
                if key not in keys:
                    keys[key] = len(prod)
                    prod.append(np.zeros(len(self.pool), dtype=bool))
                    cons.append(self.consistent(j, y, e, own))
                prod[keys[key]][i] = True
            self._outcomes[j] = (np.array(prod), np.array(cons))
        return self._outcomes[j]

    # strategy ------------------------------------------------------------------

    def _stop_verdict(self):
        s = self.scores[self.alive]
        if np.all(s > self.epsilon):
            return Decision.YES
        if np.all(s <= self.epsilon):
            return Decision.NO
        return None

    def value(self, j):
        """Worst-case shrink ratio at grid point ``j`` and whether any outcome shrinks."""
        prod, cons = self.outcomes(j)
        n = self.alive.sum()
        real = np.any(prod & self.alive, axis=1)
        kept = np.sum(cons[real] & self.alive, axis=1)
        worst = kept.max()
        return (n / worst if worst else np.inf), bool(np.any(kept < n))

    def next_query(self):
        self._verdict = self._stop_verdict()
        if self._verdict is not None:
            return None
        best, best_j, fallback_j = 1.0, None, None
        for j in np.flatnonzero(~self.queried):
            v, shrinks = self.value(j)
            if v > best:
                best, best_j = v, j
            if shrinks and fallback_j is None:
                fallback_j = j
        j = best_j if best_j is not None else fallback_j
        if j is None:
            self.undecided = True
            return None
        self.queried[j] = True
        self._current = j
        return self.grid[j]

    def observe(self, query, response):
        mask = self.consistent(self._current, response.label, response.explanation)
        alive = self.alive & mask
        if not alive.any():
            raise UntruthfulDSError("no pool member is consistent with the DS answers")
        self.alive = alive
        self.survivors.append(int(alive.sum()))

    def decide(self):
        return self._verdict if self._verdict is not None else Decision.NO

    def recovered(self):
        return {"survivors": np.flatnonzero(self.alive)}

    def diagnostics(self):
        return {"undecided": self.undecided, "survivor_counts": list(self.survivors)}


def general_audit(pool: HypothesisPool, scores, grid, ds: DataScientist, cfg: AuditConfig) -> AuditReport:
    return run_session(GeneralAuditor(pool, scores, grid, cfg.epsilon, seed=cfg.seed), ds, cfg)


__all__ = [
    "BaselineAuditor",
    "GeneralAuditor",
    "LinearAnchorAuditor",
    "LinearCounterfactualAuditor",
    "ThresholdAnchorAuditor",
    "ThresholdCounterfactualAuditor",
    "audit_et_anchor",
    "audit_et_counterfactual",
    "audit_lc_anchor",
    "audit_lc_counterfactual",
    "baseline_audit",
    "default_rounds",
    "et_anchor_steps",
    "general_audit",
    "member_oracle",
    "required_pairs",
]
