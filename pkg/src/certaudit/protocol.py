"""The DS <-> auditor query protocol.

A session alternates: the auditor strategy proposes a query, the data
scientist (DS) answers with a label and an optional explanation, the
strategy updates its state and eventually stops with a decision.
"""

from __future__ import annotations

import enum
import zlib
from dataclasses import dataclass, field
from typing import Any, List, Optional, Tuple

import numpy as np

from ._io import fmt_all
from .errors import ConfigurationError, DomainError, ProtocolError
from .explanations import (
    AnchorRegion,
    BoxAnchor,
    CounterfactualPoint,
    IntervalAnchor,
    RayAnchor,
    anchor_et,
    anchor_lc,
    counterfactual_et,
    counterfactual_lc,
)
from .hypotheses import ExtendedThreshold, Hypothesis, LinearClassifier

METHODS = ("none", "counterfactual", "anchor")


class Decision(str, enum.Enum):
    YES = "Yes"
    NO = "No"

    def __str__(self):
        return self.value


@dataclass(frozen=True, eq=False)
class Query:
    x: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(-1)
        if not np.all(np.isfinite(x)):
            raise ProtocolError("query entries must be finite")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)


@dataclass(frozen=True)
class Response:
    label: int
    explanation: Optional[Any] = None


@dataclass
class Transcript:
    """Append-only record of ``(Query, Response)`` pairs."""

    entries: List[Tuple[Query, Response]] = field(default_factory=list)

    def append(self, query: Query, response: Response):
        self.entries.append((query, response))

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def to_lines(self) -> List[str]:
        lines = []
        for t, (q, r) in enumerate(self.entries, start=1):
            e = r.explanation
            kind = "none" if e is None else e.kind
            payload = [] if e is None else fmt_all(e.payload())
            lines.append(",".join([str(t), *fmt_all(q.x), str(r.label), kind, *payload]))
        return lines

    def dumps(self) -> str:
        return "".join(line + "\n" for line in self.to_lines())

    @classmethod
    def loads(cls, text: str) -> "Transcript":
        tr = cls()
        for lineno, line in enumerate(text.splitlines(), start=1):
            if line.strip():
                tr.append(*_parse_entry(line, lineno))
        return tr


def _parse_entry(line, lineno):
    tok = line.strip().split(",")
    try:
        k = next(i for i, t in enumerate(tok) if i > 0 and t[:1].isalpha())
    except StopIteration:
        raise ProtocolError(f"line {lineno}: missing explanation kind") from None
    kind = tok[k]
    x = np.array([float(v) for v in tok[1 : k - 1]])
    label = int(tok[k - 1])
    p = [float(v) for v in tok[k + 1 :]]
    d = x.size
    if kind == "none" and not p:
        e = None
    elif kind == "counterfactual" and len(p) == d:
        e = CounterfactualPoint(np.array(p))
    elif kind == "box" and len(p) == 2 * d + 2:
        e = BoxAnchor(tau=p[-2], coverage=p[-1], lower=np.array(p[:d]), upper=np.array(p[d : 2 * d]))
    elif kind == "ray" and len(p) == d + 2:
        e = RayAnchor(tau=p[-2], coverage=p[-1], direction=np.array(p[:d]))
    elif kind == "interval" and len(p) == 5:
        e = IntervalAnchor(tau=p[3], coverage=p[4], lo=p[0], hi=p[1], g=int(p[2]))
    else:
        raise ProtocolError(f"line {lineno}: malformed {kind!r} explanation")
    return Query(x), Response(label, e)


def _query_seed(seed, x):
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(np.ascontiguousarray(x, dtype="<f8").tobytes())])


@dataclass
class DataScientist:
    """Truthful DS holding the audited hypothesis.

    ``method`` is the agreed explanation method. Anchor options:
    ``anchor_mode`` (``worst_case`` ray or ``typical`` box, linear classifiers
    only), ``anchor_side`` (box edge), ``anchor_samples`` (points used to
    estimate box precision), ``anchor_length`` (interval length for extended
    thresholds), ``et_metric`` (cross-line cost of extended-threshold
    counterfactuals). Answers are deterministic given ``(seed, query)``.
    """

    hypothesis: Hypothesis
    method: str = "none"
    anchor_mode: str = "worst_case"
    anchor_side: float = 0.2
    anchor_samples: int = 1000
    anchor_length: float = 0.25
    anchor_domain: Tuple[float, float] = (0.0, 1.0)
    gamma: Optional[float] = None
    et_metric: str = "additive"
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown explanation method {self.method!r}")
        h = self.hypothesis
        if self.method == "anchor" and isinstance(h, LinearClassifier):
            if self.anchor_mode == "worst_case" and h.b != 0.0:
                raise ConfigurationError("worst-case ray anchors need a homogeneous classifier")
            if self.anchor_mode not in ("worst_case", "typical"):
                raise ConfigurationError(f"unknown anchor mode {self.anchor_mode!r}")

    @property
    def d(self):
        return self.hypothesis.d

    def label(self, x) -> int:
        return int(self.hypothesis.predict(np.asarray(x, dtype=float)))

    def respond(self, query) -> Response:
        x = query.x if isinstance(query, Query) else np.asarray(query, dtype=float)
        if x.shape != (self.d,):
            raise ProtocolError(f"query has dimension {x.size}, oracle expects {self.d}")
        h = self.hypothesis
        y = self.label(x)
        if self.method == "none":
            return Response(y)
        if isinstance(h, ExtendedThreshold):
            v, g = float(x[0]), int(x[1])
            if g not in (0, 1):
                raise ProtocolError("feature of interest must be 0 or 1")
            if self.method == "counterfactual":
                return Response(y, counterfactual_et(h, v, g, self.et_metric))
            return Response(y, anchor_et(h, v, g, self.anchor_length))
        if self.method == "counterfactual":
            return Response(y, counterfactual_lc(h, x, self.gamma))
        return Response(
            y,
            anchor_lc(
                h,
                x,
                self.anchor_mode,
                side=self.anchor_side,
                n_samples=self.anchor_samples,
                seed=_query_seed(self.seed, x),
                domain=self.anchor_domain,
            ),
        )

    def same_label_points(self, query, anchor: AnchorRegion, n: int, max_draws: int = 100):
        """Up to ``n`` points of ``anchor`` sharing the query's label.

        This is the DS-side half of anchor augmentation for anchors with
        precision below one; the auditor cannot label points itself.
        """
        x = query.x if isinstance(query, Query) else np.asarray(query, dtype=float)
        y = self.label(x)
        rng = np.random.default_rng(_query_seed(self.seed + 1, x))
        kept = []
        total = 0
        for _ in range(max_draws):
            pts = anchor.sample(max(n, 1) * 2, rng)
            if len(pts) == 0:
                break
            good = pts[self.hypothesis.predict(pts) == y]
            kept.append(good)
            total += len(good)
            if total >= n:
                break
        if not kept:
            return np.empty((0, self.d))
        return np.concatenate(kept)[:n]


def ds_respond(oracle: DataScientist, query) -> Response:
    return oracle.respond(query)


@dataclass(frozen=True)
class AuditConfig:
    """Session parameters. ``feature`` is a 0-based index; ``None`` means the last coordinate."""

    epsilon: float = 0.1
    delta: float = 0.05
    feature: Optional[int] = None
    budget: Optional[int] = None
    seed: int = 0
    tolerance: float = 1e-9

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise DomainError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if not 0.0 <= self.delta <= 1.0:
            raise DomainError(f"delta must lie in [0, 1], got {self.delta}")
        if self.budget is not None and self.budget < 0:
            raise DomainError("budget must be non-negative")
        if self.tolerance <= 0:
            raise DomainError("tolerance must be positive")

    def feature_index(self, d: int) -> int:
        s = d - 1 if self.feature is None else self.feature
        if not 0 <= s < d:
            raise DomainError(f"feature index {s} out of range for d={d}")
        return s


@dataclass
class AuditReport:
    decision: Decision
    transcript: Transcript
    auditor: str = ""
    recovered: Optional[dict] = None
    exhausted: bool = False
    diagnostics: dict = field(default_factory=dict)

    @property
    def queries_used(self) -> int:
        return len(self.transcript)

    def summary(self) -> dict:
        out = {
            "auditor": self.auditor,
            "decision": str(self.decision),
            "queries_used": self.queries_used,
            "exhausted": self.exhausted,
        }
        if self.recovered:
            out["recovered"] = {k: _plain(v) for k, v in self.recovered.items()}
        out.update({k: _plain(v) for k, v in self.diagnostics.items()})
        return out


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


class AuditStrategy:
    """Base class for auditors driven by :func:`run_session`.

    Subclasses implement ``next_query`` (``None`` to stop), ``observe``,
    ``decide`` (the stopping verdict) and ``fallback`` (verdict when the
    budget runs out first).
    """

    name = "auditor"

    def check(self, ds: DataScientist):
        pass

    def next_query(self) -> Optional[np.ndarray]:
        raise NotImplementedError

    def observe(self, query: Query, response: Response):
        raise NotImplementedError

    def decide(self) -> Decision:
        raise NotImplementedError

    def fallback(self) -> Decision:
        return Decision.NO

    def recovered(self) -> Optional[dict]:
        return None

    def diagnostics(self) -> dict:
        return {}


def run_session(strategy: AuditStrategy, ds: DataScientist, config: AuditConfig) -> AuditReport:
    strategy.check(ds)
    transcript = Transcript()
    exhausted = False
    while True:
        x = strategy.next_query()
        if x is None:
            decision = strategy.decide()
            break
        if config.budget is not None and len(transcript) >= config.budget:
            exhausted = True
            decision = strategy.fallback()
            break
        q = Query(x)
        r = ds.respond(q)
        transcript.append(q, r)
        strategy.observe(q, r)
    return AuditReport(
        decision=decision,
        transcript=transcript,
        auditor=strategy.name,
        recovered=strategy.recovered(),
        exhausted=exhausted,
        diagnostics=strategy.diagnostics(),
    )
