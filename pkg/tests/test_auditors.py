import math
from dataclasses import dataclass

import numpy as np
import pytest
from conftest import random_unit
from oracles import brute_force_decision

from certaudit.auditors import (
    BaselineAuditor,
    GeneralAuditor,
    LinearAnchorAuditor,
    ThresholdAnchorAuditor,
    ThresholdCounterfactualAuditor,
    audit_et_anchor,
    audit_et_counterfactual,
    audit_lc_anchor,
    audit_lc_counterfactual,
    baseline_audit,
    default_rounds,
    et_anchor_steps,
    general_audit,
    required_pairs,
)
from certaudit.errors import ConfigurationError, DomainError, ProtocolError, UntruthfulDSError
from certaudit.explanations import CounterfactualPoint
from certaudit.hypotheses import (
    ExtendedThreshold,
    HypothesisPool,
    LinearClassifier,
    PairSampler,
    dimension_constant,
    score_et,
)
from certaudit.protocol import AuditConfig, DataScientist, Decision, Response, run_session
from certaudit.verification import DishonestDataScientist


# -- baseline -----------------------------------------------------------------


@pytest.mark.parametrize("eps,delta,m", [(0.1, 0.05, 30), (0.5, math.exp(-1), 2), (0.01, 0.01, 461)])
def test_required_pairs(eps, delta, m):
    assert required_pairs(eps, delta) == m


@pytest.mark.parametrize("eps,delta", [(0.0, 0.5), (1.0, 0.5), (0.5, 0.0), (0.5, 1.0)])
def test_required_pairs_open_interval(eps, delta):
    with pytest.raises(DomainError):
        required_pairs(eps, delta)


def test_baseline_completeness_and_query_count():
    for seed in range(50):
        ds = DataScientist(ExtendedThreshold(0.2, 0.2))
        rep = baseline_audit(ds, PairSampler(2, lo=-1, hi=1), AuditConfig(0.1, 0.05, seed=seed))
        assert rep.decision is Decision.NO
        assert rep.queries_used == 2 * 30


def test_baseline_soundness_small_sample():
    h = ExtendedThreshold(0.3, 0.7)
    assert score_et(h) == pytest.approx(0.2)
    yes = 0
    for seed in range(200):
        rep = baseline_audit(DataScientist(h), PairSampler(2, lo=-1, hi=1), AuditConfig(0.1, 0.05, seed=seed))
        yes += rep.decision is Decision.YES
        if rep.decision is Decision.YES:
            k = rep.diagnostics["witness_pair"]
            (_, a), (_, b) = rep.transcript.entries[2 * k], rep.transcript.entries[2 * k + 1]
            assert a.label != b.label
    assert yes / 200 >= 0.95


def test_baseline_dimension_mismatch():
    with pytest.raises(ConfigurationError):
        run_session(BaselineAuditor(PairSampler(3), 5), DataScientist(ExtendedThreshold(0.1, 0.2)), AuditConfig())


# -- linear classifiers, counterfactuals --------------------------------------


def test_lc_counterfactual_examples():
    rep = audit_lc_counterfactual(DataScientist(LinearClassifier(np.array([1.0, 0.0, 0.5])), "counterfactual"), AuditConfig())
    assert rep.decision is Decision.YES and rep.queries_used == 1
    assert np.allclose(rep.recovered["direction"], np.array([1.0, 0.0, 0.5]) / math.sqrt(1.25))
    rep = audit_lc_counterfactual(DataScientist(LinearClassifier(np.array([1.0, 0.0, 0.0])), "counterfactual"), AuditConfig())
    assert rep.decision is Decision.NO and rep.queries_used == 1


def test_lc_counterfactual_query_invariance():
    rng = np.random.default_rng(0)
    for w in (np.array([0.4, -1.0, 1e-4]), np.array([0.4, -1.0, 0.0])):
        ds = DataScientist(LinearClassifier(w, 0.3), "counterfactual")
        decisions = {audit_lc_counterfactual(ds, AuditConfig(), query=rng.normal(size=3) * 5).decision for _ in range(100)}
        assert len(decisions) == 1


@dataclass
class _StuckOnce(DataScientist):
    calls: int = 0

    def respond(self, query):
        r = super().respond(query)
        self.calls += 1
        if self.calls == 1:
            return Response(r.label, CounterfactualPoint(np.asarray(query.x).copy()))
        return r


def test_lc_counterfactual_retries_once():
    ds = _StuckOnce(LinearClassifier(np.array([1.0, 2.0])), "counterfactual")
    rep = audit_lc_counterfactual(ds, AuditConfig())
    assert rep.queries_used == 2 and rep.diagnostics["retries"] == 1 and rep.decision is Decision.YES
    stuck = DishonestDataScientist(LinearClassifier(np.array([1.0, 2.0])), "counterfactual", far=0.0)
    with pytest.raises(ProtocolError):
        audit_lc_counterfactual(stuck, AuditConfig())


def test_lc_counterfactual_requires_matching_ds():
    with pytest.raises(ConfigurationError):
        audit_lc_counterfactual(DataScientist(LinearClassifier(np.ones(2)), "anchor", anchor_mode="typical"), AuditConfig())
    with pytest.raises(ConfigurationError):
        audit_lc_counterfactual(DataScientist(ExtendedThreshold(0.1, 0.2), "counterfactual"), AuditConfig())


# -- linear classifiers, anchors ----------------------------------------------


def test_default_rounds():
    c = dimension_constant(10)
    assert default_rounds(10, 0.05) == math.ceil(40 * math.log2(2 * c / 0.05)) == 8
    assert default_rounds(2, 0.9) >= 1
    with pytest.raises(DomainError):
        default_rounds(3, 0.0)


def test_lc_anchor_zero_weight_is_no():
    for seed in range(10):
        rng = np.random.default_rng([21, seed])
        w = random_unit(rng, 6)
        w[-1] = 0.0
        ds = DataScientist(LinearClassifier(w / np.linalg.norm(w), homogeneous=True), "anchor")
        rep = audit_lc_anchor(ds, AuditConfig(epsilon=0.05, seed=seed), aug_size=30)
        assert rep.decision is Decision.NO
        assert abs(rep.recovered["w_s"]) <= 0.05 / (2 * dimension_constant(6))


def test_lc_anchor_query_count_and_history():
    ds = DataScientist(LinearClassifier(np.array([0.6, 0.0, 0.8]), homogeneous=True), "anchor")
    strat = LinearAnchorAuditor(0.1, warmup_size=3, rounds=7, seed=1)
    rep = run_session(strat, ds, AuditConfig(epsilon=0.1))
    assert rep.queries_used == 10 == len(strat.history)
    # warm-up: u, -u, then a fresh u
    x = [q.x for q, _ in rep.transcript.entries[:3]]
    assert np.allclose(x[0], -x[1])


def test_lc_anchor_requires_homogeneous():
    with pytest.raises(ConfigurationError):
        audit_lc_anchor(DataScientist(LinearClassifier(np.ones(3), 0.2), "anchor", anchor_mode="typical"), AuditConfig())


def test_lc_anchor_ray_augmentation_changes_nothing():
    rng = np.random.default_rng([22, 0])
    w = random_unit(rng, 5)
    runs = []
    for aug in (0, 30):
        ds = DataScientist(LinearClassifier(w, homogeneous=True), "anchor")
        strat = LinearAnchorAuditor(0.05, aug_size=aug, rounds=30, seed=3)
        rep = run_session(strat, ds, AuditConfig(epsilon=0.05))
        runs.append((rep.transcript.dumps(), np.array(strat.history), strat.ellipsoid.sigma))
    assert runs[0][0] == runs[1][0]
    assert np.max(np.abs(runs[0][1] - runs[1][1])) <= 1e-9
    assert np.max(np.abs(runs[0][2] - runs[1][2])) <= 1e-9


def test_lc_anchor_typical_uses_ds_points_below_full_precision():
    w = np.array([1.0, 0.0, 0.2]) / math.sqrt(1.04)
    ds = DataScientist(LinearClassifier(w, homogeneous=True), "anchor", anchor_mode="typical", anchor_side=0.5)
    strat = LinearAnchorAuditor(0.1, aug_size=10, rounds=4, seed=0)
    run_session(strat, ds, AuditConfig(epsilon=0.1))
    assert strat.augmented == 40
    assert np.all(strat.labeled.consistent(ds.hypothesis.w[None, :]))


def test_lc_anchor_convergence_property():
    # eps = 0.1 c makes the decision margin eps/(2c) equal to the 0.05 rad target
    ok = 0
    trials = 40
    for seed in range(trials):
        rng = np.random.default_rng([23, seed])
        d = int(rng.integers(2, 8))
        eps = 0.1 * dimension_constant(d)
        T = math.ceil(4 * d * math.log2(2 * dimension_constant(d) / eps))
        w = random_unit(rng, d)
        strat = LinearAnchorAuditor(eps, rounds=T - 2, seed=seed)
        run_session(strat, DataScientist(LinearClassifier(w, homogeneous=True), "anchor"), AuditConfig(epsilon=eps))
        mu = strat.ellipsoid.mu
        ok += math.acos(min(1.0, mu @ w / np.linalg.norm(mu))) < 0.05
    assert ok / trials >= 0.95


# -- extended thresholds ------------------------------------------------------


def test_et_counterfactual_examples():
    rep = audit_et_counterfactual(DataScientist(ExtendedThreshold(0.3, 0.7), "counterfactual"), AuditConfig())
    assert rep.decision is Decision.YES and rep.queries_used == 2
    assert rep.recovered == {"theta1": 0.3, "theta2": 0.7, "score": pytest.approx(0.2)}
    rep = audit_et_counterfactual(DataScientist(ExtendedThreshold(0.5, 0.5), "counterfactual"), AuditConfig())
    assert rep.decision is Decision.NO and rep.recovered["theta1"] == rep.recovered["theta2"]


def test_et_counterfactual_protocol_errors():
    l2 = DataScientist(ExtendedThreshold(0.9, 0.0), "counterfactual", et_metric="l2")
    with pytest.raises(ProtocolError):
        audit_et_counterfactual(l2, AuditConfig())
    strat = ThresholdCounterfactualAuditor()
    strat.check(DataScientist(ExtendedThreshold(0.1, 0.2), "counterfactual"))
    with pytest.raises(ProtocolError):
        strat.observe(None, Response(1, CounterfactualPoint(np.array([0.1, 0.5]))))


def test_et_anchor_steps():
    assert et_anchor_steps(0.25) == 2
    assert et_anchor_steps(2.0**-10) == 10
    assert et_anchor_steps(0.3) == 2
    with pytest.raises(DomainError):
        et_anchor_steps(0.0)


def test_et_anchor_examples():
    rep = audit_et_anchor(DataScientist(ExtendedThreshold(-0.9, 0.9), "anchor"), AuditConfig(epsilon=0.25))
    assert rep.decision is Decision.YES and rep.queries_used == 2
    assert [r.label for _, r in rep.transcript] == [1, -1]
    rep = audit_et_anchor(DataScientist(ExtendedThreshold(0.0, 0.0), "anchor"), AuditConfig(epsilon=0.25))
    assert rep.decision is Decision.NO and rep.queries_used <= 4


def test_et_anchor_interval_halves():
    strat = ThresholdAnchorAuditor(2.0**-8)
    run_session(strat, DataScientist(ExtendedThreshold(0.123, 0.123), "anchor"), AuditConfig())
    assert strat.lengths == [2.0 ** (-t + 1) for t in range(1, 9)]
    assert strat.tmin <= 0.123 <= strat.tmax


def test_et_anchor_budget_fallback_is_no():
    rep = audit_et_anchor(DataScientist(ExtendedThreshold(0.01, 0.02), "anchor"), AuditConfig(epsilon=2.0**-10, budget=3))
    assert rep.exhausted and rep.decision is Decision.NO


def test_auditors_complete_on_zero_score():
    rng = np.random.default_rng(5)
    for seed in range(30):
        t = float(rng.uniform(-1, 1))
        h = ExtendedThreshold(t, t)
        for run in (
            lambda: audit_et_counterfactual(DataScientist(h, "counterfactual"), AuditConfig(seed=seed)),
            lambda: audit_et_anchor(DataScientist(h, "anchor"), AuditConfig(epsilon=2.0**-6, seed=seed)),
            lambda: baseline_audit(DataScientist(h), PairSampler(2, lo=-1, hi=1), AuditConfig(0.1, 0.05, seed=seed)),
        ):
            assert run().decision is Decision.NO


# -- general auditor ----------------------------------------------------------


def _directions(n):
    a = 2 * np.pi * np.arange(n) / n
    return np.column_stack([np.cos(a), np.sin(a)])


def test_general_all_zero_scores_no_queries():
    pool = HypothesisPool([LinearClassifier(np.array([1.0, 0.0])), LinearClassifier(np.array([-1.0, 0.0]))])
    rep = general_audit(pool, [0.0, 0.0], _directions(8), DataScientist(pool.members[0]), AuditConfig())
    assert rep.decision is Decision.NO and rep.queries_used == 0


def test_general_three_member_example():
    members = [np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([1.0, 1.0]) / math.sqrt(2)]
    pool = HypothesisPool([LinearClassifier(w, homogeneous=True) for w in members])
    scores = [0.0, 0.5, 0.25]
    grid = _directions(64)
    ds = DataScientist(pool.members[0])
    strat = GeneralAuditor(pool, scores, grid, 0.01)
    rep = run_session(strat, ds, AuditConfig(epsilon=0.01))
    want, alive = brute_force_decision(pool, scores, grid, ds, 0.01)
    assert str(rep.decision) == want == "No"
    assert strat.survivors == sorted(strat.survivors, reverse=True)
    assert strat.alive[0]


def test_general_lying_ds_is_caught():
    members = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    pool = HypothesisPool([LinearClassifier(w, homogeneous=True) for w in members])
    # counterfactuals pinned to the query point are explained by no member
    outsider = DishonestDataScientist(pool.members[0], "counterfactual", far=0.0)
    with pytest.raises(UntruthfulDSError):
        general_audit(pool, [0.0, 0.5], _directions(16), outsider, AuditConfig(epsilon=0.1))


def test_general_validation():
    pool = HypothesisPool([LinearClassifier(np.array([1.0, 0.0]))])
    with pytest.raises(DomainError):
        GeneralAuditor(pool, [0.0, 1.0], _directions(4), 0.1)
    with pytest.raises(DomainError):
        GeneralAuditor(pool, [0.0], np.empty((0, 2)), 0.1)
    with pytest.raises(ProtocolError):
        general_audit(pool, [0.5], np.ones((3, 3)), DataScientist(pool.members[0]), AuditConfig())


def test_general_et_counterfactual_pool_matches_oracle():
    rng = np.random.default_rng(6)
    thetas = np.round(rng.uniform(-1, 1, size=(30, 2)), 2)
    pool = HypothesisPool([ExtendedThreshold(a, b) for a, b in thetas])
    scores = [score_et(h) for h in pool.members]
    grid = np.array([[v, g] for v in np.linspace(-1, 1, 9) for g in (0.0, 1.0)])
    for k in range(5):
        ds = DataScientist(pool.members[k], "counterfactual")
        rep = general_audit(pool, scores, grid, ds, AuditConfig(epsilon=0.1))
        want, _ = brute_force_decision(pool, scores, grid, ds, 0.1)
        assert str(rep.decision) == want
