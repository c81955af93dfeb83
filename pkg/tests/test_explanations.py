import math
import warnings

import numpy as np
import pytest

from certaudit.errors import ConfigurationError, DegenerateHypothesisError, DomainError
from certaudit.explanations import (
    BoxAnchor,
    IntervalAnchor,
    RayAnchor,
    anchor_et,
    anchor_lc,
    box_coverage,
    counterfactual_et,
    counterfactual_lc,
    interval_precision,
    sample_anchor,
)
from certaudit.hypotheses import ExtendedThreshold, HypothesisPool, LinearClassifier, et_predict, lc_predict


def grid_nearest_flip(h, x, half=4.0, n=801):
    """Brute-force nearest differently-labeled grid point in 2-D."""
    t = np.linspace(-half, half, n)
    G = np.stack(np.meshgrid(t, t), -1).reshape(-1, 2) + x
    flip = h.predict(G) != h.predict(x)
    dist = np.linalg.norm(G[flip] - x, axis=1)
    return float(dist.min())


def test_counterfactual_lc_examples():
    h = LinearClassifier(np.array([1.0, 0.0]))
    cf = counterfactual_lc(h, np.array([2.0, 3.0]), gamma=1e-6)
    assert np.allclose(cf.x_prime, [-1e-6, 3.0], atol=1e-15)
    assert lc_predict(h, cf.x_prime) == -1

    h = LinearClassifier(np.array([3.0, 4.0]))
    cf = counterfactual_lc(h, np.array([3.0, 4.0]), gamma=1e-9)
    assert np.allclose(cf.x_prime, [0.0, 0.0], atol=1e-8)

    h = LinearClassifier(np.array([0.0, 1.0, 0.0]))
    x = np.array([5.0, -2.0, 7.0])
    cf = counterfactual_lc(h, x, gamma=1e-6)
    assert np.allclose(cf.x_prime, [5.0, 1e-6, 7.0])
    assert lc_predict(h, x) == -1 and lc_predict(h, cf.x_prime) == 1


def test_counterfactual_lc_errors():
    with pytest.raises(DegenerateHypothesisError):
        counterfactual_lc(LinearClassifier(np.zeros(2)), np.ones(2))
    with pytest.raises(DomainError):
        counterfactual_lc(LinearClassifier(np.ones(2)), np.ones(2), gamma=0.0)


def test_counterfactual_lc_matches_grid_oracle():
    rng = np.random.default_rng(1)
    for _ in range(20):
        h = LinearClassifier(rng.standard_normal(2), rng.uniform(-1, 1))
        x = rng.uniform(-1.5, 1.5, 2)
        gamma = 1e-6
        cf = counterfactual_lc(h, x, gamma)
        exact = float(np.linalg.norm(x - cf.x_prime))
        brute = grid_nearest_flip(h, x)
        # grid spacing 0.01 bounds the oracle's error
        assert exact <= brute + 1e-9
        assert brute - exact < 0.01 * math.sqrt(2)


@pytest.mark.parametrize("gamma", [1e-9, 1e-6, 1e-3])
def test_counterfactual_lc_flip_direction_minimality(gamma):
    rng = np.random.default_rng(int(gamma * 1e9))
    for _ in range(50):
        d = int(rng.integers(2, 12))
        h = LinearClassifier(rng.standard_normal(d), rng.normal())
        x = rng.normal(size=d) * 3
        cf = counterfactual_lc(h, x, gamma)
        assert lc_predict(h, cf.x_prime) != lc_predict(h, x)
        diff = x - cf.x_prime
        cos = abs(diff @ h.w) / (np.linalg.norm(diff) * np.linalg.norm(h.w))
        assert cos >= 1 - 1e-10
        r = np.linalg.norm(diff) - 2 * gamma
        if r > 0:
            u = rng.standard_normal((500, d))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            pts = x + u * (r * rng.uniform(size=(500, 1)) ** (1 / d))
            assert np.all(h.predict(pts) == lc_predict(h, x))


def et_exhaustive(h, v, g, metric="additive"):
    """Nearest opposite point over a fine grid on both lines plus the thresholds."""
    y = et_predict(h, v, g)
    vs = np.concatenate([np.linspace(h.lo, h.hi, 20001), [h.theta1, h.theta2, v]])
    best = np.inf
    for gp in (0, 1):
        theta = h.theta1 if gp == 0 else h.theta2
        labels = h.predict(np.column_stack([vs, np.full(vs.size, float(gp))]))
        opposite = (labels != y) | (vs == theta)  # threshold points count as flips
        dv, dg = np.abs(vs[opposite] - v), abs(gp - g)
        dist = dv + dg if metric == "additive" else np.hypot(dv, dg)
        if dist.size:
            best = min(best, float(dist.min()))
    return best


def test_counterfactual_et_examples():
    h = ExtendedThreshold(0.3, 0.7)
    assert counterfactual_et(h, -1.0, 0).x_prime.tolist() == [0.3, 0.0]
    assert counterfactual_et(h, 1.0, 1).x_prime.tolist() == [0.7, 1.0]
    h = ExtendedThreshold(0.9, -0.9)
    for metric in ("additive", "l2"):
        assert counterfactual_et(h, -1.0, 0, metric).x_prime.tolist() == [-0.9, 1.0]


@pytest.mark.parametrize("metric", ["additive", "l2"])
def test_counterfactual_et_matches_exhaustive_search(metric):
    rng = np.random.default_rng(2)
    for _ in range(40):
        h = ExtendedThreshold(*rng.uniform(-1, 1, 2))
        v, g = float(rng.uniform(-1, 1)), int(rng.integers(0, 2))
        cf = counterfactual_et(h, v, g, metric)
        dv, dg = abs(cf.x_prime[0] - v), abs(cf.x_prime[1] - g)
        got = dv + dg if metric == "additive" else math.hypot(dv, dg)
        want = et_exhaustive(h, v, g, metric)
        assert got == pytest.approx(want, abs=1e-12)


def test_counterfactual_et_identifiability():
    rng = np.random.default_rng(3)
    for _ in range(2000):
        lo = -1.0
        h = ExtendedThreshold(*rng.uniform(-1, 1, 2))
        a = counterfactual_et(h, lo, 0).x_prime
        b = counterfactual_et(h, h.hi, 1).x_prime
        got = {int(a[1]): a[0], int(b[1]): b[0]}
        assert got == {0: h.theta1, 1: h.theta2}


def test_counterfactual_et_l2_can_lose_identifiability():
    # the reason for the additive default: under L2 both queries reveal theta2
    h = ExtendedThreshold(0.9, 0.0)
    assert counterfactual_et(h, -1.0, 0, "l2").x_prime.tolist() == [0.0, 1.0]
    assert counterfactual_et(h, 1.0, 1, "l2").x_prime.tolist() == [0.0, 1.0]
    assert counterfactual_et(h, -1.0, 0, "additive").x_prime.tolist() == [0.9, 0.0]
    with pytest.raises(ConfigurationError):
        counterfactual_et(h, 0.0, 0, "linf")


def test_anchor_lc_worst_case_ray():
    h = LinearClassifier(np.array([1.0, -1.0]), homogeneous=True)
    a = anchor_lc(h, np.array([1.0, 2.0]), "worst_case")
    assert isinstance(a, RayAnchor) and a.tau == 1.0
    assert np.allclose(a.direction, np.array([1, 2]) / math.sqrt(5))
    assert a.contains(np.array([1.0, 2.0])) and a.contains(np.array([0.1, 0.2]))
    assert not a.contains(np.array([-1.0, -2.0])) and not a.contains(np.array([1.0, 2.1]))
    with pytest.raises(ConfigurationError):
        anchor_lc(LinearClassifier(np.ones(2), 0.5), np.ones(2), "worst_case")
    with pytest.raises(DegenerateHypothesisError):
        anchor_lc(h, np.zeros(2), "worst_case")


def test_anchor_lc_typical_box():
    h = LinearClassifier(np.array([1.0, 0.0]))
    a = anchor_lc(h, np.zeros(2), "typical", side=0.2, n_samples=20000, seed=1)
    assert np.allclose(a.lower, [-0.1, -0.1]) and np.allclose(a.upper, [0.1, 0.1])
    assert a.tau == pytest.approx(0.5, abs=0.02)
    assert a.contains(np.zeros(2))
    b = anchor_lc(h, np.array([0.5, 0.5]), "typical", side=0.2, seed=1)
    assert b.tau == 1.0
    assert b.coverage == pytest.approx(0.04)
    c = anchor_lc(h, np.array([0.5, 0.5]), "typical", volume=0.09, seed=1)
    assert np.allclose(c.upper - c.lower, 0.3)
    cs = np.random.default_rng(0).uniform(size=(10000, 2))
    e = anchor_lc(h, np.array([0.5, 0.5]), "typical", side=0.2, coverage_samples=cs)
    assert e.coverage == pytest.approx(0.04, abs=0.01)
    with pytest.raises(ConfigurationError):
        anchor_lc(h, np.zeros(2), "fancy")


def test_anchor_lc_typical_tau_against_exact_area():
    # w = (1, 1), box of side 1 centered at (0.25, 0): exact + fraction by geometry
    h = LinearClassifier(np.array([1.0, 1.0]))
    a = anchor_lc(h, np.array([0.25, 0.0]), "typical", side=1.0, n_samples=200000, seed=3)
    # region x + y >= 0 inside [-0.25, 0.75] x [-0.5, 0.5]: minus-part is a triangle of legs 0.75 -> area 0.28125
    assert a.tau == pytest.approx(1 - 0.28125, abs=0.005)


def test_anchor_et_examples():
    h = ExtendedThreshold(0.3, 0.3)
    a = anchor_et(ExtendedThreshold(0.3, 0.7), 0.0, 0, 0.25)
    assert (a.lo, a.hi, a.g, a.tau) == (-0.25, 0.0, 0, 1.0)
    a = anchor_et(h, 0.5, 0, 0.1)
    assert (a.lo, a.hi, a.tau) == (0.5, pytest.approx(0.6), 1.0)
    a = anchor_et(h, 0.31, 0, 0.1)
    assert a.lo == 0.31 and a.hi == pytest.approx(0.41) and a.tau == 1.0
    assert a.contains(np.array([0.31, 0.0]))
    with pytest.raises(DomainError):
        anchor_et(h, 0.0, 0, 0.0)


def test_anchor_et_clipping_and_exact_tau():
    h = ExtendedThreshold(0.3, 0.7)
    a = anchor_et(h, 0.95, 1, 0.25)
    assert (a.lo, a.hi) == (0.95, 1.0)
    # an interval straddling the threshold: exact overlap fraction
    assert interval_precision(h, 0.2, 0.4, 0, 1) == pytest.approx(0.5)
    assert interval_precision(h, 0.2, 0.4, 0, -1) == pytest.approx(0.5)
    v = np.random.default_rng(0).uniform(0.2, 0.4, 100000)
    assert np.mean(v >= 0.3) == pytest.approx(interval_precision(h, 0.2, 0.4, 0, 1), abs=0.01)


def test_sample_anchor():
    assert len(sample_anchor(BoxAnchor(1.0, 0.0, np.zeros(2), np.ones(2)), 0)) == 0
    ray = RayAnchor(1.0, 0.0, np.array([3.0, 4.0]))
    pts = sample_anchor(ray, 3, seed=1)
    assert pts.shape == (3, 2)
    lam = pts @ ray.direction
    assert np.all(lam > 0) and np.allclose(pts, lam[:, None] * ray.direction)
    pts = sample_anchor(BoxAnchor(1.0, 1.0, np.zeros(2), np.ones(2)), 10000, seed=2)
    assert np.allclose(pts.mean(0), [0.5, 0.5], atol=0.02)
    it = sample_anchor(IntervalAnchor(1.0, 0.1, lo=0.2, hi=0.4, g=1), 50, seed=3)
    assert np.all((it[:, 0] >= 0.2) & (it[:, 0] <= 0.4) & (it[:, 1] == 1))
    with pytest.raises(DomainError):
        sample_anchor(ray, -1)


def test_sample_degenerate_regions_warn():
    with pytest.warns(UserWarning):
        assert len(sample_anchor(BoxAnchor(1.0, 0.0, np.zeros(2), np.array([1.0, 0.0])), 5)) == 0
    with pytest.warns(UserWarning):
        assert len(sample_anchor(IntervalAnchor(1.0, 0.0, lo=0.2, hi=0.2, g=0), 5)) == 0


def test_box_invariants_and_coverage():
    with pytest.raises(DomainError):
        BoxAnchor(1.0, 0.0, np.ones(2), np.zeros(2))
    assert box_coverage(np.zeros(2), np.full(2, 0.5)) == 0.25
    assert box_coverage(np.full(2, -0.5), np.full(2, 0.5)) == 0.25  # clipped to the domain
    assert box_coverage(np.full(2, 2.0), np.full(2, 3.0)) == 0.0


def test_worst_case_anchor_is_vacuous_on_pools():
    # members consistent with (x, y, ray) equal those consistent with (x, y)
    rng = np.random.default_rng(4)
    for _ in range(20):
        W = rng.standard_normal((200, 3))
        pool = HypothesisPool([LinearClassifier(w, homogeneous=True) for w in W])
        x = rng.standard_normal(3)
        truth = LinearClassifier(rng.standard_normal(3), homogeneous=True)
        y = lc_predict(truth, x)
        a = anchor_lc(truth, x, "worst_case")
        by_label = pool.labels(x)[:, 0] == y
        pts = sample_anchor(a, 64, seed=5)
        by_anchor = by_label & np.all(pool.labels(pts) == y, axis=1)
        assert np.array_equal(by_label, by_anchor)
