import math

import numpy as np
import pytest
from scipy.stats import norm

from robustchow.adversary import AdversaryStrategy, LabeledSampleSet, corrupt
from robustchow.chowfilter import ChowEstimate
from robustchow.distributions import gaussian_descriptor
from robustchow.harness import make_corrupted_source, score
from robustchow.ltf_learner import (LTF, LTFConfig, RejectionParams,
                                    _whiten_accepted, constant_ltf,
                                    estimate_threshold, learn_ltf, recover_ab,
                                    refine_extreme, refine_moderate,
                                    rejection_sample, weak_learn_ltf)


def plant(n=8, theta=0.4, seed=0):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    return LTF(v, theta)


def clean_set(f, dist, m, seed):
    pts = dist.sample(m, seed)
    return LabeledSampleSet(pts, f.evaluate(pts).astype(np.float64))


# --- LTF type --------------------------------------------------------------

def test_ltf_unit_norm_enforced():
    with pytest.raises(ValueError):
        LTF(np.array([1.0, 1.0]), 0.0)


def test_ltf_evaluate_sign_zero_positive():
    f = LTF(np.array([1.0, 0.0]), 0.0)
    assert f.evaluate(np.array([[0.0, 3.0]]))[0] == 1.0


def test_ltf_json_roundtrip():
    f = plant(5, -0.7, 3)
    g = LTF.from_json(f.to_json())
    assert np.allclose(g.v, f.v)
    assert g.theta == f.theta


def test_constant_ltf():
    c = constant_ltf(4, 1)
    assert c.is_constant
    pts = np.random.default_rng(0).standard_normal((50, 4))
    assert (c.evaluate(pts) == 1.0).all()
    assert (constant_ltf(4, -1).evaluate(pts) == -1.0).all()


# --- threshold estimation ----------------------------------------------------

def test_estimate_threshold_symmetry():
    pts = np.zeros((4, 1))
    s = LabeledSampleSet(pts, np.array([1.0, -1.0, 1.0, -1.0]))
    assert estimate_threshold(s) == pytest.approx(0.0)


def test_estimate_threshold_phi_inverse():
    # label mean 2 Phi(1) - 1 must invert to exactly 1.0
    mean = 2 * norm.cdf(1.0) - 1
    m = 200_000
    n_pos = round((mean + 1) / 2 * m)
    labels = np.concatenate([np.ones(n_pos), -np.ones(m - n_pos)])
    s = LabeledSampleSet(np.zeros((m, 1)), labels)
    assert estimate_threshold(s) == pytest.approx(1.0, abs=1e-4)


def test_estimate_threshold_clamps_degenerate():
    s = LabeledSampleSet(np.zeros((10, 1)), np.ones(10))
    val = estimate_threshold(s)
    assert math.isfinite(val)
    assert val == pytest.approx(norm.ppf(1 - 5e-10))


# --- rejection sampling ------------------------------------------------------

def test_rejection_acceptance_at_zero_margin():
    rp = RejectionParams(np.array([1.0, 0.0]), 0.0, 0.5)
    acc = rp.acceptance(np.array([[0.0, 7.0]]))
    assert acc[0] == pytest.approx(1.0)


def test_rejection_rate_formula():
    # expected rate sigma * exp(-theta^2 / (2 (1 - sigma^2)))
    rp = RejectionParams(np.array([1.0, 0.0]), 0.8, 0.6)
    oracle = 0.6 * math.exp(-0.64 / (2 * (1 - 0.36)))
    assert rp.expected_rate() == pytest.approx(oracle)


@pytest.mark.parametrize("theta,sigma", [(0.0, 0.5), (0.7, 0.4), (-0.5, 0.7)])
def test_rejection_empirical_rate_and_moments(theta, sigma):
    n = 4
    rng = np.random.default_rng(11)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    rp = RejectionParams(v, theta, sigma)
    m = 200_000
    pts = np.random.default_rng(5).standard_normal((m, n))
    acc = rejection_sample(pts, rp, 17)
    rate = len(acc) / m
    expect = rp.expected_rate()
    se = math.sqrt(expect * (1 - expect) / m)
    assert abs(rate - expect) < 4 * se
    # accepted law along v: N(-theta, sigma^2)
    t = acc @ v
    assert abs(t.mean() + theta) < 5 * sigma / math.sqrt(len(acc))
    assert t.var() == pytest.approx(sigma ** 2, rel=0.1)
    # orthogonal directions stay standard
    w = np.zeros(n)
    w[np.argmin(np.abs(v))] = 1.0
    w = w - (w @ v) * v
    w /= np.linalg.norm(w)
    u = acc @ w
    assert abs(u.mean()) < 5 / math.sqrt(len(acc))
    assert u.var() == pytest.approx(1.0, rel=0.1)


def test_whiten_accepted_restores_identity_covariance():
    n = 3
    v = np.array([1.0, 0.0, 0.0])
    rp = RejectionParams(v, 0.5, 0.5)
    pts = np.random.default_rng(3).standard_normal((400_000, n))
    acc = rejection_sample(pts, rp, 4)
    white = _whiten_accepted(acc, rp)
    cov = np.cov(white.T)
    assert np.allclose(cov, np.eye(n), atol=0.05)
    assert np.allclose(white.mean(axis=0), 0.0, atol=0.05)


def test_rejection_sigma_range_enforced():
    with pytest.raises(ValueError):
        RejectionParams(np.array([1.0]), 0.0, 1.0)


# --- localization algebra ----------------------------------------------------

def test_recover_ab_inverts_forward_map():
    rng = np.random.default_rng(2)
    for _ in range(200):
        a = rng.uniform(0.05, 1.0)
        b = math.sqrt(1 - a * a) * rng.uniform(0.0, 0.99)
        a = math.sqrt(1 - b * b)
        sigma = rng.uniform(0.05, 0.95)
        c_perp = b / math.sqrt((a * sigma) ** 2 + b ** 2)
        a_hat, b_hat = recover_ab(c_perp, sigma)
        assert a_hat == pytest.approx(a, abs=1e-9)
        assert b_hat == pytest.approx(b, abs=1e-9)


def test_recover_ab_zero_misalignment():
    a, b = recover_ab(0.0, 0.5)
    assert (a, b) == (1.0, 0.0)


# --- weak learner ------------------------------------------------------------

def test_weak_learner_exact_chow_inversion():
    # supply data whose empirical Chow is exactly (0, sqrt(2/pi) e1):
    # the degree-1 block must invert to v = e1, theta = 0
    dist = gaussian_descriptor(6, 1, 0.01)
    f = LTF(np.eye(6)[0], 0.0)
    s = clean_set(f, dist, 100_000, 8)
    out = weak_learn_ltf(s, dist, 0.0)
    assert abs(out.theta) < 0.02
    assert float(out.v @ f.v) > 0.999


def test_weak_learner_planted_clean():
    dist = gaussian_descriptor(20, 1, 0.0)
    f = plant(20, 0.5, 4)
    s = clean_set(f, dist, 100_000, 5)
    out = weak_learn_ltf(s, dist, 0.0)
    assert score(out, f, dist, 100_000, 6) <= 0.03


def test_weak_learner_under_attack():
    dist = gaussian_descriptor(10, 1, 0.1)
    f = plant(10, 0.3, 7)
    s = clean_set(f, dist, 50_000, 9)
    bad = corrupt(s, f, 0.1, AdversaryStrategy("chow_attack", rho=0.9), dist, 10)
    out = weak_learn_ltf(bad, dist, 0.1)
    # O(eps sqrt(log 1/eps)) scale: generous cap 5 * 0.1 * sqrt(log 10)
    assert score(out, f, dist, 100_000, 11) <= 5 * 0.1 * math.sqrt(math.log(10))


def test_weak_learner_constant_target():
    dist = gaussian_descriptor(5, 1, 0.01)
    f = constant_ltf(5, 1)
    s = clean_set(f, dist, 20_000, 1)
    out = weak_learn_ltf(s, dist, 0.01)
    assert out.is_constant
    pts = dist.sample(1000, 2)
    assert (out.evaluate(pts) == 1.0).all()


# --- refinement stages ---------------------------------------------------------

def small_config():
    return LTFConfig(accept_target=12_000, batch_cap=120_000,
                     extreme_accept_target=2_000, extreme_batch_cap=60_000,
                     holdout_size=6_000)


def test_refine_moderate_improves_direction():
    n = 8
    dist = gaussian_descriptor(n, 1, 0.01)
    f = plant(n, 0.4, 12)
    source = make_corrupted_source(f, dist, 0.0, AdversaryStrategy("none"))
    # start from a slightly wrong direction
    rng = np.random.default_rng(13)
    v0 = f.v + 0.15 * rng.standard_normal(n)
    v0 /= np.linalg.norm(v0)
    u_new, state = refine_moderate(source, v0, f.theta, 0.3, 0.01, seed=14,
                                   config=small_config())
    v_new = u_new / np.linalg.norm(u_new)
    assert float(v_new @ f.v) > float(v0 @ f.v)  # alignment improved
    assert 0 < state.a <= 1 and 0 <= state.b < 1
    assert state.a ** 2 + state.b ** 2 == pytest.approx(1.0)


def test_refine_extreme_runs_and_returns_state():
    n = 5
    dist = gaussian_descriptor(n, 1, 0.005)
    f = plant(n, 2.2, 21)
    source = make_corrupted_source(f, dist, 0.0, AdversaryStrategy("none"))
    u0 = 2 * norm.pdf(2.2) * f.v
    u_cand, state = refine_extreme(source, 2.2, 0.005, 0.2, u0, seed=3,
                                   config=small_config())
    assert np.isfinite(u_cand).all()
    assert state.s is not None
    a, b = state.a, state.b
    assert a * 2.2 <= state.s <= a * 2.2 + b + 1e-12


# --- full learner ----------------------------------------------------------------

def test_learn_ltf_clean_small():
    n = 8
    dist = gaussian_descriptor(n, 1, 0.01)
    f = plant(n, 0.4, 31)
    s = clean_set(f, dist, 60_000, 32)
    source = make_corrupted_source(f, dist, 0.0, AdversaryStrategy("none"))
    out = learn_ltf(s, dist, 0.01, source=source, seed=33, config=small_config())
    assert score(out, f, dist, 100_000, 34) <= 0.05


def test_learn_ltf_under_attack():
    n = 8
    dist = gaussian_descriptor(n, 1, 0.05)
    f = plant(n, 0.4, 41)
    strategy = AdversaryStrategy("chow_attack", rho=0.9)
    source = make_corrupted_source(f, dist, 0.05, strategy)
    s = source(60_000, 42)
    out = learn_ltf(s, dist, 0.05, source=source, seed=43, config=small_config())
    assert score(out, f, dist, 100_000, 44) <= 0.5  # 10 eps
    assert abs(out.theta - f.theta) < 0.35 or out.is_constant is False


def test_learn_ltf_negative_threshold():
    n = 6
    dist = gaussian_descriptor(n, 1, 0.02)
    f = plant(n, -0.6, 51)
    source = make_corrupted_source(f, dist, 0.0, AdversaryStrategy("none"))
    s = source(50_000, 52)
    out = learn_ltf(s, dist, 0.02, source=source, seed=53, config=small_config())
    assert out.theta < 0
    assert score(out, f, dist, 100_000, 54) <= 0.05


def test_learn_ltf_constant_branch():
    n = 5
    dist = gaussian_descriptor(n, 1, 0.05)
    f = constant_ltf(n, -1)
    source = make_corrupted_source(f, dist, 0.05, AdversaryStrategy("random_flip"))
    s = source(30_000, 61)
    out = learn_ltf(s, dist, 0.05, source=source, seed=62, config=small_config())
    pts = dist.sample(5000, 63)
    assert float(np.mean(out.evaluate(pts) == -1.0)) > 0.95


def test_learn_ltf_deterministic_given_seed():
    n = 5
    dist = gaussian_descriptor(n, 1, 0.02)
    f = plant(n, 0.3, 71)
    source = make_corrupted_source(f, dist, 0.02, AdversaryStrategy("random_flip"))
    s = source(30_000, 72)
    a = learn_ltf(s, dist, 0.02, source=source, seed=73, config=small_config())
    b = learn_ltf(s, dist, 0.02, source=source, seed=73, config=small_config())
    assert np.array_equal(a.v, b.v) and a.theta == b.theta
