import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import dblquad

from rsdp.catalog import contraction_model, fixed_env_model, product_chain_model
from rsdp.couple import (CouplingBoundParams, contraction_rate, coupled_covariance, coupling_time_bound,
                         coupling_time_bound_gauss, coupling_time_limit, dominating_rate, fixed_env_meeting,
                         joint_diffusion, moment_bound, product_chain_tau, reflected_increment,
                         reflection_matrix, simulate_coupling, survival_curve, tau_tail)
from rsdp.model import AssumptionError, ConstantRates, ConstantSigma, Constants, PolyDrift, RSDPModel

vec3 = st.lists(st.floats(-5, 5), min_size=3, max_size=3)
mat3 = st.lists(st.floats(-2, 2), min_size=9, max_size=9)


def one_regime(a=-1.0, sigma=1.0, alpha=None):
    return RSDPModel(ConstantRates([[0.0]]), PolyDrift(A=[[[a]]]), ConstantSigma([[sigma]], 1),
                     Constants(alpha=alpha))


def test_reflected_increment_examples():
    s = np.array([[2.0]])
    dx, dy = reflected_increment([1.0], [1.0], s, s, [0.3])
    assert dx.tolist() == dy.tolist() == [0.6]
    dx, dy = reflected_increment([1.0], [-2.0], s, s, [0.3])
    assert dy.tolist() == [-0.6]


@given(vec3, vec3, mat3, mat3)
def test_joint_diffusion_reproduces_covariance(x, y, a, b):
    sx, sy = np.reshape(a, (3, 3)), np.reshape(b, (3, 3))
    G = joint_diffusion(x, y, sx, sy)
    np.testing.assert_allclose(G @ G.T, coupled_covariance(x, y, sx, sy), atol=1e-12)


@given(vec3.filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_reflection_is_symmetric_orthogonal(v):
    u = np.asarray(v) / np.linalg.norm(v)
    R = reflection_matrix(u)
    np.testing.assert_allclose(R, R.T, atol=0)
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)


def test_identical_starts_meet_at_zero():
    m = product_chain_model()
    res = simulate_coupling(m, ([0.5], 1), ([0.5], 1), 0.01, 1.0, 5, seed=0)
    assert np.all(res.T == 0) and np.all(res.tau == 0)
    res = simulate_coupling(m, ([0.5], 2), ([0.5], 2), 0.01, 1.0, 5, seed=0)
    assert np.all(res.T == 0) and not np.any(res.tau == 0)


def test_both_in_designated_regime_tau_zero():
    res = simulate_coupling(product_chain_model(), ([1.0], 1), ([-1.0], 1), 0.01, 1.0, 5, seed=1)
    assert np.all(res.tau == 0)


def test_glued_pairs_never_separate():
    times = np.linspace(0, 5, 51)
    res = simulate_coupling(contraction_model(), ([1.0], 1), ([-1.0], 2), 0.01, 5.0, 50, seed=2,
                            record_times=times)
    for p in range(50):
        if np.isfinite(res.T[p]):
            after = times > res.T[p] + 0.01
            assert np.all(res.sq_dist[p, after] == 0)


def test_product_chain_tau_trivial():
    tau = product_chain_tau([[-1, 1], [1, -1]], 1, 1, 10, seed=0, designated=1, Tmax=10.0)
    assert np.all(tau == 0)


def test_tau_tail_designated_start():
    tail = tau_tail(product_chain_model(), (([0.0], 1), ([1.0], 1)), 2.0, 20, seed=0)
    assert np.all(tail.survival[tail.t > 0] == 0)


def test_survival_and_dominating_rate():
    s = survival_curve([1.0, 2.0, 3.0, np.inf], [0.0, 1.5, 10.0])
    np.testing.assert_allclose(s, [1.0, 0.75, 0.25])
    t = np.linspace(0, 5, 11)
    S = np.exp(-0.7 * t)
    assert dominating_rate(t, S, slack=0.0) == pytest.approx(0.7)


def test_contraction_curve_at_zero_is_exact():
    res = contraction_rate(contraction_model(), ([0.7], 1), ([-1.8], 2), 1.0, 20, seed=3, delta=1e-2,
                           t_points=11)
    assert res.curve[0] == (0.7 + 1.8) ** 2
    same = contraction_rate(contraction_model(), ([1.0], 1), ([1.0], 1), 1.0, 5, seed=3, delta=1e-2,
                            t_points=11)
    assert np.all(same.curve == 0)


def test_contraction_single_regime_ou():
    a = 1.0
    res = contraction_rate(one_regime(-a, 0.1, alpha=(-2 * a,)), ([1.0], 1), ([-1.0], 1), 3.0, 200,
                           seed=4, delta=1e-3, t_points=31)
    assert res.rate >= 2 * a * 0.8


def test_moment_bound_examples():
    det = one_regime(-1.0, 0.0, alpha=(-2.0,))
    r = moment_bound(det, [[1.0], [10.0]], 1, 2.0, 4, seed=0)
    assert max(r["ratios"]) <= 1.0 and r["applicable"]
    bm = one_regime(0.0, 1.0, alpha=(0.0,))
    r = moment_bound(bm, [[1.0], [10.0]], 1, 2.0, 100, seed=0)
    assert not r["applicable"] and r["passed"] is None


def test_bound_params_validation():
    with pytest.raises(AssumptionError):
        CouplingBoundParams(1.0, 1.0, 0.0, 2.0)
    with pytest.raises(AssumptionError):
        CouplingBoundParams(0.0, 1.0, 0.0, 4.0)


P1 = CouplingBoundParams(C2=1.0, C3=1.0, beta=0.0, p=4.0)


def test_bound_at_r1_against_gauss_and_swapped_order():
    quad_val = coupling_time_bound(P1, 1.0)
    assert quad_val == pytest.approx(coupling_time_bound_gauss(P1, 1.0), rel=1e-6)
    # -2F(1) = (2/alpha) int_0^inf int_0^min(u,1) C(u)/C(s) ds du
    f = lambda s, u: math.exp(-(u ** 4 - s ** 4) / 16.0)
    val, _ = dblquad(f, 0.0, 8.0, 0.0, lambda u: min(u, 1.0), epsabs=1e-12, epsrel=1e-12)
    assert quad_val == pytest.approx(2.0 * val / 4.0, rel=1e-6)
    assert quad_val == pytest.approx(0.66369500520051, rel=1e-9)


LIMIT1 = coupling_time_limit(P1)


@settings(max_examples=20)
@given(st.floats(0.0, 30.0), st.floats(0.0, 30.0))
def test_bound_monotone_and_below_limit(r1, r2):
    lo, hi = sorted((r1, r2))
    b1, b2 = coupling_time_bound(P1, lo), coupling_time_bound(P1, hi)
    assert 0.0 <= b1 <= b2 + 1e-9
    assert b2 <= LIMIT1 + 1e-9


def test_bound_at_zero():
    assert coupling_time_bound(P1, 0.0) == 0.0


def test_fixed_env_identical_pair():
    res = fixed_env_meeting(fixed_env_model(), 1, ([0.5], [0.5]), 1e-2, 1.0, 5, seed=0)
    assert res["mean_T1"] == 0.0 and res["passed"]
