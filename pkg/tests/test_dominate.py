import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rsdp.catalog import birth_death3_model, constant_rate_variant, strong_order_model
from rsdp.dominate import (REVERSED, STANDARD, OrientationError, StructureError, build_dominating,
                           check_domination, decay_rate, eta_bar, eta_bar_2x2, exp_functional,
                           feynman_kac, orientation_for, simulate_dominating)
from rsdp.integrate import em_path, sample_brownian
from rsdp.model import ConstantRates, ConstantSigma, PolyDrift, RSDPModel
from rsdp.skorokhod import sample_drive

from conftest import tanh_model

Q2 = np.array([[-1.0, 1.0], [2.0, -2.0]])


def test_constant_rates_dominating_matrix():
    m = RSDPModel(ConstantRates([[0, 1.0], [2.0, 0]]), PolyDrift(A=[[[-1.0]], [[-1.0]]]),
                  ConstantSigma([[1.0]], 2))
    dom = build_dominating(m)
    np.testing.assert_array_equal(dom.Q, Q2)
    assert dom.conditions_hold and dom.irreducible


def test_cancellation_dominating_matrix():
    # q12 = 1 + s, q21 = 3 - s with s in [0, 0.5]
    m = tanh_model([[0, 1.25], [2.75, 0]], [[0, 0.25], [-0.25, 0]])
    dom = build_dominating(m)
    assert dom.Q[0, 1] == pytest.approx(1.5) and dom.Q[1, 0] == pytest.approx(2.5)
    assert dom.conditions_hold


def test_con_q_failure_has_witness():
    m = tanh_model([[0, 1.25], [2.0, 0]], [[0, 0.25], [0, 0]])
    dom = build_dominating(m)
    v = dom.verdicts[0]
    assert not v.passed
    assert v.evidence["bar_sum"] == pytest.approx(3.5)
    assert v.evidence["inf_sum"] == pytest.approx(3.0, abs=1e-6)
    x = np.asarray(v.witness)
    q = m.rates.off_diagonal(x)
    assert q[0, 1] + q[1, 0] < 3.5


def test_non_birth_death_rejected():
    m = RSDPModel(ConstantRates([[0, 1, 1], [1, 0, 1], [1, 1, 0]]), PolyDrift(A=[[[-1.0]]] * 3),
                  ConstantSigma([[1.0]], 3))
    with pytest.raises(StructureError):
        build_dominating(m)


def test_eta_bar_examples():
    assert eta_bar(Q2, [0, 0]) == pytest.approx(0.0, abs=1e-12)
    assert eta_bar([[0.0]], [0.7]) == pytest.approx(-0.7)
    expected = (5 - math.sqrt(17)) / 2
    assert eta_bar(Q2, [-3, 1]) == pytest.approx(expected, rel=1e-12)
    assert eta_bar_2x2(Q2, [-3, 1]) == pytest.approx(expected, rel=1e-12)


def test_eta_bar_orientation():
    dom = build_dominating(strong_order_model())
    with pytest.raises(OrientationError):
        eta_bar(dom, [1.0, -1.0])
    assert orientation_for([-1, 0.5]) == STANDARD
    assert orientation_for([0.5, -1]) == REVERSED
    with pytest.raises(OrientationError):
        orientation_for([0, 1, 0])


gen2 = st.tuples(st.floats(0.1, 5), st.floats(0.1, 5))


@given(gen2, st.lists(st.floats(-5, 5), min_size=2, max_size=2), st.floats(-3, 3))
def test_eta_bar_relabel_and_shift(rates, lam, c):
    a, b = rates
    Q = np.array([[-a, a], [b, -b]])
    P = np.array([[0, 1], [1, 0]])
    assert eta_bar(P @ Q @ P.T, lam[::-1]) == pytest.approx(eta_bar(Q, lam), abs=1e-9)
    assert eta_bar(Q, np.full(2, c)) == pytest.approx(eta_bar(Q, [0, 0]) - c, abs=1e-9)
    assert eta_bar(Q, lam) == pytest.approx(eta_bar_2x2(Q, lam), abs=1e-9)


def test_exp_functional_trivial_cases():
    r = exp_functional([0, 0], 2.0, Q=Q2, paths=10)
    assert r == {"estimate": 1.0, "std_error": 0.0, "log_estimate": 0.0}
    r = exp_functional([-0.4], 3.0, Q=[[0.0]], paths=10)
    assert r["estimate"] == pytest.approx(math.exp(-1.2), rel=1e-14) and r["std_error"] == 0.0


@pytest.mark.parametrize("t", [1.0, 2.0])
def test_exp_functional_feynman_kac(t):
    lam = [-1.0, 0.5]
    r = exp_functional(lam, t, Q=Q2, paths=20_000, seed=3)
    fk = feynman_kac(Q2, lam, t, 1)
    assert abs(r["estimate"] - fk) < 3 * r["std_error"]


def test_fk_decay_matches_eta_bar():
    lam = [-1.0, 0.5]
    ts = np.linspace(5, 50, 46)
    vals = [feynman_kac(Q2, lam, t, 1) for t in ts]
    rate, C = decay_rate(ts, vals)
    assert rate == pytest.approx(eta_bar(Q2, lam), rel=0.1)


def test_constant_rate_chain_identical_to_model():
    m = constant_rate_variant()
    dom = build_dominating(m)
    d = sample_drive(5.0, m.M, seed=6)
    b = sample_brownian(5.0, 0.01, 1, seed=6)
    p = em_path(m, 0.01, d, b, [0.0], 1)
    c = simulate_dominating(dom, d, 1)
    np.testing.assert_array_equal(p.switch.event_regimes, c.event_regimes)


@pytest.mark.parametrize("factory", [strong_order_model, birth_death3_model])
def test_domination_and_path_matched_functional(factory):
    m = factory()
    lam = np.linspace(-1.0, 0.5, m.N)
    res = check_domination(m, 5.0, 500, seed=8, dom=build_dominating(m), lam=lam, t_eval=[1.0, 5.0])
    assert res.violations == 0
    assert np.all(res.exp_model <= res.exp_chain + 1e-12)


def test_reversed_orientation_dominates_from_below():
    m = strong_order_model()
    dom = build_dominating(m, REVERSED)
    res = check_domination(m, 5.0, 300, seed=9, dom=dom, i0=2)
    assert dom.conditions_hold and res.violations == 0
