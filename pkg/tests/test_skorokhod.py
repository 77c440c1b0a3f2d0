import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from rsdp.model import ConstantRates, QMatrixError, TanhRates, CallableRates
from rsdp.skorokhod import (PoissonDrive, build_intervals, evolve_switch, h_eval, sample_drive,
                            symm_diff_measure)


def test_two_state_table():
    t = build_intervals(ConstantRates([[0, 1], [2, 0]]), [0.0])
    assert t.interval(1, 2) == (0.0, 1.0)
    assert t.interval(2, 1) == (1.0, 3.0)
    assert t.total == 3.0


def test_three_state_table_matches_cumsum():
    Q = [[0, 1, 0.5], [2, 0, 0], [1, 1, 0]]
    t = build_intervals(ConstantRates(Q), [0.0])
    order = [(1, 2), (1, 3), (2, 1), (2, 3), (3, 1), (3, 2)]
    lengths = [Q[i - 1][j - 1] for i, j in order]
    edges = np.concatenate([[0], np.cumsum(lengths)])
    for k, (i, j) in enumerate(order):
        assert t.interval(i, j) == pytest.approx((edges[k], edges[k + 1]))
    assert t.interval(2, 3) == (3.5, 3.5)


def test_single_regime_table_is_empty():
    assert build_intervals(ConstantRates([[0.0]]), [0.0]).entries == ()


def test_negative_rate_names_pair():
    rates = CallableRates(lambda x: np.array([[0, -1.0], [1.0, 0]]), N=2, n=1)
    with pytest.raises(QMatrixError, match="q_12"):
        build_intervals(rates, [0.0])


def test_h_eval_examples():
    t = build_intervals(ConstantRates([[0, 1], [2, 0]]), [0.0])
    assert h_eval(t, 1, 0.5) == 1
    assert h_eval(t, 1, 2.0) == 0
    assert h_eval(t, 2, 1.5) == -1
    assert h_eval(t, 2, 3.5) == 0
    # right endpoints belong to the next interval
    assert h_eval(t, 1, 1.0) == 0
    assert h_eval(t, 2, 1.0) == -1


def test_drive_zero_intensity():
    assert len(sample_drive(5.0, 0.0, seed=3)) == 0


def test_drive_count_mean():
    counts = np.array([len(sample_drive(10.0, 4.0, seed=11, path=p)) for p in range(10_000)])
    se = counts.std(ddof=1) / np.sqrt(len(counts))
    assert abs(counts.mean() - 40.0) < 3 * se


def test_drive_gaps_exponential():
    gaps = np.concatenate([np.diff(np.concatenate([[0.0], sample_drive(10.0, 4.0, seed=5, path=p).times]))
                           for p in range(200)])
    assert stats.kstest(gaps, "expon", args=(0, 0.25)).pvalue > 0.01


def test_drive_deterministic_and_csv_roundtrip():
    a, b = sample_drive(3.0, 2.0, seed=9, path=4), sample_drive(3.0, 2.0, seed=9, path=4)
    np.testing.assert_array_equal(a.times, b.times)
    c = PoissonDrive.from_csv(a.to_csv(), a.T, a.M)
    np.testing.assert_array_equal(a.times, c.times)
    np.testing.assert_array_equal(a.marks, c.marks)
    assert np.all(np.diff(a.times) > 0) and np.all(a.times <= 3.0)


def test_evolve_switch_examples():
    rates = ConstantRates([[0, 1], [2, 0]])
    empty = PoissonDrive(1.0, 3.0, np.empty(0), np.empty(0))
    assert len(evolve_switch(rates, empty, lambda t: [0.0], 1).times) == 0
    one = PoissonDrive(1.0, 3.0, np.array([0.3]), np.array([0.5]))
    path = evolve_switch(rates, one, lambda t: [0.0], 1)
    assert path.times.tolist() == [0.3] and path.regimes.tolist() == [2]


def test_evolve_switch_transition_rates():
    rates = ConstantRates([[0, 1.0], [2.0, 0]])
    drive = sample_drive(20_000.0, 3.0, seed=1)
    path = evolve_switch(rates, drive, lambda t: [0.0], 1)
    T = drive.T
    in1 = path.occupation([1.0, 0.0], T)
    in2 = T - in1
    n12 = int(np.sum(path.regimes == 2))
    n21 = int(np.sum(path.regimes == 1))
    assert abs(n12 / in1 - 1.0) < 3 * np.sqrt(n12) / in1
    assert abs(n21 / in2 - 2.0) < 3 * np.sqrt(n21) / in2


def test_evolve_switch_ignores_state_for_constant_rates():
    rates = ConstantRates([[0, 1.0], [2.0, 0]])
    drive = sample_drive(10.0, 3.0, seed=2)
    a = evolve_switch(rates, drive, lambda t: [0.0], 2)
    b = evolve_switch(rates, drive, lambda t: [np.sin(t) * 100], 2)
    np.testing.assert_array_equal(a.event_regimes, b.event_regimes)


def test_symm_diff_examples():
    def f(x):
        q = np.zeros(x.shape[:-1] + (2, 2))
        q[..., 0, 1] = np.where(x[..., 0] > 0, 1.3, 1.0)
        q[..., 1, 0] = 2.0
        return q
    rates = CallableRates(f, 2, 1)
    assert symm_diff_measure(rates, [0.0], [0.0], 1, 2) == 0.0
    assert symm_diff_measure(rates, [-1.0], [1.0], 1, 2) == pytest.approx(0.3)
    assert symm_diff_measure(rates, [-1.0], [1.0], 2, 1) == pytest.approx(0.6)


tanh3 = st.tuples(st.lists(st.floats(0, 2), min_size=9, max_size=9),
                  st.lists(st.floats(-1, 1), min_size=9, max_size=9),
                  st.lists(st.floats(-1, 1), min_size=18, max_size=18))


def _rates(p):
    a, b, v = p
    return TanhRates(np.reshape(a, (3, 3)), np.reshape(b, (3, 3)), np.reshape(v, (3, 3, 2)))


@given(tanh3, st.lists(st.floats(-5, 5), min_size=2, max_size=2))
def test_table_tiles(p, x):
    t = build_intervals(_rates(p), x)
    his = [e[3] for e in t.entries]
    los = [e[2] for e in t.entries]
    assert los[0] == 0.0 and los[1:] == his[:-1]
    assert all(hi >= lo for lo, hi in zip(los, his))
    for i in (1, 2, 3):
        assert h_eval(t, i, t.total) == 0
        assert h_eval(t, i, t.total / 2) in range(1 - i, 4 - i)


@given(tanh3, st.lists(st.floats(-5, 5), min_size=2, max_size=2),
       st.lists(st.floats(-5, 5), min_size=2, max_size=2), st.sampled_from([(1, 2), (2, 3), (3, 1)]))
def test_symm_diff_symmetric_and_bounded(p, x, y, ij):
    r = _rates(p)
    a = symm_diff_measure(r, x, y, *ij)
    assert a == pytest.approx(symm_diff_measure(r, y, x, *ij), abs=1e-12)
    K = 2 * (r.N - 1) * r.N * r.lipschitz + 1
    assert a <= K * np.linalg.norm(np.subtract(x, y)) + 1e-12
