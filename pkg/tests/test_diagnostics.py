import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from boxtrend.diagnostics import (
    DegenerateSeriesError,
    autocorrelation,
    efficiency_report,
    five_number,
    inefficiency_factor,
    inefficiency_factors,
    posterior_summary,
)
from boxtrend.sampler import ChainTrace


def direct_acf(x, L):
    n = len(x)
    m = sum(x) / n
    den = sum((v - m) ** 2 for v in x)
    out = []
    for lag in range(1, L + 1):
        s = 0.0
        for t in range(n - lag):
            s += (x[t] - m) * (x[t + lag] - m)
        out.append(s / den)
    return np.array(out)


def ar1(phi, n, seed):
    rng = np.random.default_rng(seed)
    e = rng.normal(size=n)
    x = np.empty(n)
    x[0] = e[0] / np.sqrt(1 - phi**2)
    for t in range(1, n):
        x[t] = phi * x[t - 1] + e[t]
    return x


def test_alternating_series():
    x = np.tile([1.0, -1.0], 5000)
    phi = autocorrelation(x, 2)
    assert phi[0] == pytest.approx(-1.0, abs=2 / x.size)
    assert phi[1] == pytest.approx(1.0, abs=3 / x.size)


def test_spike_series_matches_double_loop():
    x = np.zeros(50)
    x[17] = 3.0
    np.testing.assert_allclose(autocorrelation(x, 10), direct_acf(list(x), 10), atol=1e-14)
    # closed form: every lag-l product involves the spike once or twice
    n = 50
    m = 3.0 / n
    den = (3 - m) ** 2 + (n - 1) * m * m
    lag1 = (2 * (3 - m) * (-m) + (n - 3) * m * m) / den
    assert autocorrelation(x, 1)[0] == pytest.approx(lag1, abs=1e-14)


def test_random_series_matches_double_loop():
    x = np.random.default_rng(3).normal(size=300)
    np.testing.assert_allclose(autocorrelation(x, 25), direct_acf(list(x), 25), atol=1e-12)


def test_constant_series_is_degenerate():
    with pytest.raises(DegenerateSeriesError):
        autocorrelation(np.full(100, 0.3), 5)
    with pytest.raises(DegenerateSeriesError):
        inefficiency_factor(np.full(1000, 2.5))
    with pytest.raises(ValueError):
        autocorrelation(np.arange(5.0), 5)


def test_iid_factor_near_one():
    x = np.random.default_rng(0).normal(size=10_000)
    assert 0.6 <= inefficiency_factor(x) <= 1.4


def test_ar1_factor():
    f = inefficiency_factor(ar1(0.9, 100_000, 1))
    assert 15 <= f <= 21


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), a=st.floats(-1e3, 1e3), b=st.floats(0.01, 100))
def test_affine_invariance_and_bound(seed, a, b):
    x = ar1(0.5, 400, seed)
    assert np.all(np.abs(autocorrelation(x, 50)) <= 1 + 1e-12)
    sign = -1 if seed % 2 else 1
    assert inefficiency_factor(a + sign * b * x, 50) == pytest.approx(inefficiency_factor(x, 50), abs=1e-10)


def test_column_factors_match_single_series():
    X = np.column_stack([ar1(0.3, 2000, 1), ar1(0.8, 2000, 2)])
    f = inefficiency_factors(X)
    assert f[0] == pytest.approx(inefficiency_factor(X[:, 0]), abs=1e-12)
    assert f[1] == pytest.approx(inefficiency_factor(X[:, 1]), abs=1e-12)


def test_five_number_examples():
    assert five_number([1, 2, 3, 4, 5]) == (1, 2, 3, 4, 5)
    assert five_number([2.5]) == (2.5,) * 5
    assert five_number([1, 2, 3, 4]) == (1, 1.75, 2.5, 3.25, 4)
    with pytest.raises(ValueError):
        five_number([])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40), st.randoms(use_true_random=False))
def test_five_number_permutation_invariant_and_ordered(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    a = five_number(values)
    assert a == five_number(shuffled)
    assert all(u <= v for u, v in zip(a, a[1:]))


def make_trace(cols, names):
    return ChainTrace(names=names, draws=np.column_stack(cols), stats={})


def test_posterior_summary_examples():
    tr = make_trace([np.full(10, 4.0), np.array([0.0, 1.0] * 5)], ["c", "b"])
    rows = posterior_summary(tr)
    assert (rows[0].mean, rows[0].q05, rows[0].q95) == (4.0, 4.0, 4.0)
    assert rows[1].mean == 0.5
    assert posterior_summary(tr, ["b"])[0].name == "b"
    with pytest.raises(KeyError):
        posterior_summary(tr, ["missing"])


def test_efficiency_report_flags_stuck_columns_and_caps_lag():
    x = ar1(0.5, 60, 4)
    tr = make_trace([x, np.full(60, 1.0), ar1(0.2, 60, 5)], ["tau_1", "tau_2", "tau_3"])
    rep = efficiency_report(tr, blocks=("tau",))
    assert rep.lag == 30
    assert np.isnan(rep.factors["tau_2"])
    assert rep.factors["tau_1"] == pytest.approx(inefficiency_factor(x, 30))
    lo, q1, med, q3, hi = rep.blocks["tau"]
    assert lo <= q1 <= med <= q3 <= hi
