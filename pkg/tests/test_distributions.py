import math

import numpy as np
import pytest
from scipy import integrate, stats

from boxtrend.distributions import (
    InvGamma,
    Normal,
    RngStream,
    TruncNormal,
    Uniform,
    log_density,
    log_diff_ndtr,
    sample_inv_gamma,
    sample_normal,
    sample_trunc_normal,
    trunc_normal_cdf,
    trunc_normal_ppf,
)

N_MOMENT = 200_000


def draws(fn, n, seed=0):
    rng = RngStream(seed)
    return np.array([fn(rng) for _ in range(n)])


def test_rng_determinism_and_chain_streams():
    a = [RngStream(42).standard_normal() for _ in range(3)]
    assert a[0] == a[1] == a[2]
    r1, r2 = RngStream(42), RngStream(42)
    assert [r1.uniform() for _ in range(100)] == [r2.uniform() for _ in range(100)]
    assert RngStream(42, chain=0).uniform() != RngStream(42, chain=1).uniform()


def test_normal_examples():
    assert abs(sample_normal(3.0, 1e-30, RngStream(1)) - 3.0) < 1e-10
    assert sample_normal(0, 1, RngStream(9)) == sample_normal(0, 1, RngStream(9))
    x = RngStream(3).standard_normal(N_MOMENT) * 3.0 + 2.0
    assert abs(x.mean() - 2.0) < 3 * 3.0 / math.sqrt(N_MOMENT)
    assert abs(x.var() / 9.0 - 1.0) < 0.05
    with pytest.raises(ValueError):
        sample_normal(0, 0.0, RngStream(0))


def test_truncnormal_symmetric_and_half_normal():
    x = draws(lambda r: sample_trunc_normal(-1.5, 1.5, 0.0, 1.0, r), N_MOMENT, 1)
    assert abs(x.mean()) < 3 * x.std() / math.sqrt(x.size)
    x = draws(lambda r: sample_trunc_normal(0.0, math.inf, 0.0, 1.0, r), N_MOMENT, 2)
    assert abs(x.mean() - math.sqrt(2 / math.pi)) < 3 * x.std() / math.sqrt(x.size)


def test_truncnormal_far_tail_interval():
    x = draws(lambda r: sample_trunc_normal(5.0, 6.0, 0.0, 1.0, r), 20_000, 3)
    assert np.all((x > 5) & (x < 6))
    ks = stats.kstest(x, lambda v: trunc_normal_cdf(v, 5.0, 6.0, 0.0, 1.0))
    assert ks.pvalue > 0.01


GRID = [
    (-math.inf, math.inf, 0.0, 1.0),
    (-1.0, 1.0, 0.0, 1.0),
    (0.0, math.inf, 0.0, 1.0),
    (0.5, 0.6, 0.0, 1.0),      # narrow interval, uniform proposal
    (3.0, math.inf, 0.0, 1.0),  # one-sided tail
    (-math.inf, -4.0, 1.0, 2.0),  # left tail, non-standard
    (8.0, 9.0, 0.0, 1.0),      # deep tail
    (1.0, 3.0, 2.0, 0.01),
    (-2.0, 0.3, 5.0, 4.0),
]


@pytest.mark.parametrize("lo,hi,mu,s2", GRID)
def test_truncnormal_ks_against_inverse_cdf(lo, hi, mu, s2):
    x = draws(lambda r: sample_trunc_normal(lo, hi, mu, s2, r), 100_000, 11)
    assert np.all((x > lo) & (x < hi))
    ks = stats.kstest(x, lambda v: trunc_normal_cdf(v, lo, hi, mu, s2))
    assert ks.pvalue > 0.01


@pytest.mark.parametrize("lo,hi,mu,s2", GRID)
def test_inverse_cdf_oracle_roundtrip(lo, hi, mu, s2):
    u = np.linspace(0.01, 0.99, 25)
    np.testing.assert_allclose(trunc_normal_cdf(trunc_normal_ppf(u, lo, hi, mu, s2), lo, hi, mu, s2), u, atol=1e-7)


def test_truncnormal_bad_interval():
    with pytest.raises(ValueError):
        sample_trunc_normal(1.0, 1.0, 0.0, 1.0, RngStream(0))
    with pytest.raises(ValueError):
        sample_trunc_normal(2.0, 1.0, 0.0, 1.0, RngStream(0))
    with pytest.raises(ValueError):
        sample_trunc_normal(0.0, 1.0, 0.0, -1.0, RngStream(0))


@pytest.mark.parametrize("nu,S", [(10.0, 0.18), (3.0, 2.0)])
def test_inverse_gamma_mean(nu, S):
    rng = RngStream(5)
    x = np.array([sample_inv_gamma(nu, S, rng) for _ in range(N_MOMENT)])
    mean = S / (nu - 1)
    sd = mean / math.sqrt(nu - 2)
    assert np.all(x > 0)
    assert abs(x.mean() - mean) < 3 * sd / math.sqrt(N_MOMENT)
    assert sample_inv_gamma(nu, S, RngStream(8)) == sample_inv_gamma(nu, S, RngStream(8))


def test_inverse_gamma_errors():
    with pytest.raises(ValueError):
        sample_inv_gamma(0.0, 1.0, RngStream(0))
    with pytest.raises(ValueError):
        sample_inv_gamma(1.0, -1.0, RngStream(0))


def test_log_density_examples():
    assert log_density(Normal(0, 1), 0.0) == pytest.approx(-0.918938533204673, abs=1e-12)
    for x in (-2.0, 0.3, 4.0):
        assert log_density(TruncNormal(-math.inf, math.inf, 1.0, 2.0), x) == pytest.approx(
            log_density(Normal(1.0, 2.0), x), abs=1e-14)
    assert log_density(TruncNormal(0, math.inf, 0, 1), 1.0) == pytest.approx(
        log_density(Normal(0, 1), 1.0) + math.log(2.0), abs=1e-14)
    assert log_density(TruncNormal(0, 1, 0, 1), 2.0) == -math.inf
    assert log_density(InvGamma(3, 2), -1.0) == -math.inf
    assert log_density(Uniform(0, 4), 1.0) == pytest.approx(-math.log(4))
    assert log_density(InvGamma(3, 2), 1.5) == pytest.approx(stats.invgamma(3, scale=2).logpdf(1.5), abs=1e-12)
    with pytest.raises(ValueError):
        log_density(Normal(0, -1), 0.0)
    with pytest.raises(TypeError):
        log_density("normal", 0.0)


@pytest.mark.parametrize("family,support", [
    (Normal(1.0, 4.0), (-math.inf, math.inf)),
    (TruncNormal(-1.0, 2.0, 0.5, 0.3), (-1.0, 2.0)),
    (TruncNormal(4.0, math.inf, 0.0, 1.0), (4.0, math.inf)),
    (TruncNormal(0.0, 1.0, 0.0, 0.009), (0.0, 1.0)),
    (InvGamma(10.0, 0.18), (0.0, math.inf)),
    (InvGamma(3.0, 2.0), (0.0, math.inf)),
    (Uniform(-2.0, 3.0), (-2.0, 3.0)),
])
def test_densities_integrate_to_one(family, support):
    f = lambda x: math.exp(log_density(family, x))  # noqa: E731
    lo, hi = support
    if isinstance(family, InvGamma):
        mode = family.S / (family.nu + 1)
        total = integrate.quad(f, 0, mode, epsabs=1e-12)[0] + integrate.quad(f, mode, math.inf, epsabs=1e-12)[0]
    else:
        total = integrate.quad(f, lo, hi, epsabs=1e-12, epsrel=1e-10)[0]
    assert total == pytest.approx(1.0, abs=1e-6)


def test_log_diff_ndtr_is_stable_in_both_tails():
    ref = lambda a, b: math.log(stats.norm.cdf(b) - stats.norm.cdf(a))  # noqa: E731
    for a, b in [(-1.0, 1.0), (0.0, math.inf), (-math.inf, 0.2)]:
        assert log_diff_ndtr(a, b) == pytest.approx(ref(a, b), rel=1e-12)
    # deep tails: compare with the survival function
    assert log_diff_ndtr(30.0, math.inf) == pytest.approx(stats.norm.logsf(30.0), rel=1e-10)
    assert log_diff_ndtr(-math.inf, -30.0) == pytest.approx(stats.norm.logcdf(-30.0), rel=1e-10)
    assert np.isfinite(log_diff_ndtr(40.0, 41.0))
    v = log_diff_ndtr(np.array([-1.0, 5.0]), np.array([1.0, 6.0]))
    assert v.shape == (2,)
