"""The two unobserved-components models and their full conditionals.

UC-AR
    y_t = tau_t + eps_t,  tau_t = tau_{t-1} + eta_t,  eps_t = rho eps_{t-1} + u_t,
    eta_t ~ N(0, omega2), u_t ~ N(0, sigma2), eps_0 = 0.

Bounded trend inflation
    pi_t - tau_t = rho_t (pi_{t-1} - tau_{t-1}) + exp(h_t / 2) e_t,
    tau_t, rho_t: random walks with increments truncated so the state stays in
    its box; h_t: Gaussian random walk.

The bounded model's lagged gap at t = 1 is ``gap0``: ``pi_0 - tau0`` when a
pre-sample observation is available, else 0 (the AR term is dropped).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import log_ndtr

from .banded import BandedSymMatrix
from .distributions import (
    LOG_SQRT_2PI,
    RngStream,
    log_diff_ndtr,
    sample_inv_gamma,
    sample_normal,
    sample_trunc_normal,
)
from .gaussian import BandedTarget, Separable


class DataError(ValueError):
    pass


def transform_inflation(z) -> np.ndarray:
    """Annualized quarterly log growth, ``400 * diff(log z)``."""
    z = np.asarray(z, dtype=float)
    if z.ndim != 1 or z.shape[0] < 2:
        raise DataError("need at least two price levels")
    bad = np.flatnonzero(~(z > 0))
    if bad.size:
        raise DataError(f"non-positive price level at index {int(bad[0])}")
    return 400.0 * np.diff(np.log(z))


# ---------------------------------------------------------------- UC-AR


@dataclass(frozen=True)
class UcArHyper:
    a0: float = 5.0
    b0: float = 100.0
    nu_sigma2: float = 3.0
    S_sigma2: float = 2.0
    nu_omega2: float = 3.0
    S_omega2: float = 0.25**2 * 2.0

    def __post_init__(self):
        if not self.b0 > 0:
            raise ValueError("b0 must be positive")
        for k in ("nu_sigma2", "S_sigma2", "nu_omega2", "S_omega2"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be positive")


@dataclass(frozen=True)
class UcArState:
    tau: np.ndarray
    tau0: float
    rho: float
    sigma2: float
    omega2: float

    def check(self):
        if not abs(self.rho) < 1:
            raise AssertionError(f"rho={self.rho} outside (-1, 1)")
        if not (self.sigma2 > 0 and self.omega2 > 0):
            raise AssertionError("non-positive variance")


def ucar_sample_statics(state: UcArState, y, hyper: UcArHyper, rng: RngStream) -> UcArState:
    """Redraw tau0, rho, sigma2, omega2 (in that order) from their full conditionals."""
    y = np.asarray(y, dtype=float)
    tau = state.tau
    T = tau.shape[0]

    prec = 1.0 / hyper.b0 + 1.0 / state.omega2
    mean = (hyper.a0 / hyper.b0 + tau[0] / state.omega2) / prec
    tau0 = sample_normal(mean, 1.0 / prec, rng)

    eps = y - tau
    sxx = float(eps[:-1] @ eps[:-1])
    if sxx > 0:
        rho_hat = float(eps[1:] @ eps[:-1]) / sxx
        rho = sample_trunc_normal(-1.0, 1.0, rho_hat, state.sigma2 / sxx, rng)
    else:
        rho = -1.0 + 2.0 * rng.uniform()

    u = eps.copy()
    u[1:] -= rho * eps[:-1]
    sigma2 = sample_inv_gamma(hyper.nu_sigma2 + T / 2.0, hyper.S_sigma2 + 0.5 * float(u @ u), rng)

    d = np.diff(np.concatenate(([tau0], tau)))
    omega2 = sample_inv_gamma(hyper.nu_omega2 + T / 2.0, hyper.S_omega2 + 0.5 * float(d @ d), rng)
    return UcArState(tau=tau, tau0=tau0, rho=rho, sigma2=sigma2, omega2=omega2)


def ucar_prior_draw(T: int, hyper: UcArHyper, rng: RngStream) -> UcArState:
    tau0 = sample_normal(hyper.a0, hyper.b0, rng)
    rho = -1.0 + 2.0 * rng.uniform()
    sigma2 = sample_inv_gamma(hyper.nu_sigma2, hyper.S_sigma2, rng)
    omega2 = sample_inv_gamma(hyper.nu_omega2, hyper.S_omega2, rng)
    tau = tau0 + np.cumsum(math.sqrt(omega2) * rng.standard_normal(T))
    return UcArState(tau=tau, tau0=tau0, rho=rho, sigma2=sigma2, omega2=omega2)


def ucar_simulate_data(state: UcArState, rng: RngStream) -> np.ndarray:
    T = state.tau.shape[0]
    u = math.sqrt(state.sigma2) * rng.standard_normal(T)
    eps = np.empty(T)
    prev = 0.0
    for t in range(T):
        prev = state.rho * prev + u[t]
        eps[t] = prev
    return state.tau + eps


# ---------------------------------------------------------------- bounded model


@dataclass(frozen=True)
class BoundedHyper:
    a_tau: float
    b_tau: float
    a_rho: float = 0.0
    b_rho: float = 1.0
    tau0: float = 0.0
    rho0: float = 0.0
    h0: float = 0.0
    omega_tau2: float = 5.0
    omega_rho2: float = 1.0
    omega_h2: float = 5.0
    nu_tau: float = 10.0
    S_tau: float = 0.18
    nu_rho: float = 10.0
    S_rho: float = 0.009
    nu_h: float = 10.0
    S_h: float = 0.45

    def __post_init__(self):
        if not self.a_tau < self.b_tau:
            raise ValueError("need a_tau < b_tau")
        if not self.a_rho < self.b_rho:
            raise ValueError("need a_rho < b_rho")
        for k in ("omega_tau2", "omega_rho2", "omega_h2", "nu_tau", "S_tau", "nu_rho", "S_rho", "nu_h", "S_h"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be positive")


@dataclass(frozen=True)
class BoundedState:
    tau: np.ndarray
    rho: np.ndarray
    h: np.ndarray
    sigma_tau2: float
    sigma_rho2: float
    sigma_h2: float

    def check(self, hyper: BoundedHyper):
        if np.any(self.tau < hyper.a_tau) or np.any(self.tau > hyper.b_tau):
            raise AssertionError("tau outside its box")
        if np.any(self.rho < hyper.a_rho) or np.any(self.rho > hyper.b_rho):
            raise AssertionError("rho outside its box")
        if not (self.sigma_tau2 > 0 and self.sigma_rho2 > 0 and self.sigma_h2 > 0):
            raise AssertionError("non-positive variance")


def _rw_precision(T: int, omega2: float, sigma2: float) -> BandedSymMatrix:
    """Precision of x_1 ~ N(., omega2), x_t - x_{t-1} ~ N(0, sigma2)."""
    main = np.full(T, 2.0 / sigma2)
    main[-1] = 1.0 / sigma2
    main[0] = 1.0 / omega2 + (1.0 / sigma2 if T > 1 else 0.0)
    if T == 1:
        return BandedSymMatrix([main])
    return BandedSymMatrix([main, np.full(T - 1, -1.0 / sigma2)])


def _log_phi(z):
    return -LOG_SQRT_2PI - 0.5 * z * z


class TruncNormalizer:
    """``N(u) = -sum log Z(u_t)`` with ``Z(u) = Phi((b-u)/s) - Phi((a-u)/s)``.

    This is the state-dependent normalizer of the truncated increments; it is
    what makes the bounded conditionals non-Gaussian.
    """

    def __init__(self, a: float, b: float, sigma2: float):
        self.a, self.b = a, b
        self.s = math.sqrt(sigma2)

    def log_z(self, u):
        return log_diff_ndtr((self.a - u) / self.s, (self.b - u) / self.s)

    def value(self, u) -> float:
        return -float(np.sum(self.log_z(u)))

    def derivs(self, u):
        """``log Z``, ``Z'/Z`` and ``Z''/Z`` elementwise."""
        s = self.s
        alpha = (self.a - u) / s
        beta = (self.b - u) / s
        logz = log_diff_ndtr(alpha, beta)
        with np.errstate(invalid="ignore"):
            pa = np.where(np.isfinite(alpha), np.exp(_log_phi(alpha) - logz), 0.0)
            pb = np.where(np.isfinite(beta), np.exp(_log_phi(beta) - logz), 0.0)
            apa = np.where(np.isfinite(alpha), alpha * pa, 0.0)
            bpb = np.where(np.isfinite(beta), beta * pb, 0.0)
        return logz, (pa - pb) / s, (apa - bpb) / (s * s)


class TruncSep(Separable):
    """``-log Z(x_t)`` on the coordinates flagged in ``mask`` (all but the last)."""

    def __init__(self, norm: TruncNormalizer, mask: np.ndarray):
        self.norm = norm
        self.mask = mask
        self.idx = np.flatnonzero(mask)

    def value(self, x):
        return self.norm.value(x[self.idx])

    def terms(self, x):
        v = np.zeros(x.shape[0])
        d1 = np.zeros(x.shape[0])
        d2 = np.zeros(x.shape[0])
        logz, r1, r2 = self.norm.derivs(x[self.idx])
        v[self.idx] = -logz
        d1[self.idx] = -r1
        d2[self.idx] = r1 * r1 - r2
        return v, d1, d2

    def sliced(self, start, stop):
        return TruncSep(self.norm, self.mask[start:stop])


class VolSep(Separable):
    """``-x_t/2 - s_t^2 exp(-x_t)/2``: Gaussian measurement with log-variance x."""

    def __init__(self, s2: np.ndarray):
        self.s2 = s2

    def value(self, x):
        return float(np.sum(-0.5 * x - 0.5 * self.s2 * np.exp(-x)))

    def terms(self, x):
        e = 0.5 * self.s2 * np.exp(-x)
        return -0.5 * x - e, -0.5 + e, -e

    def sliced(self, start, stop):
        return VolSep(self.s2[start:stop])


def _truncated_rw_target(quad: BandedSymMatrix, lin: np.ndarray, lo: float, hi: float,
                         sigma2: float, T: int) -> BandedTarget:
    """``-1/2 x'Qx + lin'x - sum_{t<T} log Z(x_t)`` on the box [lo, hi]^T."""
    kernel = BandedTarget(quad, lin, None, lo, hi)
    if not (np.isfinite(lo) or np.isfinite(hi)) or T == 1:
        return BandedTarget(quad, lin, None, lo, hi, kernel=kernel)
    mask = np.ones(T, dtype=bool)
    mask[-1] = False
    sep = TruncSep(TruncNormalizer(lo, hi, sigma2), mask)
    return BandedTarget(quad, lin, sep, lo, hi, kernel=kernel)


def bounded_tau_target(state: BoundedState, pi, hyper: BoundedHyper, gap0: float = 0.0) -> BandedTarget:
    """Conditional log-density of tau given rho, h, variances and data."""
    pi = np.asarray(pi, dtype=float)
    T = pi.shape[0]
    w = np.exp(-state.h)
    rho = state.rho
    # residual s = c - B tau, B unit lower bidiagonal with -rho_t below the diagonal
    c = pi.copy()
    c[0] -= rho[0] * gap0
    c[1:] -= rho[1:] * pi[:-1]
    main = w.copy()
    main[:-1] += rho[1:] ** 2 * w[1:]
    meas = BandedSymMatrix([main] if T == 1 else [main, -rho[1:] * w[1:]])
    wc = w * c
    lin = wc.copy()
    lin[:-1] -= rho[1:] * wc[1:]  # B' W c
    lin[0] += hyper.tau0 / hyper.omega_tau2
    quad = meas + _rw_precision(T, hyper.omega_tau2, state.sigma_tau2)
    return _truncated_rw_target(quad, lin, hyper.a_tau, hyper.b_tau, state.sigma_tau2, T)


def bounded_rho_target(state: BoundedState, pi, hyper: BoundedHyper, gap0: float = 0.0) -> BandedTarget:
    """Conditional log-density of rho given tau, h, variances and data."""
    pi = np.asarray(pi, dtype=float)
    T = pi.shape[0]
    w = np.exp(-state.h)
    gap = pi - state.tau
    lag = np.concatenate(([gap0], gap[:-1]))
    meas = BandedSymMatrix([w * lag * lag])
    lin = w * lag * gap
    lin[0] += hyper.rho0 / hyper.omega_rho2
    quad = meas + _rw_precision(T, hyper.omega_rho2, state.sigma_rho2)
    return _truncated_rw_target(quad, lin, hyper.a_rho, hyper.b_rho, state.sigma_rho2, T)


def measurement_residual(state: BoundedState, pi, gap0: float = 0.0) -> np.ndarray:
    gap = np.asarray(pi, dtype=float) - state.tau
    lag = np.concatenate(([gap0], gap[:-1]))
    return gap - state.rho * lag


def bounded_h_target(state: BoundedState, pi, hyper: BoundedHyper, gap0: float = 0.0) -> BandedTarget:
    """Conditional log-density of the log-volatility path (log-concave, unbounded)."""
    s2 = measurement_residual(state, pi, gap0) ** 2
    T = s2.shape[0]
    lin = np.zeros(T)
    lin[0] = hyper.h0 / hyper.omega_h2
    return BandedTarget(_rw_precision(T, hyper.omega_h2, state.sigma_h2), lin, VolSep(s2))


def _sample_truncated_rw_variance(x, lo, hi, nu, S, current, rng: RngStream) -> float:
    """Variance of truncated random-walk increments.

    Independence MH: propose from the conjugate inverse-gamma that ignores the
    truncation normalizers, then correct by the normalizer ratio.
    """
    d = np.diff(x)
    prop = sample_inv_gamma(nu + d.size / 2.0, S + 0.5 * float(d @ d), rng)
    if d.size == 0 or not (np.isfinite(lo) or np.isfinite(hi)):
        return prop
    log_w_new = TruncNormalizer(lo, hi, prop).value(x[:-1])
    log_w_old = TruncNormalizer(lo, hi, current).value(x[:-1])
    if math.log(rng.uniform()) < log_w_new - log_w_old:
        return prop
    return current


def bounded_sample_variances(state: BoundedState, hyper: BoundedHyper, rng: RngStream) -> BoundedState:
    st2 = _sample_truncated_rw_variance(state.tau, hyper.a_tau, hyper.b_tau, hyper.nu_tau, hyper.S_tau,
                                        state.sigma_tau2, rng)
    sr2 = _sample_truncated_rw_variance(state.rho, hyper.a_rho, hyper.b_rho, hyper.nu_rho, hyper.S_rho,
                                        state.sigma_rho2, rng)
    dh = np.diff(state.h)
    sh2 = sample_inv_gamma(hyper.nu_h + dh.size / 2.0, hyper.S_h + 0.5 * float(dh @ dh), rng)
    return replace(state, sigma_tau2=st2, sigma_rho2=sr2, sigma_h2=sh2)


def truncated_rw_draw(T, lo, hi, mu0, omega2, sigma2, rng: RngStream) -> np.ndarray:
    x = np.empty(T)
    x[0] = sample_trunc_normal(lo, hi, mu0, omega2, rng)
    for t in range(1, T):
        x[t] = sample_trunc_normal(lo, hi, x[t - 1], sigma2, rng)
    return x


def bounded_prior_draw(T: int, hyper: BoundedHyper, rng: RngStream) -> BoundedState:
    st2 = sample_inv_gamma(hyper.nu_tau, hyper.S_tau, rng)
    sr2 = sample_inv_gamma(hyper.nu_rho, hyper.S_rho, rng)
    sh2 = sample_inv_gamma(hyper.nu_h, hyper.S_h, rng)
    tau = truncated_rw_draw(T, hyper.a_tau, hyper.b_tau, hyper.tau0, hyper.omega_tau2, st2, rng)
    rho = truncated_rw_draw(T, hyper.a_rho, hyper.b_rho, hyper.rho0, hyper.omega_rho2, sr2, rng)
    h = np.empty(T)
    h[0] = sample_normal(hyper.h0, hyper.omega_h2, rng)
    for t in range(1, T):
        h[t] = sample_normal(h[t - 1], sh2, rng)
    return BoundedState(tau=tau, rho=rho, h=h, sigma_tau2=st2, sigma_rho2=sr2, sigma_h2=sh2)


def bounded_simulate_data(state: BoundedState, rng: RngStream, gap0: float = 0.0) -> np.ndarray:
    T = state.tau.shape[0]
    e = rng.standard_normal(T) * np.exp(0.5 * state.h)
    pi = np.empty(T)
    lag = gap0
    for t in range(T):
        gap = state.rho[t] * lag + e[t]
        pi[t] = state.tau[t] + gap
        lag = gap
    return pi
