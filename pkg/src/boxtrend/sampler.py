"""Gibbs sampling with acceptance-rejection Metropolis-Hastings block updates.

Each bounded block (trend, AR coefficient path) is drawn with an ARMH step
whose Gaussian proposal is built either around the unconstrained mode
(``Strategy.MODE``) or around the box-constrained QP solution that is
closest to the mode in the precision norm (``Strategy.QUADPROG``).
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .banded import NotPositiveDefiniteError
from .distributions import RngStream
from .gaussian import (
    BandedTarget,
    GaussianApprox,
    NewtonError,
    SmoothTarget,
    log_density_mvn,
    newton_mode,
    quadratic_target,
    sample_mvn_precision,
    ucar_trend_system,
)
from .models import (
    BoundedHyper,
    BoundedState,
    UcArHyper,
    UcArState,
    bounded_h_target,
    bounded_prior_draw,
    bounded_rho_target,
    bounded_sample_variances,
    bounded_simulate_data,
    bounded_tau_target,
    ucar_prior_draw,
    ucar_sample_statics,
    ucar_simulate_data,
)
from .qp import BoxQp, QpConvergenceError, solve_box_qp

log = logging.getLogger(__name__)


class Strategy(str, enum.Enum):
    MODE = "mode"
    QUADPROG = "quadprog"


@dataclass(frozen=True)
class ArmhConfig:
    lam: float = 1.0
    max_ar_draws: int = 100

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("dominance multiplier must be positive")
        if self.max_ar_draws < 1:
            raise ValueError("max_ar_draws must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    model: str = "ucar"
    strategy: Strategy = Strategy.MODE
    n_draws: int = 10000
    burn_in: int = 1000
    seed: int = 0
    ucar: UcArHyper = field(default_factory=UcArHyper)
    bounded: Optional[BoundedHyper] = None
    # UC-AR trend box; infinite means the plain model
    ucar_a_tau: float = -math.inf
    ucar_b_tau: float = math.inf
    pi0_policy: str = "data"
    precision_at: str = "qp_solution"
    armh: ArmhConfig = field(default_factory=ArmhConfig)
    # ARMH sub-block length for the bounded tau and rho paths; 0 updates each
    # path whole, which stalls once the box binds at more than a few points
    block_size: int = 10
    check_invariants: bool = True

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.model not in ("ucar", "bounded"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.model == "bounded" and self.bounded is None:
            raise ValueError("bounded model needs trend bounds (a_tau, b_tau)")
        if not 0 <= self.burn_in < self.n_draws:
            raise ValueError("need 0 <= burn_in < n_draws")
        if self.pi0_policy not in ("data", "none"):
            raise ValueError(f"pi0_policy must be 'data' or 'none', got {self.pi0_policy!r}")
        if self.precision_at not in ("mode", "qp_solution"):
            raise ValueError(f"precision_at must be 'mode' or 'qp_solution', got {self.precision_at!r}")
        if not self.ucar_a_tau < self.ucar_b_tau:
            raise ValueError("need a_tau < b_tau")
        if self.block_size < 0:
            raise ValueError("block_size must be >= 0")


@dataclass
class BlockStats:
    steps: int = 0
    accepted: int = 0
    ar_draws: int = 0
    ar_exhausted: int = 0
    proposal_fallbacks: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.steps if self.steps else 0.0

    @property
    def mean_ar_draws(self) -> float:
        return self.ar_draws / self.steps if self.steps else 0.0


@dataclass
class ChainTrace:
    names: list[str]
    draws: np.ndarray
    stats: dict[str, BlockStats]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.draws[:, self.names.index(name)]
        except ValueError:
            raise KeyError(f"no parameter named {name!r}") from None

    def block(self, prefix: str) -> np.ndarray:
        idx = [i for i, n in enumerate(self.names) if n.startswith(prefix + "_") and n[len(prefix) + 1:].isdigit()]
        return self.draws[:, idx]


# ---------------------------------------------------------------- proposals


def _qp_adjust(mode: GaussianApprox, target: SmoothTarget, strategy: Strategy,
               precision_at: str, stats: BlockStats | None = None) -> GaussianApprox:
    if strategy is Strategy.MODE or target.in_box(mode.mean):
        return mode
    try:
        res = solve_box_qp(BoxQp(mode.precision, mode.mean, target.lo, target.hi))
    except QpConvergenceError as exc:
        log.warning("box QP failed (%s); using the mode proposal", exc)
        if stats is not None:
            stats.proposal_fallbacks += 1
        return mode
    if precision_at == "mode":
        return GaussianApprox(res.tau_star, mode.precision, mode.chol)
    src = target.kernel or target
    try:
        return GaussianApprox(res.tau_star, src.neg_hess(res.tau_star))
    except NotPositiveDefiniteError:
        return GaussianApprox(res.tau_star, mode.precision, mode.chol)


def build_proposal(target: SmoothTarget, strategy: Strategy, init=None, precision_at: str = "qp_solution",
                   stats: BlockStats | None = None) -> GaussianApprox:
    """Gaussian proposal for an ARMH step on ``target``.

    The mode is found on ``target.kernel`` when the target carries one.
    """
    strategy = Strategy(strategy)
    src = target.kernel or target
    x0 = np.zeros(target.dim) if init is None else init
    try:
        if isinstance(src, BandedTarget) and src.is_gaussian:
            mode = src.gaussian()
        else:
            mode = newton_mode(src, x0)
    except NewtonError as exc:
        log.warning("mode search failed (%s); using best iterate", exc)
        if stats is not None:
            stats.proposal_fallbacks += 1
        mode = GaussianApprox(exc.best, src.neg_hess(exc.best))
    return _qp_adjust(mode, target, strategy, precision_at, stats)


def armh_step(current, target: SmoothTarget, proposal: GaussianApprox, cfg: ArmhConfig, rng: RngStream):
    """One acceptance-rejection Metropolis-Hastings transition.

    Returns ``(state, accepted, n_proposal_draws)``. Targets ``exp(value)``
    restricted to the box of ``target``.
    """
    z = current
    lp_z = target.value(z)
    lq_z = log_density_mvn(proposal, z)
    xm = proposal.mean
    # the box-restricted target vanishes at an infeasible proposal mean; c -> 0
    # turns the AR phase into "first feasible draw" and the MH step into
    # independence MH, which is the limit the general formulas reach
    if target.in_box(xm):
        log_c = math.log(cfg.lam) + target.value(xm) - log_density_mvn(proposal, xm)
    else:
        log_c = -math.inf

    for n in range(1, cfg.max_ar_draws + 1):
        x = sample_mvn_precision(proposal, rng)
        if not target.in_box(x):
            continue
        lp_x = target.value(x)
        lq_x = log_density_mvn(proposal, x)
        if log_c == -math.inf:
            log_a = lp_x - lq_x - lp_z + lq_z
        else:
            if math.log(1.0 - rng.uniform()) > min(0.0, lp_x - log_c - lq_x):
                continue
            log_a = lp_x + min(lp_z, log_c + lq_z) - lp_z - min(lp_x, log_c + lq_x)
        if log_a >= 0 or math.log(1.0 - rng.uniform()) < log_a:
            return x, True, n
        return z, False, n

    # AR phase exhausted: independence MH with the same proposal
    x = sample_mvn_precision(proposal, rng)
    n = cfg.max_ar_draws + 1
    if not target.in_box(x):
        return z, False, n
    log_a = target.value(x) - log_density_mvn(proposal, x) - lp_z + lq_z
    if log_a >= 0 or math.log(1.0 - rng.uniform()) < log_a:
        return x, True, n
    return z, False, n


def _armh_update(current, target, strategy, cfg: RunConfig, rng, stats: BlockStats):
    prop = build_proposal(target, strategy, init=current, precision_at=cfg.precision_at, stats=stats)
    x, acc, n = armh_step(current, target, prop, cfg.armh, rng)
    stats.steps += 1
    stats.accepted += int(acc)
    stats.ar_draws += n
    stats.ar_exhausted += int(n > cfg.armh.max_ar_draws)
    return x


def block_edges(T: int, size: int, rng: RngStream) -> list[tuple[int, int]]:
    """Contiguous blocks of length ``size`` with a random phase."""
    if size <= 0 or size >= T:
        return [(0, T)]
    first = 1 + int(rng.uniform() * size)
    edges = [0] + list(range(min(first, T), T, size)) + [T]
    return [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _armh_block(current, target, strategy, cfg: RunConfig, rng, stats: BlockStats):
    x = np.array(current, dtype=float)
    for a, b in block_edges(x.shape[0], cfg.block_size, rng):
        if (a, b) == (0, x.shape[0]):
            return _armh_update(x, target, strategy, cfg, rng, stats)
        sub = target.restrict(a, b, x)
        x[a:b] = _armh_update(x[a:b], sub, strategy, cfg, rng, stats)
    return x


# ---------------------------------------------------------------- sweeps


def ucar_sweep(state: UcArState, y, cfg: RunConfig, rng: RngStream, stats: dict, hyper: UcArHyper | None = None):
    hyper = cfg.ucar if hyper is None else hyper
    system = ucar_trend_system(y, state.tau0, state.rho, state.sigma2, state.omega2)
    if math.isinf(cfg.ucar_a_tau) and math.isinf(cfg.ucar_b_tau):
        tau = sample_mvn_precision(system, rng)
        st = stats["tau"]
        st.steps += 1
        st.accepted += 1
        st.ar_draws += 1
    else:
        target = quadratic_target(system, cfg.ucar_a_tau, cfg.ucar_b_tau)
        st = stats["tau"]
        prop = _qp_adjust(system, target, cfg.strategy, cfg.precision_at, st)
        tau, acc, n = armh_step(state.tau, target, prop, cfg.armh, rng)
        st.steps += 1
        st.accepted += int(acc)
        st.ar_draws += n
        st.ar_exhausted += int(n > cfg.armh.max_ar_draws)
    return ucar_sample_statics(replace(state, tau=tau), y, hyper, rng)


def bounded_sweep(state: BoundedState, pi, gap0: float, cfg: RunConfig, rng: RngStream, stats: dict,
                  hyper: BoundedHyper | None = None):
    hyper = cfg.bounded if hyper is None else hyper
    tau = _armh_block(state.tau, bounded_tau_target(state, pi, hyper, gap0), cfg.strategy, cfg, rng, stats["tau"])
    state = replace(state, tau=tau)
    rho = _armh_block(state.rho, bounded_rho_target(state, pi, hyper, gap0), cfg.strategy, cfg, rng, stats["rho"])
    state = replace(state, rho=rho)
    # h is unbounded, so a whole-path proposal is accurate and needs no blocking
    h = _armh_update(state.h, bounded_h_target(state, pi, hyper, gap0), Strategy.MODE, cfg, rng, stats["h"])
    state = replace(state, h=h)
    return bounded_sample_variances(state, hyper, rng)


def _ucar_row(s: UcArState) -> np.ndarray:
    return np.concatenate((s.tau, [s.tau0, s.rho, s.sigma2, s.omega2]))


def _bounded_row(s: BoundedState) -> np.ndarray:
    return np.concatenate((s.tau, s.rho, s.h, [s.sigma_tau2, s.sigma_rho2, s.sigma_h2]))


def _names(model: str, T: int) -> list[str]:
    idx = range(1, T + 1)
    if model == "ucar":
        return [f"tau_{t}" for t in idx] + ["tau0", "rho", "sigma2", "omega2"]
    return ([f"tau_{t}" for t in idx] + [f"rho_{t}" for t in idx] + [f"h_{t}" for t in idx]
            + ["sigma_tau2", "sigma_rho2", "sigma_h2"])


def split_presample(cfg: RunConfig, data) -> tuple[np.ndarray, float]:
    """Estimation sample and lagged gap at t=1 for the bounded model."""
    data = np.asarray(data, dtype=float)
    if cfg.pi0_policy == "data":
        return data[1:], float(data[0] - cfg.bounded.tau0)
    return data, 0.0


def initial_state(cfg: RunConfig, y, gap0: float = 0.0) -> UcArState | BoundedState:
    y = np.asarray(y, dtype=float)
    T = y.shape[0]
    if cfg.model == "ucar":
        h = cfg.ucar
        return UcArState(tau=np.clip(y, cfg.ucar_a_tau, cfg.ucar_b_tau), tau0=h.a0, rho=0.0,
                         sigma2=h.S_sigma2 / (h.nu_sigma2 - 1.0) if h.nu_sigma2 > 1 else h.S_sigma2,
                         omega2=h.S_omega2 / (h.nu_omega2 - 1.0) if h.nu_omega2 > 1 else h.S_omega2)
    b = cfg.bounded

    def prior_mean(nu, S):
        return S / (nu - 1.0) if nu > 1 else S

    tau = np.clip(_moving_average(y, 9), b.a_tau, b.b_tau)
    if math.isfinite(b.a_rho) and math.isfinite(b.b_rho):
        rho = np.full(T, 0.5 * (b.a_rho + b.b_rho))
    else:
        rho = np.full(T, min(max(b.rho0, b.a_rho), b.b_rho))
    lag = np.concatenate(([gap0], (y - tau)[:-1]))
    resid = y - tau - rho * lag
    h = np.full(T, math.log(max(float(np.mean(resid**2)), 1e-8)))
    state = BoundedState(
        tau=tau,
        rho=rho,
        h=h,
        sigma_tau2=prior_mean(b.nu_tau, b.S_tau),
        sigma_rho2=prior_mean(b.nu_rho, b.S_rho),
        sigma_h2=prior_mean(b.nu_h, b.S_h),
    )
    return _settle(state, y, gap0, b)


def _settle(state: BoundedState, y, gap0: float, hyper: BoundedHyper, passes: int = 3) -> BoundedState:
    """Move the paths to their conditional modes (box-projected) a few times.

    Independence-type proposals hardly ever leave a start that sits in a tail
    where the target is much heavier than the proposal, so the chain starts
    from a rough joint mode instead. Deterministic; consumes no randomness.
    """
    for _ in range(passes):
        for name, build in (("tau", bounded_tau_target), ("rho", bounded_rho_target)):
            target = build(state, y, hyper, gap0)
            g = target.kernel.gaussian()
            x = solve_box_qp(BoxQp(g.precision, g.mean, target.lo, target.hi)).tau_star \
                if not target.in_box(g.mean) else g.mean
            state = replace(state, **{name: x})
        try:
            h = newton_mode(bounded_h_target(state, y, hyper, gap0), state.h).mean
        except NewtonError as exc:
            h = exc.best
        state = replace(state, h=h)
    return state


def _moving_average(y: np.ndarray, width: int) -> np.ndarray:
    k = min(width, y.shape[0])
    pad = np.pad(y, (k // 2, k - 1 - k // 2), mode="edge")
    return np.convolve(pad, np.ones(k) / k, mode="valid")


def run_chain(cfg: RunConfig, data, chain: int | None = None) -> ChainTrace:
    data = np.asarray(data, dtype=float)
    if data.shape[0] < 2:
        raise ValueError("need at least two observations")
    rng = RngStream(cfg.seed, chain)
    if cfg.model == "ucar":
        y, gap0 = data, 0.0
        blocks = ("tau",)
    else:
        y, gap0 = split_presample(cfg, data)
        blocks = ("tau", "rho", "h")
    T = y.shape[0]
    stats = {b: BlockStats() for b in blocks}
    state = initial_state(cfg, y, gap0)
    names = _names(cfg.model, T)
    out = np.empty((cfg.n_draws - cfg.burn_in, len(names)))
    for it in range(cfg.n_draws):
        if cfg.model == "ucar":
            state = ucar_sweep(state, y, cfg, rng, stats)
            row = _ucar_row(state)
        else:
            state = bounded_sweep(state, y, gap0, cfg, rng, stats)
            row = _bounded_row(state)
        if cfg.check_invariants:
            if cfg.model == "ucar":
                state.check()
            else:
                state.check(cfg.bounded)
        if it >= cfg.burn_in:
            out[it - cfg.burn_in] = row
    return ChainTrace(names=names, draws=out, stats=stats)


# ---------------------------------------------------------------- Geweke test


@dataclass
class GewekeReport:
    names: list[str]
    z: np.ndarray
    marginal_mean: np.ndarray
    successive_mean: np.ndarray

    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z)))


def _ucar_stats(s: UcArState, y) -> dict:
    return {
        "tau0": s.tau0, "rho": s.rho, "rho^2": s.rho**2, "sigma2": s.sigma2, "omega2": s.omega2,
        "log_sigma2": math.log(s.sigma2), "log_omega2": math.log(s.omega2),
        "tau_1": s.tau[0], "tau_T": s.tau[-1], "mean_tau": float(np.mean(s.tau)),
        "mean_y": float(np.mean(y)), "mean_y2": float(np.mean(y * y)),
        "mean_dtau2": float(np.mean(np.diff(np.concatenate(([s.tau0], s.tau))) ** 2)),
    }


def _bounded_stats(s: BoundedState, pi) -> dict:
    return {
        "sigma_tau2": s.sigma_tau2, "sigma_rho2": s.sigma_rho2, "sigma_h2": s.sigma_h2,
        "tau_1": s.tau[0], "tau_T": s.tau[-1], "mean_tau": float(np.mean(s.tau)),
        "rho_1": s.rho[0], "rho_T": s.rho[-1], "mean_rho": float(np.mean(s.rho)),
        "h_1": s.h[0], "h_T": s.h[-1], "mean_h": float(np.mean(s.h)),
        "mean_dtau2": float(np.mean(np.diff(s.tau) ** 2)),
        "mean_pi": float(np.mean(pi)), "mean_gap2": float(np.mean((pi - s.tau) ** 2)),
    }


def _batch_var_of_mean(x: np.ndarray, n_batches: int = 50) -> float:
    n = x.shape[0] // n_batches * n_batches
    b = x[:n].reshape(n_batches, -1).mean(axis=1)
    return float(np.var(b, ddof=1) / n_batches)


def geweke_test(cfg: RunConfig, T: int, n_cycles: int, gap0: float = 0.5,
                gibbs_hyper=None) -> GewekeReport:
    """Compare prior-predictive moments with those of the Gibbs-data chain.

    ``gibbs_hyper`` replaces the hyperparameters seen by the Gibbs update only;
    a mismatch with the prior simulator must be detected.
    """
    rng = RngStream(cfg.seed)
    if cfg.model == "ucar":
        prior = lambda: ucar_prior_draw(T, cfg.ucar, rng)  # noqa: E731
        simulate = lambda s: ucar_simulate_data(s, rng)  # noqa: E731
        statfn = _ucar_stats
        blocks = ("tau",)
    else:
        prior = lambda: bounded_prior_draw(T, cfg.bounded, rng)  # noqa: E731
        simulate = lambda s: bounded_simulate_data(s, rng, gap0)  # noqa: E731
        statfn = _bounded_stats
        blocks = ("tau", "rho", "h")

    marg = []
    for _ in range(n_cycles):
        s = prior()
        marg.append(statfn(s, simulate(s)))

    stats = {b: BlockStats() for b in blocks}
    s = prior()
    y = simulate(s)
    succ = []
    for _ in range(n_cycles):
        if cfg.model == "ucar":
            s = ucar_sweep(s, y, cfg, rng, stats, hyper=gibbs_hyper)
        else:
            s = bounded_sweep(s, y, gap0, cfg, rng, stats, hyper=gibbs_hyper)
        y = simulate(s)
        succ.append(statfn(s, y))

    names = list(marg[0])
    A = np.array([[d[k] for k in names] for d in marg])
    B = np.array([[d[k] for k in names] for d in succ])
    z = np.empty(len(names))
    for j in range(len(names)):
        se = math.sqrt(np.var(A[:, j], ddof=1) / n_cycles + _batch_var_of_mean(B[:, j]))
        z[j] = (A[:, j].mean() - B[:, j].mean()) / se
    return GewekeReport(names=names, z=z, marginal_mean=A.mean(axis=0), successive_mean=B.mean(axis=0))
