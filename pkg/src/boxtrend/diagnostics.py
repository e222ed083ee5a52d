"""Sample-efficiency and posterior summaries for MCMC output.

The inefficiency factor of a scalar chain is ``1 + 2 sum_{l=1}^{L} phi_l``,
with ``phi_l`` the lag-``l`` sample autocorrelation: the variance of the
chain's mean relative to that of an independent sample of the same size
(``(1 + phi) / (1 - phi)`` for an AR(1)). Autocorrelations use the
full-sample mean and variance for every lag, and raw sums are reported even
when negative.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_LAG = 100


class DegenerateSeriesError(ValueError):
    """Series with zero sample variance has no autocorrelation."""


def _autocorrelations(X: np.ndarray, L: int) -> np.ndarray:
    """Column-wise autocorrelations of the 2-D array ``X`` at lags 1..L."""
    n = X.shape[0]
    if not 1 <= L < n:
        raise ValueError(f"need 1 <= L < len(series), got L={L}, len={n}")
    D = X - X.mean(axis=0)
    denom = np.einsum("ij,ij->j", D, D)
    # a constant column can leave rounding residue in D, so test the range
    bad = np.flatnonzero(~(np.ptp(X, axis=0) > 0))
    if bad.size:
        raise DegenerateSeriesError(f"series {int(bad[0])} has zero variance")
    out = np.empty((L, X.shape[1]))
    for lag in range(1, L + 1):
        out[lag - 1] = np.einsum("ij,ij->j", D[:-lag], D[lag:])
    return out / denom


def autocorrelation(series, L: int) -> np.ndarray:
    """Sample autocorrelations at lags 1..L."""
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValueError("series must be one-dimensional")
    return _autocorrelations(x[:, None], L)[:, 0]


def inefficiency_factor(series, L: int = DEFAULT_LAG) -> float:
    return 1.0 + 2.0 * float(np.sum(autocorrelation(series, L)))


def inefficiency_factors(draws, L: int = DEFAULT_LAG) -> np.ndarray:
    """Inefficiency factor of every column of a draws matrix."""
    X = np.asarray(draws, dtype=float)
    if X.ndim != 2:
        raise ValueError("draws must be a 2-D array")
    return 1.0 + 2.0 * _autocorrelations(X, L).sum(axis=0)


def five_number(values) -> tuple[float, float, float, float, float]:
    """(min, q1, median, q3, max) with linearly interpolated quantiles."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("five_number of an empty sequence")
    q = np.quantile(v, [0.0, 0.25, 0.5, 0.75, 1.0], method="linear")
    return tuple(float(a) for a in q)


@dataclass
class SummaryRow:
    name: str
    mean: float
    q05: float
    q95: float


def posterior_summary(trace, names=None) -> list[SummaryRow]:
    """Posterior mean and central 90% interval for each named parameter."""
    names = list(trace.names) if names is None else list(names)
    rows = []
    for name in names:
        col = trace.column(name)
        q05, q95 = np.quantile(col, [0.05, 0.95], method="linear")
        rows.append(SummaryRow(name, float(np.mean(col)), float(q05), float(q95)))
    return rows


@dataclass
class EfficiencyReport:
    lag: int
    factors: dict[str, float] = field(default_factory=dict)
    blocks: dict[str, tuple[float, float, float, float, float]] = field(default_factory=dict)


def efficiency_report(trace, blocks=("tau", "rho", "h"), L: int = DEFAULT_LAG) -> EfficiencyReport:
    """Inefficiency factors of every column plus five-number summaries per block.

    Columns with zero variance (a block that never moved) have no factor and
    are reported as NaN rather than raising, so a stuck block stays visible.
    Chains shorter than ``2 L`` use ``L = n // 2`` (lags up to ``n - 1`` would
    force the autocorrelations to sum to -1/2).
    """
    X = trace.draws
    if X.shape[0] < 2:
        raise ValueError("need at least two draws for autocorrelations")
    L = max(1, min(L, X.shape[0] // 2))
    moving = np.ptp(X, axis=0) > 0
    f = np.full(X.shape[1], np.nan)
    if moving.any():
        f[moving] = inefficiency_factors(X[:, moving], L)
    report = EfficiencyReport(lag=L, factors=dict(zip(trace.names, f.tolist())))
    for b in blocks:
        idx = [i for i, n in enumerate(trace.names) if n.startswith(b + "_") and n[len(b) + 1:].isdigit()]
        vals = f[idx]
        if idx and np.isfinite(vals).any():
            report.blocks[b] = five_number(vals[np.isfinite(vals)])
    return report
