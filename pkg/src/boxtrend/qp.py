"""Box-constrained quadratic programs with banded SPD Hessians.

Solves

    max  -1/2 (x - m)' C (x - m)   s.t.  lo <= x <= hi,

equivalently ``min 1/2 x'Cx - (Cm)'x`` on the box, i.e. finds the feasible
point closest to ``m`` in the ``C``-norm. The solver is a projected Newton
method: the Newton system on the free coordinates is a principal submatrix
of ``C`` and therefore still banded, so each step is O(T).
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

import numpy as np

from .banded import BandedSymMatrix, band_cholesky, solve_spd

MAX_NEWTON_ITER = 50
KKT_TOL = 1e-8
ARMIJO = 1e-4
MAX_HALVINGS = 60


@dataclass(frozen=True)
class BoxQp:
    C: BandedSymMatrix
    m: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        T = self.C.dim
        m = np.asarray(self.m, dtype=float)
        lo = np.broadcast_to(np.asarray(self.lo, dtype=float), (T,)).copy()
        hi = np.broadcast_to(np.asarray(self.hi, dtype=float), (T,)).copy()
        if m.shape != (T,):
            raise ValueError(f"m has shape {m.shape}, expected ({T},)")
        bad = np.flatnonzero(~(lo < hi))
        if bad.size:
            raise ValueError(f"degenerate or inverted box at indices {bad.tolist()}")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.C.dim

    def objective(self, x) -> float:
        """Half the squared C-distance to ``m``; the QP minimizes this."""
        r = np.asarray(x, dtype=float) - self.m
        return 0.5 * float(r @ self.C.matvec(r))

    def gradient(self, x) -> np.ndarray:
        return self.C.matvec(np.asarray(x, dtype=float) - self.m)

    def scale(self) -> float:
        return 1.0 + float(np.max(np.abs(self.C.matvec(self.m))))


@dataclass
class QpResult:
    tau_star: np.ndarray
    active_lower: np.ndarray
    active_upper: np.ndarray
    kkt_residual: float
    iterations: int
    elapsed: float


class InfeasiblePointError(ValueError):
    def __init__(self, indices):
        super().__init__(f"point violates the box at indices {list(indices)}")
        self.indices = list(indices)


class QpConvergenceError(RuntimeError):
    """Iteration cap hit; ``best`` holds the best feasible iterate as a QpResult."""

    def __init__(self, best: QpResult):
        super().__init__(f"box QP did not converge in {best.iterations} iterations "
                         f"(kkt residual {best.kkt_residual:.3g})")
        self.best = best


def _violations(problem: BoxQp, x: np.ndarray, g: np.ndarray) -> np.ndarray:
    at_lo = x == problem.lo
    at_hi = x == problem.hi
    v = np.abs(g)
    v = np.where(at_lo, np.maximum(0.0, -g), v)
    v = np.where(at_hi, np.maximum(0.0, g), v)
    return v


def kkt_residual(problem: BoxQp, tau) -> float:
    """Largest violation of the first-order optimality conditions at ``tau``."""
    x = np.asarray(tau, dtype=float)
    bad = np.flatnonzero((x < problem.lo) | (x > problem.hi))
    if bad.size:
        raise InfeasiblePointError(bad)
    return float(np.max(_violations(problem, x, problem.gradient(x)), initial=0.0))


def _result(problem, x, iterations, t0) -> QpResult:
    g = problem.gradient(x)
    active_lower = np.flatnonzero((x == problem.lo) & (g >= 0))
    active_upper = np.flatnonzero((x == problem.hi) & (g <= 0))
    return QpResult(
        tau_star=x,
        active_lower=active_lower,
        active_upper=active_upper,
        kkt_residual=float(np.max(_violations(problem, x, g), initial=0.0)),
        iterations=iterations,
        elapsed=time.perf_counter() - t0,
    )


def solve_box_qp(problem: BoxQp, max_iter: int = MAX_NEWTON_ITER) -> QpResult:
    """Projected Newton with an Armijo search along the projection arc.

    ``C`` is factorized once up front so a non-SPD Hessian fails loudly even
    when the answer would not need it.
    """
    t0 = time.perf_counter()
    band_cholesky(problem.C)
    lo, hi = problem.lo, problem.hi
    tol = KKT_TOL * problem.scale()
    x = np.clip(problem.m, lo, hi)
    f = problem.objective(x)
    for it in range(max_iter + 1):
        g = problem.gradient(x)
        # bound coordinates whose gradient pushes outward stay fixed this step
        fixed = ((x == lo) & (g >= 0)) | ((x == hi) & (g <= 0))
        free = np.flatnonzero(~fixed)
        viol = _violations(problem, x, g)
        if np.max(viol, initial=0.0) <= tol:
            # polish: one exact solve on the identified free set
            if free.size:
                x_new = x.copy()
                F = band_cholesky(problem.C.principal(free))
                x_new[free] = np.clip(x[free] - solve_spd(F, g[free]), lo[free], hi[free])
                if problem.objective(x_new) <= f:
                    gn = problem.gradient(x_new)
                    if np.max(_violations(problem, x_new, gn), initial=0.0) <= np.max(viol, initial=0.0):
                        x = x_new
            return _result(problem, x, it, t0)
        if it == max_iter:
            break
        d = np.zeros_like(x)
        if free.size:
            F = band_cholesky(problem.C.principal(free))
            d[free] = -solve_spd(F, g[free])
        # projected Armijo search along the bent path clip(x + a d)
        a = 1.0
        for _ in range(MAX_HALVINGS):
            x_new = np.clip(x + a * d, lo, hi)
            f_new = problem.objective(x_new)
            if f_new <= f + ARMIJO * float(g @ (x_new - x)):
                break
            a *= 0.5
        else:
            break
        if np.array_equal(x_new, x):
            break
        x, f = x_new, f_new
    raise QpConvergenceError(_result(problem, x, it, t0))


def enumeration_oracle(problem: BoxQp) -> np.ndarray:
    """Brute-force minimizer: try every lower/upper/free assignment (3^T cases).

    Works on the dense matrix and is independent of :func:`solve_box_qp`.
    """
    T = problem.dim
    if T > 12:
        raise ValueError(f"enumeration oracle refuses T={T} > 12")
    C = problem.C.to_dense()
    m, lo, hi = problem.m, problem.lo, problem.hi
    best, best_val = None, np.inf
    scale = problem.scale()
    for free_mask in itertools.product((True, False), repeat=T):
        free = np.array(free_mask)
        F = np.flatnonzero(free)
        A = np.flatnonzero(~free)
        # all bound assignments of the fixed coordinates at once
        choices = []
        for i in A:
            opts = [v for v in (lo[i], hi[i]) if np.isfinite(v)]
            if not opts:
                break
            choices.append(opts)
        else:
            if A.size:
                xa = np.array(list(itertools.product(*choices)))  # (n_assign, |A|)
            else:
                xa = np.zeros((1, 0))
            X = np.empty((xa.shape[0], T))
            X[:, A] = xa
            if F.size:
                rhs = C[np.ix_(F, F)] @ m[F] - (C[np.ix_(F, A)] @ (xa - m[A]).T).T
                X[:, F] = np.linalg.solve(C[np.ix_(F, F)], rhs.T).T
            G = (X - m) @ C
            feas = np.all((X >= lo - 1e-12) & (X <= hi + 1e-12), axis=1)
            ok_lo = np.all(np.where(X[:, A] == lo[A], G[:, A] >= -1e-9 * scale, True), axis=1)
            ok_hi = np.all(np.where(X[:, A] == hi[A], G[:, A] <= 1e-9 * scale, True), axis=1)
            for j in np.flatnonzero(feas & ok_lo & ok_hi):
                r = X[j] - m
                val = 0.5 * r @ C @ r
                if val < best_val:
                    best, best_val = np.clip(X[j], lo, hi), val
    if best is None:
        raise RuntimeError("enumeration found no KKT point")
    return best
