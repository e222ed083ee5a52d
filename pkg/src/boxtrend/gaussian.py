"""Gaussian approximations to latent-state conditionals.

Precision-based throughout: a Gaussian is carried as (mean, banded precision)
and drawn as ``mean + L'^{-1} z`` from the band Cholesky factor, so a draw of
a length-T state costs O(T).
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .banded import (
    BandCholesky,
    BandedSymMatrix,
    NotPositiveDefiniteError,
    band_cholesky,
    first_diff_gram,
    quad_form,
    solve_spd,
)
from .distributions import LOG_SQRT_2PI, RngStream

MAX_HALVINGS = 30
VALUE_RTOL = 1e-13


class GaussianApprox:
    """N(mean, precision^{-1}) with the factorization cached."""

    __slots__ = ("mean", "precision", "chol", "log_det_precision")

    def __init__(self, mean, precision: BandedSymMatrix, chol: BandCholesky | None = None):
        mean = np.asarray(mean, dtype=float)
        if mean.shape != (precision.dim,):
            raise ValueError("mean and precision dimensions disagree")
        self.mean = mean
        self.precision = precision
        self.chol = band_cholesky(precision) if chol is None else chol
        self.log_det_precision = self.chol.log_det()

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def sample_mvn_precision(approx: GaussianApprox, rng: RngStream) -> np.ndarray:
    z = rng.standard_normal(approx.dim)
    return approx.mean + approx.chol.solve_lt(z)


def log_density_mvn(approx: GaussianApprox, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != approx.mean.shape:
        raise ValueError("dimension mismatch")
    return (0.5 * approx.log_det_precision - approx.dim * LOG_SQRT_2PI
            - 0.5 * quad_form(approx.precision, x, approx.mean))


class SmoothTarget:
    """Log-target (up to a constant) with analytic derivatives and a box.

    ``kernel``, when set, is a log-concave stand-in used to build proposals;
    the exact ``value`` is what acceptance steps evaluate.
    """

    lo: np.ndarray
    hi: np.ndarray
    kernel: Optional["SmoothTarget"] = None

    def value(self, x) -> float:
        raise NotImplementedError

    def grad(self, x) -> np.ndarray:
        raise NotImplementedError

    def neg_hess(self, x) -> BandedSymMatrix:
        raise NotImplementedError

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    def in_box(self, x) -> bool:
        return bool((x >= self.lo).all() and (x <= self.hi).all())

    @property
    def unbounded(self) -> bool:
        return bool(np.all(np.isneginf(self.lo)) and np.all(np.isposinf(self.hi)))

    def restrict(self, start: int, stop: int, x) -> "SmoothTarget":
        """Conditional of coordinates ``start:stop`` with the others held at ``x``."""
        base = np.array(x, dtype=float)
        idx = np.arange(start, stop)

        def embed(xb):
            full = base.copy()
            full[start:stop] = xb
            return full

        out = CallbackTarget(
            value=lambda xb: self.value(embed(xb)),
            grad=lambda xb: self.grad(embed(xb))[start:stop],
            neg_hess=lambda xb: self.neg_hess(embed(xb)).principal(idx),
            lo=self.lo[start:stop],
            hi=self.hi[start:stop],
        )
        if self.kernel is not None:
            out.kernel = self.kernel.restrict(start, stop, x)
        return out


def _box(lo, hi, T):
    out = []
    for b in (lo, hi):
        b = np.asarray(b, dtype=float)
        out.append(b if b.shape == (T,) else np.full(T, float(b)))
    return out[0], out[1]


class CallbackTarget(SmoothTarget):
    def __init__(self, value: Callable, grad: Callable, neg_hess: Callable, lo, hi, kernel=None):
        self._value, self._grad, self._neg_hess = value, grad, neg_hess
        lo, hi = np.broadcast_arrays(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
        self.lo, self.hi = lo.copy(), hi.copy()
        self.kernel = kernel

    def value(self, x):
        return self._value(x)

    def grad(self, x):
        return self._grad(x)

    def neg_hess(self, x):
        return self._neg_hess(x)


class Separable:
    """Sum of per-coordinate terms; ``terms`` gives value, first and second derivatives."""

    def value(self, x) -> float:
        raise NotImplementedError

    def terms(self, x):
        raise NotImplementedError

    def sliced(self, start: int, stop: int) -> "Separable":
        raise NotImplementedError


class BandedTarget(SmoothTarget):
    """``-1/2 x'Qx + lin'x + sep(x)`` with banded ``Q``.

    Restriction to a contiguous block stays in this form and costs O(block).
    Without ``sep`` the target is exactly Gaussian.
    """

    def __init__(self, quad: BandedSymMatrix, lin, sep: Separable | None = None,
                 lo=-np.inf, hi=np.inf, kernel=None):
        self.quad = quad
        self.lin = np.asarray(lin, dtype=float)
        self.sep = sep
        self.lo, self.hi = _box(lo, hi, quad.dim)
        self.kernel = kernel

    @property
    def is_gaussian(self) -> bool:
        return self.sep is None

    def value(self, x):
        v = float(x @ (self.lin - 0.5 * self.quad.matvec(x)))
        if self.sep is not None:
            v += self.sep.value(x)
        return v

    def grad(self, x):
        g = self.lin - self.quad.matvec(x)
        if self.sep is not None:
            g = g + self.sep.terms(x)[1]
        return g

    def neg_hess(self, x):
        if self.sep is None:
            return self.quad
        return self.quad.add_diagonal(-self.sep.terms(x)[2])

    def gaussian(self) -> "GaussianApprox":
        F = band_cholesky(self.quad)
        return GaussianApprox(solve_spd(F, self.lin), self.quad, F)

    def restrict(self, start: int, stop: int, x) -> "BandedTarget":
        x = np.asarray(x, dtype=float)
        Q = self.quad
        n, p = stop - start, Q.bandwidth
        ab = Q.ab[: min(p, max(n - 1, 0)) + 1, start:stop].copy()
        # coupling to coordinates outside the block (within the bandwidth)
        lin = self.lin[start:stop].copy()
        for k in range(1, p + 1):
            # rows below the block: entries (start+j+k, start+j) with start+j+k >= stop
            lo_j = max(stop - k - start, 0)
            for j in range(lo_j, n):
                r = start + j + k
                if r < Q.dim:
                    lin[j] -= Q.ab[k, start + j] * x[r]
            # columns before the block: entries (start+j, start+j-k) with start+j-k < start
            for j in range(0, min(k, n)):
                c = start + j - k
                if c >= 0:
                    lin[j] -= Q.ab[k, c] * x[c]
        sep = None if self.sep is None else self.sep.sliced(start, stop)
        kernel = None if self.kernel is None else self.kernel.restrict(start, stop, x)
        return BandedTarget(BandedSymMatrix(ab), lin, sep, self.lo[start:stop], self.hi[start:stop], kernel)


def quadratic_target(approx: "GaussianApprox", lo=-np.inf, hi=np.inf) -> BandedTarget:
    """Exactly Gaussian target ``-1/2 (x-m)'K(x-m)`` (up to a constant) restricted to a box."""
    K = approx.precision
    return BandedTarget(K, K.matvec(approx.mean), None, lo, hi)


class NewtonError(RuntimeError):
    """Newton iteration failed; ``best`` is the best iterate reached."""

    def __init__(self, msg: str, best: np.ndarray):
        super().__init__(msg)
        self.best = best


def newton_mode(target: SmoothTarget, init, max_iter: int = 100, tol: float = 1e-8) -> GaussianApprox:
    """Unconstrained Newton ascent to the mode with step-halving.

    Raises NewtonError if the negative Hessian stops being positive definite
    or ``max_iter`` is exceeded.
    """
    x = np.array(init, dtype=float)
    f = target.value(x)
    for _ in range(max_iter + 1):
        g = target.grad(x)
        H = target.neg_hess(x)
        try:
            F = band_cholesky(H)
        except NotPositiveDefiniteError as exc:
            raise NewtonError(f"negative Hessian not positive definite at index {exc.index}", x) from exc
        if np.max(np.abs(g)) <= tol:
            return GaussianApprox(x, H, F)
        step = solve_spd(F, g)
        # a decrease below rounding level of f counts as no decrease
        slack = VALUE_RTOL * (1.0 + abs(f))
        a = 1.0
        for _ in range(MAX_HALVINGS + 1):
            x_new = x + a * step
            f_new = target.value(x_new)
            if f_new >= f - slack:
                break
            a *= 0.5
        else:
            raise NewtonError("line search failed to increase the log-target", x)
        x, f = x_new, f_new
    raise NewtonError(f"Newton did not converge in {max_iter} iterations", x)


def ucar_trend_system(y, tau0: float, rho: float, sigma2: float, omega2: float) -> GaussianApprox:
    """Conditional of the trend in the UC model with AR(1) measurement error.

    Precision ``H'H/omega2 + Hr'Hr/sigma2`` where ``Hr`` is the first-difference
    matrix with ``-rho`` below the diagonal (``rho = 0`` gives the white-noise
    model); mean solves ``K m = H'd/omega2 + Hr'Hr y/sigma2`` with
    ``d = (tau0, 0, ..., 0)``.
    """
    y = np.asarray(y, dtype=float)
    T = y.shape[0]
    if T < 1:
        raise ValueError("need at least one observation")
    if not abs(rho) < 1:
        raise ValueError(f"|rho| must be < 1, got {rho}")
    if not (sigma2 > 0 and omega2 > 0):
        raise ValueError("variances must be positive")
    HrHr = ar1_gram(T, rho)
    K = first_diff_gram(T).scaled(1.0 / omega2) + HrHr.scaled(1.0 / sigma2)
    rhs = HrHr.matvec(y) / sigma2
    rhs[0] += tau0 / omega2
    F = band_cholesky(K)
    return GaussianApprox(solve_spd(F, rhs), K, F)


def ar1_gram(T: int, rho: float) -> BandedSymMatrix:
    """``Hr'Hr`` for ``Hr`` with 1 on the diagonal and ``-rho`` below it."""
    main = np.full(T, 1.0 + rho * rho)
    main[-1] = 1.0
    if T == 1:
        return BandedSymMatrix([main])
    return BandedSymMatrix([main, np.full(T - 1, -rho)])


