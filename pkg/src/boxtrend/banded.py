"""Symmetric banded matrices stored by diagonals.

Every precision matrix in the models here is tridiagonal, so storage and
factorization are O(T). Storage follows the LAPACK lower band layout:
``ab[k, j]`` holds entry ``(j + k, j)``; the trailing ``k`` slots of row ``k``
are padding and always zero.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import lapack


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Cholesky pivot was non-positive at ``index`` (0-based)."""

    def __init__(self, index: int):
        super().__init__(f"matrix is not positive definite (pivot {index} <= 0)")
        self.index = index


class BandedSymMatrix:
    """Symmetric matrix of dimension ``dim`` with ``bandwidth`` sub-diagonals."""

    __slots__ = ("ab",)

    def __init__(self, diagonals):
        if isinstance(diagonals, np.ndarray) and diagonals.ndim == 2:
            ab = np.array(diagonals, dtype=float)
        else:
            rows = [np.atleast_1d(np.asarray(d, dtype=float)) for d in diagonals]
            if not rows:
                raise ValueError("need at least the main diagonal")
            n = rows[0].shape[0]
            ab = np.zeros((len(rows), n))
            for k, row in enumerate(rows):
                if row.shape != (n - k,):
                    raise ValueError(f"diagonal {k} must have {n - k} entries, got {row.shape[0]}")
                ab[k, : n - k] = row
        n = ab.shape[1]
        if n < 1:
            raise ValueError("dimension must be >= 1")
        if ab.shape[0] > n:
            raise ValueError("bandwidth must be smaller than the dimension")
        for k in range(1, ab.shape[0]):
            ab[k, n - k :] = 0.0
        ab.setflags(write=False)
        self.ab = ab

    @property
    def dim(self) -> int:
        return self.ab.shape[1]

    @property
    def bandwidth(self) -> int:
        return self.ab.shape[0] - 1

    @property
    def diagonals(self) -> list[np.ndarray]:
        n = self.dim
        return [self.ab[k, : n - k] for k in range(self.bandwidth + 1)]

    @classmethod
    def from_dense(cls, a, bandwidth: int) -> "BandedSymMatrix":
        a = np.asarray(a, dtype=float)
        n = a.shape[0]
        return cls([np.diagonal(a, -k).copy() for k in range(min(bandwidth, n - 1) + 1)])

    @classmethod
    def identity(cls, n: int) -> "BandedSymMatrix":
        return cls([np.ones(n)])

    def to_dense(self) -> np.ndarray:
        n = self.dim
        out = np.zeros((n, n))
        for k, d in enumerate(self.diagonals):
            idx = np.arange(n - k)
            out[idx + k, idx] = d
            out[idx, idx + k] = d
        return out

    def __getitem__(self, rc) -> float:
        r, c = rc
        if r < c:
            r, c = c, r
        k = r - c
        return float(self.ab[k, c]) if k <= self.bandwidth else 0.0

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        ab = self.ab
        n = ab.shape[1]
        if x.shape != (n,):
            raise ValueError(f"vector length {x.shape} does not match dimension {n}")
        y = ab[0] * x
        for k in range(1, ab.shape[0]):
            d = ab[k, : n - k]
            y[k:] += d * x[: n - k]
            y[: n - k] += d * x[k:]
        return y

    def __add__(self, other: "BandedSymMatrix") -> "BandedSymMatrix":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        p = max(self.bandwidth, other.bandwidth)
        ab = np.zeros((p + 1, self.dim))
        ab[: self.bandwidth + 1] += self.ab
        ab[: other.bandwidth + 1] += other.ab
        return BandedSymMatrix(ab)

    def scaled(self, factor: float) -> "BandedSymMatrix":
        return BandedSymMatrix(self.ab * factor)

    def add_diagonal(self, d) -> "BandedSymMatrix":
        ab = self.ab.copy()
        ab[0] += d
        return BandedSymMatrix(ab)

    def principal(self, idx) -> "BandedSymMatrix":
        """Principal submatrix on the sorted index set ``idx``; stays banded."""
        idx = np.asarray(idx, dtype=int)
        m = idx.shape[0]
        p = min(self.bandwidth, max(m - 1, 0))
        ab = np.zeros((p + 1, m))
        ab[0] = self.ab[0, idx]
        for k in range(1, p + 1):
            gap = idx[k:] - idx[: m - k]
            ok = gap <= self.bandwidth
            vals = np.zeros(m - k)
            vals[ok] = self.ab[gap[ok], idx[: m - k][ok]]
            ab[k, : m - k] = vals
        return BandedSymMatrix(ab)

    def __repr__(self) -> str:
        return f"BandedSymMatrix(dim={self.dim}, bandwidth={self.bandwidth})"


class BandCholesky:
    """Lower band factor ``L`` with ``L @ L.T == K``."""

    __slots__ = ("ab",)

    def __init__(self, ab: np.ndarray):
        ab.setflags(write=False)
        self.ab = ab

    @property
    def dim(self) -> int:
        return self.ab.shape[1]

    @property
    def bandwidth(self) -> int:
        return self.ab.shape[0] - 1

    @property
    def diagonals(self) -> list[np.ndarray]:
        n = self.dim
        return [self.ab[k, : n - k] for k in range(self.bandwidth + 1)]

    def log_det(self) -> float:
        """Log-determinant of ``K``."""
        return 2.0 * float(np.sum(np.log(self.ab[0])))

    def to_dense(self) -> np.ndarray:
        n = self.dim
        out = np.zeros((n, n))
        for k, d in enumerate(self.diagonals):
            idx = np.arange(n - k)
            out[idx + k, idx] = d
        return out

    def solve_lt(self, z) -> np.ndarray:
        """Solve ``L.T x = z``."""
        x, info = lapack.dtbtrs(self.ab, np.asarray(z, dtype=float), uplo="L", trans="T")
        return x

    def mul_lt(self, x) -> np.ndarray:
        """Return ``L.T @ x``."""
        x = np.asarray(x, dtype=float)
        n = self.dim
        y = self.ab[0] * x
        for k in range(1, self.bandwidth + 1):
            y[: n - k] += self.ab[k, : n - k] * x[k:]
        return y


def first_diff_gram(T: int) -> BandedSymMatrix:
    """``H'H`` for the T x T first-difference matrix ``H`` (1 on the diagonal, -1 below)."""
    if T < 1:
        raise ValueError(f"invalid dimension T={T}")
    main = np.full(T, 2.0)
    main[-1] = 1.0
    if T == 1:
        return BandedSymMatrix([main])
    return BandedSymMatrix([main, np.full(T - 1, -1.0)])


def band_cholesky(K: BandedSymMatrix) -> BandCholesky:
    c, info = lapack.dpbtrf(K.ab, lower=1)
    if info > 0:
        raise NotPositiveDefiniteError(info - 1)
    if info < 0:
        raise ValueError(f"dpbtrf: illegal argument {-info}")
    n = c.shape[1]
    for k in range(1, c.shape[0]):
        c[k, n - k :] = 0.0
    return BandCholesky(c)


def solve_spd(F: BandCholesky, b) -> np.ndarray:
    """Solve ``K x = b`` given the band Cholesky factor of ``K``."""
    b = np.asarray(b, dtype=float)
    if b.shape[0] != F.dim:
        raise ValueError(f"right-hand side has length {b.shape[0]}, expected {F.dim}")
    x, info = lapack.dpbtrs(F.ab, b, lower=1)
    return x


def quad_form(K: BandedSymMatrix, x, m=None) -> float:
    """``(x - m)' K (x - m)``."""
    r = np.asarray(x, dtype=float)
    if m is not None:
        m = np.asarray(m, dtype=float)
        if m.shape != r.shape:
            raise ValueError("dimension mismatch between x and m")
        r = r - m
    return float(r @ K.matvec(r))
