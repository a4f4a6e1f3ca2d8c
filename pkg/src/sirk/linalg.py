"""Dense kernels for small matrices: pivoted LU and a Jacobi SVD.

Everything here operates on plain float64 numpy arrays.  The LU routines
wrap LAPACK (via scipy) and add the singularity check and the
factorization counter that the stage solver relies on; the SVD is a
one-sided Jacobi implementation that only runs on tiny matrices at
tableau-construction time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


class SingularMatrix(Exception):
    """A pivot fell below the relative singularity threshold."""


class DimensionMismatch(Exception):
    """Operand shapes are incompatible."""


class NoConvergence(Exception):
    """An iterative kernel exceeded its iteration cap."""


# Relative pivot threshold: pivots smaller than this times the row scale
# are treated as zero.
PIVOT_RTOL = 1e-14

# Number of LU factorizations performed since import.  The per-step solver
# is contractually bound to a fixed factorization count, which the tests
# audit through this counter.
lu_count = 0


@dataclass(frozen=True)
class LUFactorization:
    lu: np.ndarray
    pivots: np.ndarray
    sign: int

    @property
    def n(self) -> int:
        return self.lu.shape[0]


def lu_decompose(m) -> LUFactorization:
    """LU factorization with partial pivoting, PA = LU.

    Raises SingularMatrix when some pivot is smaller than PIVOT_RTOL
    times the infinity norm of the matrix rows.
    """
    global lu_count
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    n = a.shape[0]
    row_scale = np.abs(a).sum(axis=1).max() if n else 0.0
    lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    lu_count += 1
    if n and np.abs(np.diag(lu)).min() < PIVOT_RTOL * row_scale:
        raise SingularMatrix("pivot below relative threshold %g" % PIVOT_RTOL)
    sign = 1 if (piv != np.arange(n)).sum() % 2 == 0 else -1
    lu.setflags(write=False)
    piv.setflags(write=False)
    return LUFactorization(lu=lu, pivots=piv, sign=sign)


def lu_solve(f: LUFactorization, rhs):
    """Solve A x = rhs reusing a factorization; rhs may be a vector or matrix."""
    b = np.asarray(rhs, dtype=float)
    if b.shape[0] != f.n:
        raise DimensionMismatch(
            f"rhs has {b.shape[0]} rows, factorization is {f.n}x{f.n}"
        )
    return scipy.linalg.lu_solve((f.lu, f.pivots), b, check_finite=False)


@dataclass(frozen=True)
class SVDResult:
    u: np.ndarray
    v: np.ndarray
    singular_values: np.ndarray

    def reconstruct(self) -> np.ndarray:
        m, n = self.u.shape[0], self.v.shape[0]
        d = np.zeros((m, n))
        k = len(self.singular_values)
        d[:k, :k] = np.diag(self.singular_values)
        return self.u @ d @ self.v.T


def svd_small(k, max_sweeps: int = 60) -> SVDResult:
    """Singular value decomposition of a tiny matrix, K = U diag(s) V^T.

    One-sided Jacobi on the columns; only meant for matrices up to 16x16.
    U and V are full square orthonormal factors.  Column signs are fixed so
    that the first entry of largest magnitude in each U column is positive,
    making the output deterministic.
    """
    a = np.array(k, dtype=float)
    if a.ndim != 2:
        raise DimensionMismatch("expected a 2-d matrix")
    m, n = a.shape
    if m < n:
        t = svd_small(a.T, max_sweeps=max_sweeps)
        return SVDResult(u=t.v, v=t.u, singular_values=t.singular_values)
    if n == 0:
        return SVDResult(u=np.eye(m), v=np.eye(0), singular_values=np.zeros(0))

    v = np.eye(n)
    scale = np.abs(a).max()
    tol = 1e-16 * max(scale, 1e-300)
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                app = a[:, p] @ a[:, p]
                aqq = a[:, q] @ a[:, q]
                apq = a[:, p] @ a[:, q]
                if abs(apq) <= 1e-15 * np.sqrt(app * aqq) + tol * tol:
                    continue
                rotated = True
                tau = (aqq - app) / (2.0 * apq)
                t = np.sign(tau) / (abs(tau) + np.hypot(1.0, tau))
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                gp = c * a[:, p] - s * a[:, q]
                gq = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = gp, gq
                vp = c * v[:, p] - s * v[:, q]
                vq = s * v[:, p] + c * v[:, q]
                v[:, p], v[:, q] = vp, vq
        if not rotated:
            break
    else:
        raise NoConvergence("Jacobi SVD did not converge in %d sweeps" % max_sweeps)

    norms = np.linalg.norm(a, axis=0)
    order = np.argsort(-norms, kind="stable")
    sing = norms[order]
    v = v[:, order]
    a = a[:, order]

    u = np.zeros((m, m))
    cutoff = 1e-300 + 1e-15 * (sing[0] if n else 0.0)
    rank = int(np.sum(sing > cutoff))
    u[:, :rank] = a[:, :rank] / sing[:rank]
    sing = np.where(sing > cutoff, sing, 0.0)
    _complete_basis(u, rank)

    _fix_signs(u, v)
    u.setflags(write=False)
    v.setflags(write=False)
    sing.setflags(write=False)
    return SVDResult(u=u, v=v, singular_values=sing)


def _complete_basis(u: np.ndarray, rank: int) -> None:
    """Fill columns rank..m-1 of u with an orthonormal completion."""
    m = u.shape[0]
    col = rank
    for j in range(m):
        if col == m:
            break
        cand = np.zeros(m)
        cand[j] = 1.0
        cand -= u[:, :col] @ (u[:, :col].T @ cand)
        nrm = np.linalg.norm(cand)
        if nrm > 0.5:  # safely independent of the span so far
            u[:, col] = cand / nrm
            col += 1
    if col != m:
        raise NoConvergence("failed to complete orthonormal basis")


def _fix_signs(u: np.ndarray, v: np.ndarray) -> None:
    """Flip paired U/V columns so each U column leads with a positive entry."""
    m = u.shape[0]
    n = v.shape[0]
    for j in range(m):
        col = u[:, j]
        nonzero = np.flatnonzero(np.abs(col) > 1e-8)  # columns are unit vectors
        lead = nonzero[0] if len(nonzero) else 0
        if col[lead] < 0.0:
            u[:, j] = -col
            if j < n:
                v[:, j] = -v[:, j]
