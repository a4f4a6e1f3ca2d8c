"""Gauss collocation tableaux and their stage decomposition.

Nodes, weights and collocation coefficients are constructed in 60-digit
arithmetic (mpmath) and rounded to float64 exactly once.  The matrix of
ratios mu[i][j] = a[i][j]/b[j] is rounded so that

    mu[i][j] + mu[j][i] == 1          (symplecticity)
    mu[j][i] == mu[s-1-i][s-1-j]      (symmetry, 0-based)

hold *bitwise* in float64.  The decomposition splits the shifted
coefficient matrix abar = A - (1/2) 1 b^T into the block form
[[0, D], [-D^T, 0]] through symmetric/antisymmetric averaging and an SVD,
which is what the per-step structured linear solver consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath as mp
import numpy as np

from .linalg import svd_small

MAX_STAGES = 16

_WORK_DPS = 60


class UnsupportedStageCount(Exception):
    pass


class SymplecticRoundingFailure(Exception):
    pass


class DecompositionFailure(Exception):
    pass


@dataclass(frozen=True, eq=False)
class IRKTableau:
    """Gauss collocation coefficients with machine-rounded mu matrix."""

    s: int
    c: np.ndarray
    b: np.ndarray
    a: np.ndarray
    mu: np.ndarray


@dataclass(frozen=True, eq=False)
class StageDecomposition:
    """Precomputed transformation data for the structured stage solver.

    sigma holds the floor(s/2) singular values of the coupling block in
    descending order; for odd s the implicit extra singular value is zero
    and the corresponding diagonal block of the solver degenerates to the
    identity.  alpha = Q1^T B 1, and bq = B Q performs the final
    back-transformation of the solver.
    """

    s: int
    m: int
    sigma: np.ndarray
    alpha: np.ndarray
    q1: np.ndarray
    q2: np.ndarray
    bq: np.ndarray
    abar: np.ndarray
    b: np.ndarray = field(repr=False)


def _legendre_nodes_weights(s: int):
    """Gauss-Legendre nodes/weights on [-1, 1] to working precision."""
    guess, _ = np.polynomial.legendre.leggauss(s)
    nodes = []
    for x0 in guess:
        x = mp.mpf(float(x0))
        for _ in range(80):
            p = mp.legendre(s, x)
            dp = s * (x * p - mp.legendre(s - 1, x)) / (x * x - 1)
            dx = p / dp
            x -= dx
            if abs(dx) < mp.mpf(10) ** (-_WORK_DPS + 4):
                break
        nodes.append(x)
    # enforce exact +/- pairing of the nodes
    sym = []
    for i in range(s):
        xi = (nodes[i] - nodes[s - 1 - i]) / 2
        sym.append(xi)
    if s % 2 == 1:
        sym[s // 2] = mp.mpf(0)
    weights = []
    for x in sym:
        p = mp.legendre(s, x)
        dp = s * (x * p - mp.legendre(s - 1, x)) / (x * x - 1)
        weights.append(2 / ((1 - x * x) * dp * dp))
    return sym, weights


def _lagrange_coeffs(c, j):
    """Coefficients (low to high) of the j-th Lagrange basis on nodes c."""
    poly = [mp.mpf(1)]
    for r, cr in enumerate(c):
        if r == j:
            continue
        # multiply by (x - cr) / (c[j] - cr)
        denom = c[j] - cr
        nxt = [mp.mpf(0)] * (len(poly) + 1)
        for p, coef in enumerate(poly):
            nxt[p] -= coef * cr / denom
            nxt[p + 1] += coef / denom
        poly = nxt
    return poly


def _collocation_matrix(c):
    s = len(c)
    a = [[mp.mpf(0)] * s for _ in range(s)]
    for j in range(s):
        coeffs = _lagrange_coeffs(c, j)
        for i in range(s):
            acc = mp.mpf(0)
            xp = c[i]
            for p, coef in enumerate(coeffs):
                acc += coef * xp / (p + 1)
                xp *= c[i]
            a[i][j] = acc
    return a


def round_mu(mu_exact) -> np.ndarray:
    """Round exact-precision stage ratios to a bitwise-symplectic matrix.

    mu_exact is an s x s nested sequence of high-precision values
    approximating a[i][j]/b[j].  One representative per orbit of the
    symmetry group generated by transposition (value v -> 1 - v) and the
    index reversal (i, j) -> (s-1-j, s-1-i) (value preserved) is rounded
    to the nearest float; the partners are derived in machine arithmetic
    and the two bitwise identities are then verified.
    """
    s = len(mu_exact)
    mu = np.full((s, s), np.nan)
    for i in range(s):
        mu[i, i] = 0.5
    for i in range(s):
        for j in range(s):
            if not math.isnan(mu[i, j]):
                continue
            # Round the orbit member lying in [1/2, 2]: there 1 - v is exact
            # (Sterbenz), so the derived partner satisfies v + (1 - v) == 1
            # bitwise.  One of mu[i][j], mu[j][i] = 1 - mu[i][j] is always
            # >= 1/2; values above 2 fall back to ulp nudging.
            vex = mp.mpf(mu_exact[i][j])
            bi, bj = (i, j) if vex >= mp.mpf(1) / 2 else (j, i)
            v = float(vex if (bi, bj) == (i, j) else 1 - vex)
            v = _adjust_for_exact_complement(v)
            for (p, q), val in _orbit(s, bi, bj, v):
                if math.isnan(mu[p, q]):
                    mu[p, q] = val
                elif mu[p, q] != val:
                    raise SymplecticRoundingFailure(
                        f"inconsistent orbit assignment at ({p}, {q})"
                    )
    _verify_mu(mu)
    return mu


def _orbit(s, i, j, v):
    w = 1.0 - v
    return [
        ((i, j), v),
        ((s - 1 - j, s - 1 - i), v),
        ((j, i), w),
        ((s - 1 - i, s - 1 - j), w),
    ]


def _adjust_for_exact_complement(v: float) -> float:
    """Nudge v by ulps until v + (1 - v) == 1 holds bitwise."""
    up = down = v
    for _ in range(4):
        for cand in (up, down):
            if cand + (1.0 - cand) == 1.0:
                return cand
        up = np.nextafter(up, math.inf)
        down = np.nextafter(down, -math.inf)
    raise SymplecticRoundingFailure(f"cannot round {v!r} to an exact complement")


def _verify_mu(mu: np.ndarray) -> None:
    s = mu.shape[0]
    for i in range(s):
        for j in range(s):
            if mu[i, j] + mu[j, i] != 1.0:
                raise SymplecticRoundingFailure(f"mu[{i}][{j}] + mu[{j}][{i}] != 1")
            if mu[j, i] != mu[s - 1 - i, s - 1 - j]:
                raise SymplecticRoundingFailure(f"mu symmetry broken at ({i}, {j})")


def verify_mu(mu) -> bool:
    """Bitwise symplecticity/symmetry check of a rounded mu matrix."""
    try:
        _verify_mu(np.asarray(mu, dtype=float))
    except SymplecticRoundingFailure:
        return False
    return True


@lru_cache(maxsize=None)
def gauss_tableau(s: int) -> IRKTableau:
    """Gauss collocation tableau with s stages (order 2s)."""
    if not isinstance(s, int) or not 1 <= s <= MAX_STAGES:
        raise UnsupportedStageCount(f"stage count must be in 1..{MAX_STAGES}, got {s}")
    with mp.workdps(_WORK_DPS):
        x, w = _legendre_nodes_weights(s)
        c_mp = [(1 + xi) / 2 for xi in x]
        b_mp = [wi / 2 for wi in w]
        a_mp = _collocation_matrix(c_mp)
        mu_exact = [[a_mp[i][j] / b_mp[j] for j in range(s)] for i in range(s)]
        mu = round_mu(mu_exact)
        b = np.empty(s)
        c = np.empty(s)
        half = (s + 1) // 2
        for i in range(half):
            b[i] = float(b_mp[i])
            b[s - 1 - i] = b[i]
            c[i] = float(c_mp[i])
            c[s - 1 - i] = float(1 - c_mp[i])
        if s % 2 == 1:
            c[s // 2] = 0.5
        a = np.array([[float(a_mp[i][j]) for j in range(s)] for i in range(s)])
    for arr in (c, b, a, mu):
        arr.setflags(write=False)
    return IRKTableau(s=s, c=c, b=b, a=a, mu=mu)


def _pair_transform(s: int):
    """Orthogonal change of basis into symmetric/antisymmetric pair averages.

    Returns (p1, p2) with p1 of shape (s, m) and p2 of shape (s, s - m),
    m = floor((s+1)/2).  Column i of p1 carries sqrt(2)/2 at rows i and
    s-1-i (a lone 1 at the middle row for odd s); columns of p2 carry the
    corresponding differences.
    """
    m = (s + 1) // 2
    r = math.sqrt(2.0) / 2.0
    p1 = np.zeros((s, m))
    p2 = np.zeros((s, s - m))
    for i in range(s // 2):
        p1[i, i] = r
        p1[s - 1 - i, i] = r
        p2[i, i] = -r
        p2[s - 1 - i, i] = r
    if s % 2 == 1:
        p1[s // 2, m - 1] = 1.0
    return p1, p2


@lru_cache(maxsize=None)
def compute_decomposition(t: IRKTableau) -> StageDecomposition:
    """Build the transformation data used by the structured stage solver."""
    s = t.s
    m = (s + 1) // 2
    b = t.b
    abar = (t.mu - 0.5) * b[None, :]
    sb = np.sqrt(b)
    x = (sb[:, None] * abar) / sb[None, :]
    p1, p2 = _pair_transform(s)
    k = p1.T @ x @ p2
    res = svd_small(k)
    sigma = np.asarray(res.singular_values)
    q = np.hstack([p1 @ res.u, p2 @ res.v]) / sb[:, None]
    q1 = q[:, :m]
    q2 = q[:, m:]
    alpha = q1.T @ b
    bq = b[:, None] * q

    dec = StageDecomposition(
        s=s, m=m, sigma=sigma, alpha=alpha, q1=q1, q2=q2, bq=bq, abar=abar, b=b
    )
    _check_decomposition(dec, q)
    for arr in (sigma, alpha, q1, q2, bq, abar):
        arr.setflags(write=False)
    return dec


def _check_decomposition(dec: StageDecomposition, q: np.ndarray) -> None:
    s, m = dec.s, dec.m
    ba = dec.b[:, None] * dec.abar
    if _maxabs(ba + ba.T) > 1e-15:
        raise DecompositionFailure("B*abar is not antisymmetric")
    qinv = q.T * dec.b[None, :]
    if _maxabs(qinv @ q - np.eye(s)) > 1e-13:
        raise DecompositionFailure("Q^{-1} != Q^T B")
    block = np.zeros((s, s))
    for i in range(s - m):
        block[i, m + i] = dec.sigma[i]
        block[m + i, i] = -dec.sigma[i]
    if _maxabs(qinv @ dec.abar @ q - block) > 1e-13:
        raise DecompositionFailure("abar does not block-diagonalize")
    if s > m and _maxabs(dec.b @ dec.q2) > 1e-14:
        raise DecompositionFailure("1^T B Q2 != 0")


def _maxabs(a) -> float:
    a = np.asarray(a)
    return float(np.abs(a).max()) if a.size else 0.0


def stage_setup(s: int):
    """Convenience: cached (tableau, decomposition) pair for s stages."""
    t = gauss_tableau(s)
    return t, compute_decomposition(t)
