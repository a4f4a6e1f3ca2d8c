"""Per-step structured linear solver plus round-off utilities.

The simplified-Newton systems (I_s (x) I_d - h B A B^{-1} (x) J) dL = g
are solved through the block decomposition carried by a
StageDecomposition: only floor(s/2) + 1 LU factorizations of d x d
matrices are performed per step (at build time), none at solve time.

The module also houses the compensated-summation state used to carry the
numerical solution as an unevaluated two-float sum, the float32
projection used by the convergence tests, and the min-of-past-differences
stopping rule for iterative refinement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import DimensionMismatch, LUFactorization, lu_decompose, lu_solve
from .tableau import StageDecomposition


class SingularBlock(Exception):
    """Some I + (h sigma)^2 J^2 block could not be factorized."""


class SingularM(Exception):
    """The bordered coupling matrix M could not be factorized."""


class SolverError(Exception):
    """Residual verification of a stage solve failed."""


@dataclass(frozen=True)
class StageLinearSolver:
    """Factorized per-step state for solve_stage_system.

    block_lus holds LUs of I + (h sigma_i)^2 J^2 for the positive singular
    values; for odd stage counts the last diagonal block is the identity
    (sigma = 0) and needs no factorization.
    """

    h: float
    j: np.ndarray
    jsq: np.ndarray
    block_lus: tuple[LUFactorization, ...]
    m_lu: LUFactorization
    decomp: StageDecomposition
    verify: bool = False
    verify_rtol: float = 1e-9

    @property
    def dim(self) -> int:
        return self.j.shape[0]


def build_solver(
    j, h: float, decomp: StageDecomposition, verify: bool = False
) -> StageLinearSolver:
    """Factorize the blocks and the coupling matrix M for step size h.

    Performs exactly floor(s/2) + 1 LU factorizations of d x d matrices.
    """
    j = np.asarray(j, dtype=float)
    if j.ndim != 2 or j.shape[0] != j.shape[1]:
        raise DimensionMismatch(f"Jacobian must be square, got shape {j.shape}")
    d = j.shape[0]
    eye = np.eye(d)
    jsq = j @ j
    blocks = []
    for sig in decomp.sigma:
        try:
            blocks.append(lu_decompose(eye + (h * sig) ** 2 * jsq))
        except Exception as exc:
            raise SingularBlock(f"block for sigma={sig} is singular") from exc

    # M = I - J (h/2) sum_i alpha_i^2 (I + (h sigma_i)^2 J^2)^{-1}; the
    # block inverses are obtained by solving against identity columns.
    acc = np.zeros((d, d))
    for i in range(decomp.m):
        ai2 = decomp.alpha[i] ** 2
        if i < len(blocks):
            acc += ai2 * lu_solve(blocks[i], eye)
        else:
            acc += ai2 * eye
    m_mat = eye - j @ ((0.5 * h) * acc)
    try:
        m_lu = lu_decompose(m_mat)
    except Exception as exc:
        raise SingularM("coupling matrix M is singular") from exc
    return StageLinearSolver(
        h=h,
        j=j,
        jsq=jsq,
        block_lus=tuple(blocks),
        m_lu=m_lu,
        decomp=decomp,
        verify=verify,
    )


def solve_stage_system(solver: StageLinearSolver, g) -> np.ndarray:
    """Solve (I_s (x) I_d - h B A B^{-1} (x) J) dL = g for stacked g (s, d).

    Uses only the factorizations stored in the solver: transform the
    right-hand side, solve the bordered d-dimensional system for dz,
    back-substitute the diagonal blocks and map back with B Q.
    """
    dec = solver.decomp
    g = np.asarray(g, dtype=float)
    if g.shape != (dec.s, solver.dim):
        raise DimensionMismatch(
            f"expected right-hand side of shape {(dec.s, solver.dim)}, got {g.shape}"
        )
    h, j = solver.h, solver.j
    m = dec.m
    nsig = len(dec.sigma)

    q2t_g = dec.q2.T @ g  # (s - m, d)
    r = dec.q1.T @ g  # (m, d)
    if nsig:
        r[:nsig] += h * (dec.sigma[:, None] * (q2t_g[:nsig] @ j.T))

    acc = np.zeros(solver.dim)
    sblocks = np.empty_like(r)
    for i in range(m):
        sblocks[i] = lu_solve(solver.block_lus[i], r[i]) if i < nsig else r[i]
        acc += dec.alpha[i] * sblocks[i]
    dz = lu_solve(solver.m_lu, h * (j @ acc))

    w = np.empty_like(g)
    for i in range(m):
        rhs = r[i] + (0.5 * dec.alpha[i]) * dz
        w[i] = lu_solve(solver.block_lus[i], rhs) if i < nsig else rhs
    for i in range(dec.s - m):
        w[m + i] = q2t_g[i] - (h * dec.sigma[i]) * (j @ w[i])

    dl = dec.bq @ w
    if solver.verify:
        _verify_residual(solver, dl, g)
    return dl


def _verify_residual(solver: StageLinearSolver, dl: np.ndarray, g: np.ndarray) -> None:
    dec = solver.decomp
    bmu = dec.b[:, None] * gmu(dec)
    res = dl - solver.h * (bmu @ dl) @ solver.j.T - g
    scale = np.abs(g).max() + np.abs(dl).max()
    if scale and np.abs(res).max() > solver.verify_rtol * scale:
        raise SolverError(
            "stage solve residual %.3e exceeds %.1e relative"
            % (np.abs(res).max(), solver.verify_rtol)
        )


def gmu(dec: StageDecomposition) -> np.ndarray:
    """mu = A B^{-1} reconstructed from the decomposition (abar/b + 1/2)."""
    return dec.abar / dec.b[None, :] + 0.5


@dataclass(frozen=True)
class CompensatedState:
    """Numerical solution as the unevaluated sum y_tilde + e."""

    y_tilde: np.ndarray
    e: np.ndarray

    @property
    def value(self) -> np.ndarray:
        return self.y_tilde + self.e

    @classmethod
    def from_vector(cls, y0) -> "CompensatedState":
        y0 = np.asarray(y0, dtype=float)
        y = y0.copy()
        return cls(y_tilde=y, e=y0 - y)


def kahan_step(state: CompensatedState, addends) -> CompensatedState:
    """Accumulate an ordered list of vectors with Kahan compensation.

    Returns (y', e') with y' + e' approximating (y + e) + sum(addends) to
    an error bounded independently of the number of prior steps.
    """
    y = state.y_tilde.copy()
    e = state.e.copy()
    for x in addends:
        big = x + e
        y_new = y + big
        carried = y_new - y
        e = big - carried
        y = y_new
    return CompensatedState(y_tilde=y, e=e)


def fl32_project(v) -> np.ndarray:
    """Round each component to the nearest binary32 value, widened back."""
    return np.asarray(v, dtype=float).astype(np.float32).astype(np.float64)


def continue_iterating(history) -> bool:
    """Decide whether an iterative refinement should keep going.

    history is the list of float32-projected iterates seen so far.  Stops
    (returns False) when the two latest iterates are identical, or when no
    component's latest difference improves on the smallest nonzero
    difference seen before it.
    """
    k = len(history) - 1
    if k < 1:
        return True
    last = np.asarray(history[-1], dtype=float)
    prev = np.asarray(history[-2], dtype=float)
    if np.array_equal(last, prev):
        return False
    if k < 2:
        return True
    diff = np.abs(last - prev)
    past = np.abs(np.diff(np.asarray(history[:-1], dtype=float), axis=0))
    past = np.where(past == 0.0, np.inf, past)
    # a component whose latest difference is zero counts as settled; this
    # guarantees halting on every eventually-periodic projected sequence
    settled = (diff == 0.0) | (past.min(axis=0) <= diff)
    return not bool(np.all(settled))


class ConvergenceMonitor:
    """Incremental, O(1)-per-iterate equivalent of continue_iterating.

    push(z) projects z to float32 resolution (unless project=False),
    appends it to the implicit history and returns whether the iteration
    should continue.
    """

    def __init__(self, project: bool = True):
        self._project = project
        self._prev = None
        self._last_diff = None
        self._min_past = None
        self.count = 0

    def push(self, z) -> bool:
        z = np.asarray(z, dtype=float).ravel()
        if self._project:
            z = fl32_project(z)
        self.count += 1
        prev = self._prev
        self._prev = z
        if prev is None:
            return True
        diff = np.abs(z - prev)
        if not diff.any():
            return False
        if self._last_diff is not None:
            merged = np.where(self._last_diff == 0.0, np.inf, self._last_diff)
            if self._min_past is None:
                self._min_past = merged
            else:
                self._min_past = np.minimum(self._min_past, merged)
            if np.all((diff == 0.0) | (self._min_past <= diff)):
                self._last_diff = diff
                return False
        self._last_diff = diff
        return True
