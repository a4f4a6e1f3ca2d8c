"""One-step and multi-step drivers for the symplectic IRK schemes.

newton_step advances one step through five substeps: a simplified-Newton
loop with a single frozen Jacobian, evaluation of the per-stage
Jacobians, an inner refinement of the last increment against the
stage-Jacobian system, one final inexact Newton iteration that folds the
compensation vector e into the residual, and a compensated update of the
two-float solution state.  fixed_point_step is the plain fixed-point
baseline with the same stopping rule and update.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .stagesolver import (
    CompensatedState,
    ConvergenceMonitor,
    build_solver,
    kahan_step,
    solve_stage_system,
)
from .tableau import IRKTableau, StageDecomposition

DEFAULT_OUTER_CAP = 50
DEFAULT_INNER_CAP = 30
DEFAULT_FIXED_POINT_CAP = 200


class NoConvergence(Exception):
    """An iteration loop exceeded its cap."""

    def __init__(self, message, step_index: Optional[int] = None):
        super().__init__(message)
        self.step_index = step_index


@dataclass(frozen=True)
class ODESystem:
    """Right-hand side, Jacobian and optional first integral of an ODE.

    f(t, y) -> dy/dt.  When vectorized is True, f accepts stacked states
    of shape (..., dim) with broadcastable t and is evaluated batchwise on
    all stages at once.  jacobian may be None, in which case a central
    finite-difference of f is used.
    """

    dim: int
    f: Callable
    jacobian: Optional[Callable] = None
    energy: Optional[Callable] = None
    vectorized: bool = False

    def eval_stages(self, ts, ys) -> np.ndarray:
        if self.vectorized:
            return np.asarray(self.f(ts, ys), dtype=float)
        return np.array([self.f(t, y) for t, y in zip(ts, ys)], dtype=float)

    def eval_jacobian(self, t, y) -> np.ndarray:
        if self.jacobian is not None:
            return np.asarray(self.jacobian(t, y), dtype=float)
        return fd_jacobian(self, t, y)


def fd_jacobian(sys: ODESystem, t, y) -> np.ndarray:
    """Central finite-difference Jacobian of f with per-component steps."""
    y = np.asarray(y, dtype=float)
    steps = np.sqrt(np.finfo(float).eps) * (1.0 + np.abs(y))
    if sys.vectorized:
        pts = np.repeat(y[None, :], 2 * sys.dim, axis=0)
        for j in range(sys.dim):
            pts[2 * j, j] += steps[j]
            pts[2 * j + 1, j] -= steps[j]
        vals = np.asarray(sys.f(t, pts), dtype=float)
        return np.stack(
            [(vals[2 * j] - vals[2 * j + 1]) / (2 * steps[j]) for j in range(sys.dim)],
            axis=1,
        )
    cols = []
    for j in range(sys.dim):
        yp = y.copy()
        ym = y.copy()
        yp[j] += steps[j]
        ym[j] -= steps[j]
        cols.append((np.asarray(sys.f(t, yp)) - np.asarray(sys.f(t, ym))) / (2 * steps[j]))
    return np.stack(cols, axis=1)


@dataclass(frozen=True)
class StepStats:
    iterations: int
    linear_solves: int
    inner_iterations: tuple[int, int] = (0, 0)


@dataclass
class TrajectoryResult:
    sample_times: list[float] = field(default_factory=list)
    samples: list[CompensatedState] = field(default_factory=list)
    energy_rel_errors: list[float] = field(default_factory=list)
    signed_energy_errors: list[float] = field(default_factory=list)
    cum_mean_iterations: list[float] = field(default_factory=list)
    cum_mean_linear_solves: list[float] = field(default_factory=list)
    mean_iterations: float = 0.0
    mean_linear_solves: float = 0.0
    steps_completed: int = 0
    failure: Optional[str] = None


def newton_step(
    sys: ODESystem,
    tab: IRKTableau,
    decomp: StageDecomposition,
    state: CompensatedState,
    t: float,
    h: float,
    outer_cap: int = DEFAULT_OUTER_CAP,
    inner_cap: int = DEFAULT_INNER_CAP,
    verify: bool = False,
):
    """Advance one step with the simplified/inexact Newton scheme."""
    y, e = state.y_tilde, state.e
    s = tab.s
    hb = h * tab.b
    ts = t + tab.c * h

    jac = sys.eval_jacobian(t + 0.5 * h, y)
    solver = build_solver(jac, h, decomp, verify=verify)
    solves = 0

    # substep 1: simplified Newton from L = 0 with the frozen Jacobian
    ell = np.zeros((s, sys.dim))
    mon = ConvergenceMonitor()
    mon.push(ell)
    k = 0
    g = dl = None
    while True:
        if k >= outer_cap:
            raise NoConvergence("simplified Newton loop exceeded %d iterations" % outer_cap)
        k += 1
        yk = y + tab.mu @ ell
        fk = sys.eval_stages(ts, yk)
        g = hb[:, None] * fk - ell
        dl = solve_stage_system(solver, g)
        solves += 1
        ell = ell + dl
        if not mon.push(ell):
            break

    # substep 2: stage Jacobians at the converged stage values
    yk = y + tab.mu @ ell
    jstack = np.stack([sys.eval_jacobian(ts[i], yk[i]) for i in range(s)])

    # substep 3: refine the last increment against the stage-Jacobian system
    base = ell - dl
    dl, n3, used = _inner_iteration(solver, tab, hb, jstack, g, dl, inner_cap)
    solves += used
    ell = base + dl

    # substep 4: final inexact Newton iteration folding in the compensation e
    yk = y + tab.mu @ ell
    fk = sys.eval_stages(ts, yk)
    g = (hb[:, None] * fk - ell) + hb[:, None] * np.einsum("sij,j->si", jstack, e)
    dl = solve_stage_system(solver, g)
    solves += 1
    dl, n4, used = _inner_iteration(solver, tab, hb, jstack, g, dl, inner_cap)
    solves += used

    # substep 5: compensated update of the two-float state
    delta = e + dl.sum(axis=0)
    new_state = kahan_step(CompensatedState(y, delta), list(ell))
    return new_state, StepStats(iterations=k, linear_solves=solves, inner_iterations=(n3, n4))


def _inner_iteration(solver, tab, hb, jstack, g, dl0, cap):
    """Iteratively refine dl against the stage-Jacobian linear system."""
    mon = ConvergenceMonitor()
    dl = dl0
    solves = 0
    ell = 0
    while mon.push(dl):
        if ell >= cap:
            raise NoConvergence("inner iteration exceeded %d refinements" % cap)
        ell += 1
        x = tab.mu @ dl
        resid = g - dl + hb[:, None] * np.einsum("sij,sj->si", jstack, x)
        dl = dl + solve_stage_system(solver, resid)
        solves += 1
    return dl, ell, solves


def fixed_point_step(
    sys: ODESystem,
    tab: IRKTableau,
    state: CompensatedState,
    t: float,
    h: float,
    cap: int = DEFAULT_FIXED_POINT_CAP,
):
    """Advance one step iterating L_i <- h b_i f(t + c_i h, y + sum mu L)."""
    y, e = state.y_tilde, state.e
    s = tab.s
    hb = h * tab.b
    ts = t + tab.c * h

    ell = np.zeros((s, sys.dim))
    prev = ell
    # fixed-point iterates are compared at full double resolution; the
    # min-of-past-differences rule halts the loop at the round-off floor
    mon = ConvergenceMonitor(project=False)
    mon.push(ell)
    k = 0
    while True:
        if k >= cap:
            raise NoConvergence("fixed-point iteration exceeded %d iterations" % cap)
        k += 1
        yk = y + tab.mu @ ell
        fk = sys.eval_stages(ts, yk)
        prev = ell
        ell = hb[:, None] * fk
        if not mon.push(ell):
            break

    delta = e + (ell - prev).sum(axis=0)
    new_state = kahan_step(CompensatedState(y, delta), list(prev))
    return new_state, StepStats(iterations=k, linear_solves=0)


def integrate(
    sys: ODESystem,
    method: str,
    tab: IRKTableau,
    decomp: Optional[StageDecomposition],
    y0,
    t0: float,
    h: float,
    n_steps: int,
    sampling: int = 1,
    verify: bool = False,
) -> TrajectoryResult:
    """Integrate n_steps uniform steps, sampling every `sampling` steps.

    The time is advanced as t_n = t0 + n*h from an integer counter.  A
    NoConvergence inside a step is recorded in the result (with the step
    index) instead of propagating, so ensemble drivers can carry on.
    """
    if method not in ("newton", "fixed_point"):
        raise ValueError(f"unknown method {method!r}")
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if sampling < 1:
        raise ValueError("sampling must be >= 1")
    if method == "newton" and decomp is None:
        raise ValueError("newton method requires a stage decomposition")

    state = CompensatedState.from_vector(y0)
    res = TrajectoryResult()
    e0 = sys.energy(state.value) if sys.energy is not None else None
    _record(res, t0, state, e0, sys, 0, 0.0, 0.0)

    tot_iters = 0
    tot_solves = 0
    for n in range(1, n_steps + 1):
        t = t0 + (n - 1) * h
        try:
            if method == "newton":
                state, st = newton_step(sys, tab, decomp, state, t, h, verify=verify)
            else:
                state, st = fixed_point_step(sys, tab, state, t, h)
        except NoConvergence as exc:
            res.failure = f"step {n}: {exc}"
            break
        tot_iters += st.iterations
        tot_solves += st.linear_solves
        res.steps_completed = n
        if n % sampling == 0:
            _record(
                res, t0 + n * h, state, e0, sys, n, tot_iters / n, tot_solves / n
            )
    done = max(res.steps_completed, 1)
    res.mean_iterations = tot_iters / done
    res.mean_linear_solves = tot_solves / done
    return res


def _record(res, t, state, e0, sys, n, mean_it, mean_solves):
    res.sample_times.append(t)
    res.samples.append(state)
    if e0 is not None:
        err = (sys.energy(state.value) - e0) / e0
        res.signed_energy_errors.append(err)
        res.energy_rel_errors.append(abs(err))
    res.cum_mean_iterations.append(mean_it)
    res.cum_mean_linear_solves.append(mean_solves)
