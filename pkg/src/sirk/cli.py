"""Command-line front end: single runs, perturbed ensembles, tableau dumps.

CSV is the output contract (schema versioned in the `# sirk-csv v1`
header line, floats printed with 17 significant digits); a one-line
summary goes to standard output.  Ensemble runs derive the perturbation
of trajectory j from a counter-based generator keyed on (seed, j), so
output is byte-deterministic for a fixed configuration.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .integrator import integrate
from .problems import (
    DoublePendulumParams,
    double_pendulum,
    harmonic_oscillator,
    initial_state,
)
from .tableau import (
    UnsupportedStageCount,
    compute_decomposition,
    gauss_tableau,
    verify_mu,
)

CSV_HEADER = "# sirk-csv v1"
FMT = "%.17g"


@dataclass(frozen=True)
class RunConfig:
    problem: str = "double-pendulum"
    k: float = 0.0
    s: int = 6
    h: float = 2.0**-7
    t_end: float = 2.0**6
    sampling: int = 1
    method: str = "newton"
    ensemble_size: int = 1
    perturbation_scale: float = 1e-6
    rng_seed: int = 0
    output: Optional[str] = None
    verify: bool = False

    def __post_init__(self):
        if self.problem not in ("double-pendulum", "harmonic"):
            raise ValueError(f"unknown problem {self.problem!r}")
        if self.method not in ("newton", "fixed_point"):
            raise ValueError(f"unknown method {self.method!r}")
        if not (self.h > 0):
            raise ValueError("h must be positive")
        if self.t_end < self.h:
            raise ValueError("t_end must be at least one step")
        if self.sampling < 1:
            raise ValueError("sampling must be >= 1")
        if self.ensemble_size < 1:
            raise ValueError("ensemble size must be >= 1")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_end / self.h)))


def _make_system(cfg: RunConfig):
    if cfg.problem == "double-pendulum":
        par = DoublePendulumParams(k=cfg.k)
        return double_pendulum(par), initial_state(par), par
    return harmonic_oscillator(1.0), np.array([1.0, 0.0]), None


def _open_out(cfg: RunConfig):
    if cfg.output is None or cfg.output == "-":
        return sys.stdout, False
    return open(cfg.output, "w"), True


def run_single(cfg: RunConfig) -> int:
    """Integrate one trajectory and emit the sampled diagnostics as CSV."""
    sys_, y0, _ = _make_system(cfg)
    tab = gauss_tableau(cfg.s)
    dec = compute_decomposition(tab) if cfg.method == "newton" else None

    t_start = time.perf_counter()
    res = integrate(
        sys_, cfg.method, tab, dec, y0, 0.0, cfg.h, cfg.n_steps,
        sampling=cfg.sampling, verify=cfg.verify,
    )
    cpu = time.perf_counter() - t_start

    out, close = _open_out(cfg)
    try:
        out.write(CSV_HEADER + "\n")
        out.write("t,energy_rel_err,mean_iterations,mean_linear_solves\n")
        for i, t in enumerate(res.sample_times):
            err = res.energy_rel_errors[i] if res.energy_rel_errors else 0.0
            out.write(
                ",".join(
                    FMT % v
                    for v in (t, err, res.cum_mean_iterations[i], res.cum_mean_linear_solves[i])
                )
                + "\n"
            )
    finally:
        if close:
            out.close()

    if res.failure is not None:
        print(f"error: {res.failure}", file=sys.stderr)
        return 2
    max_err = max(res.energy_rel_errors) if res.energy_rel_errors else 0.0
    print(
        "summary cpu_time_seconds=%s it_per_step=%s l_solves_per_step=%s max_energy_error=%s"
        % (FMT % cpu, FMT % res.mean_iterations, FMT % res.mean_linear_solves, FMT % max_err)
    )
    return 0


def perturbed_initial(y0, scale: float, seed: int, j: int) -> np.ndarray:
    """Initial condition of ensemble member j: y0 * (1 + scale * u).

    u is uniform in [-1, 1] per component from a counter-based generator
    keyed on (seed, j), so member j is independent of ensemble size and
    evaluation order.
    """
    rng = np.random.Generator(np.random.Philox(key=[seed, j]))
    u = rng.uniform(-1.0, 1.0, size=len(y0))
    return y0 * (1.0 + scale * u)


def _ensemble_errors(cfg: RunConfig, sys_, tab, dec, par, y0j):
    """Signed relative energy errors at sample times; (times, errs, failure)."""
    if cfg.problem == "double-pendulum" and cfg.method == "newton":
        from ._fast import run_newton_dp

        times, errs, _, _, _, fail = run_newton_dp(
            par, y0j, 0.0, cfg.h, cfg.n_steps, cfg.sampling, tab, dec
        )
        failure = None if fail == 0 else f"step {fail}: no convergence"
        return times, errs, failure
    res = integrate(
        sys_, cfg.method, tab, dec, y0j, 0.0, cfg.h, cfg.n_steps, sampling=cfg.sampling
    )
    return np.array(res.sample_times), np.array(res.signed_energy_errors), res.failure


def run_ensemble(cfg: RunConfig) -> int:
    """Integrate P perturbed copies; emit mean/std of the energy error."""
    if cfg.ensemble_size < 2:
        print("error: ensemble runs need at least 2 members", file=sys.stderr)
        return 2
    sys_, y0, par = _make_system(cfg)
    tab = gauss_tableau(cfg.s)
    dec = compute_decomposition(tab) if cfg.method == "newton" else None

    times = None
    rows = []
    failures = []
    for j in range(cfg.ensemble_size):
        y0j = perturbed_initial(y0, cfg.perturbation_scale, cfg.rng_seed, j)
        tj, errs, failure = _ensemble_errors(cfg, sys_, tab, dec, par, y0j)
        if failure is not None:
            failures.append((j, failure))
            continue
        times = tj
        rows.append(errs)
    for j, failure in failures:
        print(f"trajectory {j} failed: {failure}", file=sys.stderr)
    if len(rows) < 2:
        print("error: fewer than 2 trajectories completed", file=sys.stderr)
        return 2

    p = len(rows)
    n_t = len(times)
    means = np.empty(n_t)
    stds = np.empty(n_t)
    for i in range(n_t):
        vals = [row[i] for row in rows]
        mean = math.fsum(vals) / p
        var = math.fsum((v - mean) ** 2 for v in vals) / (p - 1)
        means[i] = mean
        stds[i] = math.sqrt(var)

    out, close = _open_out(cfg)
    try:
        out.write(CSV_HEADER + "\n")
        out.write("t,mean_energy_err,std_energy_err\n")
        for i in range(n_t):
            out.write(",".join(FMT % v for v in (times[i], means[i], stds[i])) + "\n")
    finally:
        if close:
            out.close()

    print(
        "summary trajectories=%d failed=%d" % (p, len(failures))
    )
    if len(failures) > 0.1 * cfg.ensemble_size:
        print("error: more than 10%% of trajectories failed", file=sys.stderr)
        return 3
    return 0


def dump_tableau(s: int, out=None) -> int:
    """Print the tableau data in hex floats plus the bitwise verification."""
    if not (1 <= s <= 8):
        raise UnsupportedStageCount(f"stage count {s} outside 1..8")
    out = out or sys.stdout
    tab = gauss_tableau(s)
    dec = compute_decomposition(tab)
    out.write(f"stages: {s}\n")
    out.write("c: " + " ".join(float(x).hex() for x in tab.c) + "\n")
    out.write("b: " + " ".join(float(x).hex() for x in tab.b) + "\n")
    out.write("mu:\n")
    for row in tab.mu:
        out.write("  " + " ".join(float(x).hex() for x in row) + "\n")
    out.write("sigma: " + " ".join(float(x).hex() for x in dec.sigma) + "\n")
    out.write("alpha: " + " ".join(float(x).hex() for x in dec.alpha) + "\n")
    ok = verify_mu(tab.mu)
    out.write("verification %s\n" % ("PASS" if ok else "FAIL"))
    return 0 if ok else 1


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="sirk",
        description="Symplectic implicit Runge-Kutta integration experiments.",
    )
    p.add_argument("--problem", choices=["double-pendulum", "harmonic"],
                   default="double-pendulum")
    p.add_argument("--k", type=float, default=0.0, help="spring constant")
    p.add_argument("--stages", type=int, default=6)
    p.add_argument("--h", type=float, default=2.0**-7, help="step size")
    p.add_argument("--t-end", type=float, default=2.0**6)
    p.add_argument("--sampling", type=int, default=1,
                   help="steps between recorded samples")
    p.add_argument("--method", choices=["newton", "fixed-point"], default="newton")
    p.add_argument("--ensemble", type=int, default=0, metavar="P",
                   help="run P perturbed trajectories instead of one")
    p.add_argument("--perturb", type=float, default=1e-6,
                   help="relative perturbation scale for ensembles")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, default=None, help="CSV output path")
    p.add_argument("--dump-tableau", type=int, default=None, metavar="S",
                   help="print tableau data for S stages and exit")
    p.add_argument("--verify-solves", action="store_true",
                   help="check the residual of every structured solve")
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.dump_tableau is not None:
        try:
            return dump_tableau(args.dump_tableau)
        except UnsupportedStageCount as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    try:
        cfg = RunConfig(
            problem=args.problem,
            k=args.k,
            s=args.stages,
            h=args.h,
            t_end=args.t_end,
            sampling=args.sampling,
            method=args.method.replace("-", "_"),
            ensemble_size=max(args.ensemble, 1),
            perturbation_scale=args.perturb,
            rng_seed=args.seed,
            output=args.out,
            verify=args.verify_solves,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.ensemble:
        return run_ensemble(cfg)
    return run_single(cfg)


if __name__ == "__main__":
    sys.exit(main())
