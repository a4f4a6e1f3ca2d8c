"""Structured stage solver against a dense Kronecker oracle, plus the
round-off utilities (compensated state, fl32 projection, stopping rule).
"""

import numpy as np
import pytest

from sirk import linalg
from sirk.stagesolver import (
    CompensatedState,
    ConvergenceMonitor,
    SolverError,
    build_solver,
    continue_iterating,
    fl32_project,
    kahan_step,
    solve_stage_system,
)
from sirk.tableau import compute_decomposition, gauss_tableau


def dense_oracle(tab, j, h, g):
    """Solve (I - h (B A B^{-1}) (x) J) dl = g by dense Kronecker LU."""
    s, d = g.shape
    bmu = tab.b[:, None] * tab.mu  # (B A B^{-1})_{ij} = b_i mu_ij
    big = np.eye(s * d) - h * np.kron(bmu, j)
    return np.linalg.solve(big, g.ravel()).reshape(s, d)


@pytest.mark.parametrize("s", [1, 2, 3, 5, 6, 7])
@pytest.mark.parametrize("d", [1, 3, 8])
def test_solver_matches_dense_oracle(s, d):
    tab = gauss_tableau(s)
    dec = compute_decomposition(tab)
    h = 2.0**-7
    rng = np.random.default_rng(1000 * s + d)
    for _ in range(5):
        j = rng.standard_normal((d, d))
        g = rng.standard_normal((s, d))
        solver = build_solver(j, h, dec)
        dl = solve_stage_system(solver, g)
        ref = dense_oracle(tab, j, h, g)
        denom = np.abs(ref).max() or 1.0
        assert np.abs(dl - ref).max() / denom <= 1e-11


def test_zero_jacobian_identity():
    tab = gauss_tableau(4)
    dec = compute_decomposition(tab)
    rng = np.random.default_rng(2)
    g = rng.standard_normal((4, 3))
    solver = build_solver(np.zeros((3, 3)), 0.5, dec)
    assert np.allclose(solve_stage_system(solver, g), g, atol=1e-14)


@pytest.mark.parametrize("s", range(1, 9))
def test_factorization_counts(s):
    dec = compute_decomposition(gauss_tableau(s))
    rng = np.random.default_rng(s)
    j = rng.standard_normal((4, 4))
    before = linalg.lu_count
    solver = build_solver(j, 2.0**-7, dec)
    assert linalg.lu_count - before == s // 2 + 1
    mid = linalg.lu_count
    solve_stage_system(solver, rng.standard_normal((s, 4)))
    assert linalg.lu_count == mid


def test_verify_flag_passes_on_consistent_solve():
    tab = gauss_tableau(3)
    dec = compute_decomposition(tab)
    rng = np.random.default_rng(9)
    solver = build_solver(rng.standard_normal((2, 2)), 0.01, dec, verify=True)
    solve_stage_system(solver, rng.standard_normal((3, 2)))


def test_verify_flag_catches_wrong_step_size():
    # factorized for one h but solving residuals against another must trip
    tab = gauss_tableau(3)
    dec = compute_decomposition(tab)
    rng = np.random.default_rng(9)
    j = rng.standard_normal((2, 2))
    good = build_solver(j, 0.5, dec)
    bad = type(good)(
        h=0.7,
        j=good.j,
        jsq=good.jsq,
        block_lus=good.block_lus,
        m_lu=good.m_lu,
        decomp=good.decomp,
        verify=True,
    )
    with pytest.raises(SolverError):
        solve_stage_system(bad, rng.standard_normal((3, 2)))


def test_kahan_long_sum_of_tenths():
    # criterion 11 core: 1e6 copies of fl(0.1) sum to 1e5 almost exactly
    state = CompensatedState.from_vector(np.zeros(1))
    x = np.array([0.1])
    for _ in range(10**6):
        state = kahan_step(state, [x])
    total = state.value[0]
    naive = 0.0
    for _ in range(10**6):
        naive += 0.1
    assert abs(total - 1e5) / 1e5 <= 1e-13
    assert abs(total - 1e5) < abs(naive - 1e5)


def test_kahan_exact_on_representable_sums():
    state = CompensatedState.from_vector(np.array([1.0, -1.0]))
    state = kahan_step(state, [np.array([0.5, 0.25]), np.array([0.25, 0.5])])
    assert np.array_equal(state.value, np.array([1.75, -0.25]))


def test_fl32_project():
    v = np.array([0.1, 1.0, 1e-45, 2.0**-149])
    p = fl32_project(v)
    assert p.dtype == np.float64
    assert p[1] == 1.0
    assert p[0] == float(np.float32(0.1))


def test_stopping_identical_iterates():
    a = np.array([1.0, 2.0])
    assert continue_iterating([a])
    assert not continue_iterating([a, a.copy()])


def test_stopping_needs_three_iterates():
    assert continue_iterating([np.array([0.0]), np.array([1.0])])


def test_stopping_on_stagnation():
    # diffs 1.0 then 1.0: latest no better than the best past difference
    h = [np.array([0.0]), np.array([1.0]), np.array([2.0])]
    assert not continue_iterating(h)
    # still converging: diffs 1.0 then 0.25
    h = [np.array([0.0]), np.array([1.0]), np.array([1.25])]
    assert continue_iterating(h)


def test_stopping_zero_diffs_ignored_in_minimum():
    # a past zero difference must not force an immediate stop later
    h = [np.array([1.0, 0.0]), np.array([2.0, 0.0]), np.array([2.5, 0.0])]
    assert continue_iterating(h)


def test_monitor_matches_list_reference():
    rng = np.random.default_rng(42)
    for trial in range(50):
        seq = [fl32_project(rng.standard_normal(3))]
        for _ in range(30):
            step = rng.standard_normal(3) * 2.0 ** -rng.integers(0, 20)
            seq.append(fl32_project(seq[-1] + step))
        mon = ConvergenceMonitor(project=False)
        hist = []
        for z in seq:
            hist.append(z)
            got = mon.push(z)
            want = continue_iterating(hist)
            assert got == want, (trial, len(hist))
            if not want:
                break
