"""Gauss tableau construction, bitwise rounding and block decomposition.

Oracles: numpy's Gauss-Legendre nodes/weights, quadrature order
conditions checked symbolically through monomials, and direct dense
reconstruction of the block-diagonalized form.
"""

import numpy as np
import pytest

from sirk.tableau import (
    UnsupportedStageCount,
    compute_decomposition,
    gauss_tableau,
    round_mu,
    verify_mu,
)


def test_nodes_weights_match_leggauss():
    for s in range(1, 9):
        tab = gauss_tableau(s)
        x, w = np.polynomial.legendre.leggauss(s)
        assert np.allclose(tab.c, (x + 1) / 2, atol=1e-14)
        assert np.allclose(tab.b, w / 2, atol=1e-14)


def test_quadrature_order_conditions():
    # Gauss quadrature with s nodes integrates monomials up to degree 2s-1
    for s in range(1, 9):
        tab = gauss_tableau(s)
        for q in range(1, 2 * s + 1):
            assert abs(tab.b @ tab.c ** (q - 1) - 1.0 / q) < 5e-15, (s, q)


def test_collocation_condition():
    # a_ij reconstructed from mu must satisfy sum_j a_ij c_j^{q-1} = c_i^q / q
    for s in range(1, 9):
        tab = gauss_tableau(s)
        a = tab.mu * tab.b[None, :]
        for q in range(1, s + 1):
            lhs = a @ tab.c ** (q - 1)
            assert np.allclose(lhs, tab.c**q / q, atol=5e-14), (s, q)


def test_symmetry_of_coefficients():
    for s in range(1, 9):
        tab = gauss_tableau(s)
        assert np.array_equal(tab.b, tab.b[::-1])
        assert np.abs(tab.c + tab.c[::-1] - 1.0).max() <= 2e-16


def test_bitwise_mu_identities():
    for s in range(1, 9):
        tab = gauss_tableau(s)
        assert verify_mu(tab.mu)
        for i in range(s):
            for j in range(s):
                assert tab.mu[i, j] + tab.mu[j, i] == 1.0
                assert tab.mu[j, i] == tab.mu[s - 1 - i, s - 1 - j]


def test_round_mu_on_exact_values():
    mu = np.array([[0.5, -0.25], [1.25, 0.5]])
    out = round_mu(mu)
    assert np.array_equal(out, mu)


def test_round_mu_enforces_identities_on_perturbed_input():
    rng = np.random.default_rng(17)
    base = gauss_tableau(3)
    noisy = base.mu + 1e-13 * rng.standard_normal(base.mu.shape)
    out = round_mu(noisy.tolist())
    assert verify_mu(out)


def test_unsupported_stage_counts():
    with pytest.raises(UnsupportedStageCount):
        gauss_tableau(0)
    with pytest.raises(UnsupportedStageCount):
        gauss_tableau(17)


def test_midpoint_tableau():
    tab = gauss_tableau(1)
    assert tab.c[0] == 0.5 and tab.b[0] == 1.0
    assert tab.mu[0, 0] == 0.5


def test_two_stage_sigma_closed_form():
    dec = compute_decomposition(gauss_tableau(2))
    assert abs(dec.sigma[0] - np.sqrt(3.0) / 6.0) < 1e-15


def test_antisymmetry_of_b_abar():
    for s in range(1, 9):
        tab = gauss_tableau(s)
        dec = compute_decomposition(tab)
        bab = tab.b[:, None] * dec.abar
        assert np.abs(bab + bab.T).max() <= 1e-15


def test_block_diagonalization_dense_oracle():
    # Q^{-1} Abar Q must equal [[0, D],[-D^T, 0]] with D = diag(sigma)
    for s in range(1, 9):
        tab = gauss_tableau(s)
        dec = compute_decomposition(tab)
        q = np.hstack([dec.q1, dec.q2])
        qinv = q.T * tab.b[None, :]
        block = qinv @ dec.abar @ q
        m = dec.m
        target = np.zeros((s, s))
        for i, sig in enumerate(dec.sigma):
            target[i, m + i] = sig
            target[m + i, i] = -sig
        assert np.abs(block - target).max() <= 1e-13, s
        assert np.abs(qinv @ q - np.eye(s)).max() <= 1e-13, s


def test_b_orthogonality_of_q2():
    # last row selector: e_s^T B Q2 = 0 (alpha lives entirely in Q1)
    for s in range(2, 9):
        tab = gauss_tableau(s)
        dec = compute_decomposition(tab)
        assert np.abs(tab.b @ dec.q2).max() <= 1e-14


def test_sigma_matches_eigenvalues_oracle():
    # eigenvalues of Abar are +- i sigma (plus one zero for odd s)
    for s in range(2, 9):
        dec = compute_decomposition(gauss_tableau(s))
        ev = np.linalg.eigvals(dec.abar)
        pos = np.sort(np.abs(ev.imag))[::-1][: len(dec.sigma) * 2 : 2]
        assert np.allclose(np.sort(pos), np.sort(dec.sigma), atol=1e-13)


def test_alpha_one_stage():
    dec = compute_decomposition(gauss_tableau(1))
    assert dec.alpha.shape == (1,)
    assert abs(dec.alpha[0]) == 1.0


def test_decomposition_cached_identity():
    tab = gauss_tableau(4)
    assert compute_decomposition(tab) is compute_decomposition(tab)
