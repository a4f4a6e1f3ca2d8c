"""Benchmark ODE systems.

The main benchmark is a planar double bob pendulum whose two rods are
coupled by a torsional spring of constant k; k = 0 is the classic
non-stiff double pendulum and growing k makes the problem arbitrarily
stiff.  State layout is y = (phi, theta, p_phi, p_theta) where phi is the
first rod's angle from the vertical and theta the second rod's angle
relative to the first.

The momentum gradients of the Hamiltonian are hand-derived; the Jacobian
of the vector field is finite-differenced from the analytic f.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .integrator import ODESystem, fd_jacobian

BASE_Q = (1.1, -1.1)
BASE_P = (2.7746, 2.7746)


@dataclass(frozen=True)
class DoublePendulumParams:
    m1: float = 1.0
    m2: float = 1.0
    l1: float = 1.0
    l2: float = 1.0
    g: float = 9.8
    k: float = 0.0

    def __post_init__(self):
        if min(self.m1, self.m2, self.l1, self.l2, self.g) <= 0 or self.k < 0:
            raise ValueError("masses, lengths and g must be positive; k >= 0")


def _hamiltonian(par: DoublePendulumParams, y):
    phi, th = y[..., 0], y[..., 1]
    pphi, pth = y[..., 2], y[..., 3]
    a1 = par.l1**2 * (par.m1 + par.m2)
    a2 = par.l2**2 * par.m2
    a3 = par.l1 * par.l2 * par.m2
    den = par.l1**2 * par.l2**2 * par.m2 * (
        -2 * par.m1 - par.m2 + par.m2 * np.cos(2 * th)
    )
    num = a1 * pth**2 + a2 * (pth - pphi) ** 2 + 2 * a3 * pth * (pth - pphi) * np.cos(th)
    pot = (
        -par.g * np.cos(phi) * (par.l1 * (par.m1 + par.m2) + par.l2 * par.m2 * np.cos(th))
        + par.g * par.l2 * par.m2 * np.sin(th) * np.sin(phi)
        + 0.5 * par.k * th**2
    )
    return -num / den + pot


def _vector_field(par: DoublePendulumParams, y):
    phi, th = y[..., 0], y[..., 1]
    pphi, pth = y[..., 2], y[..., 3]
    a1 = par.l1**2 * (par.m1 + par.m2)
    a2 = par.l2**2 * par.m2
    a3 = par.l1 * par.l2 * par.m2
    ll = par.l1**2 * par.l2**2 * par.m2
    cth = np.cos(th)
    sth = np.sin(th)
    den = ll * (-2 * par.m1 - par.m2 + par.m2 * np.cos(2 * th))

    num = a1 * pth**2 + a2 * (pth - pphi) ** 2 + 2 * a3 * pth * (pth - pphi) * cth
    dnum_dth = -2 * a3 * pth * (pth - pphi) * sth
    dden_dth = ll * (-2 * par.m2 * np.sin(2 * th))

    dh_dpphi = (2 * a2 * (pth - pphi) + 2 * a3 * pth * cth) / den
    dh_dpth = -(2 * a1 * pth + 2 * a2 * (pth - pphi) + 2 * a3 * (2 * pth - pphi) * cth) / den
    dh_dth_kin = -(dnum_dth * den - num * dden_dth) / den**2

    dh_dphi = (
        par.g * np.sin(phi) * (par.l1 * (par.m1 + par.m2) + par.l2 * par.m2 * cth)
        + par.g * par.l2 * par.m2 * sth * np.cos(phi)
    )
    dh_dth = (
        dh_dth_kin
        + par.g * np.cos(phi) * par.l2 * par.m2 * sth
        + par.g * par.l2 * par.m2 * cth * np.sin(phi)
        + par.k * th
    )
    return np.stack([dh_dpphi, dh_dpth, -dh_dphi, -dh_dth], axis=-1)


def double_pendulum(params: DoublePendulumParams = DoublePendulumParams()) -> ODESystem:
    """Spring-coupled planar double pendulum as a first-order system."""

    def f(t, y):
        return _vector_field(params, np.asarray(y, dtype=float))

    def energy(y):
        return float(_hamiltonian(params, np.asarray(y, dtype=float)))

    sys = ODESystem(dim=4, f=f, jacobian=None, energy=energy, vectorized=True)
    # jacobian through central differences of the analytic field
    object.__setattr__(sys, "jacobian", lambda t, y: fd_jacobian(sys, t, y))
    return sys


def initial_state(params: DoublePendulumParams, base_q=BASE_Q, base_p=BASE_P) -> np.ndarray:
    """Initial condition with theta shrunk as 1/sqrt(1 + 100 k).

    Keeps the total energy bounded as the spring constant grows.
    """
    theta0 = base_q[1] / np.sqrt(1.0 + 100.0 * params.k)
    return np.array([base_q[0], theta0, base_p[0], base_p[1]])


def harmonic_oscillator(omega: float) -> ODESystem:
    """H = (p^2 + omega^2 q^2) / 2 with y = (q, p)."""
    if omega <= 0:
        raise ValueError("omega must be positive")
    w2 = omega * omega
    jac = np.array([[0.0, 1.0], [-w2, 0.0]])

    def f(t, y):
        y = np.asarray(y, dtype=float)
        return np.stack([y[..., 1], -w2 * y[..., 0]], axis=-1)

    def energy(y):
        y = np.asarray(y, dtype=float)
        return float(0.5 * (y[..., 1] ** 2 + w2 * y[..., 0] ** 2))

    return ODESystem(
        dim=2, f=f, jacobian=lambda t, y: jac, energy=energy, vectorized=True
    )


def harmonic_exact(omega: float, y0, t: float) -> np.ndarray:
    """Closed-form flow of the harmonic oscillator (rotation in (q, w p))."""
    q0, p0 = y0
    c, s = np.cos(omega * t), np.sin(omega * t)
    q = q0 * c + (p0 / omega) * s
    p = -q0 * omega * s + p0 * c
    return np.array([q, p])
