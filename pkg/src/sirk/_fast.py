"""Compiled trajectory driver for the double-pendulum Newton integrator.

The ensemble statistics runs integrate hundreds of long trajectories;
the generic numpy step driver is too slow for that on one core.  This
module replays the exact same five-substep algorithm (same stopping
rule, same compensated update) with numba-compiled loops, specialized to
the spring-coupled double pendulum.  A cross-check test asserts close
agreement with the generic driver.
"""

from __future__ import annotations

import numpy as np
from numba import njit

F32 = np.float32


@njit(cache=True)
def _dp_f(par, y, out):
    m1, m2, l1, l2, g, k = par[0], par[1], par[2], par[3], par[4], par[5]
    phi, th, pphi, pth = y[0], y[1], y[2], y[3]
    a1 = l1 * l1 * (m1 + m2)
    a2 = l2 * l2 * m2
    a3 = l1 * l2 * m2
    ll = l1 * l1 * l2 * l2 * m2
    cth = np.cos(th)
    sth = np.sin(th)
    den = ll * (-2.0 * m1 - m2 + m2 * np.cos(2.0 * th))
    num = a1 * pth * pth + a2 * (pth - pphi) ** 2 + 2.0 * a3 * pth * (pth - pphi) * cth
    dnum_dth = -2.0 * a3 * pth * (pth - pphi) * sth
    dden_dth = ll * (-2.0 * m2 * np.sin(2.0 * th))
    dh_dpphi = (2.0 * a2 * (pth - pphi) + 2.0 * a3 * pth * cth) / den
    dh_dpth = -(2.0 * a1 * pth + 2.0 * a2 * (pth - pphi) + 2.0 * a3 * (2.0 * pth - pphi) * cth) / den
    dh_dth_kin = -(dnum_dth * den - num * dden_dth) / (den * den)
    dh_dphi = g * np.sin(phi) * (l1 * (m1 + m2) + l2 * m2 * cth) + g * l2 * m2 * sth * np.cos(phi)
    dh_dth = dh_dth_kin + g * np.cos(phi) * l2 * m2 * sth + g * l2 * m2 * cth * np.sin(phi) + k * th
    out[0] = dh_dpphi
    out[1] = dh_dpth
    out[2] = -dh_dphi
    out[3] = -dh_dth


@njit(cache=True)
def _dp_energy(par, y):
    m1, m2, l1, l2, g, k = par[0], par[1], par[2], par[3], par[4], par[5]
    phi, th, pphi, pth = y[0], y[1], y[2], y[3]
    a1 = l1 * l1 * (m1 + m2)
    a2 = l2 * l2 * m2
    a3 = l1 * l2 * m2
    den = l1 * l1 * l2 * l2 * m2 * (-2.0 * m1 - m2 + m2 * np.cos(2.0 * th))
    num = a1 * pth * pth + a2 * (pth - pphi) ** 2 + 2.0 * a3 * pth * (pth - pphi) * np.cos(th)
    pot = (
        -g * np.cos(phi) * (l1 * (m1 + m2) + l2 * m2 * np.cos(th))
        + g * l2 * m2 * np.sin(th) * np.sin(phi)
        + 0.5 * k * th * th
    )
    return -num / den + pot


@njit(cache=True)
def _dp_jacobian(par, y, jac):
    eps = 1.4901161193847656e-08  # sqrt(machine epsilon)
    fp = np.empty(4)
    fm = np.empty(4)
    yp = np.empty(4)
    for j in range(4):
        step = eps * (1.0 + abs(y[j]))
        for i in range(4):
            yp[i] = y[i]
        yp[j] = y[j] + step
        _dp_f(par, yp, fp)
        yp[j] = y[j] - step
        _dp_f(par, yp, fm)
        for i in range(4):
            jac[i, j] = (fp[i] - fm[i]) / (2.0 * step)


@njit(cache=True)
def _lu_factor(a, piv):
    n = a.shape[0]
    for i in range(n):
        piv[i] = i
    for col in range(n):
        p = col
        best = abs(a[col, col])
        for r in range(col + 1, n):
            if abs(a[r, col]) > best:
                best = abs(a[r, col])
                p = r
        if p != col:
            for cc in range(n):
                tmp = a[col, cc]
                a[col, cc] = a[p, cc]
                a[p, cc] = tmp
            tmp_i = piv[col]
            piv[col] = piv[p]
            piv[p] = tmp_i
        pivval = a[col, col]
        if pivval == 0.0:
            return False
        for r in range(col + 1, n):
            m = a[r, col] / pivval
            a[r, col] = m
            for cc in range(col + 1, n):
                a[r, cc] -= m * a[col, cc]
    return True


@njit(cache=True)
def _lu_solve_vec(lu, piv, b, x):
    n = lu.shape[0]
    for i in range(n):
        x[i] = b[piv[i]]
    for i in range(n):
        acc = x[i]
        for j in range(i):
            acc -= lu[i, j] * x[j]
        x[i] = acc
    for i in range(n - 1, -1, -1):
        acc = x[i]
        for j in range(i + 1, n):
            acc -= lu[i, j] * x[j]
        x[i] = acc / lu[i, i]


@njit(cache=True)
def _matvec4(a, v, out):
    for i in range(4):
        acc = 0.0
        for j in range(4):
            acc += a[i, j] * v[j]
        out[i] = acc


@njit(cache=True)
def _solve_stage(
    h, jmat, block_lus, block_pivs, nsig, m_lu, m_piv, sigma, alpha, q1, q2, bq, g, out, scratch
):
    """Structured solve of (I - h B A B^{-1} (x) J) dl = g; g, out are (s, 4)."""
    s = g.shape[0]
    m = q1.shape[1]
    r = scratch[0]  # (s, 4) workspace; rows 0..m-1 used
    q2t_g = scratch[1]
    w = scratch[2]
    tmp = np.empty(4)
    tmp2 = np.empty(4)
    # q2t_g = Q2^T g
    for i in range(s - m):
        for d in range(4):
            acc = 0.0
            for row in range(s):
                acc += q2[row, i] * g[row, d]
            q2t_g[i, d] = acc
    # r = Q1^T g + h * sigma_i * J q2t_g_i
    for i in range(m):
        for d in range(4):
            acc = 0.0
            for row in range(s):
                acc += q1[row, i] * g[row, d]
            r[i, d] = acc
    for i in range(nsig):
        _matvec4(jmat, q2t_g[i], tmp)
        for d in range(4):
            r[i, d] += h * sigma[i] * tmp[d]
    # dz from M dz = h J sum alpha_i Binv_i r_i
    for d in range(4):
        tmp2[d] = 0.0
    for i in range(m):
        if i < nsig:
            _lu_solve_vec(block_lus[i], block_pivs[i], r[i], tmp)
        else:
            for d in range(4):
                tmp[d] = r[i, d]
        for d in range(4):
            tmp2[d] += alpha[i] * tmp[d]
    _matvec4(jmat, tmp2, tmp)
    for d in range(4):
        tmp[d] *= h
    dz = np.empty(4)
    _lu_solve_vec(m_lu, m_piv, tmp, dz)
    # W rows
    for i in range(m):
        for d in range(4):
            tmp[d] = r[i, d] + 0.5 * alpha[i] * dz[d]
        if i < nsig:
            _lu_solve_vec(block_lus[i], block_pivs[i], tmp, w[i])
        else:
            for d in range(4):
                w[i, d] = tmp[d]
    for i in range(s - m):
        _matvec4(jmat, w[i], tmp)
        for d in range(4):
            w[m + i, d] = q2t_g[i, d] - h * sigma[i] * tmp[d]
    # out = bq @ w
    for row in range(s):
        for d in range(4):
            acc = 0.0
            for i in range(s):
                acc += bq[row, i] * w[i, d]
            out[row, d] = acc


@njit(cache=True)
def _monitor_push(z, state_prev, state_lastdiff, state_minpast, flags):
    """Incremental min-of-past-differences stopping rule on fl32 views.

    flags[0]: have prev, flags[1]: have lastdiff, flags[2]: have minpast.
    Returns True to continue iterating.
    """
    n = z.shape[0]
    if flags[0] == 0:
        for i in range(n):
            state_prev[i] = z[i]
        flags[0] = 1
        return True
    identical = True
    for i in range(n):
        if z[i] != state_prev[i]:
            identical = False
            break
    if identical:
        for i in range(n):
            state_prev[i] = z[i]
        return False
    stop = False
    if flags[1] == 1:
        for i in range(n):
            d = state_lastdiff[i]
            merged = np.inf if d == 0.0 else d
            if flags[2] == 0 or merged < state_minpast[i]:
                state_minpast[i] = merged
        flags[2] = 1
        stop = True
        for i in range(n):
            d = abs(z[i] - state_prev[i])
            if d != 0.0 and state_minpast[i] > d:
                stop = False
                break
    for i in range(n):
        state_lastdiff[i] = abs(z[i] - state_prev[i])
        state_prev[i] = z[i]
    flags[1] = 1
    return not stop


@njit(cache=True)
def _project32(src, dst):
    for i in range(src.shape[0]):
        dst[i] = np.float64(F32(src[i]))


@njit(cache=True)
def newton_trajectory_dp(
    par, y0, t0, h, n_steps, sampling, mu, b, c, sigma, alpha, q1, q2, bq,
    outer_cap, inner_cap,
):
    """Run the five-substep Newton integrator; returns sampled statistics.

    Output arrays: sample signed relative energy errors (first entry is
    t0 with error 0), total outer iterations, total linear solves, and
    the failing step index (0 if none).
    """
    s = b.shape[0]
    m = q1.shape[1]
    nsig = sigma.shape[0]
    n_samples = n_steps // sampling + 1
    times = np.empty(n_samples)
    errs = np.empty(n_samples)
    ys = np.empty((n_samples, 4))

    y = y0.copy()
    e = np.zeros(4)
    e0 = _dp_energy(par, y)
    times[0] = t0
    errs[0] = 0.0
    for d in range(4):
        ys[0, d] = y[d]

    hb = np.empty(s)
    ts = np.empty(s)
    for i in range(s):
        hb[i] = h * b[i]

    jmat = np.empty((4, 4))
    jstack = np.empty((s, 4, 4))
    block_lus = np.empty((nsig if nsig > 0 else 1, 4, 4))
    block_pivs = np.empty((nsig if nsig > 0 else 1, 4), dtype=np.int64)
    m_lu = np.empty((4, 4))
    m_piv = np.empty(4, dtype=np.int64)
    binv = np.empty((4, 4))
    eyecol = np.empty(4)

    ell = np.empty((s, 4))
    dl = np.empty((s, 4))
    g = np.empty((s, 4))
    yk = np.empty((s, 4))
    fk = np.empty((s, 4))
    resid = np.empty((s, 4))
    x = np.empty((s, 4))
    scratch = np.empty((3, s, 4))
    proj = np.empty(s * 4)
    mon_prev = np.empty(s * 4)
    mon_lastdiff = np.empty(s * 4)
    mon_minpast = np.empty(s * 4)
    mon_flags = np.zeros(3, dtype=np.int64)

    total_iters = 0
    total_solves = 0
    fail_step = 0
    sample_idx = 1

    for n in range(1, n_steps + 1):
        t = t0 + (n - 1) * h
        for i in range(s):
            ts[i] = t + c[i] * h
        # frozen Jacobian and factorizations
        yk0 = np.empty(4)
        for d in range(4):
            yk0[d] = y[d]
        _dp_jacobian(par, yk0, jmat)
        for i in range(nsig):
            hs = h * sigma[i]
            for a_ in range(4):
                for b_ in range(4):
                    acc = 0.0
                    for cc in range(4):
                        acc += jmat[a_, cc] * jmat[cc, b_]
                    block_lus[i, a_, b_] = (hs * hs) * acc
                block_lus[i, a_, a_] += 1.0
            if not _lu_factor(block_lus[i], block_pivs[i]):
                fail_step = n
                break
        if fail_step:
            break
        # M = I - J (h/2) sum alpha_i^2 Binv_i
        macc = np.zeros((4, 4))
        for i in range(m):
            if i < nsig:
                for col in range(4):
                    for d in range(4):
                        eyecol[d] = 1.0 if d == col else 0.0
                    _lu_solve_vec(block_lus[i], block_pivs[i], eyecol, binv[:, col])
            else:
                for a_ in range(4):
                    for b_ in range(4):
                        binv[a_, b_] = 1.0 if a_ == b_ else 0.0
            a2 = alpha[i] * alpha[i]
            for a_ in range(4):
                for b_ in range(4):
                    macc[a_, b_] += a2 * binv[a_, b_]
        for a_ in range(4):
            for b_ in range(4):
                acc = 0.0
                for cc in range(4):
                    acc += jmat[a_, cc] * macc[cc, b_]
                m_lu[a_, b_] = -(0.5 * h) * acc
            m_lu[a_, a_] += 1.0
        if not _lu_factor(m_lu, m_piv):
            fail_step = n
            break

        # substep 1: simplified Newton from L = 0
        for i in range(s):
            for d in range(4):
                ell[i, d] = 0.0
        mon_flags[:] = 0
        _project32(ell.ravel(), proj)
        _monitor_push(proj, mon_prev, mon_lastdiff, mon_minpast, mon_flags)
        k = 0
        while True:
            if k >= outer_cap:
                fail_step = n
                break
            k += 1
            for i in range(s):
                for d in range(4):
                    acc = y[d]
                    for j in range(s):
                        acc += mu[i, j] * ell[j, d]
                    yk[i, d] = acc
            for i in range(s):
                _dp_f(par, yk[i], fk[i])
            for i in range(s):
                for d in range(4):
                    g[i, d] = hb[i] * fk[i, d] - ell[i, d]
            _solve_stage(h, jmat, block_lus, block_pivs, nsig, m_lu, m_piv, sigma,
                         alpha, q1, q2, bq, g, dl, scratch)
            total_solves += 1
            for i in range(s):
                for d in range(4):
                    ell[i, d] += dl[i, d]
            _project32(ell.ravel(), proj)
            if not _monitor_push(proj, mon_prev, mon_lastdiff, mon_minpast, mon_flags):
                break
        if fail_step:
            break
        total_iters += k

        # substep 2: stage Jacobians
        for i in range(s):
            for d in range(4):
                acc = y[d]
                for j in range(s):
                    acc += mu[i, j] * ell[j, d]
                yk[i, d] = acc
        for i in range(s):
            _dp_jacobian(par, yk[i], jstack[i])

        # substep 3: inner refinement of the last increment
        for i in range(s):
            for d in range(4):
                ell[i, d] -= dl[i, d]  # back to L^{k-1}
        ok = _inner_loop(h, jmat, block_lus, block_pivs, nsig, m_lu, m_piv, sigma,
                         alpha, q1, q2, bq, mu, hb, jstack, g, dl, resid, x, scratch,
                         proj, mon_prev, mon_lastdiff, mon_minpast, mon_flags, inner_cap)
        if ok < 0:
            fail_step = n
            break
        total_solves += ok
        for i in range(s):
            for d in range(4):
                ell[i, d] += dl[i, d]

        # substep 4: final inexact Newton iteration with the e correction
        for i in range(s):
            for d in range(4):
                acc = y[d]
                for j in range(s):
                    acc += mu[i, j] * ell[j, d]
                yk[i, d] = acc
        for i in range(s):
            _dp_f(par, yk[i], fk[i])
        for i in range(s):
            _matvec4(jstack[i], e, resid[i])
            for d in range(4):
                g[i, d] = (hb[i] * fk[i, d] - ell[i, d]) + hb[i] * resid[i, d]
        _solve_stage(h, jmat, block_lus, block_pivs, nsig, m_lu, m_piv, sigma,
                     alpha, q1, q2, bq, g, dl, scratch)
        total_solves += 1
        ok = _inner_loop(h, jmat, block_lus, block_pivs, nsig, m_lu, m_piv, sigma,
                         alpha, q1, q2, bq, mu, hb, jstack, g, dl, resid, x, scratch,
                         proj, mon_prev, mon_lastdiff, mon_minpast, mon_flags, inner_cap)
        if ok < 0:
            fail_step = n
            break
        total_solves += ok

        # substep 5: compensated update
        delta = np.empty(4)
        for d in range(4):
            acc = e[d]
            for i in range(s):
                acc += dl[i, d]
            delta[d] = acc
        for d in range(4):
            ed = delta[d]
            yd = y[d]
            for i in range(s):
                big = ell[i, d] + ed
                y_new = yd + big
                carried = y_new - yd
                ed = big - carried
                yd = y_new
            y[d] = yd
            e[d] = ed

        if n % sampling == 0:
            times[sample_idx] = t0 + n * h
            en = _dp_energy(par, y + e)
            errs[sample_idx] = (en - e0) / e0
            for d in range(4):
                ys[sample_idx, d] = y[d]
            sample_idx += 1

    return times, errs, ys, total_iters, total_solves, fail_step, sample_idx


def run_newton_dp(params, y0, t0, h, n_steps, sampling, tab, dec,
                  outer_cap=50, inner_cap=30):
    """Python-facing wrapper; see newton_trajectory_dp.

    Returns (sample_times, signed_rel_energy_errors, sample_states,
    mean_iterations, mean_linear_solves, fail_step) with fail_step = 0 on
    success; on failure the sample arrays are truncated to the samples
    recorded before the failing step.
    """
    par = np.array([params.m1, params.m2, params.l1, params.l2, params.g, params.k])
    times, errs, ys, it, solves, fail, nvalid = newton_trajectory_dp(
        par, np.asarray(y0, dtype=float), float(t0), float(h), int(n_steps),
        int(sampling), tab.mu, tab.b, tab.c, dec.sigma, dec.alpha,
        dec.q1, dec.q2, dec.bq, outer_cap, inner_cap,
    )
    done = n_steps if fail == 0 else fail - 1
    denom = max(done, 1)
    return (times[:nvalid], errs[:nvalid], ys[:nvalid], it / denom, solves / denom, fail)


@njit(cache=True)
def _inner_loop(h, jmat, block_lus, block_pivs, nsig, m_lu, m_piv, sigma, alpha,
                q1, q2, bq, mu, hb, jstack, g, dl, resid, x, scratch,
                proj, mon_prev, mon_lastdiff, mon_minpast, mon_flags, cap):
    """Refine dl in place; returns solve count, or -1 on cap overrun."""
    s = g.shape[0]
    mon_flags[:] = 0
    _project32(dl.ravel(), proj)
    _monitor_push(proj, mon_prev, mon_lastdiff, mon_minpast, mon_flags)
    solves = 0
    tmp = np.empty(4)
    while True:
        if solves >= cap:
            return -1
        for i in range(s):
            for d in range(4):
                acc = 0.0
                for j in range(s):
                    acc += mu[i, j] * dl[j, d]
                x[i, d] = acc
        for i in range(s):
            _matvec4(jstack[i], x[i], tmp)
            for d in range(4):
                resid[i, d] = g[i, d] - dl[i, d] + hb[i] * tmp[d]
        _solve_stage(h, jmat, block_lus, block_pivs, nsig, m_lu, m_piv, sigma,
                     alpha, q1, q2, bq, resid, x, scratch)
        solves += 1
        for i in range(s):
            for d in range(4):
                dl[i, d] += x[i, d]
        _project32(dl.ravel(), proj)
        if not _monitor_push(proj, mon_prev, mon_lastdiff, mon_minpast, mon_flags):
            return solves
