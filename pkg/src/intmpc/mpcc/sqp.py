"""Single-shooting SQP for the contouring-control NLP.

Decision variables are the stacked controls ``u = [a_0, d_0, ..., a_{H-1},
d_{H-1}]``. States and path progress are eliminated through the RK4 map.
Control boxes and the speed bounds are linear in ``u`` and kept hard in
every QP; road bounds and collision constraints enter the merit function as an
exact max-violation penalty. When the linearized hard problem is infeasible, an
elastic QP with one shared slack is solved instead.

Everything here is compiled with numba; :mod:`intmpc.mpcc.solver` wraps it.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from ..dynamics import rk4_step_jac
from ..geometry import path_errors
from .qp import QP_INFEASIBLE, inverse_cholesky, solve_qp_factored

ST_FEASIBLE = 0
ST_INFEASIBLE = 1
ST_MAXITER = 2

# info vector layout
I_ITER, I_KKT, I_VIOL, I_COST, I_RHO, I_MERIT = range(6)

REG = 1e-8            # Hessian regularization (normalized cost units)
SLACK_HESS = 1e-3     # curvature on elastic slacks
# soft rows enter the QP only when they can become active within one step
ROAD_INCLUDE = 0.5       # meters of remaining road margin
COLLISION_INCLUDE = 0.5  # sqrt(m) - 1
RHO_MAX = 1e8


@njit(cache=True)
def project_controls(u, v0, a_lo, a_hi, d_max, v_max, dt):
    """Clip ``u`` in place onto the box and the speed bounds."""
    v = v0
    H = u.shape[0] // 2
    for k in range(H):
        lo = max(a_lo, -v / dt)
        hi = min(a_hi, (v_max - v) / dt)
        if hi < lo:
            hi = lo
        u[2 * k] = min(max(u[2 * k], lo), hi)
        u[2 * k + 1] = min(max(u[2 * k + 1], -d_max), d_max)
        v = v + dt * u[2 * k]


@njit(cache=True)
def rollout(s0, lam0, u, dt, l_r, l_f, ltot, S, L, dS, dL, with_jac):
    """Shooting map with forward sensitivities dS = dS/du, dL = dL/du."""
    H = u.shape[0] // 2
    n = u.shape[0]
    A = np.empty((4, 4))
    B = np.empty((4, 2))
    S[0, :] = s0
    L[0] = lam0
    if with_jac:
        dS[0, :, :] = 0.0
        dL[0, :] = 0.0
    for k in range(H):
        S[k + 1, :] = rk4_step_jac(S[k], u[2 * k], u[2 * k + 1], dt, l_r, l_f, A, B)
        lam = L[k] + S[k, 3] * dt
        clamped = lam > ltot
        L[k + 1] = ltot if clamped else lam
        if with_jac:
            for i in range(4):
                for j in range(n):
                    acc = 0.0
                    for m in range(4):
                        acc += A[i, m] * dS[k, m, j]
                    dS[k + 1, i, j] = acc
                dS[k + 1, i, 2 * k] += B[i, 0]
                dS[k + 1, i, 2 * k + 1] += B[i, 1]
            if clamped:
                dL[k + 1, :] = 0.0
            else:
                for j in range(n):
                    dL[k + 1, j] = dL[k, j] + dt * dS[k, 3, j]


@njit(cache=True)
def residuals(S, L, u, dS, dL, v_ref, sq, knots, cx, cy, r, J, with_jac):
    """Least-squares residuals of the (unnormalized) cost.

    ``sq`` holds the square roots of the weights. Rows 3k..3k+2 carry the
    contour, lag and speed terms of stage k = 0..H; the control terms
    follow. The cost is ``sum(r**2)``.
    """
    H = u.shape[0] // 2
    n = u.shape[0]
    buf = np.empty(8)
    for k in range(H + 1):
        path_errors(knots, cx, cy, L[k], S[k, 0], S[k, 1], buf)
        r[3 * k] = sq[0] * buf[0]
        r[3 * k + 1] = sq[1] * buf[1]
        r[3 * k + 2] = sq[2] * (v_ref - S[k, 3])
        if with_jac:
            for j in range(n):
                J[3 * k, j] = sq[0] * (buf[2] * dS[k, 0, j] + buf[3] * dS[k, 1, j] + buf[6] * dL[k, j])
                J[3 * k + 1, j] = sq[1] * (buf[4] * dS[k, 0, j] + buf[5] * dS[k, 1, j] + buf[7] * dL[k, j])
                J[3 * k + 2, j] = -sq[2] * dS[k, 3, j]
    base = 3 * (H + 1)
    for k in range(H):
        r[base + 2 * k] = sq[3] * u[2 * k]
        r[base + 2 * k + 1] = sq[4] * u[2 * k + 1]
        if with_jac:
            J[base + 2 * k, :] = 0.0
            J[base + 2 * k + 1, :] = 0.0
            J[base + 2 * k, 2 * k] = sq[3]
            J[base + 2 * k + 1, 2 * k + 1] = sq[4]


@njit(cache=True)
def ellipse_margin(px, py, ox, oy, phi, alpha, beta):
    """Quadratic form of a point in an obstacle's ellipse frame; > 1 outside."""
    c = math.cos(phi)
    s = math.sin(phi)
    dx = px - ox
    dy = py - oy
    d1 = c * dx + s * dy
    d2 = -s * dx + c * dy
    return d1 * d1 / (alpha * alpha) + d2 * d2 / (beta * beta)


@njit(cache=True)
def soft_constraints(S, L, dS, dL, knots, cx, cy, w_left, w_right,
                     obs_c, obs_phi, obs_a, obs_b, offsets, buffer, use_coll,
                     cval, Jc, with_jac):
    """Values (>= 0 when satisfied) and Jacobians of the penalized constraints.

    Layout: two road rows per stage k = 1..H, then collision rows ordered
    by (obstacle, disc, stage). Collision rows use sqrt(m) - 1 - buffer so
    the penalty grows linearly with distance inside the ellipse.
    """
    H = S.shape[0] - 1
    n = dS.shape[2]
    buf = np.empty(8)
    for k in range(1, H + 1):
        path_errors(knots, cx, cy, L[k], S[k, 0], S[k, 1], buf)
        j0 = 2 * (k - 1)
        cval[j0] = w_left - buf[0]
        cval[j0 + 1] = buf[0] + w_right
        if with_jac:
            for j in range(n):
                de = buf[2] * dS[k, 0, j] + buf[3] * dS[k, 1, j] + buf[6] * dL[k, j]
                Jc[j0, j] = -de
                Jc[j0 + 1, j] = de
    if not use_coll:
        return
    n_obs = obs_c.shape[0]
    n_c = offsets.shape[0]
    row = 2 * H
    for o in range(n_obs):
        c = math.cos(obs_phi[o])
        s = math.sin(obs_phi[o])
        ia = 1.0 / (obs_a[o] * obs_a[o])
        ib = 1.0 / (obs_b[o] * obs_b[o])
        for d in range(n_c):
            off = offsets[d]
            for k in range(1, H + 1):
                cp = math.cos(S[k, 2])
                sp = math.sin(S[k, 2])
                dx = S[k, 0] + off * cp - obs_c[o, k, 0]
                dy = S[k, 1] + off * sp - obs_c[o, k, 1]
                d1 = c * dx + s * dy
                d2 = -s * dx + c * dy
                m = d1 * d1 * ia + d2 * d2 * ib
                sm = math.sqrt(m)
                cval[row] = sm - 1.0 - buffer
                if with_jac:
                    if sm > 1e-9:
                        gx = (d1 * ia * c - d2 * ib * s) / sm
                        gy = (d1 * ia * s + d2 * ib * c) / sm
                    else:
                        gx = 0.0
                        gy = 0.0
                    for j in range(n):
                        dpx = dS[k, 0, j] - off * sp * dS[k, 2, j]
                        dpy = dS[k, 1, j] + off * cp * dS[k, 2, j]
                        Jc[row, j] = gx * dpx + gy * dpy
                row += 1


@njit(cache=True)
def _violation(cval):
    tot = 0.0
    worst = 0.0
    for j in range(cval.shape[0]):
        if cval[j] < 0.0:
            tot -= cval[j]
            if -cval[j] > worst:
                worst = -cval[j]
    return tot, worst


@njit(cache=True)
def _hard_rows(u, v0, a_lo, a_hi, d_max, v_max, dt, C, c):
    """Control box and speed bounds linearized at ``u`` (exact, they are linear)."""
    H = u.shape[0] // 2
    C[:, :] = 0.0
    row = 0
    for k in range(H):
        for q in range(2):
            lo = a_lo if q == 0 else -d_max
            hi = a_hi if q == 0 else d_max
            i = 2 * k + q
            C[row, i] = 1.0
            c[row] = u[i] - lo
            C[row + 1, i] = -1.0
            c[row + 1] = hi - u[i]
            row += 2
    v = v0
    for k in range(1, H + 1):
        v += dt * u[2 * (k - 1)]
        for j in range(k):
            C[row, 2 * j] = dt
            C[row + 1, 2 * j] = -dt
        c[row] = v
        c[row + 1] = v_max - v
        row += 2


@njit(cache=True)
def sqp_core(s0, lam0, u, v_ref, weights, knots, cx, cy, w_left, w_right,
             a_lo, a_hi, d_max, v_max, l_r, l_f, dt,
             obs_c, obs_phi, obs_a, obs_b, offsets, use_coll,
             max_iter, kkt_tol, eps_con, buffer,
             S, L, info, log):
    """Run the SQP from the warm start ``u`` (modified in place).

    Returns a status code; ``S``/``L`` receive the final trajectory, ``info``
    the summary values and ``log`` one row per iterate.
    """
    n = u.shape[0]
    H = n // 2
    ltot = knots[-1]
    wsum = 0.0
    for i in range(5):
        wsum += weights[i]
    if wsum <= 0.0:
        wsum = 1.0
    sq = np.sqrt(weights / wsum)
    nr = 3 * (H + 1) + 2 * H
    n_obs = obs_c.shape[0] if use_coll else 0
    ns = 2 * H + n_obs * offsets.shape[0] * H
    nh = 6 * H

    dS = np.zeros((H + 1, 4, n))
    dL = np.zeros((H + 1, n))
    r = np.empty(nr)
    J = np.zeros((nr, n))
    cval = np.empty(ns)
    Jc = np.zeros((ns, n))
    Ch = np.empty((nh, n))
    ch = np.empty(nh)
    St = np.empty_like(S)
    Lt = np.empty_like(L)
    rt = np.empty(nr)
    ct = np.empty(ns)
    d = np.empty(n)
    ut = np.empty(n)
    viol_hist = np.zeros(max_iter + 1)

    # stage 0 is fixed; a current overlap cannot be planned away, so skip iterating
    stage0_overlap = False
    if use_coll:
        for o in range(obs_c.shape[0]):
            for dd in range(offsets.shape[0]):
                px = s0[0] + offsets[dd] * math.cos(s0[2])
                py = s0[1] + offsets[dd] * math.sin(s0[2])
                if ellipse_margin(px, py, obs_c[o, 0, 0], obs_c[o, 0, 1],
                                  obs_phi[o], obs_a[o], obs_b[o]) <= 1.0:
                    stage0_overlap = True
    iters = 0 if stage0_overlap else max_iter

    project_controls(u, s0[3], a_lo, a_hi, d_max, v_max, dt)
    rho = 10.0
    status = ST_MAXITER
    kkt = np.inf
    it = 0
    for it in range(iters + 1):
        rollout(s0, lam0, u, dt, l_r, l_f, ltot, S, L, dS, dL, True)
        residuals(S, L, u, dS, dL, v_ref, sq, knots, cx, cy, r, J, True)
        soft_constraints(S, L, dS, dL, knots, cx, cy, w_left, w_right,
                         obs_c, obs_phi, obs_a, obs_b, offsets, buffer, use_coll, cval, Jc, True)
        f = r @ r
        vsum, vmax = _violation(cval)
        merit = f + rho * vmax
        viol_hist[it] = vmax
        log[it, 0] = it
        log[it, 1] = merit
        log[it, 3] = vmax
        if it == iters:
            log[it, 2] = kkt
            break

        grad = 2.0 * (J.T @ r)
        G = 2.0 * (J.T @ J)
        for i in range(n):
            G[i, i] += REG

        # soft rows that can become active within one step
        inc = np.empty(ns, dtype=np.int64)
        ni = 0
        for j in range(ns):
            if cval[j] < (ROAD_INCLUDE if j < 2 * H else COLLISION_INCLUDE):
                inc[ni] = j
                ni += 1
        _hard_rows(u, s0[3], a_lo, a_hi, d_max, v_max, dt, Ch, ch)

        C = np.empty((nh + ni, n))
        c = np.empty(nh + ni)
        C[:nh] = Ch
        c[:nh] = ch
        for q in range(ni):
            C[nh + q] = Jc[inc[q]]
            c[nh + q] = cval[inc[q]]
        mult = np.empty(nh + ni)
        JG = inverse_cholesky(G).T.copy()
        qs = solve_qp_factored(JG.copy(), grad, C, c, d, mult, 1000, 1e-10)
        mu_soft = np.zeros(ni)
        if qs == QP_INFEASIBLE:
            # elastic mode: one shared slack t >= 0 relaxes every soft row
            ne = n + 1
            Je = np.zeros((ne, ne))
            Je[:n, :n] = JG
            Je[n, n] = 1.0 / math.sqrt(SLACK_HESS)
            ge = np.empty(ne)
            ge[:n] = grad
            ge[n] = rho
            Ce = np.zeros((nh + ni + 1, ne))
            ce = np.zeros(nh + ni + 1)
            Ce[:nh, :n] = Ch
            ce[:nh] = ch
            for q in range(ni):
                Ce[nh + q, :n] = Jc[inc[q]]
                Ce[nh + q, n] = 1.0
                ce[nh + q] = cval[inc[q]]
            Ce[nh + ni, n] = 1.0
            xe = np.empty(ne)
            me = np.empty(nh + ni + 1)
            solve_qp_factored(Je, ge, Ce, ce, xe, me, 2000, 1e-10)
            d[:] = xe[:n]
            for q in range(ni):
                mu_soft[q] = me[nh + q]
        else:
            for q in range(ni):
                mu_soft[q] = mult[nh + q]

        gd = G @ d
        kkt = 0.0
        for i in range(n):
            kkt = max(kkt, abs(gd[i]))
        log[it, 2] = kkt
        if kkt < kkt_tol and vmax < eps_con:
            status = ST_FEASIBLE
            break
        # stalled with a persistent violation
        if it >= 8 and vmax > eps_con and vmax > 0.98 * viol_hist[it - 5]:
            status = ST_INFEASIBLE
            break

        msum = 0.0
        for q in range(ni):
            msum += mu_soft[q]
        rho = min(max(rho, 1.5 * msum), RHO_MAX)
        merit = f + rho * vmax

        # directional derivative of the merit along d (linearized constraints)
        vlin = 0.0
        for q in range(ni):
            vlin = max(vlin, -(cval[inc[q]] + Jc[inc[q]] @ d))
        dmerit = grad @ d + rho * (vlin - vmax)
        if dmerit > -1e-14:
            dmerit = -1e-14
        alpha = 1.0
        accepted = False
        while alpha > 1e-4:
            for i in range(n):
                ut[i] = u[i] + alpha * d[i]
            project_controls(ut, s0[3], a_lo, a_hi, d_max, v_max, dt)
            rollout(s0, lam0, ut, dt, l_r, l_f, ltot, St, Lt, dS, dL, False)
            residuals(St, Lt, ut, dS, dL, v_ref, sq, knots, cx, cy, rt, J, False)
            soft_constraints(St, Lt, dS, dL, knots, cx, cy, w_left, w_right,
                             obs_c, obs_phi, obs_a, obs_b, offsets, buffer, use_coll, ct, Jc, False)
            _, vt = _violation(ct)
            if rt @ rt + rho * vt <= merit + 1e-4 * alpha * dmerit:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            status = ST_INFEASIBLE if vmax > 1e-2 else ST_MAXITER
            if kkt < 1e-4 and vmax < eps_con:
                status = ST_FEASIBLE
            # the trajectory buffers hold the current iterate already
            break
        u[:] = ut

    # final evaluation at the returned iterate
    rollout(s0, lam0, u, dt, l_r, l_f, ltot, S, L, dS, dL, False)
    residuals(S, L, u, dS, dL, v_ref, sq, knots, cx, cy, r, J, False)
    soft_constraints(S, L, dS, dL, knots, cx, cy, w_left, w_right,
                     obs_c, obs_phi, obs_a, obs_b, offsets, buffer, use_coll, cval, Jc, False)
    vsum, vmax = _violation(cval)
    if status != ST_INFEASIBLE and vmax > eps_con:
        status = ST_INFEASIBLE
    if stage0_overlap:
        status = ST_INFEASIBLE
    # the stage-0 cost terms with controls are included; the terminal stage has none
    cost = 0.0
    for i in range(nr):
        cost += r[i] * r[i]
    info[I_ITER] = min(it, max_iter)
    info[I_KKT] = kkt
    info[I_VIOL] = vmax
    info[I_COST] = cost * wsum
    info[I_RHO] = rho
    info[I_MERIT] = cost + rho * vmax
    return status
