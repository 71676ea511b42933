"""Dense convex QP solver (Goldfarb-Idnani dual active set).

Solves ``min 0.5 x'Gx + g'x  s.t.  C x + c >= 0`` for positive definite G.
The dual method starts at the unconstrained minimizer and adds violated
constraints one at a time, so it needs no feasible starting point and
detects infeasibility when a violated constraint cannot be made active.

The factorization ``J' N = [R; 0]`` with ``J = L^-T`` (``G = L L'``) and the
active normals ``N`` is updated by Givens rotations, so adding or dropping
a constraint costs O(n^2).
"""
from __future__ import annotations

import numpy as np
from numba import njit

QP_OK = 0
QP_INFEASIBLE = 1
QP_MAXITER = 2


@njit(cache=True)
def inverse_cholesky(G):
    """``L^-1`` for the Cholesky factor of symmetric positive definite G.

    Pivots are floored relative to the largest diagonal entry so a nearly
    singular Hessian still yields a usable (regularized) factor.
    """
    n = G.shape[0]
    L = np.zeros((n, n))
    dmax = 0.0
    for i in range(n):
        dmax = max(dmax, G[i, i])
    floor = 1e-14 * max(dmax, 1e-300)
    for j in range(n):
        s = G[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if s < floor:
            s = floor
        L[j, j] = np.sqrt(s)
        for i in range(j + 1, n):
            s = G[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / L[j, j]
    Li = np.zeros((n, n))
    for j in range(n):
        Li[j, j] = 1.0 / L[j, j]
        for i in range(j + 1, n):
            s = 0.0
            for k in range(j, i):
                s -= L[i, k] * Li[k, j]
            Li[i, j] = s / L[i, i]
    return Li


@njit(cache=True)
def inverse_spd(G):
    Li = inverse_cholesky(G)
    return Li.T @ Li


@njit(cache=True)
def _rotate_cols(J, a, b, c, s):
    for i in range(J.shape[0]):
        x = J[i, a]
        y = J[i, b]
        J[i, a] = c * x + s * y
        J[i, b] = -s * x + c * y


@njit(cache=True)
def _drop(J, R, active, u, q, k):
    """Remove active constraint ``k`` and retriangularize R."""
    for j in range(k, q - 1):
        active[j] = active[j + 1]
        u[j] = u[j + 1]
        for i in range(q):
            R[i, j] = R[i, j + 1]
    for i in range(q):
        R[i, q - 1] = 0.0
    for j in range(k, q - 1):
        a = R[j, j]
        b = R[j + 1, j]
        h = np.hypot(a, b)
        if h == 0.0:
            continue
        c = a / h
        s = b / h
        for col in range(j, q - 1):
            x = R[j, col]
            y = R[j + 1, col]
            R[j, col] = c * x + s * y
            R[j + 1, col] = -s * x + c * y
        R[j + 1, j] = 0.0
        _rotate_cols(J, j, j + 1, c, s)
    return q - 1


@njit(cache=True)
def solve_qp(G, g, C, c, x, mult, max_iter=1000, tol=1e-10):
    """Solve the QP in place.

    ``x`` receives the primal solution and ``mult`` (length ``C.shape[0]``)
    the constraint multipliers. Returns a status code: ``QP_OK``,
    ``QP_INFEASIBLE`` or ``QP_MAXITER``.
    """
    J = inverse_cholesky(G).T.copy()
    return solve_qp_factored(J, g, C, c, x, mult, max_iter, tol)


@njit(cache=True)
def solve_qp_factored(J, g, C, c, x, mult, max_iter=1000, tol=1e-10):
    """:func:`solve_qp` given ``J = L^-T`` for ``G = L L'``; J is overwritten."""
    n = J.shape[0]
    m = C.shape[0]
    x[:] = -(J @ (J.T @ g))
    mult[:] = 0.0
    if m == 0:
        return QP_OK

    norms = np.empty(m)
    for j in range(m):
        s = 0.0
        for i in range(n):
            s += C[j, i] * C[j, i]
        norms[j] = max(np.sqrt(s), 1e-300)

    R = np.zeros((n, n))
    active = np.empty(n, dtype=np.int64)
    u = np.zeros(n + 1)
    in_active = np.zeros(m, dtype=np.bool_)
    d = np.empty(n)
    z = np.empty(n)
    r = np.empty(n)
    q = 0
    status = QP_MAXITER
    steps = 0
    while steps < max_iter:
        p = -1
        worst = -tol
        for j in range(m):
            if not in_active[j]:
                val = (C[j] @ x + c[j]) / norms[j]
                if val < worst:
                    worst = val
                    p = j
        if p < 0:
            status = QP_OK
            break
        npv = C[p]
        up = 0.0
        added = False
        while steps < max_iter:
            steps += 1
            d[:] = J.T @ npv
            # primal direction from the inactive part of the basis
            z[:] = 0.0
            for k in range(q, n):
                if d[k] != 0.0:
                    for i in range(n):
                        z[i] += J[i, k] * d[k]
            # dual direction: back substitution with R
            for i in range(q - 1, -1, -1):
                s = d[i]
                for k in range(i + 1, q):
                    s -= R[i, k] * r[k]
                r[i] = s / R[i, i]
            t1 = np.inf
            kdrop = -1
            for j in range(q):
                if r[j] > 1e-14:
                    ratio = u[j] / r[j]
                    if ratio < t1:
                        t1 = ratio
                        kdrop = j
            zz = z @ npv
            # z vanishes when n_p depends linearly on the active normals
            if zz > 1e-12 * (d @ d):
                t2 = -(npv @ x + c[p]) / zz
            else:
                t2 = np.inf
            t = min(t1, t2)
            if t == np.inf:
                return QP_INFEASIBLE
            if t2 != np.inf:
                x += t * z
            for j in range(q):
                u[j] -= t * r[j]
            up += t
            if t2 <= t1:
                # add p: rotate d so that only its first q+1 entries remain
                for k in range(n - 1, q, -1):
                    a = d[k - 1]
                    b = d[k]
                    if b == 0.0:
                        continue
                    h = np.hypot(a, b)
                    cr = a / h
                    sr = b / h
                    d[k - 1] = h
                    d[k] = 0.0
                    _rotate_cols(J, k - 1, k, cr, sr)
                for i in range(q + 1):
                    R[i, q] = d[i]
                active[q] = p
                u[q] = up
                in_active[p] = True
                q += 1
                added = True
                break
            in_active[active[kdrop]] = False
            q = _drop(J, R, active, u, q, kdrop)
        if not added:
            break
    for j in range(q):
        mult[active[j]] = u[j]
    return status
