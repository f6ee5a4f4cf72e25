"""ADMM inner loops.

Each kernel exists twice: a numba ``@njit`` version with explicit loops and a
plain numpy version. Both run the same iteration; which one the package uses
is decided once at import time:

* ``L1FAULT_DISABLE_NUMBA=1`` forces the numpy path;
* if numba cannot be imported the numpy path is used as well.

All kernels take float64 arrays, mutate their warm-start iterates in place
(``z``/``u``, ``s``/``u2``, or ``lam``/``z`` for the Newton kernel) and return
``(iterations, converged, feasibility_residual)``.

ADMM convergence: ``feasibility <= feas_tol * (1 + ||b||)`` and
``||z_new - z_old|| <= step_tol * (1 + ||z_new||)``.
"""
from __future__ import annotations

import math
import os

import numpy as np

NUMBA_DISABLED_ENV = "L1FAULT_DISABLE_NUMBA"


# -- numpy path ----------------------------------------------------------------


def _soft(t, tau):
    return np.sign(t) * np.maximum(np.abs(t) - tau, 0.0)


def bp_admm_np(P, x_ls, A, b, c, rho, alpha, feas_tol, step_tol, max_iter, z, u):
    """Equality-constrained ``min ||z - c||_1``; x-step is the affine projection ``P v + x_ls``."""
    thresh = 1.0 / rho
    bnorm = 1.0 + np.linalg.norm(b)
    resid = np.inf
    for it in range(1, max_iter + 1):
        x = P @ (z - u) + x_ls
        xh = alpha * x + (1.0 - alpha) * z
        z_old = z.copy()
        z[:] = c + _soft(xh + u - c, thresh)
        u += xh - z
        step = np.linalg.norm(z - z_old)
        if step <= step_tol * (1.0 + np.linalg.norm(z)):
            resid = np.linalg.norm(A @ z - b)
            if resid <= feas_tol * bnorm:
                return it, True, resid
    return max_iter, False, np.linalg.norm(A @ z - b)


def ball_admm_np(Kinv, A, b, radius, c, rho, alpha, feas_tol, step_tol, max_iter, z, u, s, u2):
    """``min ||z - c||_1 s.t. ||A z - b|| <= radius`` with splitting ``x = z``, ``A x = s``."""
    thresh = 1.0 / rho
    bnorm = 1.0 + np.linalg.norm(b)
    viol = np.inf
    for it in range(1, max_iter + 1):
        x = Kinv @ ((z - u) + A.T @ (s - u2))
        Ax = A @ x
        xh = alpha * x + (1.0 - alpha) * z
        sh = alpha * Ax + (1.0 - alpha) * s
        z_old = z.copy()
        z[:] = c + _soft(xh + u - c, thresh)
        w = sh + u2 - b
        wn = np.linalg.norm(w)
        s[:] = b + (w if wn <= radius else w * (radius / wn))
        u += xh - z
        u2 += sh - s
        step = np.linalg.norm(z - z_old)
        if step <= step_tol * (1.0 + np.linalg.norm(z)):
            viol = max(np.linalg.norm(A @ z - b) - radius, 0.0)
            if viol <= feas_tol * bnorm:
                return it, True, viol
    return max_iter, False, max(np.linalg.norm(A @ z - b) - radius, 0.0)


def node_admm_np(P, x_ls, A, b, c, v, q, weight, rho, alpha, feas_tol, step_tol, max_iter, z, u):
    """``min weight*||z - c||_1 + v.z + q/2 ||z||^2 s.t. A z = b``; z-step is the scalar prox."""
    denom = q + rho
    thresh = weight / denom
    bnorm = 1.0 + np.linalg.norm(b)
    resid = np.inf
    for it in range(1, max_iter + 1):
        x = P @ (z - u) + x_ls
        xh = alpha * x + (1.0 - alpha) * z
        z_old = z.copy()
        t = (rho * (xh + u) - v) / denom
        z[:] = c + _soft(t - c, thresh)
        u += xh - z
        step = np.linalg.norm(z - z_old)
        if step <= step_tol * (1.0 + np.linalg.norm(z)):
            resid = np.linalg.norm(A @ z - b) if A.shape[0] else 0.0
            if resid <= feas_tol * bnorm:
                return it, True, resid
    return max_iter, False, (np.linalg.norm(A @ z - b) if A.shape[0] else 0.0)


def _node_dual_value(C, y, c, v, q, weight, lam, z):
    """Dual function value at ``lam``; writes the primal minimiser into ``z``."""
    t = (C.T @ lam - v) / q
    z[:] = c + _soft(t - c, weight / q)
    return weight * np.abs(z - c).sum() + v @ z + 0.5 * q * z @ z + lam @ (y - C @ z)


def node_newton_np(C, y, c, v, q, weight, feas_tol, max_iter, lam, z):
    """Semismooth Newton ascent on the dual of the per-node problem.

    Columns that no constraint row touches are set in closed form; the
    Newton iteration runs on the remaining ones only.
    """
    used = np.any(C != 0.0, axis=0)
    free = ~used
    z[free] = c[free] + _soft(-v[free] / q - c[free], weight / q)
    zk = np.ascontiguousarray(z[used])
    out = _newton_dense_np(np.ascontiguousarray(C[:, used]), y, c[used], v[used], q, weight,
                           feas_tol, max_iter, lam, zk)
    z[used] = zk
    return out


def _newton_dense_np(C, y, c, v, q, weight, feas_tol, max_iter, lam, z):
    """Newton iteration of :func:`node_newton_np` on the constrained columns.

    For fixed multipliers ``lam`` the primal minimiser is the closed-form
    prox ``z = c + soft((C^T lam - v)/q - c, weight/q)``; the dual gradient is
    ``y - C z`` and its generalised Hessian is ``-C D C^T / q`` with ``D`` the
    indicator of coordinates outside the dead zone. ``C`` must have
    independent rows.
    """
    p = C.shape[0]
    thresh = weight / q
    bnorm = 1.0 + np.linalg.norm(y)
    g = _node_dual_value(C, y, c, v, q, weight, lam, z)
    if p == 0:
        return 0, True, 0.0
    scale = np.abs(C).max() ** 2 / q
    reg = 1e-12 * (1.0 + scale)
    z_try = np.empty_like(z)
    for it in range(1, max_iter + 1):
        grad = y - C @ z
        resid = np.linalg.norm(grad)
        if resid <= feas_tol * bnorm:
            return it - 1, True, resid
        t = (C.T @ lam - v) / q - c
        act = (np.abs(t) > thresh).astype(np.float64)
        # regularisation ~ residual keeps steps bounded where H is singular
        H = (C * act) @ C.T / q + (reg + scale * resid) * np.eye(p)
        try:
            d = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            d = grad
        slope = grad @ d
        if slope <= 0.0:
            d, slope = grad, grad @ grad
        step = 1.0
        accepted = False
        for _ in range(60):
            lam_try = lam + step * d
            g_try = _node_dual_value(C, y, c, v, q, weight, lam_try, z_try)
            # near the optimum the dual gain drops below rounding, so allow that much slack
            slack = 1e-13 * (1.0 + abs(g))
            if g_try >= g + 1e-4 * step * slope - slack or np.linalg.norm(y - C @ z_try) <= 0.5 * resid:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # no ascent possible in floating point: accept the current point
            return it, resid <= 10.0 * feas_tol * bnorm, resid
        lam[:] = lam_try
        z[:] = z_try
        g = g_try
    resid = np.linalg.norm(y - C @ z)
    return max_iter, resid <= feas_tol * bnorm, resid


def make_dbp_rounds(newton):
    """Build the all-rounds loop of the distributed estimator around a node solver.

    Array layout (``M`` nodes, state dimension ``q``):

    * ``Cs[i, :rows[i]]`` / ``ys[i, :rows[i]]`` -- node ``i``'s independent rows;
    * ``nbr[i, :deg[i]]`` -- sorted neighbour indices (0-based);
    * ``order_one`` / ``order_two`` -- node indices of the two classes;
    * ``chi``, ``mu`` (M x q) and ``lam`` (M x max rows) are updated in place.

    Returns ``(rounds, converged, failed_node)`` with ``failed_node = -1`` on
    success. The arithmetic mirrors the mailbox implementation operation by
    operation.
    """

    def dbp_rounds(Cs, ys, rows, shifts, nbr, deg, order_one, order_two, zeta, weight,
                   feas_tol, max_iter, lmax, stop_tol, early_stop, chi, mu, lam):
        M, q = chi.shape
        before = np.empty_like(chi)
        fresh = np.empty_like(chi)
        nsum = np.empty(q)
        v = np.empty(q)
        z = np.empty(q)
        acc = np.empty(q)
        L = 1
        converged = False
        while L < lmax:
            before[:, :] = chi
            for order in (order_one, order_two):
                for i in order:
                    nsum[:] = 0.0
                    for t in range(deg[i]):
                        nsum += chi[nbr[i, t]]
                    v[:] = mu[i] - zeta * nsum
                    r = rows[i]
                    it, ok, res = newton(Cs[i, :r], ys[i, :r], shifts[i], v, deg[i] * zeta, weight,
                                         feas_tol, max_iter, lam[i, :r], z)
                    if not ok:
                        return L, False, i
                    fresh[i] = z
                for i in order:
                    chi[i] = fresh[i]
            for i in range(M):
                acc[:] = 0.0
                for t in range(deg[i]):
                    acc += chi[i] - chi[nbr[i, t]]
                mu[i] = mu[i] + zeta * acc
            L += 1
            if early_stop:
                moved = 0.0
                spread = 0.0
                for j in range(q):
                    lo = chi[0, j]
                    hi = chi[0, j]
                    for i in range(M):
                        moved = max(moved, abs(chi[i, j] - before[i, j]))
                        lo = min(lo, chi[i, j])
                        hi = max(hi, chi[i, j])
                    spread = max(spread, hi - lo)
                worst = 0.0
                for i in range(M):
                    for a in range(rows[i]):
                        worst = max(worst, abs(Cs[i, a] @ chi[i] - ys[i, a]))
                if moved <= stop_tol and spread <= stop_tol and worst <= stop_tol:
                    converged = True
                    break
        return L, converged, -1

    return dbp_rounds


dbp_rounds_np = make_dbp_rounds(node_newton_np)


# -- numba path ------------------------------------------------------------------


def _build_numba():
    from numba import njit

    @njit(cache=True, inline="always")
    def soft(t, tau):
        if t > tau:
            return t - tau
        if t < -tau:
            return t + tau
        return 0.0

    @njit(cache=True)
    def residual(A, b, z):
        p, q = A.shape
        acc = 0.0
        for r in range(p):
            s = -b[r]
            for j in range(q):
                s += A[r, j] * z[j]
            acc += s * s
        return math.sqrt(acc)

    @njit(cache=True)
    def norm(v):
        acc = 0.0
        for j in range(v.shape[0]):
            acc += v[j] * v[j]
        return math.sqrt(acc)

    @njit(cache=True)
    def bp_admm(P, x_ls, A, b, c, rho, alpha, feas_tol, step_tol, max_iter, z, u):
        n = z.shape[0]
        thresh = 1.0 / rho
        bnorm = 1.0 + norm(b)
        w = np.empty(n)
        for it in range(1, max_iter + 1):
            for j in range(n):
                w[j] = z[j] - u[j]
            step2 = 0.0
            znorm2 = 0.0
            for i in range(n):
                x = x_ls[i]
                for j in range(n):
                    x += P[i, j] * w[j]
                xh = alpha * x + (1.0 - alpha) * z[i]
                zi = c[i] + soft(xh + u[i] - c[i], thresh)
                d = zi - z[i]
                step2 += d * d
                znorm2 += zi * zi
                u[i] += xh - zi
                z[i] = zi
            if math.sqrt(step2) <= step_tol * (1.0 + math.sqrt(znorm2)):
                resid = residual(A, b, z)
                if resid <= feas_tol * bnorm:
                    return it, True, resid
        return max_iter, False, residual(A, b, z)

    @njit(cache=True)
    def ball_admm(Kinv, A, b, radius, c, rho, alpha, feas_tol, step_tol, max_iter, z, u, s, u2):
        p, n = A.shape
        thresh = 1.0 / rho
        bnorm = 1.0 + norm(b)
        rhs = np.empty(n)
        x = np.empty(n)
        w = np.empty(p)
        for it in range(1, max_iter + 1):
            for j in range(n):
                rhs[j] = z[j] - u[j]
            for r in range(p):
                sr = s[r] - u2[r]
                for j in range(n):
                    rhs[j] += A[r, j] * sr
            for i in range(n):
                acc = 0.0
                for j in range(n):
                    acc += Kinv[i, j] * rhs[j]
                x[i] = acc
            wn2 = 0.0
            for r in range(p):
                ax = 0.0
                for j in range(n):
                    ax += A[r, j] * x[j]
                sh = alpha * ax + (1.0 - alpha) * s[r]
                w[r] = sh + u2[r] - b[r]
                wn2 += w[r] * w[r]
                u2[r] += sh  # completed below once s is known
            wn = math.sqrt(wn2)
            scale = 1.0 if wn <= radius else radius / wn
            for r in range(p):
                s[r] = b[r] + w[r] * scale
                u2[r] -= s[r]
            step2 = 0.0
            znorm2 = 0.0
            for i in range(n):
                xh = alpha * x[i] + (1.0 - alpha) * z[i]
                zi = c[i] + soft(xh + u[i] - c[i], thresh)
                d = zi - z[i]
                step2 += d * d
                znorm2 += zi * zi
                u[i] += xh - zi
                z[i] = zi
            if math.sqrt(step2) <= step_tol * (1.0 + math.sqrt(znorm2)):
                viol = max(residual(A, b, z) - radius, 0.0)
                if viol <= feas_tol * bnorm:
                    return it, True, viol
        return max_iter, False, max(residual(A, b, z) - radius, 0.0)

    @njit(cache=True)
    def node_admm(P, x_ls, A, b, c, v, q, weight, rho, alpha, feas_tol, step_tol, max_iter, z, u):
        n = z.shape[0]
        denom = q + rho
        thresh = weight / denom
        bnorm = 1.0 + norm(b)
        w = np.empty(n)
        for it in range(1, max_iter + 1):
            for j in range(n):
                w[j] = z[j] - u[j]
            step2 = 0.0
            znorm2 = 0.0
            for i in range(n):
                x = x_ls[i]
                for j in range(n):
                    x += P[i, j] * w[j]
                xh = alpha * x + (1.0 - alpha) * z[i]
                t = (rho * (xh + u[i]) - v[i]) / denom
                zi = c[i] + soft(t - c[i], thresh)
                d = zi - z[i]
                step2 += d * d
                znorm2 += zi * zi
                u[i] += xh - zi
                z[i] = zi
            if math.sqrt(step2) <= step_tol * (1.0 + math.sqrt(znorm2)):
                resid = residual(A, b, z)
                if resid <= feas_tol * bnorm:
                    return it, True, resid
        return max_iter, False, residual(A, b, z)

    @njit(cache=True)
    def dual_value(C, y, c, v, q, weight, lam, z):
        p, n = C.shape
        thresh = weight / q
        val = 0.0
        for j in range(n):
            t = -v[j]
            for r in range(p):
                t += C[r, j] * lam[r]
            t = t / q
            zj = c[j] + soft(t - c[j], thresh)
            z[j] = zj
            val += weight * abs(zj - c[j]) + v[j] * zj + 0.5 * q * zj * zj
        for r in range(p):
            s = y[r]
            for j in range(n):
                s -= C[r, j] * z[j]
            val += lam[r] * s
        return val

    @njit(cache=True)
    def chol_solve(H, g, d):
        """Solve ``H d = g`` for SPD ``H`` (overwritten by its Cholesky factor)."""
        p = H.shape[0]
        for j in range(p):
            s = H[j, j]
            for t in range(j):
                s -= H[j, t] * H[j, t]
            if not s > 0.0:
                return False
            s = math.sqrt(s)
            H[j, j] = s
            for i in range(j + 1, p):
                a = H[i, j]
                for t in range(j):
                    a -= H[i, t] * H[j, t]
                H[i, j] = a / s
        for i in range(p):
            a = g[i]
            for t in range(i):
                a -= H[i, t] * d[t]
            d[i] = a / H[i, i]
        for i in range(p - 1, -1, -1):
            a = d[i]
            for t in range(i + 1, p):
                a -= H[t, i] * d[t]
            d[i] = a / H[i, i]
        return True

    @njit(cache=True)
    def node_newton(C, y, c, v, q, weight, feas_tol, max_iter, lam, z):
        p, n = C.shape
        thresh = weight / q
        cols = np.empty(n, np.int64)
        k = 0
        for j in range(n):
            used = False
            for r in range(p):
                if C[r, j] != 0.0:
                    used = True
                    break
            if used:
                cols[k] = j
                k += 1
            else:
                z[j] = c[j] + soft(-v[j] / q - c[j], thresh)
        Ck = np.empty((p, k))
        ck = np.empty(k)
        vk = np.empty(k)
        zk = np.empty(k)
        for a in range(k):
            j = cols[a]
            ck[a] = c[j]
            vk[a] = v[j]
            zk[a] = z[j]
            for r in range(p):
                Ck[r, a] = C[r, j]
        out = newton_dense(Ck, y, ck, vk, q, weight, feas_tol, max_iter, lam, zk)
        for a in range(k):
            z[cols[a]] = zk[a]
        return out

    @njit(cache=True)
    def newton_dense(C, y, c, v, q, weight, feas_tol, max_iter, lam, z):
        p, n = C.shape
        thresh = weight / q
        bnorm = 1.0 + norm(y)
        g = dual_value(C, y, c, v, q, weight, lam, z)
        if p == 0:
            return 0, True, 0.0
        cmax = 0.0
        for r in range(p):
            for j in range(n):
                cmax = max(cmax, abs(C[r, j]))
        scale = cmax * cmax / q
        reg = 1e-12 * (1.0 + scale)
        grad = np.empty(p)
        d = np.empty(p)
        H = np.empty((p, p))
        act = np.empty(n)
        z_try = np.empty(n)
        lam_try = np.empty(p)
        for it in range(1, max_iter + 1):
            for r in range(p):
                s = y[r]
                for j in range(n):
                    s -= C[r, j] * z[j]
                grad[r] = s
            resid = norm(grad)
            if resid <= feas_tol * bnorm:
                return it - 1, True, resid
            for j in range(n):
                t = -v[j]
                for r in range(p):
                    t += C[r, j] * lam[r]
                act[j] = 1.0 if abs(t / q - c[j]) > thresh else 0.0
            for a in range(p):
                for b in range(p):
                    acc = 0.0
                    for j in range(n):
                        acc += C[a, j] * act[j] * C[b, j]
                    H[a, b] = acc / q
                H[a, a] += reg + scale * resid
            if not chol_solve(H, grad, d):
                for r in range(p):
                    d[r] = grad[r]
            slope = 0.0
            for r in range(p):
                slope += grad[r] * d[r]
            if not slope > 0.0:
                for r in range(p):
                    d[r] = grad[r]
                slope = resid * resid
            step = 1.0
            accepted = False
            g_try = g
            for _ in range(60):
                for r in range(p):
                    lam_try[r] = lam[r] + step * d[r]
                g_try = dual_value(C, y, c, v, q, weight, lam_try, z_try)
                slack = 1e-13 * (1.0 + abs(g))
                if g_try >= g + 1e-4 * step * slope - slack or residual(C, y, z_try) <= 0.5 * resid:
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                return it, resid <= 10.0 * feas_tol * bnorm, resid
            for r in range(p):
                lam[r] = lam_try[r]
            for j in range(n):
                z[j] = z_try[j]
            g = g_try
        resid = residual(C, y, z)
        return max_iter, resid <= feas_tol * bnorm, resid

    dbp_rounds = njit(cache=True)(make_dbp_rounds(node_newton))
    return bp_admm, ball_admm, node_admm, node_newton, dbp_rounds


def numba_requested() -> bool:
    return os.environ.get(NUMBA_DISABLED_ENV, "").strip().lower() not in ("1", "true", "yes", "on")


bp_admm_nb = ball_admm_nb = node_admm_nb = node_newton_nb = dbp_rounds_nb = None
if numba_requested():
    try:
        bp_admm_nb, ball_admm_nb, node_admm_nb, node_newton_nb, dbp_rounds_nb = _build_numba()
    except ImportError:  # pragma: no cover - numba is an optional accelerator
        pass

USING_NUMBA = bp_admm_nb is not None
bp_admm = bp_admm_nb if USING_NUMBA else bp_admm_np
ball_admm = ball_admm_nb if USING_NUMBA else ball_admm_np
node_admm = node_admm_nb if USING_NUMBA else node_admm_np
node_newton = node_newton_nb if USING_NUMBA else node_newton_np
dbp_rounds = dbp_rounds_nb if USING_NUMBA else dbp_rounds_np
