"""Compiled ADMM kernel for small dense strictly convex QPs.

Solves ``min 1/2 x'Px + q'x  s.t.  l <= Gx <= u`` with the alternating
direction method of multipliers in the splitting ``z = Gx``, followed by an
active-set polish that solves the reduced KKT system directly.

Every routine is a pure function of its arguments so results never depend
on which thread runs them.
"""

import numpy as np
from numba import njit

INFTY = 1e20

STATUS_SOLVED = 0
STATUS_MAX_ITER = 1
STATUS_INFEASIBLE = 2

RHO_MIN = 1e-6
RHO_MAX = 1e6
RHO_EQ_FACTOR = 1e3
SIGMA = 1e-6
ALPHA = 1.6
CHECK_EVERY = 5
POLISH_DELTA = 1e-10
POLISH_REFINE = 8
EPS_PINF = 1e-6
ADAPT_GAP0 = 10


@njit(cache=True, nogil=True)
def _cholesky_solve(L, b):
    n = b.shape[0]
    y = np.empty(n)
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * y[k]
        y[i] = s / L[i, i]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, n):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]
    return x


@njit(cache=True, nogil=True)
def _factor(P, G, rho):
    n = P.shape[0]
    m = G.shape[0]
    K = P.copy()
    for i in range(n):
        K[i, i] += SIGMA
    for j in range(m):
        r = rho[j]
        for a in range(n):
            ga = G[j, a]
            if ga == 0.0:
                continue
            for b in range(n):
                K[a, b] += r * ga * G[j, b]
    return np.linalg.cholesky(K)


@njit(cache=True, nogil=True)
def _inf_norm(v):
    s = 0.0
    for i in range(v.shape[0]):
        a = abs(v[i])
        if a > s:
            s = a
    return s


@njit(cache=True, nogil=True)
def _set_rho(rho, rho_bar, is_eq, free_row):
    for j in range(rho.shape[0]):
        if free_row[j]:
            rho[j] = RHO_MIN
        elif is_eq[j]:
            rho[j] = RHO_EQ_FACTOR * rho_bar
        else:
            rho[j] = rho_bar


@njit(cache=True, nogil=True)
def _kkt_residuals(P, q, G, l, u, x, y):
    """Absolute primal violation and relative dual residual."""
    m = G.shape[0]
    Gx = G @ x
    prim = 0.0
    for j in range(m):
        v = 0.0
        if Gx[j] < l[j]:
            v = l[j] - Gx[j]
        elif Gx[j] > u[j]:
            v = Gx[j] - u[j]
        if v > prim:
            prim = v
    Px = P @ x
    Gty = G.T @ y
    d = Px + q + Gty
    dual_scale = max(1.0, max(_inf_norm(Px), max(_inf_norm(q), _inf_norm(Gty))))
    return prim, _inf_norm(d) / dual_scale


@njit(cache=True, nogil=True)
def _polish(P, q, G, l, u, z, y, is_eq, tol):
    """Solve the equality-constrained KKT system on the guessed active set.

    Returns (ok, x, y_full, prim_res, dual_res).
    """
    n = P.shape[0]
    m = G.shape[0]
    side = np.zeros(m, dtype=np.int64)  # -1 lower, +1 upper, 2 equality
    na = 0
    for j in range(m):
        if is_eq[j]:
            side[j] = 2
            na += 1
        elif z[j] - l[j] < -y[j]:
            side[j] = -1
            na += 1
        elif u[j] - z[j] < y[j]:
            side[j] = 1
            na += 1
    rows = np.empty(na, dtype=np.int64)
    b = np.empty(na)
    k = 0
    for j in range(m):
        if side[j] != 0:
            rows[k] = j
            b[k] = u[j] if side[j] == 1 else l[j]
            k += 1
    dim = n + na
    K = np.zeros((dim, dim))
    Kreg = np.zeros((dim, dim))
    for a in range(n):
        for c in range(n):
            K[a, c] = P[a, c]
    for k in range(na):
        j = rows[k]
        for a in range(n):
            K[n + k, a] = G[j, a]
            K[a, n + k] = G[j, a]
    for a in range(dim):
        for c in range(dim):
            Kreg[a, c] = K[a, c]
    for a in range(n):
        Kreg[a, a] += POLISH_DELTA
    for k in range(na):
        Kreg[n + k, n + k] -= POLISH_DELTA
    rhs = np.empty(dim)
    for a in range(n):
        rhs[a] = -q[a]
    for k in range(na):
        rhs[n + k] = b[k]
    Kinv = np.linalg.inv(Kreg)
    w = Kinv @ rhs
    for _ in range(POLISH_REFINE):
        r = rhs - K @ w
        if _inf_norm(r) <= 1e-15 * (1.0 + _inf_norm(rhs)):
            break
        w = w + Kinv @ r
    x = w[:n].copy()
    yf = np.zeros(m)
    for k in range(na):
        yf[rows[k]] = w[n + k]
    ok = True
    for i in range(dim):
        if not np.isfinite(w[i]):
            ok = False
    # multiplier signs must match the side each row is pinned to
    ysc = max(1.0, _inf_norm(yf))
    for k in range(na):
        j = rows[k]
        if side[j] == -1 and yf[j] > tol * ysc:
            ok = False
        if side[j] == 1 and yf[j] < -tol * ysc:
            ok = False
    prim, dual = _kkt_residuals(P, q, G, l, u, x, yf)
    if prim > tol or dual > tol:
        ok = False
    return ok, x, yf, prim, dual


@njit(cache=True, nogil=True)
def admm_solve(H, f, G, l, u, qp_tol, max_iter, rho0, polish, merit):
    """Minimise ``x'Hx + 2 f'x`` subject to ``l <= Gx <= u``.

    ``merit`` is a preallocated buffer; when its length is at least
    ``max_iter`` the relaxed fixed-point residual of every iteration is
    written into it (NaN marks iterations where the penalty was refactored).

    Returns ``(x, y, iterations, prim_res, dual_res, status, polished)``
    where ``y`` are multipliers for ``Hx + f + G'y = 0``.
    """
    n = H.shape[0]
    m = G.shape[0]

    # cost normalisation and row equilibration
    hn = 0.0
    for a in range(n):
        s = 0.0
        for c in range(n):
            s += abs(H[a, c])
        if s > hn:
            hn = s
    cs = 1.0 / hn if hn > 0.0 else 1.0
    cs = min(max(cs, 1e-10), 1e10)
    P = H * cs
    q = f * cs
    Gs = np.empty((m, n))
    ls = np.empty(m)
    us = np.empty(m)
    rs = np.ones(m)
    is_eq = np.zeros(m, dtype=np.bool_)
    free_row = np.zeros(m, dtype=np.bool_)
    for j in range(m):
        r = 0.0
        for a in range(n):
            if abs(G[j, a]) > r:
                r = abs(G[j, a])
        lo = max(l[j], -INFTY)
        hi = min(u[j], INFTY)
        if r == 0.0:
            if lo > 0.0 or hi < 0.0:
                return (np.zeros(n), np.zeros(m), 0, np.inf, np.inf,
                        STATUS_INFEASIBLE, False)
            r = 1.0
        rs[j] = r
        for a in range(n):
            Gs[j, a] = G[j, a] / r
        ls[j] = lo / r if lo > -INFTY else -INFTY
        us[j] = hi / r if hi < INFTY else INFTY
        if ls[j] > us[j]:
            return (np.zeros(n), np.zeros(m), 0, np.inf, np.inf,
                    STATUS_INFEASIBLE, False)
        if us[j] - ls[j] <= 1e-10 * (1.0 + abs(ls[j])):
            is_eq[j] = True
        if ls[j] <= -INFTY and us[j] >= INFTY:
            free_row[j] = True

    record = merit.shape[0] >= max_iter
    rho_bar = rho0
    rho = np.empty(m)
    _set_rho(rho, rho_bar, is_eq, free_row)
    L = _factor(P, Gs, rho)

    x = np.zeros(n)
    z = np.zeros(m)
    for j in range(m):
        z[j] = min(max(0.0, ls[j]), us[j])
    y = np.zeros(m)
    y_prev = np.zeros(m)

    eps = 1e-4
    status = STATUS_MAX_ITER
    polished = False
    x_out = x.copy()
    y_out = y.copy()
    prim_out = np.inf
    dual_out = np.inf
    refactored = False
    last_adapt = 0
    adapt_gap = ADAPT_GAP0
    it = 0
    for it in range(1, max_iter + 1):
        v = rho * z - y
        rhs = SIGMA * x - q + Gs.T @ v
        xt = _cholesky_solve(L, rhs)
        zt = Gs @ xt
        x_new = ALPHA * xt + (1.0 - ALPHA) * x
        zh = ALPHA * zt + (1.0 - ALPHA) * z
        z_new = np.empty(m)
        for j in range(m):
            w = zh[j] + y[j] / rho[j]
            z_new[j] = min(max(w, ls[j]), us[j])
        y_prev[:] = y
        y_new = y + rho * (zh - z_new)
        if record:
            if refactored:
                merit[it - 1] = np.nan
            else:
                acc = 0.0
                for a in range(n):
                    d = x_new[a] - x[a]
                    acc += SIGMA * d * d
                for j in range(m):
                    d = (z_new[j] - z[j]) + (y_new[j] - y[j]) / rho[j]
                    acc += rho[j] * d * d
                merit[it - 1] = np.sqrt(acc)
        refactored = False
        x = x_new
        z = z_new
        y = y_new

        if it % CHECK_EVERY != 0 and it != max_iter:
            continue

        Gx = Gs @ x
        Px = P @ x
        Gty = Gs.T @ y
        r_p = _inf_norm(Gx - z)
        r_d = _inf_norm(Px + q + Gty)
        sc_p = max(_inf_norm(Gx), _inf_norm(z))
        sc_d = max(_inf_norm(Px), max(_inf_norm(Gty), _inf_norm(q)))
        if r_p <= eps * (1.0 + sc_p) and r_d <= eps * (1.0 + sc_d):
            if polish:
                ok, xp, yp, pp, dp = _polish(P, q, Gs, ls, us, z, y, is_eq, qp_tol)
                if ok:
                    x_out = xp
                    y_out = yp
                    prim_out = pp
                    dual_out = dp
                    status = STATUS_SOLVED
                    polished = True
                    break
            pr, dr = _kkt_residuals(P, q, Gs, ls, us, x, y)
            if pr <= qp_tol and dr <= qp_tol:
                x_out = x.copy()
                y_out = y.copy()
                prim_out = pr
                dual_out = dr
                status = STATUS_SOLVED
                break
            eps = max(eps * 0.1, 0.1 * qp_tol)

        # primal infeasibility certificate from the dual increment
        dy = y - y_prev
        ndy = _inf_norm(dy)
        if ndy > 1e-12:
            cert = _inf_norm(Gs.T @ dy) <= EPS_PINF * ndy
            if cert:
                acc = 0.0
                for j in range(m):
                    if dy[j] > EPS_PINF * ndy:
                        if us[j] >= INFTY:
                            cert = False
                            break
                        acc += us[j] * dy[j]
                    elif dy[j] < -EPS_PINF * ndy:
                        if ls[j] <= -INFTY:
                            cert = False
                            break
                        acc += ls[j] * dy[j]
                if cert and acc < -EPS_PINF * ndy:
                    status = STATUS_INFEASIBLE
                    x_out = x.copy()
                    y_out = y.copy()
                    break

        # residual balancing of the penalty parameter; the interval between
        # updates doubles so that rho is eventually fixed
        if r_d > 0.0 and r_p > 0.0 and it - last_adapt >= adapt_gap:
            ratio = np.sqrt((r_p / (sc_p + 1e-30)) / (r_d / (sc_d + 1e-30)))
            if ratio > 5.0 or ratio < 0.2:
                new_bar = min(max(rho_bar * ratio, RHO_MIN), RHO_MAX)
                if new_bar != rho_bar:
                    rho_bar = new_bar
                    _set_rho(rho, rho_bar, is_eq, free_row)
                    L = _factor(P, Gs, rho)
                    refactored = True
                    last_adapt = it
                    adapt_gap *= 2

    if status == STATUS_MAX_ITER:
        x_out = x.copy()
        y_out = y.copy()
        prim_out, dual_out = _kkt_residuals(P, q, Gs, ls, us, x, y)
    elif status == STATUS_INFEASIBLE:
        prim_out, dual_out = _kkt_residuals(P, q, Gs, ls, us, x, y)

    y_orig = np.empty(m)
    for j in range(m):
        y_orig[j] = y_out[j] / (rs[j] * cs)
    return x_out, y_orig, it, prim_out, dual_out, status, polished


@njit(cache=True, nogil=True)
def admm_solve_many(H, F, G, L, U, qp_tol, max_iter, rho0, polish):
    """Solve a stack of problems sharing ``H``; ``G``, ``L``, ``U`` are stacked
    along axis 0 (same row count) and ``F`` holds one linear term per row.
    """
    k = F.shape[0]
    n = H.shape[0]
    m = G.shape[1]
    X = np.empty((k, n))
    Y = np.empty((k, m))
    iters = np.empty(k, dtype=np.int64)
    prim = np.empty(k)
    dual = np.empty(k)
    status = np.empty(k, dtype=np.int64)
    pol = np.empty(k, dtype=np.bool_)
    merit = np.empty(0)
    for i in range(k):
        x, y, it, pr, dr, st, po = admm_solve(H, F[i], G[i], L[i], U[i], qp_tol,
                                              max_iter, rho0, polish, merit)
        X[i] = x
        Y[i] = y
        iters[i] = it
        prim[i] = pr
        dual[i] = dr
        status[i] = st
        pol[i] = po
    return X, Y, iters, prim, dual, status, pol


@njit(cache=True, nogil=True)
def _budget_sum(h, f, lo, hi, b, nu):
    s = 0.0
    for j in range(h.shape[0]):
        x = (-f[j] - nu * b[j]) / h[j]
        s += b[j] * min(max(x, lo[j]), hi[j])
    return s


@njit(cache=True, nogil=True)
def budget_solve(h, f, lo, hi, b, gamma):
    """Exact minimiser of ``sum h_j x_j^2 + 2 f'x`` over ``lo <= x <= hi, b'x = gamma``.

    With multiplier ``nu`` on the budget row, ``x(nu) = clip(-(f + nu b)/h)``
    and ``b'x(nu)`` is piecewise linear and nonincreasing; the root is found
    on the segment between consecutive breakpoints.

    Returns the same tuple as :func:`admm_solve` (multipliers for the rows
    ``[I; b']``).
    """
    n = h.shape[0]
    nb = 0
    for j in range(n):
        if b[j] != 0.0:
            nb += 2
    bp = np.empty(nb)
    k = 0
    for j in range(n):
        if b[j] != 0.0:
            bp[k] = (-f[j] - h[j] * lo[j]) / b[j]
            bp[k + 1] = (-f[j] - h[j] * hi[j]) / b[j]
            k += 2
    y = np.zeros(n + 1)
    x = np.empty(n)
    if nb == 0:
        for j in range(n):
            x[j] = min(max(-f[j] / h[j], lo[j]), hi[j])
        if abs(gamma) > 1e-12:
            return x, y, 1, abs(gamma), 0.0, STATUS_INFEASIBLE, False
        nu = 0.0
    else:
        bp = np.sort(bp)
        g_lo = _budget_sum(h, f, lo, hi, b, bp[0])     # largest attainable value
        g_hi = _budget_sum(h, f, lo, hi, b, bp[nb - 1])  # smallest attainable value
        scale = 1.0 + abs(gamma)
        if gamma > g_lo + 1e-12 * scale or gamma < g_hi - 1e-12 * scale:
            for j in range(n):
                x[j] = min(max(-f[j] / h[j], lo[j]), hi[j])
            return x, y, 1, max(gamma - g_lo, g_hi - gamma), 0.0, STATUS_INFEASIBLE, False
        # bracket: g(bp[i]) >= gamma >= g(bp[i+1])
        a_nu = bp[0]
        b_nu = bp[nb - 1]
        g_a = g_lo
        g_b = g_hi
        lo_i = 0
        hi_i = nb - 1
        while hi_i - lo_i > 1:
            mid = (lo_i + hi_i) // 2
            gm = _budget_sum(h, f, lo, hi, b, bp[mid])
            if gm >= gamma:
                lo_i = mid
                g_a = gm
            else:
                hi_i = mid
                g_b = gm
        a_nu = bp[lo_i]
        b_nu = bp[hi_i]
        if g_a == g_b:
            nu = a_nu
        else:
            nu = a_nu + (g_a - gamma) * (b_nu - a_nu) / (g_a - g_b)
    for j in range(n):
        x[j] = min(max((-f[j] - nu * b[j]) / h[j], lo[j]), hi[j])
    # restore the budget exactly on free coordinates
    resid = gamma
    for j in range(n):
        resid -= b[j] * x[j]
    den = 0.0
    for j in range(n):
        if x[j] > lo[j] and x[j] < hi[j]:
            den += b[j] * b[j] / h[j]
    if den > 0.0:
        for j in range(n):
            if x[j] > lo[j] and x[j] < hi[j]:
                x[j] += resid * (b[j] / h[j]) / den
    y[n] = 0.5 * nu
    for j in range(n):
        y[j] = -(h[j] * x[j] + f[j] + b[j] * y[n])
    prim = 0.0
    for j in range(n):
        prim = max(prim, lo[j] - x[j], x[j] - hi[j])
    s = 0.0
    for j in range(n):
        s += b[j] * x[j]
    prim = max(prim, abs(s - gamma))
    return x, y, 1, prim, 0.0, STATUS_SOLVED, True


@njit(cache=True, nogil=True)
def budget_solve_many(h, F, LO, HI, Bv, gam):
    k = F.shape[0]
    n = h.shape[0]
    X = np.empty((k, n))
    Y = np.empty((k, n + 1))
    iters = np.empty(k, dtype=np.int64)
    prim = np.empty(k)
    dual = np.empty(k)
    status = np.empty(k, dtype=np.int64)
    pol = np.empty(k, dtype=np.bool_)
    for i in range(k):
        x, y, it, pr, dr, st, po = budget_solve(h, F[i], LO[i], HI[i], Bv[i], gam[i])
        X[i] = x
        Y[i] = y
        iters[i] = it
        prim[i] = pr
        dual[i] = dr
        status[i] = st
        pol[i] = po
    return X, Y, iters, prim, dual, status, pol
