"""Independent reference computations used only by the tests."""

from itertools import combinations, product

import numpy as np


def active_set_qp(H, f, G, l, u, tol=1e-9):
    """Brute-force minimiser of ``x'Hx + 2f'x`` s.t. ``l <= Gx <= u``.

    Every choice of active inequality rows and sides (equality rows always
    pinned) is solved as an equality-constrained KKT system; the feasible,
    dual-feasible candidate with the lowest objective is returned.
    """
    m, n = G.shape
    eq = np.isclose(l, u)
    eq_rows = [j for j in range(m) if eq[j]]
    ineq_rows = [j for j in range(m) if not eq[j]]
    best, best_obj = None, np.inf
    for k in range(0, n - len(eq_rows) + 1):
        for subset in combinations(ineq_rows, k):
            sides = [[s for s, b in ((-1, l[j]), (1, u[j])) if np.isfinite(b)] for j in subset]
            for pick in product(*sides):
                rows = eq_rows + list(subset)
                A = G[rows]
                if rows and np.linalg.matrix_rank(A) < len(rows):
                    continue
                b = np.array([l[j] for j in eq_rows]
                             + [u[j] if sd == 1 else l[j] for j, sd in zip(subset, pick)])
                r = len(rows)
                K = np.block([[H, A.T], [A, np.zeros((r, r))]]) if r else H
                rhs = np.concatenate([-f, b]) if r else -f
                sol = np.linalg.solve(K, rhs)
                x, y = sol[:n], sol[n:]
                g = G @ x
                if np.any(g < l - tol) or np.any(g > u + tol):
                    continue
                yi = y[len(eq_rows):]
                if any((sd == 1 and yv < -tol) or (sd == -1 and yv > tol)
                       for sd, yv in zip(pick, yi)):
                    continue
                obj = x @ H @ x + 2 * f @ x
                if obj < best_obj:
                    best, best_obj = x, obj
    return best


def kkt_projection_2d_simplex(p1, p2, v, total=1.0):
    """Projection of ``v`` onto ``{x1 + x2 = total, x >= 0}`` in diag(p1, p2)."""
    cands = [np.array([0.0, total]), np.array([total, 0.0])]
    x1 = (p1 * v[0] - p2 * v[1] + p2 * total) / (p1 + p2)
    if 0.0 <= x1 <= total:
        cands.append(np.array([x1, total - x1]))
    cost = [p1 * (c[0] - v[0]) ** 2 + p2 * (c[1] - v[1]) ** 2 for c in cands]
    return cands[int(np.argmin(cost))]


def random_spd(rng, n, cond=100.0):
    Qm, _ = np.linalg.qr(rng.standard_normal((n, n)))
    w = np.exp(rng.uniform(0, np.log(cond), n))
    return (Qm * w) @ Qm.T


def fd_gradient(fun, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g
