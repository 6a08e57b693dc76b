"""Independent brute-force references for the solver kernels.

Nothing here calls into the package: vertices, binary assignments and
active sets are enumerated directly with numpy and HiGHS.
"""

import itertools

import numpy as np
from scipy.optimize import linprog


def lp_by_vertices(c, A_ge, b_ge, lo, hi):
    """min c'x over {A_ge x >= b_ge, lo <= x <= hi} (bounded box) by vertex enumeration."""
    n = c.size
    A = np.vstack([A_ge, np.eye(n), -np.eye(n)])
    b = np.concatenate([b_ge, lo, -hi])
    best, arg = np.inf, None
    for rows in itertools.combinations(range(A.shape[0]), n):
        S = A[list(rows)]
        if abs(np.linalg.det(S)) < 1e-10:
            continue
        v = np.linalg.solve(S, b[list(rows)])
        if np.all(A @ v >= b - 1e-9 * (1 + np.abs(b))) and c @ v < best:
            best, arg = float(c @ v), v
    return best, arg


def milp_by_enumeration(c, A_eq, b_eq, A_ge, b_ge, lo, hi, binaries):
    """min over all 0/1 assignments of the binaries of the remaining LP (HiGHS)."""
    best = np.inf
    for bits in itertools.product((0.0, 1.0), repeat=len(binaries)):
        l, h = lo.copy(), hi.copy()
        l[binaries] = bits
        h[binaries] = bits
        res = linprog(c, A_ub=-A_ge if A_ge.size else None, b_ub=-b_ge if A_ge.size else None,
                      A_eq=A_eq if A_eq.size else None, b_eq=b_eq if A_eq.size else None,
                      bounds=list(zip(l, h)), method="highs")
        if res.status == 0:
            best = min(best, float(res.fun))
    return best


def master_by_active_sets(cuts_a, cuts_g, z, t):
    """min eta + ||x - z||^2 / (2t) s.t. eta >= a_i + g_i'x.

    Enumerates the active cut set S: at the optimum ``x = z - t G_S' alpha``
    with ``alpha >= 0`` summing to one and all active cuts equal to ``eta``.
    Returns ``(value, x)`` of the best KKT point found.
    """
    m, n = cuts_g.shape
    best, arg = np.inf, None
    for k in range(1, min(m, n + 1) + 1):
        for S in itertools.combinations(range(m), k):
            S = list(S)
            G = cuts_g[S]
            # unknowns (alpha_S, eta): a_i + g_i'(z - t G'alpha) - eta = 0, sum alpha = 1
            K = np.zeros((k + 1, k + 1))
            K[:k, :k] = -t * G @ G.T
            K[:k, k] = -1.0
            K[k, :k] = 1.0
            rhs = np.concatenate([-(cuts_a[S] + G @ z), [1.0]])
            sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
            if np.abs(K @ sol - rhs).max() > 1e-9:
                continue
            alpha, eta = sol[:k], sol[k]
            if alpha.min() < -1e-10:
                continue
            x = z - t * G.T @ alpha
            if np.any(cuts_a + cuts_g @ x > eta + 1e-9):
                continue
            val = eta + (x - z) @ (x - z) / (2 * t)
            if val < best:
                best, arg = float(val), x
    return best, arg


def lp_dual_value(c, A_eq, b_eq, A_ge, b_ge, lo, hi, phi, pi):
    """Dual objective of min c'x, A_eq x = b_eq, A_ge x >= b_ge, lo <= x <= hi."""
    r = c - A_eq.T @ phi - A_ge.T @ pi
    bound = np.where(r > 0, r * np.where(np.isfinite(lo), lo, 0.0),
                     r * np.where(np.isfinite(hi), hi, 0.0))
    return float(b_eq @ phi + b_ge @ pi + bound.sum())


def deterministic_lp(inst, u):
    """Full-horizon LP at one realisation ``u`` over ``(x, s_1, y_1, ..., s_T, y_T)``."""
    nx = inst.n_x
    sizes = [nx] + [k for st in inst.stages for k in (st.n_s, st.n_y)]
    off = np.concatenate([[0], np.cumsum(sizes)])
    n = int(off[-1])
    c = np.zeros(n)
    c[:nx] = inst.c
    Aeq, beq, Age, bge = [], [], [], []
    k = 0
    for t, st in enumerate(inst.stages, start=1):
        ss = slice(off[1 + 2 * (t - 1)], off[2 + 2 * (t - 1)])
        ys = slice(off[2 + 2 * (t - 1)], off[3 + 2 * (t - 1)])
        ut = u[k:k + st.n_u]
        k += st.n_u
        c[ss], c[ys] = st.dt, st.ft
        E = np.zeros((st.n_eq, n))
        E[:, :nx], E[:, ss], E[:, ys] = st.Tt, st.At, st.Wt
        rhs = st.h0 + st.Ht @ ut
        if t == 1:
            rhs = rhs - st.Bt @ inst.s0
        else:
            E[:, slice(off[1 + 2 * (t - 2)], off[2 + 2 * (t - 2)])] = st.Bt
        Aeq.append(E)
        beq.append(rhs)
        I = np.zeros((st.n_in, n))
        I[:, :nx], I[:, ss], I[:, ys] = st.Lt, st.Et, st.Gt
        Age.append(I)
        bge.append(st.m0 + st.Mt @ ut)
    bounds = [(None if not np.isfinite(a) else a, None if not np.isfinite(b) else b)
              for a, b in zip(inst.x_bounds.lo, inst.x_bounds.hi)] + [(None, None)] * (n - nx)
    Aeq, Age = np.vstack(Aeq), np.vstack(Age)
    res = linprog(c, A_ub=-Age if Age.size else None, b_ub=-np.concatenate(bge) if Age.size else None,
                  A_eq=Aeq if Aeq.size else None, b_eq=np.concatenate(beq) if Aeq.size else None,
                  bounds=bounds, method="highs")
    assert res.status == 0, res.message
    return float(res.fun)
