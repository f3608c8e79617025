"""Independent reference implementations used as test oracles.

Everything in this file is deliberately written the slow, obvious way and
imports nothing from ``smio``: brute-force vertex enumeration, fixed-point
Riccati iteration, symbolic invariant zeros, and a direct (matrix_power)
assembly of the stacked residual map.  These were written and frozen before
the library modules; library code must agree with them, never the other way
around.
"""

import itertools
import math

import numpy as np
import sympy


def brute_force_vertex_max(A, bounds):
    """Exact max of ||A @ t||_2 over all sign vertices t_j = ±bounds_j.

    Exponential in len(bounds); guarded to 2**22 evaluations.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(bounds, dtype=float)
    N = b.size
    if A.shape[1] != N:
        raise ValueError("column/bound mismatch")
    if N > 22:
        raise ValueError("too many columns for brute force")
    if A.shape[0] == 0 or N == 0:
        return 0.0
    best = 0.0
    for signs in itertools.product((-1.0, 1.0), repeat=N):
        t = b * np.array(signs)
        best = max(best, float(np.linalg.norm(A @ t)))
    return best


def riccati_difference_gain(Abar, C2, tol=1e-13, max_iter=200000):
    """Steady-state innovation gain by iterating the Riccati difference
    equation with identity weights (no algebraic solver involved).

    Returns (P, K) with K = P C2^T (C2 P C2^T + I)^{-1}.
    """
    Abar = np.asarray(Abar, dtype=float)
    C2 = np.asarray(C2, dtype=float)
    n = Abar.shape[0]
    r = C2.shape[0]
    P = np.eye(n)
    for _ in range(max_iter):
        S = C2 @ P @ C2.T + np.eye(r)
        Pn = Abar @ P @ Abar.T - Abar @ P @ C2.T @ np.linalg.solve(S, C2 @ P @ Abar.T) + np.eye(n)
        if np.max(np.abs(Pn - P)) < tol * max(1.0, np.max(np.abs(Pn))):
            P = Pn
            break
        P = Pn
    else:
        raise RuntimeError("Riccati iteration did not converge")
    K = P @ C2.T @ np.linalg.inv(C2 @ P @ C2.T + np.eye(r))
    return P, K


def _to_rational_matrix(M):
    M = np.asarray(M, dtype=float)
    return sympy.Matrix([[sympy.Rational(float(x)) for x in row] for row in M])


def invariant_zeros_symbolic(A, G, C, H):
    """Invariant zeros of the system pencil [zI-A, -G; C, H] by exact
    rational arithmetic: normal rank from generic evaluations, then the
    roots of the gcd of all maximal non-vanishing minors.

    Returns a sorted list of complex zeros (possibly empty).  Raises
    ValueError for a degenerate pencil whose rank is below normal rank at
    every z (cannot happen when the normal-rank minors are nonzero
    polynomials, by construction).
    """
    z = sympy.Symbol("z")
    A = _to_rational_matrix(A)
    G = _to_rational_matrix(G) if np.asarray(G).size else sympy.zeros(A.rows, 0)
    C = _to_rational_matrix(C)
    H = _to_rational_matrix(H) if np.asarray(H).size else sympy.zeros(C.rows, 0)
    n = A.rows
    P = sympy.Matrix(sympy.BlockMatrix([[z * sympy.eye(n) - A, -G], [C, H]]))
    rows, cols = P.rows, P.cols

    samples = [sympy.Rational(3, 7), sympy.Rational(-13, 5), sympy.Rational(29, 11)]
    r0 = max(P.subs(z, s).rank() for s in samples)
    if r0 == 0:
        raise ValueError("zero pencil")

    minors = []
    for rsel in itertools.combinations(range(rows), r0):
        for csel in itertools.combinations(range(cols), r0):
            m = P[list(rsel), list(csel)].det(method="berkowitz")
            if m != 0:
                minors.append(sympy.Poly(m, z))
    if not minors:
        raise ValueError("degenerate pencil: all normal-rank minors vanish")
    g = minors[0]
    for m in minors[1:]:
        g = g.gcd(m)
        if g.degree() == 0:
            return []
    if g.degree() == 0:
        return []
    roots = sympy.Poly(g, z).nroots(n=30, maxsteps=200)
    out = sorted((complex(r) for r in roots), key=lambda c: (c.real, c.imag))
    return out


def stacked_blocks_direct(C2, T2, Abar, Ae, Bw_star, Bv1_star, Bv2_star,
                          Bew, Bev1, Bev2, k):
    """Direct assembly of the stacked residual map for level k >= 1 using
    numpy.linalg.matrix_power, block by block, following the unrolled error
    recursion.  Column layout: [e0 | w_0..w_{k-1} | v_0..v_k].
    """
    C2 = np.atleast_2d(np.asarray(C2, dtype=float))
    T2 = np.atleast_2d(np.asarray(T2, dtype=float))
    mp = np.linalg.matrix_power
    if k < 1:
        raise ValueError("k must be >= 1")
    if k == 1:
        blocks = [C2 @ Abar, C2 @ Bw_star, C2 @ Bv1_star, C2 @ Bv2_star + T2]
        return np.hstack(blocks)
    state = C2 @ Abar @ mp(Ae, k - 1)
    wblocks = [C2 @ Abar @ mp(Ae, k - 2 - i) @ Bew for i in range(k - 1)]
    wblocks.append(C2 @ Bw_star)
    vblocks = [C2 @ Abar @ mp(Ae, k - 2) @ Bev1]
    for i in range(1, k - 1):
        vblocks.append(C2 @ Abar @ mp(Ae, k - 2 - i) @ (Bev1 + Ae @ Bev2))
    vblocks.append(C2 @ (Bv1_star + Abar @ Bev2))
    vblocks.append(C2 @ Bv2_star + T2)
    return np.hstack([state] + wblocks + vblocks)


def scalar_tri_series_limit(C2, T2, Abar, Ae, Bw_star, Bv1_star, Bv2_star,
                            Bew, Bev1, Bev2, eta_w, eta_v, terms=20000):
    """Numeric limit of the per-step triangle bound for 1x1 systems,
    obtained by summing the block-norm series directly (no closed form).
    """
    c2, t2 = float(np.squeeze(C2)), float(np.squeeze(T2))
    ab, ae = float(np.squeeze(Abar)), float(np.squeeze(Ae))
    bws, bv1s, bv2s = (float(np.squeeze(x)) for x in (Bw_star, Bv1_star, Bv2_star))
    bew, bev1, bev2 = (float(np.squeeze(x)) for x in (Bew, Bev1, Bev2))
    if abs(ae) >= 1:
        raise ValueError("series diverges")
    s_w = sum(abs(c2 * ab * ae ** j * bew) for j in range(terms))
    mv = bev1 + ae * bev2
    s_v = sum(abs(c2 * ab * ae ** j * mv) for j in range(terms))
    return (eta_w * (abs(c2 * bws) + s_w)
            + eta_v * (s_v + abs(c2 * (bv1s + ab * bev2)) + abs(c2 * bv2s + t2)))


def hypercube_vertex_norm(n, l, k, delta_x0, eta_w, eta_v):
    """2-norm of an explicitly constructed per-coordinate-bound vertex."""
    v = ([delta_x0] * n) + ([eta_w] * (n * k)) + ([eta_v] * (l * (k + 1)))
    return math.sqrt(sum(x * x for x in v))


def weighted_abs_row_sum(row, bounds):
    """Exact box maximum of |a . t| for a single row: sum |a_j| b_j."""
    return float(np.sum(np.abs(np.asarray(row, dtype=float)) * np.asarray(bounds, dtype=float)))
