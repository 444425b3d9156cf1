"""Independent reference computations used to check the package.

Nothing here imports the package's numerical routines: every oracle is a
separate, deliberately plain implementation (dense inverses, Simpson's rule,
a hand-rolled Sobol generator, exhaustive weight grids).
"""
import itertools

import numpy as np


def simpson(f, a, b, panels):
    """Composite Simpson rule with ``panels`` (even) subintervals; f is vectorized."""
    if panels % 2:
        raise ValueError("panels must be even")
    x = np.linspace(a, b, panels + 1)
    y = f(x)
    h = (b - a) / panels
    return h / 3.0 * (y[..., 0] + y[..., -1] + 4 * y[..., 1:-1:2].sum(-1) + 2 * y[..., 2:-1:2].sum(-1))


def logistic_weight(eta):
    # textbook form, fine for the moderate eta used in tests
    e = np.exp(eta)
    return e / (1.0 + e) ** 2


def glm_weight(link, eta, sigma=1.0):
    if link == "logit":
        return logistic_weight(eta)
    if link == "log":
        return np.exp(eta)
    return np.full_like(np.asarray(eta, dtype=float), 1.0 / sigma**2)


def mean_deriv_sq(link, eta):
    if link == "logit":
        return logistic_weight(eta) ** 2
    if link == "log":
        return np.exp(2 * eta)
    return np.ones_like(np.asarray(eta, dtype=float))


def monomials(terms, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.array([[np.prod([x[j] ** t[j] for j in range(len(t))]) for t in terms] for x in X])


def info_dense(G, w, lam):
    I = np.zeros((G.shape[1], G.shape[1]))
    for g, wi, li in zip(G, w, lam):
        I += li * wi * np.outer(g, g)
    return I


def ei_dense(I, A):
    return float(np.trace(A @ np.linalg.inv(I)))


def phi_p_dense(I, B, p, q):
    ev, U = np.linalg.eigh(np.linalg.inv(I))
    root = (U * np.sqrt(ev)) @ U.T
    M = root @ B @ root
    mv = np.clip(np.linalg.eigvalsh(M), 0, None)
    return float((np.sum(mv**p) / q) ** (1.0 / p))


def d_dense(I):
    return -float(np.log(np.linalg.det(I)))


# Joe-Kuo direction numbers (s, a, m_1..m_s) for dimensions 2..7; dimension 1 is van der Corput
JOE_KUO = [
    (1, 0, [1]),
    (2, 1, [1, 3]),
    (3, 1, [1, 3, 1]),
    (3, 2, [1, 1, 1]),
    (4, 1, [1, 1, 3, 3]),
    (4, 4, [1, 3, 5, 13]),
]


def sobol_reference(n, d, bits=32):
    """First n points (including the origin) of the unscrambled Sobol sequence, Gray-code order."""
    if d > len(JOE_KUO) + 1:
        raise ValueError("reference table only covers d <= 7")
    V = np.zeros((d, bits + 1), dtype=np.uint64)
    for k in range(1, bits + 1):
        V[0, k] = 1 << (bits - k)
    for j in range(1, d):
        s, a, m = JOE_KUO[j - 1]
        for k in range(1, s + 1):
            V[j, k] = m[k - 1] << (bits - k)
        for k in range(s + 1, bits + 1):
            v = V[j, k - s] ^ (V[j, k - s] >> np.uint64(s))
            for i in range(1, s):
                if (a >> (s - 1 - i)) & 1:
                    v ^= V[j, k - i]
            V[j, k] = v
    X = np.zeros(d, dtype=np.uint64)
    out = np.empty((n, d))
    for i in range(n):
        out[i] = X / float(2**bits)
        c, t = 1, i
        while t & 1:
            t >>= 1
            c += 1
        X = X ^ V[:, c]
    return out


def simplex_grid(n, step):
    """All weight vectors of length n on the simplex with coordinates in multiples of step."""
    k = int(round(1 / step))
    for c in itertools.product(range(k + 1), repeat=n - 1):
        if sum(c) <= k:
            yield np.array(list(c) + [k - sum(c)]) / k


def batched_ei_2x2(g1, g2, wv, A, lam):
    """EI for many designs of an l=2 model at once.

    g1, g2, wv: (m, n) basis components and GLM weights; lam: (m, n) weights.
    """
    c = lam * wv
    a = (c * g1 * g1).sum(1)
    b = (c * g1 * g2).sum(1)
    d = (c * g2 * g2).sum(1)
    det = a * d - b * b
    # tr(A I^{-1}) with I^{-1} = [[d, -b], [-b, a]] / det
    return (A[0, 0] * d - 2 * A[0, 1] * b + A[1, 1] * a) / det


def criterion_mp(G, w, lam, kind, M=None, p=1.0, q=1, dps=40):
    """Criterion value in extended precision; lam may hold mpmath numbers.

    kind is "EI" (M = A), "phi" (M = B) or "D". Used as a finite-difference
    oracle where double-precision roundoff would swamp the difference.
    """
    import mpmath as mp

    with mp.workdps(dps):
        n, l = G.shape
        I = mp.zeros(l, l)
        for i in range(n):
            c = mp.mpf(lam[i]) * mp.mpf(float(w[i]))
            for a in range(l):
                for b in range(l):
                    I[a, b] += c * mp.mpf(float(G[i, a])) * mp.mpf(float(G[i, b]))
        if kind == "D":
            return -mp.log(mp.det(I))
        Mm = mp.matrix([[mp.mpf(float(v)) for v in row] for row in np.asarray(M)])
        Iinv = I**-1
        if kind == "EI":
            P = Mm * Iinv
            return mp.fsum(P[i, i] for i in range(l))
        E, Q = mp.eigsy(Iinv)
        R = Q * mp.diag([mp.sqrt(e) for e in E]) * Q.T
        ev, _ = mp.eigsy(R * Mm * R)
        tr = mp.fsum(max(e, 0) ** mp.mpf(p) for e in ev)
        return (tr / q) ** (1 / mp.mpf(p))


def central_difference_mp(G, w, lam, direction, kind, M=None, p=1.0, q=1, alpha=1e-6, dps=40):
    """[f(lam + a (dir - lam)) - f(lam - a (dir - lam))] / (2a) in extended precision."""
    import mpmath as mp

    with mp.workdps(dps):
        a = mp.mpf(alpha)
        lam_m = [mp.mpf(float(v)) for v in lam]
        d_m = [mp.mpf(float(v)) - l_ for v, l_ in zip(direction, lam_m)]
        plus = [l_ + a * d for l_, d in zip(lam_m, d_m)]
        minus = [l_ - a * d for l_, d in zip(lam_m, d_m)]
        f = lambda x: criterion_mp(G, w, x, kind, M, p, q, dps)
        return float((f(plus) - f(minus)) / (2 * a))


def point_difference_mp(G, w, lam, g_new, w_new, kind, M=None, p=1.0, q=1, alpha=1e-6, dps=40):
    """Central difference of the criterion along (1 - a) xi + a delta_x at a = 0."""
    G2 = np.vstack([G, g_new])
    w2 = np.append(w, w_new)
    lam2 = np.append(lam, 0.0)
    e = np.zeros(len(lam2))
    e[-1] = 1.0
    return central_difference_mp(G2, w2, lam2, e, kind, M, p, q, alpha, dps)


def kind_of(crit):
    """(kind, M, p, q) in the oracle's vocabulary for a package criterion object."""
    name = type(crit).__name__
    if name == "EICriterion":
        return "EI", crit.A, 1.0, 1
    if name == "DCriterion":
        return "D", None, 1.0, 1
    return "phi", crit.B, crit.p, crit.q


def saturated_ei(G, w, A):
    """Optimal EI over weights for a support of exactly l points.

    With G square, tr(A I^{-1}) = sum_i c_i / (lam_i w_i) where c = diag(G^{-T} A G^{-1}),
    minimized at lam_i proportional to sqrt(c_i / w_i).
    """
    Gi = np.linalg.inv(G)
    c = np.diag(Gi.T @ A @ Gi)
    r = np.sqrt(np.clip(c, 0, None) / w)
    lam = r / r.sum()
    return float(np.sum(c / (lam * w))), lam


def best_subset_ei_1d(x, wv, A, iters=400, polish=300):
    """Smallest EI over all 2- and 3-point subsets of the 1-D grid x for g = (1, x).

    Two-point subsets use the saturated closed form. Three-point subsets are
    screened with batched multiplicative updates, then the best ``polish``
    candidates are optimized with SLSQP on the simplex.
    """
    from scipy.optimize import minimize

    n = len(x)
    best = np.inf
    for i, j in itertools.combinations(range(n), 2):
        G = np.array([[1.0, x[i]], [1.0, x[j]]])
        v, _ = saturated_ei(G, wv[[i, j]], A)
        best = min(best, v)
    idx = np.array(list(itertools.combinations(range(n), 3)))
    X, W = x[idx], wv[idx]
    lam = np.full(idx.shape, 1 / 3)
    ones = np.ones_like(X)
    for _ in range(iters):
        c = lam * W
        a, b, d = c.sum(1), (c * X).sum(1), (c * X * X).sum(1)
        det = a * d - b * b
        # K = I^{-1} A I^{-1} for I = [[a, b], [b, d]]
        i00, i01, i11 = d / det, -b / det, a / det
        k00 = i00 * (A[0, 0] * i00 + A[0, 1] * i01) + i01 * (A[1, 0] * i00 + A[1, 1] * i01)
        k01 = i00 * (A[0, 0] * i01 + A[0, 1] * i11) + i01 * (A[1, 0] * i01 + A[1, 1] * i11)
        k11 = i01 * (A[0, 0] * i01 + A[0, 1] * i11) + i11 * (A[1, 0] * i01 + A[1, 1] * i11)
        s = W * (k00[:, None] + 2 * k01[:, None] * X + k11[:, None] * X * X)
        lam = lam * np.sqrt(s)
        lam /= lam.sum(1, keepdims=True)
    vals = batched_ei_2x2(ones, X, W, A, lam)
    for k in np.argsort(vals)[:polish]:
        xs, ws = X[k], W[k]

        def f(l):
            l = np.clip(l, 1e-300, None)
            return batched_ei_2x2(np.ones((1, 3)), xs[None], ws[None], A, (l / l.sum())[None])[0]

        res = minimize(f, lam[k], method="SLSQP", bounds=[(0, 1)] * 3,
                       constraints=[{"type": "eq", "fun": lambda l: l.sum() - 1}],
                       options={"ftol": 1e-16, "maxiter": 500})
        best = min(best, float(f(res.x)), float(vals[k]))
    return best
