"""Compiled inner loop of the multiplicative weight algorithm.

The loop runs hundreds of thousands of times on tiny matrices, where numpy
call overhead dominates; numba removes it. Criterion kinds: 0 = EI with
moment matrix M, 1 = Phi_p with target matrix M, 2 = D.
"""
import numpy as np
from numba import njit

OK, SINGULAR, INFEASIBLE = 0, 1, 2


@njit(cache=True)
def _state(G, w, lam, kind, M, p, q, s_out):
    n, l = G.shape
    I = np.zeros((l, l))
    for i in range(n):
        c = lam[i] * w[i]
        for a in range(l):
            ga = c * G[i, a]
            for b in range(l):
                I[a, b] += ga * G[i, b]
    ev, U = np.linalg.eigh(I)
    if not ev[0] > 1e-12 * max(ev[-1], 0.0):
        return np.nan, np.nan, SINGULAR
    if kind == 2:
        K = (U / ev) @ U.T
        value = -np.sum(np.log(ev))
        ref = float(l)
        scale = 1.0
    elif kind == 0:
        Iinv = (U / ev) @ U.T
        IM = Iinv @ M
        K = IM @ Iinv
        value = np.trace(IM)
        ref = value
        scale = 1.0
    else:
        H = (U / np.sqrt(ev)) @ U.T
        C = H @ M @ H
        C = 0.5 * (C + C.T)
        cv, V = np.linalg.eigh(C)
        cp = np.empty(l)
        for a in range(l):
            cp[a] = max(cv[a], 0.0) ** p
        tr = np.sum(cp)
        K = H @ ((V * cp) @ V.T) @ H
        value = (tr / q) ** (1.0 / p)
        ref = value
        scale = q ** (-1.0 / p) * tr ** (1.0 / p - 1.0)
    for i in range(n):
        acc = 0.0
        for a in range(l):
            ka = 0.0
            for b in range(l):
                ka += K[a, b] * G[i, b]
            acc += G[i, a] * ka
        s_out[i] = w[i] * acc
    return value, ref, OK


@njit(cache=True)
def multiplicative_loop(G, w, lam0, kind, M, p, q, delta, tol, max_iters, noise):
    """Returns (lam, trace, iterations, converged, status)."""
    n = G.shape[0]
    lam = lam0.copy()
    s = np.empty(n)
    s_new = np.empty(n)
    trace = np.empty(max_iters + 1)
    value, ref, status = _state(G, w, lam, kind, M, p, q, s)
    if status != OK:
        return lam, trace[:0], 0, False, status
    trace[0] = value
    iters = 0
    converged = False
    new_lam = np.empty(n)
    step = delta
    for k in range(max_iters):
        # halve the exponent until the step does not raise the criterion;
        # for delta <= 1/(p+1) the first try always succeeds
        while True:
            den = 0.0
            for i in range(n):
                new_lam[i] = lam[i] * max(s[i], 0.0) ** step
                den += new_lam[i]
            if not den > 0:
                return lam, trace[: iters + 1], iters, False, INFEASIBLE
            for i in range(n):
                new_lam[i] /= den
            new_value, new_ref, status = _state(G, w, new_lam, kind, M, p, q, s_new)
            if status != OK:
                return lam, trace[: iters + 1], iters, False, status
            change = new_value - value
            scale = abs(ref)
            if change <= noise * scale:
                break
            step *= 0.5
            if step < delta * 1e-9:
                return lam, trace[: iters + 1], iters, False, OK
        if change > 0:
            converged = True
            break
        lam[:] = new_lam
        s[:] = s_new
        value, ref = new_value, new_ref
        iters = k + 1
        trace[iters] = value
        if abs(change) < tol * scale:
            converged = True
            break
    return lam, trace[: iters + 1], iters, converged, OK
