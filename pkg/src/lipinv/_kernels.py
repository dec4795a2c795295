"""
Hot numeric kernels.

Each kernel is written once in numba-compatible numpy code.  When numba is
importable and ``LIPINV_NUMBA`` is not set to ``0``, the public names are
bound to ``@njit`` compiled versions (cached on disk); otherwise they are the
plain Python functions.  Both variants stay importable (``*_py`` /
``*_jit``) so tests and the benchmark can compare them directly.
"""

import os
import types

import numpy as np

try:
    import numba as nb
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    nb = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("LIPINV_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


def _maybe_jit(fn):
    if HAS_NUMBA:
        return nb.njit(cache=True, nogil=True)(fn)
    return fn


def _jit_with(fn, **helpers):
    # compile a copy of fn whose helper globals point at jitted versions;
    # the plain fn keeps calling the Python helpers
    g = dict(fn.__globals__)
    g.update(helpers)
    clone = types.FunctionType(fn.__code__, g, fn.__name__, fn.__defaults__)
    clone.__qualname__ = fn.__qualname__
    clone.__module__ = fn.__module__
    return _maybe_jit(clone)


# ---------------------------------------------------------------------------
# Wolfe's minimum-norm-point algorithm
# ---------------------------------------------------------------------------

def _solve_small(M, b):
    # Gaussian elimination with partial pivoting; a negligible pivot pins
    # its unknown to zero (Wolfe keeps the support affinely independent)
    n = b.shape[0]
    A = M.copy()
    x = b.copy()
    tiny = 1e-14 * max(np.max(np.abs(A)), 1.0)
    piv_ok = np.ones(n, dtype=np.bool_)
    for c in range(n):
        p = c + int(np.argmax(np.abs(A[c:, c])))
        if abs(A[p, c]) <= tiny:
            piv_ok[c] = False
            continue
        if p != c:
            for j in range(n):
                A[c, j], A[p, j] = A[p, j], A[c, j]
            x[c], x[p] = x[p], x[c]
        for r in range(c + 1, n):
            f = A[r, c] / A[c, c]
            if f != 0.0:
                A[r, c:] -= f * A[c, c:]
                x[r] -= f * x[c]
    out = np.zeros(n)
    for c in range(n - 1, -1, -1):
        if not piv_ok[c]:
            continue
        s = x[c]
        for j in range(c + 1, n):
            s -= A[c, j] * out[j]
        out[c] = s / A[c, c]
    return out


def _affine_minimizer(Q):
    # argmin ||a @ Q|| subject to sum(a) = 1, via the bordered Gram system
    k = Q.shape[0]
    M = np.zeros((k + 1, k + 1))
    M[:k, :k] = Q @ Q.T
    M[:k, k] = 1.0
    M[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    return _solve_small(M, rhs)[:k]


def wolfe_mnp_py(P, max_iter, tol):
    """Minimum-norm point of conv(rows of P).

    Returns ``(weights, support_size, iterations)``; ``weights`` has one
    entry per row of ``P`` and sums to one.
    """
    k = P.shape[0]
    norms2 = np.sum(P * P, axis=1)
    scale = max(np.max(norms2), 1.0)
    j0 = int(np.argmin(norms2))
    S = np.zeros(k, dtype=np.int64)
    lam = np.zeros(k)
    S[0] = j0
    lam[0] = 1.0
    ns = 1
    x = P[j0].copy()
    it = 0
    pos_tol = 1e-14
    while it < max_iter:
        it += 1
        xx = np.dot(x, x)
        dots = P @ x
        j = int(np.argmin(dots))
        if dots[j] >= xx - tol * scale:
            break
        present = False
        for i in range(ns):
            if S[i] == j:
                present = True
        if present:
            break
        S[ns] = j
        lam[ns] = 0.0
        ns += 1
        for _minor in range(4 * k + 4):
            a = _affine_minimizer(P[S[:ns]])
            if np.all(a > pos_tol):
                lam[:ns] = a
                break
            theta = 1.0
            for i in range(ns):
                if a[i] <= pos_tol:
                    den = lam[i] - a[i]
                    if den > 0.0:
                        tt = lam[i] / den
                        if tt < theta:
                            theta = tt
            lam[:ns] = lam[:ns] + theta * (a - lam[:ns])
            keep = 0
            for i in range(ns):
                if lam[i] > pos_tol:
                    S[keep] = S[i]
                    lam[keep] = lam[i]
                    keep += 1
            ns = keep
            lam[:ns] = lam[:ns] / np.sum(lam[:ns])
        x = lam[:ns] @ P[S[:ns]]
    w = np.zeros(k)
    for i in range(ns):
        w[S[i]] += lam[i]
    return w, ns, it


# ---------------------------------------------------------------------------
# Volterra trapezoid quadrature over the lower triangle
# ---------------------------------------------------------------------------

PHI_ZERO, PHI_SIN, PHI_CLIP, PHI_LOG_SHIFT = 0, 1, 2, 3


def _phi_base(code, a, u):
    # the u-dependent factor of the shipped integrands
    if code == PHI_SIN:
        return a * np.sin(u)
    if code == PHI_CLIP:
        return a * min(abs(u), 1.0)
    if code == PHI_LOG_SHIFT:
        return u - a * np.sign(u) * np.log1p(abs(u))
    return 0.0


def family_quadrature_py(code, a, decay, t, x):
    # Q[i-1] = trapezoid of Phi(t_i, ., x(.)) over t_0..t_i, i = 1..N, with
    # Phi(t, tau, u) = base(u) * exp(-decay * (t - tau))
    n = t.shape[0] - 1
    h = 1.0 / n
    base = np.empty(n + 1)
    for j in range(n + 1):
        base[j] = _phi_base(code, a, x[j])
    out = np.empty(n)
    for i in range(1, n + 1):
        ti = t[i]
        if decay == 0.0:
            s = 0.5 * (base[0] + base[i])
            for j in range(1, i):
                s += base[j]
        else:
            s = 0.5 * (base[0] * np.exp(-decay * (ti - t[0])) + base[i])
            for j in range(1, i):
                s += base[j] * np.exp(-decay * (ti - t[j]))
        out[i - 1] = h * s
    return out


def phi_base_numpy(code, a, u):
    u = np.asarray(u, dtype=float)
    if code == PHI_SIN:
        return a * np.sin(u)
    if code == PHI_CLIP:
        return a * np.minimum(np.abs(u), 1.0)
    if code == PHI_LOG_SHIFT:
        return u - a * np.sign(u) * np.log1p(np.abs(u))
    return np.zeros_like(u)


def phi_family_numpy(code, a, decay, t, tau, u):
    """Vectorised family integrand Phi(t, tau, u)."""
    shape = np.broadcast(np.asarray(t), np.asarray(tau), np.asarray(u)).shape
    v = phi_base_numpy(code, a, u)
    if decay != 0.0:
        v = v * np.exp(-decay * (np.asarray(t) - np.asarray(tau)))
    return np.broadcast_to(v, shape)


def trapezoid_weights(n):
    """Lower-triangular (n, n+1) trapezoid weights on the uniform grid i/n."""
    h = 1.0 / n
    W = np.tril(np.full((n, n + 1), h), k=1)
    rows = np.arange(n)
    W[:, 0] = 0.5 * h
    W[rows, rows + 1] = 0.5 * h
    return W


def callable_quadrature(phi, t, x, W):
    """Dense numpy quadrature for an arbitrary vectorised ``phi(t, tau, u)``."""
    vals = phi(t[1:, None], t[None, :], x[None, :])
    return np.sum(W * vals, axis=1)


def family_quadrature_numpy(code, a, decay, t, x, W):
    base = phi_base_numpy(code, a, x)
    if decay != 0.0:
        W = W * np.exp(-decay * (t[1:, None] - t[None, :]))
    return W @ base


if HAS_NUMBA:
    _solve_small_jit = _maybe_jit(_solve_small)
    _affine_minimizer_jit = _jit_with(_affine_minimizer, _solve_small=_solve_small_jit)
    wolfe_mnp_jit = _jit_with(wolfe_mnp_py, _affine_minimizer=_affine_minimizer_jit)
    family_quadrature_jit = _jit_with(family_quadrature_py, _phi_base=_maybe_jit(_phi_base))
else:  # pragma: no cover
    wolfe_mnp_jit = wolfe_mnp_py
    family_quadrature_jit = family_quadrature_py
wolfe_mnp = wolfe_mnp_jit if USE_NUMBA else wolfe_mnp_py


def family_quadrature(code, a, decay, t, x, W):
    if USE_NUMBA:
        return family_quadrature_jit(code, float(a), float(decay), t, x)
    return family_quadrature_numpy(code, a, decay, t, x, W)
