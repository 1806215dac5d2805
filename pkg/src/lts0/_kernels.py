"""Hot inner loops with a numba path and a pure numpy/Python fallback.

The numba path is used when numba imports and ``LTS0_DISABLE_NUMBA`` is
unset (or ``0``). Both paths are always importable so tests and the
benchmark script can compare them directly: ``py_<name>`` is the fallback,
``nb_<name>`` the jitted version (``None`` when numba is unavailable), and
``<name>`` the dispatched choice.

The PRNG kernel emits raw uniforms only. Box-Muller is applied by the
caller in numpy, so both paths produce bit-identical Gaussian streams.
"""

from __future__ import annotations

import os

import numpy as np

_MASK = (1 << 64) - 1

try:  # pragma: no cover - exercised implicitly
    import numba
except ImportError:  # pragma: no cover
    numba = None


def _flag_disabled() -> bool:
    return os.environ.get("LTS0_DISABLE_NUMBA", "0").strip().lower() in ("1", "true", "yes", "on")


USE_NUMBA = numba is not None and not _flag_disabled()

_NJIT_OPTS = {"cache": True, "fastmath": False, "nogil": True}


def _njit(func):
    if numba is None:
        return None
    return numba.njit(**_NJIT_OPTS)(func)


# ---------------------------------------------------------------------------
# xoshiro256++ uniform stream


def py_xoshiro_uniforms(state: np.ndarray, count: int) -> np.ndarray:
    """Advance a xoshiro256++ state and return ``count`` uniforms in (0, 1).

    Parameters
    ----------
    state : ndarray of uint64, shape (4,)
        Generator state, updated in place.
    count : int
        Number of draws.

    Returns
    -------
    ndarray of float64
        ``((x >> 11) + 0.5) * 2**-53`` for each 64-bit output ``x``.
    """
    s0, s1, s2, s3 = (int(v) for v in state)
    out = np.empty(count, dtype=np.float64)
    scale = 2.0 ** -53
    for i in range(count):
        r = (s0 + s3) & _MASK
        r = (((r << 23) | (r >> 41)) & _MASK) + s0
        r &= _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & _MASK
        out[i] = ((r >> 11) + 0.5) * scale
    state[0], state[1], state[2], state[3] = s0, s1, s2, s3
    return out


def _nb_xoshiro_uniforms_src(state, count):
    out = np.empty(count, dtype=np.float64)
    s0 = state[0]
    s1 = state[1]
    s2 = state[2]
    s3 = state[3]
    sh11 = np.uint64(11)
    sh17 = np.uint64(17)
    sh23 = np.uint64(23)
    sh41 = np.uint64(41)
    sh45 = np.uint64(45)
    sh19 = np.uint64(19)
    scale = 2.0 ** -53
    for i in range(count):
        r = s0 + s3
        r = ((r << sh23) | (r >> sh41)) + s0
        t = s1 << sh17
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = (s3 << sh45) | (s3 >> sh19)
        out[i] = (float(r >> sh11) + 0.5) * scale
    state[0] = s0
    state[1] = s1
    state[2] = s2
    state[3] = s3
    return out


nb_xoshiro_uniforms = _njit(_nb_xoshiro_uniforms_src)


# ---------------------------------------------------------------------------
# linear-system rollout


def py_simulate(A, B, x0, U, G, sigma, guard):
    """Roll ``x_{t+1} = A x_t + B u_t + sigma g_t`` forward.

    Parameters
    ----------
    A, B : ndarray
        System matrices, shapes (n, n) and (n, m).
    x0 : ndarray, shape (n,)
    U : ndarray, shape (steps, m)
    G : ndarray, shape (steps, n)
        Standard-normal noise draws (ignored when ``sigma == 0``).
    sigma : float
    guard : float
        Norm above which rolling stops.

    Returns
    -------
    X : ndarray, shape (steps + 1, n)
        States; rows after a blow-up are left as zeros.
    stop : int
        Index of the first state with norm above ``guard``, or -1.
    """
    steps = U.shape[0]
    n = x0.shape[0]
    X = np.zeros((steps + 1, n))
    X[0] = x0
    x = x0
    # the step that crosses the guard may overflow to inf; the guard catches it
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(steps):
            x = A @ x + B @ U[t]
            if sigma != 0.0:
                x = x + sigma * G[t]
            X[t + 1] = x
            if not _py_scaled_norm(x) <= guard:
                return X, t + 1
    return X, -1


def _py_scaled_norm(x):
    # sqrt(sum x^2) overflows once ||x|| passes ~1e154; scale by max |x_i| first
    amax = np.max(np.abs(x))
    if not amax > 0.0 or not np.isfinite(amax):
        return amax
    y = x / amax
    return amax * np.sqrt(y @ y)


def _nb_simulate_src(A, B, x0, U, G, sigma, guard):
    steps = U.shape[0]
    n = x0.shape[0]
    m = U.shape[1]
    X = np.zeros((steps + 1, n))
    for i in range(n):
        X[0, i] = x0[i]
    for t in range(steps):
        amax = 0.0
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += A[i, j] * X[t, j]
            for j in range(m):
                acc += B[i, j] * U[t, j]
            if sigma != 0.0:
                acc += sigma * G[t, i]
            X[t + 1, i] = acc
            a = abs(acc)
            if not a <= amax:  # also catches nan
                amax = a
        if not amax <= guard:
            return X, t + 1
        if amax > 0.0:
            sq = 0.0
            for i in range(n):
                y = X[t + 1, i] / amax
                sq += y * y
            if not amax * np.sqrt(sq) <= guard:
                return X, t + 1
    return X, -1


nb_simulate = _njit(_nb_simulate_src)


# ---------------------------------------------------------------------------
# Gelfand sweep


def py_power_norms(Y, t_max):
    """Return ``||Y^t||_2`` for ``t = 0..t_max``."""
    n = Y.shape[0]
    out = np.empty(t_max + 1)
    Z = np.eye(n)
    out[0] = 1.0 if n else 0.0
    for t in range(1, t_max + 1):
        Z = Y @ Z
        out[t] = np.linalg.norm(Z, 2) if n else 0.0
    return out


def _nb_power_norms_src(Y, t_max):
    n = Y.shape[0]
    out = np.empty(t_max + 1)
    Z = np.eye(n)
    out[0] = 1.0 if n > 0 else 0.0
    for t in range(1, t_max + 1):
        Z = Y @ Z
        out[t] = np.linalg.norm(Z, 2) if n > 0 else 0.0
    return out


nb_power_norms = _njit(_nb_power_norms_src)


# ---------------------------------------------------------------------------
# Vandermonde projector sums


def py_vandermonde_sums(lam, d, sub_km1, sub_k):
    """Numerator matrix and denominator of the explicit projector formula.

    Parameters
    ----------
    lam, d : ndarray, shape (n,)
        Real eigenvalues and eigenbasis coordinates of the first state.
    sub_km1 : ndarray of int, shape (C1, k-1)
        All increasing (k-1)-subsets of ``range(n)``.
    sub_k : ndarray of int, shape (C2, k)
        All increasing k-subsets.

    Returns
    -------
    num : ndarray, shape (n, n)
    den : float
    """
    n = lam.shape[0]
    den = 0.0
    for c in range(sub_k.shape[0]):
        idx = sub_k[c]
        a = 1.0
        for j in range(idx.shape[0]):
            a *= d[idx[j]]
            for l in range(j + 1, idx.shape[0]):
                a *= lam[idx[l]] - lam[idx[j]]
        den += a * a
    num = np.zeros((n, n))
    for c in range(sub_km1.shape[0]):
        idx = sub_km1[c]
        base = 1.0
        for j in range(idx.shape[0]):
            base *= d[idx[j]]
            for l in range(j + 1, idx.shape[0]):
                base *= lam[idx[l]] - lam[idx[j]]
        vec = np.empty(n)
        for u in range(n):
            a = base * d[u]
            for j in range(idx.shape[0]):
                a *= lam[idx[j]] - lam[u]
            vec[u] = a
        num += np.outer(vec, vec)
    return num, den


def _nb_vandermonde_sums_src(lam, d, sub_km1, sub_k):
    n = lam.shape[0]
    den = 0.0
    for c in range(sub_k.shape[0]):
        a = 1.0
        kk = sub_k.shape[1]
        for j in range(kk):
            a *= d[sub_k[c, j]]
            for l in range(j + 1, kk):
                a *= lam[sub_k[c, l]] - lam[sub_k[c, j]]
        den += a * a
    num = np.zeros((n, n))
    vec = np.empty(n)
    kk = sub_km1.shape[1]
    for c in range(sub_km1.shape[0]):
        base = 1.0
        for j in range(kk):
            base *= d[sub_km1[c, j]]
            for l in range(j + 1, kk):
                base *= lam[sub_km1[c, l]] - lam[sub_km1[c, j]]
        for u in range(n):
            a = base * d[u]
            for j in range(kk):
                a *= lam[sub_km1[c, j]] - lam[u]
            vec[u] = a
        for u in range(n):
            for v in range(n):
                num[u, v] += vec[u] * vec[v]
    return num, den


nb_vandermonde_sums = _njit(_nb_vandermonde_sums_src)


# ---------------------------------------------------------------------------
# dispatch


def backend() -> str:
    """Name of the active kernel path, ``"numba"`` or ``"numpy"``."""
    return "numba" if USE_NUMBA else "numpy"


if USE_NUMBA:
    xoshiro_uniforms = nb_xoshiro_uniforms
    simulate = nb_simulate
    power_norms = nb_power_norms
    vandermonde_sums = nb_vandermonde_sums
else:
    xoshiro_uniforms = py_xoshiro_uniforms
    simulate = py_simulate
    power_norms = py_power_norms
    vandermonde_sums = py_vandermonde_sums
