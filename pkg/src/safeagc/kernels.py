"""Hot loops for the held-input plant simulation.

Each kernel has a numba version and a plain numpy version with the same
signature. Setting ``SAFEAGC_DISABLE_NUMBA=1`` (or not having numba installed)
selects the numpy path; ``BACKEND`` reports which one is live.
"""

import os

import numpy as np

_DISABLED = os.environ.get("SAFEAGC_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError("numba disabled by SAFEAGC_DISABLE_NUMBA")
    from numba import njit
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


def _linear_rk4_numpy(A, c, x0, h, nsteps, freq_idx, record_every):
    """RK4 on ``xdot = A x + c`` for ``nsteps`` steps of length ``h``.

    Returns ``(x_final, peak_abs_freq, samples)`` where ``peak_abs_freq`` is the
    largest ``|x[freq_idx[i]]|`` seen at any step boundary (start included) and
    ``samples`` holds the state every ``record_every`` steps (empty if 0).
    """
    x = x0.copy()
    peak = np.abs(x[freq_idx])
    nrec = nsteps // record_every if record_every > 0 else 0
    samples = np.empty((nrec, x.size))
    half = 0.5 * h
    sixth = h / 6.0
    r = 0
    for k in range(nsteps):
        k1 = A @ x + c
        k2 = A @ (x + half * k1) + c
        k3 = A @ (x + half * k2) + c
        k4 = A @ (x + h * k3) + c
        x = x + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        np.maximum(peak, np.abs(x[freq_idx]), out=peak)
        if record_every > 0 and (k + 1) % record_every == 0:
            samples[r] = x
            r += 1
    return x, peak, samples


@njit(cache=True, fastmath=False)
def _linear_rk4_numba(A, c, x0, h, nsteps, freq_idx, record_every):
    n = x0.size
    m = freq_idx.size
    x = x0.copy()
    peak = np.empty(m)
    for i in range(m):
        peak[i] = abs(x[freq_idx[i]])
    nrec = nsteps // record_every if record_every > 0 else 0
    samples = np.empty((nrec, n))
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    half = 0.5 * h
    sixth = h / 6.0
    r = 0
    for k in range(nsteps):
        for i in range(n):
            s = c[i]
            for j in range(n):
                s += A[i, j] * x[j]
            k1[i] = s
        for i in range(n):
            tmp[i] = x[i] + half * k1[i]
        for i in range(n):
            s = c[i]
            for j in range(n):
                s += A[i, j] * tmp[j]
            k2[i] = s
        for i in range(n):
            tmp[i] = x[i] + half * k2[i]
        for i in range(n):
            s = c[i]
            for j in range(n):
                s += A[i, j] * tmp[j]
            k3[i] = s
        for i in range(n):
            tmp[i] = x[i] + h * k3[i]
        for i in range(n):
            s = c[i]
            for j in range(n):
                s += A[i, j] * tmp[j]
            k4[i] = s
        for i in range(n):
            x[i] = x[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        for i in range(m):
            v = abs(x[freq_idx[i]])
            if v > peak[i]:
                peak[i] = v
        if record_every > 0 and (k + 1) % record_every == 0:
            for i in range(n):
                samples[r, i] = x[i]
            r += 1
    return x, peak, samples


if HAVE_NUMBA:
    BACKEND = "numba"
    linear_rk4 = _linear_rk4_numba
else:
    BACKEND = "numpy"
    linear_rk4 = _linear_rk4_numpy


def integrate_linear(A, c, x0, h, nsteps, freq_idx, record_every=0, backend=None):
    """Dispatch wrapper normalising dtypes; ``backend`` forces 'numba' or 'numpy'."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    freq_idx = np.ascontiguousarray(freq_idx, dtype=np.int64)
    if backend is None:
        fn = linear_rk4
    elif backend == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but unavailable")
        fn = _linear_rk4_numba
    elif backend == "numpy":
        fn = _linear_rk4_numpy
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return fn(A, c, x0, float(h), int(nsteps), freq_idx, int(record_every))
