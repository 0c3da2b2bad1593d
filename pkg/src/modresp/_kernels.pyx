# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. ``modresp.kernels`` falls back to ``_kernels_py``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def allpass_cascade(const double[::1] x, const double[::1] a1, const double[::1] a2):
    """Run ``x`` through a cascade of second-order all-pass sections.

    Section ``k`` is ``(a2 + a1 z^-1 + z^-2) / (1 + a1 z^-1 + a2 z^-2)``.
    Sections are advanced four at a time on a skewed sample front so the
    four recursions are independent inside the loop body.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t nsec = a1.shape[0]
    cdef Py_ssize_t i, k, j
    cdef double c1, c2, xi, x1, x2, y1, y2, yi
    cdef double p1[4]
    cdef double p2[4]
    cdef double sx1[4]
    cdef double sx2[4]
    cdef double sy1[4]
    cdef double sy2[4]
    cdef double v0, v1, v2, v3, w0, w1, w2, w3
    out = np.array(x, dtype=np.float64, copy=True)
    cdef double[::1] buf = out
    k = 0
    while k + 4 <= nsec:
        for j in range(4):
            p1[j] = a1[k + j]
            p2[j] = a2[k + j]
            sx1[j] = 0.0
            sx2[j] = 0.0
            sy1[j] = 0.0
            sy2[j] = 0.0
        # v_j holds the pending input of section j on the skewed front
        v1 = 0.0
        v2 = 0.0
        v3 = 0.0
        for i in range(n + 3):
            v0 = buf[i] if i < n else 0.0
            w0 = p2[0] * (v0 - sy2[0]) + p1[0] * (sx1[0] - sy1[0]) + sx2[0]
            w1 = p2[1] * (v1 - sy2[1]) + p1[1] * (sx1[1] - sy1[1]) + sx2[1]
            w2 = p2[2] * (v2 - sy2[2]) + p1[2] * (sx1[2] - sy1[2]) + sx2[2]
            w3 = p2[3] * (v3 - sy2[3]) + p1[3] * (sx1[3] - sy1[3]) + sx2[3]
            sx2[0] = sx1[0]; sx1[0] = v0; sy2[0] = sy1[0]; sy1[0] = w0
            sx2[1] = sx1[1]; sx1[1] = v1; sy2[1] = sy1[1]; sy1[1] = w1
            sx2[2] = sx1[2]; sx1[2] = v2; sy2[2] = sy1[2]; sy1[2] = w2
            sx2[3] = sx1[3]; sx1[3] = v3; sy2[3] = sy1[3]; sy1[3] = w3
            if i >= 3:
                buf[i - 3] = w3
            v3 = w2
            v2 = w1
            v1 = w0
        k += 4
    while k < nsec:
        c1 = a1[k]
        c2 = a2[k]
        x1 = 0.0
        x2 = 0.0
        y1 = 0.0
        y2 = 0.0
        for i in range(n):
            xi = buf[i]
            yi = c2 * (xi - y2) + c1 * (x1 - y1) + x2
            x2 = x1
            x1 = xi
            y2 = y1
            y1 = yi
            buf[i] = yi
        k += 1
    return out


def yin_pick(const double[:, ::1] cmnd, Py_ssize_t tau_min, Py_ssize_t tau_max,
             double threshold):
    """Absolute-threshold dip search on cumulative-mean-normalized difference rows.

    Returns integer lags (``-1`` when no lag dips below ``threshold``) and the
    parabolically refined lags.
    """
    cdef Py_ssize_t nfr = cmnd.shape[0]
    cdef Py_ssize_t width = cmnd.shape[1]
    cdef Py_ssize_t f, t, hi
    cdef double a, b, c, den
    lags = np.full(nfr, -1, dtype=np.int64)
    refined = np.full(nfr, np.nan, dtype=np.float64)
    cdef long long[::1] lv = lags
    cdef double[::1] rv = refined
    hi = tau_max if tau_max < width - 1 else width - 2
    for f in range(nfr):
        t = tau_min
        while t <= hi and not (cmnd[f, t] < threshold):
            t += 1
        if t > hi:
            continue
        while t < hi and cmnd[f, t + 1] < cmnd[f, t]:
            t += 1
        lv[f] = t
        a = cmnd[f, t - 1]
        b = cmnd[f, t]
        c = cmnd[f, t + 1]
        den = a - 2.0 * b + c
        if den > 0.0:
            rv[f] = t + 0.5 * (a - c) / den
        else:
            rv[f] = t
    return lags, refined
