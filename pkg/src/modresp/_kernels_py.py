"""NumPy/SciPy implementations of the compiled kernels in ``_kernels.pyx``."""
import numpy as np
from scipy import signal


def allpass_cascade(x, a1, a2):
    """Run ``x`` through a cascade of second-order all-pass sections."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    a1 = np.asarray(a1, dtype=np.float64)
    a2 = np.asarray(a2, dtype=np.float64)
    if a1.size == 0:
        return x.copy()
    ones = np.ones_like(a1)
    sos = np.column_stack([a2, a1, ones, ones, a1, a2])
    return signal.sosfilt(sos, x)


def yin_pick(cmnd, tau_min, tau_max, threshold):
    """Absolute-threshold dip search; see the compiled version."""
    cmnd = np.asarray(cmnd, dtype=np.float64)
    nfr, width = cmnd.shape
    hi = min(tau_max, width - 2)
    lags = np.full(nfr, -1, dtype=np.int64)
    refined = np.full(nfr, np.nan)
    if hi < tau_min:
        return lags, refined
    below = cmnd[:, tau_min:hi + 1] < threshold
    hit = below.any(axis=1)
    first = tau_min + np.argmax(below, axis=1)
    for f in np.flatnonzero(hit):
        row = cmnd[f]
        t = first[f]
        while t < hi and row[t + 1] < row[t]:
            t += 1
        lags[f] = t
        a, b, c = row[t - 1], row[t], row[t + 1]
        den = a - 2.0 * b + c
        refined[f] = t + 0.5 * (a - c) / den if den > 0.0 else float(t)
    return lags, refined
