"""Compare the compiled kernels with the NumPy/SciPy fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Prints best-of-N wall time per kernel and backend, plus the maximum absolute
difference between the two backends' outputs.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from modresp import _kernels_py as py
from modresp.capricep import UnitConfig, _coefficients, section_parameters

try:
    from modresp import _kernels as cy
except ImportError:  # extension not built
    cy = None


def allpass_case(num_sections=440, seconds=1.0, fs=44100.0):
    cfg = UnitConfig(num_sections=num_sections, sample_rate=fs)
    centers, radii, _ = section_parameters(0, cfg)
    a1, a2 = _coefficients(centers, radii, fs)
    x = np.zeros(int(seconds * fs))
    x[len(x) // 2] = 1.0
    return (x, np.ascontiguousarray(a1), np.ascontiguousarray(a2))


def yin_case(frames=2000, width=1800, seed=0):
    rng = np.random.default_rng(seed)
    cmnd = np.ascontiguousarray(rng.uniform(0.0, 2.0, (frames, width)))
    return (cmnd, 40, width - 2, 0.1)


def best(fn, args, repeat):
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    cases = {"allpass_cascade": allpass_case(), "yin_pick": yin_case()}
    print(f"{'kernel':<18}{'python (s)':>12}{'cython (s)':>12}{'speedup':>10}{'max |diff|':>13}")
    for name, case in cases.items():
        t_py = best(getattr(py, name), case, args.repeat)
        if cy is None:
            print(f"{name:<18}{t_py:12.4f}{'n/a':>12}{'n/a':>10}{'n/a':>13}")
            continue
        t_cy = best(getattr(cy, name), case, args.repeat)
        a, b = getattr(py, name)(*case), getattr(cy, name)(*case)
        a, b = (a, b) if isinstance(a, tuple) else ((a,), (b,))
        diff = max(float(np.max(np.abs(np.asarray(u, float) - np.asarray(v, float))))
                   for u, v in zip(a, b))
        print(f"{name:<18}{t_py:12.4f}{t_cy:12.4f}{t_py / t_cy:10.1f}{diff:13.2e}")


if __name__ == "__main__":
    main()
