"""Hot inner loops, compiled when available.

The Cython extension ``modresp._kernels`` is used if it was built; otherwise
the NumPy/SciPy versions in ``modresp._kernels_py`` are imported. Setting
``MODRESP_PURE_PYTHON=1`` forces the fallback.
"""
import os

if os.environ.get("MODRESP_PURE_PYTHON", "") not in ("", "0"):
    from modresp._kernels_py import allpass_cascade, yin_pick

    BACKEND = "python"
else:
    try:
        from modresp._kernels import allpass_cascade, yin_pick

        BACKEND = "cython"
    except ImportError:  # extension not built
        from modresp._kernels_py import allpass_cascade, yin_pick

        BACKEND = "python"

__all__ = ["BACKEND", "allpass_cascade", "yin_pick"]
