"""Backend selection for the hot kernels.

The compiled extension is preferred. Set ``KEDFORMER_PURE_PYTHON=1`` before
import to force the numpy fallback; :func:`use_backend` switches at runtime
(tests and the backend benchmark use it).
"""

import os

import numpy as np

from . import _kernels_py

try:
    from . import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None

_active = _kernels_py if (_kernels_c is None or os.environ.get("KEDFORMER_PURE_PYTHON") == "1") else _kernels_c


def available_backends():
    return ["python"] + (["compiled"] if _kernels_c is not None else [])


def backend():
    return _active.BACKEND


def use_backend(name):
    """Select ``"python"`` or ``"compiled"``; returns the previous name."""
    global _active
    previous = _active.BACKEND
    if name == "python":
        _active = _kernels_py
    elif name == "compiled":
        if _kernels_c is None:
            raise RuntimeError("compiled kernels are not built; run `pip install -e .`")
        _active = _kernels_c
    else:
        raise ValueError(f"unknown backend {name!r}")
    return previous


def _as3d(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    return x.reshape((-1,) + x.shape[-2:])


def moving_average(x, kernel):
    """Replicate-padded centered moving average along axis -2 of ``x``."""
    return _active.moving_average(_as3d(x), kernel).reshape(x.shape)


def moving_average_grad(g, kernel):
    return _active.moving_average_grad(_as3d(g), kernel).reshape(g.shape)


def delay_aggregate(v, lags, weights):
    """Weighted sum of left-rolled copies of ``v`` along axis -2.

    ``v`` is ``(..., L, C)``; ``lags`` and ``weights`` are ``(..., K)`` with
    the same leading axes.
    """
    lead = v.shape[:-2]
    out = _active.delay_aggregate(
        _as3d(v),
        np.ascontiguousarray(lags, dtype=np.int64).reshape(-1, lags.shape[-1]),
        np.ascontiguousarray(weights, dtype=np.float64).reshape(-1, weights.shape[-1]),
    )
    return out.reshape(lead + v.shape[-2:])


def delay_aggregate_grad(g, v, lags, weights):
    lead = v.shape[:-2]
    gv, gw = _active.delay_aggregate_grad(
        _as3d(g),
        _as3d(v),
        np.ascontiguousarray(lags, dtype=np.int64).reshape(-1, lags.shape[-1]),
        np.ascontiguousarray(weights, dtype=np.float64).reshape(-1, weights.shape[-1]),
    )
    return gv.reshape(v.shape), gw.reshape(lead + (lags.shape[-1],))
