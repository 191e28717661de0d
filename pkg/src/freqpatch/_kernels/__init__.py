"""Hot numerical kernels with two interchangeable backends.

The compiled Cython extension (``_core``) is preferred; the pure-numpy
module is the fallback. Selection happens once at import. Set
``FREQPATCH_FORCE_NUMPY=1`` to force the fallback (used by the benchmark
and the backend-parity tests).
"""

import os
from functools import lru_cache

import numpy as np

from . import numpy_backend

BACKEND = "numpy"
_impl = numpy_backend

if not os.environ.get("FREQPATCH_FORCE_NUMPY"):
    try:
        from . import _core as _compiled

        BACKEND = "compiled"
        _impl = _compiled
    except ImportError:
        pass


@lru_cache(maxsize=256)
def bilinear_coords(n_in: int, n_out: int):
    """Source indices and weights for 1-D bilinear sampling.

    Half-pixel-center convention with edge clamping: output sample i reads
    source coordinate (i + 0.5) * n_in / n_out - 0.5.
    """
    s = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    s = np.clip(s, 0.0, n_in - 1.0)
    i0 = np.floor(s).astype(np.int64)
    i0 = np.minimum(i0, n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    w1 = s - i0
    return i0, i1, w1


# Conv dispatches to the BLAS-backed im2col paths unconditionally: they beat
# the direct compiled loops at every shape this package hits once warm (see
# benchmarks/benchmark_kernels.py). The compiled conv kernels remain as
# reference implementations exercised by the parity tests.

def conv2d_forward(x, w, b, stride=1, pad=0):
    return numpy_backend.conv2d_forward(x, w, b, stride, pad)


def conv2d_backward_input(gy, w, stride, pad, in_h, in_w):
    return numpy_backend.conv2d_backward_input(gy, w, stride, pad, in_h, in_w)


def conv2d_backward_weights(x, gy, stride, pad, kh, kw):
    return numpy_backend.conv2d_backward_weights(x, gy, stride, pad, kh, kw)


def resize_forward(x, out_h, out_w):
    if (out_h, out_w) == x.shape[:2]:
        return x.copy()
    y0, y1, wy = bilinear_coords(x.shape[0], out_h)
    x0, x1, wx = bilinear_coords(x.shape[1], out_w)
    return _impl.resize_forward(x, y0, y1, wy, x0, x1, wx)


def resize_adjoint(gy, in_h, in_w):
    if (in_h, in_w) == gy.shape[:2]:
        return gy.copy()
    y0, y1, wy = bilinear_coords(in_h, gy.shape[0])
    x0, x1, wx = bilinear_coords(in_w, gy.shape[1])
    return _impl.resize_adjoint(gy, y0, y1, wy, x0, x1, wx, in_h, in_w)


def tv_loss_and_grad(x, delta=1e-8):
    return _impl.tv_loss_and_grad(x, delta)


def tv_r_loss_and_grad(x, delta=1e-8):
    return _impl.tv_r_loss_and_grad(x, delta)
