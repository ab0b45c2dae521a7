"""Convolution kernel backends.

Two implementations with identical contracts: a numpy one whose inner
contractions hit BLAS, and a compiled Cython/OpenMP one with direct loops.
On BLAS-backed numpy builds the numpy path benchmarks faster at this
model's shapes, so auto selection prefers it; CROSSNORM_BACKEND=cython
forces the compiled kernels (the better choice where numpy has no tuned
BLAS). Selection happens once at import. CROSSNORM_THREADS caps kernel
parallelism (0 or absent = automatic).
"""

import os

import numpy as np

from . import _conv_np

_VALID_BACKENDS = ("auto", "cython", "python")


def _read_thread_env():
    raw = os.environ.get("CROSSNORM_THREADS", "").strip()
    if not raw:
        return 0
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"CROSSNORM_THREADS must be an integer, got {raw!r}") from None
    return max(n, 0)


_requested = os.environ.get("CROSSNORM_BACKEND", "auto").strip().lower() or "auto"
if _requested not in _VALID_BACKENDS:
    raise ImportError(
        f"CROSSNORM_BACKEND must be one of {_VALID_BACKENDS}, got {_requested!r}"
    )

_cy = None
try:
    from . import _conv_cy as _cy
except ImportError:
    _cy = None
if _requested == "cython" and _cy is None:
    raise ImportError(
        "CROSSNORM_BACKEND=cython but the compiled extension is unavailable; "
        "build it with `pip install -e . --no-build-isolation`"
    )

if _requested == "cython":
    _impl, BACKEND = _cy, "cython"
else:
    _impl, BACKEND = _conv_np, "python"

_num_threads = _read_thread_env()


def backend_name():
    return BACKEND


def get_num_threads():
    return _num_threads


def set_num_threads(n):
    """Cap kernel parallelism; 0 restores automatic selection."""
    global _num_threads
    _num_threads = max(int(n), 0)


def get_backend(name):
    """Return a specific backend module (for parity tests and benchmarks)."""
    if name == "python":
        return _conv_np
    if name == "cython":
        if _cy is None:
            raise ValueError("compiled backend is not available")
        return _cy
    raise ValueError(f"unknown backend {name!r}")


def conv_output_hw(H, W, k, stride, pad):
    return (H + 2 * pad - k) // stride + 1, (W + 2 * pad - k) // stride + 1


def _c(a):
    return np.ascontiguousarray(a)


def conv2d_forward(x, w, bias, stride, pad, impl=None):
    B, C, H, W = x.shape
    O, _, K, _ = w.shape
    HO, WO = conv_output_hw(H, W, K, stride, pad)
    out = np.empty((B, O, HO, WO), dtype=x.dtype)
    (impl or _impl).conv2d_forward(_c(x), _c(w), _c(bias), out, stride, pad, _num_threads)
    return out


def conv2d_backward_input(dout, w, input_shape, stride, pad, impl=None):
    dx = np.empty(input_shape, dtype=dout.dtype)
    (impl or _impl).conv2d_backward_input(_c(dout), _c(w), dx, stride, pad, _num_threads)
    return dx


def conv2d_backward_weight(x, dout, weight_shape, stride, pad, impl=None):
    dw = np.empty(weight_shape, dtype=x.dtype)
    (impl or _impl).conv2d_backward_weight(_c(x), _c(dout), dw, stride, pad, _num_threads)
    return dw
