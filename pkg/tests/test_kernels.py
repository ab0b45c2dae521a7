"""Backend parity: the compiled and numpy kernels must agree."""

import numpy as np
import pytest

from crossnorm import _kernels

try:
    _kernels.get_backend("cython")
    HAVE_CYTHON = True
except ValueError:
    HAVE_CYTHON = False

needs_cython = pytest.mark.skipif(not HAVE_CYTHON, reason="compiled backend not built")

CASES = [
    # (B, C, H, W, O, stride, pad)
    (1, 1, 4, 4, 1, 1, 0),
    (2, 3, 8, 8, 4, 1, 1),
    (2, 3, 9, 9, 4, 2, 1),
    (1, 2, 7, 5, 3, 3, 1),
    (2, 4, 6, 6, 2, 2, 0),
]


@needs_cython
@pytest.mark.parametrize("B,C,H,W,O,stride,pad", CASES)
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_forward_parity(B, C, H, W, O, stride, pad, dtype):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(B, C, H, W)).astype(dtype)
    w = rng.normal(size=(O, C, 3, 3)).astype(dtype)
    b = rng.normal(size=O).astype(dtype)
    out_py = _kernels.conv2d_forward(x, w, b, stride, pad, impl=_kernels.get_backend("python"))
    out_cy = _kernels.conv2d_forward(x, w, b, stride, pad, impl=_kernels.get_backend("cython"))
    tol = 1e-5 if dtype == np.float32 else 1e-12
    assert out_py.shape == out_cy.shape
    np.testing.assert_allclose(out_py, out_cy, rtol=tol, atol=tol)


@needs_cython
@pytest.mark.parametrize("B,C,H,W,O,stride,pad", CASES)
def test_backward_parity(B, C, H, W, O, stride, pad):
    rng = np.random.default_rng(1)
    x = rng.normal(size=(B, C, H, W))
    w = rng.normal(size=(O, C, 3, 3))
    b = np.zeros(O)
    out = _kernels.conv2d_forward(x, w, b, stride, pad)
    dout = rng.normal(size=out.shape)
    for fn, args, shape in [
        (_kernels.conv2d_backward_input, (dout, w), x.shape),
        (_kernels.conv2d_backward_weight, (x, dout), w.shape),
    ]:
        g_py = fn(*args, shape, stride, pad, impl=_kernels.get_backend("python"))
        g_cy = fn(*args, shape, stride, pad, impl=_kernels.get_backend("cython"))
        np.testing.assert_allclose(g_py, g_cy, rtol=1e-12, atol=1e-12)


@needs_cython
def test_thread_cap_does_not_change_results():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(2, 3, 12, 12))
    w = rng.normal(size=(5, 3, 3, 3))
    b = rng.normal(size=5)
    impl = _kernels.get_backend("cython")
    old = _kernels.get_num_threads()
    try:
        _kernels.set_num_threads(1)
        one = _kernels.conv2d_forward(x, w, b, 1, 1, impl=impl)
        _kernels.set_num_threads(2)
        two = _kernels.conv2d_forward(x, w, b, 1, 1, impl=impl)
    finally:
        _kernels.set_num_threads(old)
    assert np.array_equal(one, two)


def test_forward_against_naive_loops():
    rng = np.random.default_rng(3)
    B, C, H, W, O, k, stride, pad = 2, 3, 6, 7, 4, 3, 2, 1
    x = rng.normal(size=(B, C, H, W))
    w = rng.normal(size=(O, C, k, k))
    b = rng.normal(size=O)
    out = _kernels.conv2d_forward(x, w, b, stride, pad)

    HO = (H + 2 * pad - k) // stride + 1
    WO = (W + 2 * pad - k) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    naive = np.zeros((B, O, HO, WO))
    for bi in range(B):
        for o in range(O):
            for oh in range(HO):
                for ow in range(WO):
                    patch = xp[bi, :, oh * stride:oh * stride + k, ow * stride:ow * stride + k]
                    naive[bi, o, oh, ow] = (patch * w[o]).sum() + b[o]
    np.testing.assert_allclose(out, naive, rtol=1e-12, atol=1e-12)


def test_backend_env_selection():
    assert _kernels.backend_name() in ("python", "cython")
