"""Pure-numpy convolution kernels (cross-correlation).

Same contracts as the compiled backend: loops run over the kernel footprint
only, each offset contributing one BLAS-backed contraction.
"""

import numpy as np


def _padded(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def conv2d_forward(x, w, bias, out, stride, pad, num_threads=0):
    B, C, H, W = x.shape
    O, _, K, _ = w.shape
    HO, WO = out.shape[2], out.shape[3]
    xp = _padded(x, pad)
    out[:] = bias[None, :, None, None]
    for kh in range(K):
        for kw in range(K):
            xs = xp[:, :, kh:kh + stride * HO:stride, kw:kw + stride * WO:stride]
            out += np.einsum("bchw,oc->bohw", xs, w[:, :, kh, kw], optimize=True)


def conv2d_backward_input(dout, w, dx, stride, pad, num_threads=0):
    B, C, H, W = dx.shape
    O, _, K, _ = w.shape
    HO, WO = dout.shape[2], dout.shape[3]
    dxp = np.zeros((B, C, H + 2 * pad, W + 2 * pad), dtype=dx.dtype)
    for kh in range(K):
        for kw in range(K):
            g = np.einsum("bohw,oc->bchw", dout, w[:, :, kh, kw], optimize=True)
            dxp[:, :, kh:kh + stride * HO:stride, kw:kw + stride * WO:stride] += g
    dx[:] = dxp[:, :, pad:pad + H, pad:pad + W]


def conv2d_backward_weight(x, dout, dw, stride, pad, num_threads=0):
    B, C, H, W = x.shape
    O, _, K, _ = dw.shape
    HO, WO = dout.shape[2], dout.shape[3]
    xp = _padded(x, pad)
    for kh in range(K):
        for kw in range(K):
            xs = xp[:, :, kh:kh + stride * HO:stride, kw:kw + stride * WO:stride]
            dw[:, :, kh, kw] = np.einsum("bohw,bchw->oc", dout, xs, optimize=True)
