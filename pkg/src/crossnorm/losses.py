"""Masked training losses and angular-error statistics.

The cosine loss averages per-pixel cosine distance over masked pixels; the
image loss is a mean squared error per masked pixel, so the two are summable
with equal weights. Metrics operate on raw arrays and carry no gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, Tensor, _result

COSINE_EPS = 1e-8
DEGENERATE_NORM = 1e-8


class EmptyMaskError(ValueError):
    pass


def _check_loss_shapes(name, a, b, mask):
    if a.shape != b.shape:
        raise ShapeError(f"{name}: shape mismatch {a.shape} vs {b.shape}")
    if len(a.shape) != 4 or a.shape[1] != 3:
        raise ShapeError(f"{name}: expected (B,3,H,W) maps, got {a.shape}")
    if mask.shape != (a.shape[0], 1, a.shape[2], a.shape[3]):
        raise ShapeError(f"{name}: mask shape {mask.shape} does not match maps of shape {a.shape}")


def _mask_count(name, mask_data):
    count = float(mask_data.sum())
    if count <= 0:
        raise EmptyMaskError(f"{name}: mask has no nonzero pixels")
    return count


def cosine_loss(n, n_hat, mask):
    """Mean masked cosine distance between ground-truth and predicted normals."""
    _check_loss_shapes("cosine_loss", n, n_hat, mask)
    count = _mask_count("cosine_loss", mask.data)
    a = n.data
    b = n_hat.data
    m = mask.data
    dtype = b.dtype

    na = np.sqrt((a * a).sum(axis=1, keepdims=True))
    nb = np.sqrt((b * b).sum(axis=1, keepdims=True))
    dot = (a * b).sum(axis=1, keepdims=True)
    s = na * nb + np.asarray(COSINE_EPS, dtype=dtype)
    ratio = dot / s
    loss = np.asarray(1.0 - (m * ratio).sum() / count, dtype=dtype)

    def backward(g):
        scale = -g / count
        if n_hat.requires_grad:
            nb_safe = np.maximum(nb, 1e-20)
            db = a / s - dot * na * (b / nb_safe) / (s * s)
            n_hat.accumulate_grad(scale * m * db)
        if n.requires_grad:
            na_safe = np.maximum(na, 1e-20)
            da = b / s - dot * nb * (a / na_safe) / (s * s)
            n.accumulate_grad(scale * m * da)

    return _result(loss, (n, n_hat), backward)


def l2_loss(i, i_hat, mask):
    """Masked squared error, averaged over masked pixels."""
    _check_loss_shapes("l2_loss", i, i_hat, mask)
    count = _mask_count("l2_loss", mask.data)
    diff = i_hat.data - i.data
    m = mask.data
    sq = (diff * diff).sum(axis=1, keepdims=True)
    loss = np.asarray((m * sq).sum() / count, dtype=i_hat.data.dtype)

    def backward(g):
        scale = 2.0 * g / count
        if i_hat.requires_grad:
            i_hat.accumulate_grad(scale * m * diff)
        if i.requires_grad:
            i.accumulate_grad(-scale * m * diff)

    return _result(loss, (i, i_hat), backward)


@dataclass
class AngularErrorStats:
    """Aggregate angular-error statistics over masked pixels of one map set."""

    mean_deg: float
    std_deg: float
    pct20: float
    pct25: float
    pct30: float
    n_pixels: int

    def row(self):
        return format_error_row(self.mean_deg, self.std_deg, self.pct20, self.pct25, self.pct30)


def format_error_row(mean_deg, std_deg, pct20, pct25, pct30):
    """Render one report row, e.g. ``22.8±6.5  49.0%  62.9%  74.1%``."""
    return (
        f"{mean_deg:.1f}±{std_deg:.1f}  "
        f"{100.0 * pct20:.1f}%  {100.0 * pct25:.1f}%  {100.0 * pct30:.1f}%"
    )


def _as_array(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def angular_error_map(n, n_hat, mask):
    """Angular errors in degrees at masked pixels, flattened.

    Ground truth is taken as-is (unit length by contract); predictions are
    normalized internally. Predictions with near-zero norm score 90 degrees.
    """
    a = _as_array(n)
    b = _as_array(n_hat)
    m = _as_array(mask)
    if a.shape != b.shape:
        raise ShapeError(f"angular_error: shape mismatch {a.shape} vs {b.shape}")
    if m.shape != (a.shape[0], 1, a.shape[2], a.shape[3]):
        raise ShapeError(f"angular_error: mask shape {m.shape} does not match {a.shape}")

    nb = np.sqrt((b.astype(np.float64) ** 2).sum(axis=1, keepdims=True))
    degenerate = nb < DEGENERATE_NORM
    nb_safe = np.where(degenerate, 1.0, nb)
    cosang = (a * (b / nb_safe)).sum(axis=1, keepdims=True)
    cosang = np.clip(cosang, -1.0, 1.0)
    err = np.degrees(np.arccos(cosang))
    err = np.where(degenerate, 90.0, err)
    return err[m > 0]


def angular_error_stats(n, n_hat, mask):
    """Mean/std (population) angular error and strict sub-threshold fractions."""
    errors = angular_error_map(n, n_hat, mask)
    if errors.size == 0:
        raise EmptyMaskError("angular_error_stats: mask has no nonzero pixels")
    return AngularErrorStats(
        mean_deg=float(errors.mean()),
        std_deg=float(errors.std()),
        pct20=float((errors < 20.0).mean()),
        pct25=float((errors < 25.0).mean()),
        pct30=float((errors < 30.0).mean()),
        n_pixels=int(errors.size),
    )


def angular_error_below(errors, threshold):
    return float((np.asarray(errors) < threshold).mean())


def check_unit_normals(normals, mask, tol=1e-3):
    """Verify masked ground-truth normals are unit length within tol."""
    a = _as_array(normals)
    m = _as_array(mask)
    norms = np.sqrt((a.astype(np.float64) ** 2).sum(axis=1, keepdims=True))
    sel = norms[m > 0]
    if sel.size and (np.abs(sel - 1.0) > tol).any():
        worst = float(np.abs(sel - 1.0).max())
        raise ValueError(f"masked normals deviate from unit length by up to {worst:.2e}")
    return True
