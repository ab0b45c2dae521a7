"""Finite-difference verification of reverse-mode gradients.

Closures are evaluated in float64; analytic gradients are compared against
central differences with a per-element step of 1e-5 * max(1, |x|). Large
tensors are probed on a random subset of elements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor

SUBSET_THRESHOLD = 256
SUBSET_SIZE = 64


@dataclass
class GradCheckReport:
    op_name: str
    max_relative_error: float
    tolerance: float
    passed: bool

    def row(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{self.op_name:<28} {self.max_relative_error:12.3e} {self.tolerance:10.1e}  {status}"


def gradient_check(op_closure, inputs, tolerance, op_name="op", seed=0):
    """Compare reverse-mode gradients of a scalar-valued closure to central
    finite differences over the given inputs."""
    for t in inputs:
        if t.data.dtype != np.float64:
            raise TypeError(f"gradient_check requires float64 inputs, got {t.data.dtype}")
        t.data = np.ascontiguousarray(t.data)
        t.zero_grad()

    out = op_closure(inputs)
    if out.data.size != 1:
        raise ValueError(f"op_closure must return a scalar, got shape {out.data.shape}")
    out.backward()

    rng = np.random.default_rng(seed)
    max_rel = 0.0
    for t in inputs:
        if not t.requires_grad:
            continue
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        aflat = analytic.reshape(-1)
        n = flat.size
        if n > SUBSET_THRESHOLD:
            indices = rng.choice(n, size=SUBSET_SIZE, replace=False)
        else:
            indices = np.arange(n)
        for idx in indices:
            x0 = flat[idx]
            h = 1e-5 * max(1.0, abs(x0))
            flat[idx] = x0 + h
            f_plus = float(op_closure(inputs).data)
            flat[idx] = x0 - h
            f_minus = float(op_closure(inputs).data)
            flat[idx] = x0
            numeric = (f_plus - f_minus) / (2.0 * h)
            ga = float(aflat[idx])
            rel = abs(ga - numeric) / max(1e-8, abs(ga) + abs(numeric))
            if rel > max_rel:
                max_rel = rel

    return GradCheckReport(op_name, max_rel, tolerance, max_rel <= tolerance)


def _away_from(arr, threshold):
    """Push values out of a +-threshold band so finite differences never
    straddle a non-smooth point (relu kink, max tie)."""
    return arr + np.sign(arr + (arr == 0)) * threshold


def standard_suite(tolerance=1e-3, seed=0):
    """Gradient-check every differentiable operation plus the scalarized
    image-to-normal forward pass of a small model."""
    from . import losses
    from . import tensor as ops
    from .model import CrossModalModel, ForwardMode, ModelConfig

    rng = np.random.default_rng(seed)
    reports = []

    def t(shape, lo=-1.0, hi=1.0, grad=True):
        return Tensor(rng.uniform(lo, hi, shape), requires_grad=grad)

    def proj(shape):
        return Tensor(rng.uniform(-1.0, 1.0, shape))

    def scalarized(fn, const):
        return lambda inputs: ops.sum_all(ops.mul(fn(inputs), const))

    x, w, b = t((2, 3, 5, 5)), t((4, 3, 3, 3)), t((4,))
    c = proj((2, 4, 5, 5))
    reports.append(
        gradient_check(
            scalarized(lambda i: ops.conv2d(i[0], i[1], i[2], stride=1, pad=1), c),
            [x, w, b], tolerance, "conv2d", seed=seed,
        )
    )

    x = t((2, 8, 4, 4))
    gamma, beta = t((8,), 0.5, 1.5), t((8,))
    c = proj((2, 8, 4, 4))
    reports.append(
        gradient_check(
            scalarized(lambda i: ops.group_norm(i[0], 4, i[1], i[2]), c),
            [x, gamma, beta], tolerance, "group_norm", seed=seed,
        )
    )

    x = t((2, 3, 4, 4))
    x.data = _away_from(x.data, 0.05)
    c = proj((2, 3, 4, 4))
    reports.append(
        gradient_check(scalarized(lambda i: ops.relu(i[0]), c), [x], tolerance, "relu", seed=seed)
    )

    a, b2 = t((2, 3, 4, 4)), t((2, 3, 4, 4))
    gap = np.abs(a.data - b2.data) < 0.05
    b2.data = np.where(gap, b2.data + 0.1, b2.data)
    reports.append(
        gradient_check(
            scalarized(lambda i: ops.elementwise_max(i[0], i[1]), c),
            [a, b2], tolerance, "elementwise_max", seed=seed,
        )
    )

    a, b2 = t((2, 2, 4, 4)), t((2, 3, 4, 4))
    c = proj((2, 3, 4, 4))
    reports.append(
        gradient_check(
            scalarized(
                lambda i: ops.slice_channels(ops.concat_channels(i[0], i[1]), 1, 3), c
            ),
            [a, b2], tolerance, "concat+slice", seed=seed,
        )
    )

    x = t((1, 2, 3, 3))
    c = proj((1, 2, 6, 6))
    reports.append(
        gradient_check(
            scalarized(lambda i: ops.upsample_nearest(i[0], 2), c),
            [x], tolerance, "upsample_nearest", seed=seed,
        )
    )

    x = t((1, 3, 4, 4))
    c = proj((1, 3, 4, 4))
    reports.append(
        gradient_check(scalarized(lambda i: ops.sigmoid(i[0]), c), [x], tolerance, "sigmoid", seed=seed)
    )

    n = rng.normal(size=(1, 3, 6, 6))
    n /= np.sqrt((n * n).sum(axis=1, keepdims=True))
    n = Tensor(n, requires_grad=True)
    n_hat = t((1, 3, 6, 6))
    small = np.sqrt((n_hat.data**2).sum(axis=1, keepdims=True)) < 0.3
    n_hat.data = np.where(small, n_hat.data + 0.5, n_hat.data)
    mask = Tensor((rng.uniform(size=(1, 1, 6, 6)) > 0.3).astype(np.float64))
    if mask.data.sum() == 0:
        mask.data[0, 0, 0, 0] = 1.0
    reports.append(
        gradient_check(
            lambda i: losses.cosine_loss(i[0], i[1], mask),
            [n, n_hat], tolerance, "cosine_loss", seed=seed,
        )
    )

    i0, i1 = t((1, 3, 6, 6), 0.0, 1.0), t((1, 3, 6, 6), 0.0, 1.0)
    reports.append(
        gradient_check(
            lambda i: losses.l2_loss(i[0], i[1], mask), [i0, i1], tolerance, "l2_loss", seed=seed
        )
    )

    model = CrossModalModel(
        ModelConfig(input_resolution=32, base_width=4, seed=seed, has_normal_encoder=False)
    ).astype(np.float64)
    image = t((1, 3, 32, 32), 0.0, 1.0)
    c = proj((1, 3, 32, 32))
    probe = [image, model.registry["e_i.stem.conv.weight"], model.registry["d_n.head.conv2.weight"]]
    reports.append(
        gradient_check(
            scalarized(lambda i: model.forward(i[0], ForwardMode.IMAGE_TO_NORMAL), c),
            probe, tolerance, "image_to_normal_forward", seed=seed,
        )
    )

    return reports
