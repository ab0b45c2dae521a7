"""Benchmark the convolution backends (numpy/BLAS vs compiled Cython/OpenMP).

Times forward and both backward kernels over the layer shapes of the default
64x64 model, then one full paired training step per backend. Run:

    python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from crossnorm import _kernels
from crossnorm.data import SampleKind, gen_sample
from crossnorm.model import CrossModalModel, ModelConfig
from crossnorm.trainer import Adam, train_iteration

# (B, C, H, W, O, stride, pad): stem, the four encoder stages, two decoder
# stages, and the widest head conv of the default model
MODEL_SHAPES = [
    (4, 3, 64, 64, 16, 2, 1),
    (4, 16, 32, 32, 32, 2, 1),
    (4, 32, 16, 16, 64, 2, 1),
    (4, 64, 8, 8, 128, 2, 1),
    (4, 128, 4, 4, 128, 2, 1),
    (4, 256, 8, 8, 64, 1, 1),
    (4, 128, 16, 16, 32, 1, 1),
    (4, 32, 64, 64, 16, 1, 1),
]


def available_backends():
    names = ["python"]
    try:
        _kernels.get_backend("cython")
        names.append("cython")
    except ValueError:
        pass
    return names


def bench_kernels(repeats):
    rng = np.random.default_rng(0)
    rows = []
    for name in available_backends():
        impl = _kernels.get_backend(name)
        totals = {"forward": 0.0, "backward_input": 0.0, "backward_weight": 0.0}
        for B, C, H, W, O, stride, pad in MODEL_SHAPES:
            x = rng.normal(size=(B, C, H, W)).astype(np.float32)
            w = rng.normal(size=(O, C, 3, 3)).astype(np.float32)
            b = np.zeros(O, dtype=np.float32)
            out = _kernels.conv2d_forward(x, w, b, stride, pad, impl=impl)
            dout = rng.normal(size=out.shape).astype(np.float32)

            t0 = time.perf_counter()
            for _ in range(repeats):
                _kernels.conv2d_forward(x, w, b, stride, pad, impl=impl)
            totals["forward"] += time.perf_counter() - t0

            t0 = time.perf_counter()
            for _ in range(repeats):
                _kernels.conv2d_backward_input(dout, w, x.shape, stride, pad, impl=impl)
            totals["backward_input"] += time.perf_counter() - t0

            t0 = time.perf_counter()
            for _ in range(repeats):
                _kernels.conv2d_backward_weight(x, dout, w.shape, stride, pad, impl=impl)
            totals["backward_weight"] += time.perf_counter() - t0
        rows.append((name, {k: v / repeats * 1000 for k, v in totals.items()}))
    return rows


def bench_train_step(backend, repeats):
    impl = _kernels.get_backend(backend)
    saved = _kernels._impl
    _kernels._impl = impl
    try:
        model = CrossModalModel(ModelConfig(seed=0))
        opt = Adam(model.registry)
        batch = [gen_sample(i, 64, 8, SampleKind.PAIRED) for i in range(4)]
        train_iteration(model, batch, opt)  # warm up
        t0 = time.perf_counter()
        for _ in range(repeats):
            train_iteration(model, batch, opt)
        return (time.perf_counter() - t0) / repeats
    finally:
        _kernels._impl = saved


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=10)
    args = parser.parse_args()

    print(f"active backend: {_kernels.backend_name()}  threads cap: {_kernels.get_num_threads() or 'auto'}")
    print()
    rows = bench_kernels(args.repeats)
    print(f"{'backend':<10} {'forward':>10} {'bwd input':>10} {'bwd weight':>11}   (ms per pass over model shapes)")
    for name, totals in rows:
        print(
            f"{name:<10} {totals['forward']:>9.1f}ms {totals['backward_input']:>9.1f}ms "
            f"{totals['backward_weight']:>10.1f}ms"
        )
    if len(rows) == 2:
        py, cy = dict(rows)["python"], dict(rows)["cython"]
        for key in py:
            print(f"  {key}: cython/python = {cy[key] / py[key]:.2f}x")
    print()
    step_repeats = max(2, args.repeats // 5)
    for name in available_backends():
        secs = bench_train_step(name, step_repeats)
        print(f"paired training step ({name}): {secs:.3f}s")


if __name__ == "__main__":
    main()
