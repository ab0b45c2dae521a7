"""One-shot calibration of the toy-training acceptance thresholds.

Runs the acceptance recipe (512/256/256 samples at 64x64, default model,
300 steps) and prints held-out errors plus wall times. Usage:

    python scripts/calibrate_toy.py [n_bumps] [mode,mode,...]

The frozen acceptance dataset uses n_bumps=3 (the default here).
"""

import sys
import time

import numpy as np

from crossnorm.data import SampleKind, gen_sample, sample_seed_for
from crossnorm.evaluate import Report, predict_normals
from crossnorm.losses import angular_error_map
from crossnorm.model import CrossModalModel, ModelConfig
from crossnorm.trainer import TrainConfig, smoothed_phase_losses, train

TRAIN_SEED = 2024
HELDOUT_SEED = 9090


def build_samples(n_bumps=8):
    samples = []
    index = 0
    for kind, count in [
        (SampleKind.PAIRED, 512),
        (SampleKind.IMAGE_ONLY, 256),
        (SampleKind.NORMAL_ONLY, 256),
    ]:
        for _ in range(count):
            samples.append(gen_sample(sample_seed_for(TRAIN_SEED, index), 64, n_bumps, kind))
            index += 1
    heldout = [
        gen_sample(sample_seed_for(HELDOUT_SEED, i), 64, n_bumps, SampleKind.PAIRED)
        for i in range(64)
    ]
    return samples, heldout


def heldout_error(model, heldout):
    per_image = []
    for i, s in enumerate(heldout):
        pred = predict_normals(model, s.image)
        errors = angular_error_map(s.normals[None], pred[None], s.mask[None])
        per_image.append((f"h{i:03d}", errors))
    return Report.from_image_errors(per_image)


def run(skip_mode, n_bumps=8):
    config = TrainConfig(model=ModelConfig(seed=1, skip_mode=skip_mode), seed=3)
    samples, heldout = build_samples(n_bumps)
    model = CrossModalModel(config.model)
    untrained = heldout_error(model, heldout)
    print(f"[{skip_mode} bumps={n_bumps}] untrained held-out: {untrained.row()}")
    t0 = time.time()
    _, history = train(model, samples, config)
    wall = time.time() - t0
    trained = heldout_error(model, heldout)
    smoothed = smoothed_phase_losses(history, "i2n+i2i")
    steps = sorted(smoothed)
    s10 = next(s for s in steps if s >= 10)
    print(f"[{skip_mode}] trained held-out:   {trained.row()}")
    print(f"[{skip_mode}] wall {wall:.1f}s | ratio {trained.mean_deg / untrained.mean_deg:.3f}")
    print(
        f"[{skip_mode}] smoothed paired loss step~10 {smoothed[s10]:.4f} -> final {smoothed[steps[-1]]:.4f}"
        f" (ratio {smoothed[steps[-1]] / smoothed[s10]:.3f})"
    )
    return trained


if __name__ == "__main__":
    n_bumps = int(sys.argv[1]) if len(sys.argv) > 1 else 3
    modes = sys.argv[2].split(",") if len(sys.argv) > 2 else ["deactivable", "none"]
    results = {m: run(m, n_bumps) for m in modes}
    if len(results) == 2:
        full, noskip = results["deactivable"], results["none"]
        print(f"ordering: full {full.mean_deg:.2f} vs no-skip {noskip.mean_deg:.2f} "
              f"(delta {noskip.mean_deg - full.mean_deg:+.2f})")
