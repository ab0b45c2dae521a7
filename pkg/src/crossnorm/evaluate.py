"""Dataset-level evaluation reports and normal-mapping shading.

Reports aggregate per-image mean angular errors (std across images) and
pool the sub-threshold percentages over all masked pixels; both choices are
stated in the report header.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import LightSpec, SampleKind, load_manifest, load_sample
from .losses import angular_error_map, format_error_row
from .model import ForwardMode
from .pfm import read_pfm
from .tensor import Tensor


@dataclass
class ShadingSpec:
    light: LightSpec
    ambient: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.ambient <= 1.0:
            raise ValueError(f"ambient term must lie in [0,1], got {self.ambient}")


@dataclass
class ImageRecord:
    sample_id: str
    mean_deg: float
    n_pixels: int


@dataclass
class Report:
    mean_deg: float
    std_deg: float
    pct20: float
    pct25: float
    pct30: float
    records: list = field(default_factory=list)
    dataset_id: str = ""
    checkpoint_id: str = ""

    def row(self):
        return format_error_row(self.mean_deg, self.std_deg, self.pct20, self.pct25, self.pct30)

    def render_text(self):
        lines = [
            "angular-error report",
            f"dataset: {self.dataset_id or '-'}",
            f"checkpoint: {self.checkpoint_id or '-'}",
            "std across per-image means; percentages pooled over masked pixels",
            "",
            f"{'Mean±std':>10}  {'<20°':>6}  {'<25°':>6}  {'<30°':>6}",
            self.row(),
            "",
            f"{'image':<24} {'mean angular error (deg)':>26}",
        ]
        for rec in self.records:
            lines.append(f"{rec.sample_id:<24} {rec.mean_deg:>26.3f}")
        return "\n".join(lines) + "\n"

    def render_csv(self):
        return (
            "mean,std,pct20,pct25,pct30\n"
            f"{self.mean_deg:.4f},{self.std_deg:.4f},"
            f"{100.0 * self.pct20:.4f},{100.0 * self.pct25:.4f},{100.0 * self.pct30:.4f}\n"
        )

    @classmethod
    def from_image_errors(cls, per_image, dataset_id="", checkpoint_id=""):
        """Aggregate (sample_id, error array) pairs into a dataset report."""
        records = []
        pooled = []
        for sample_id, errors in per_image:
            errors = np.asarray(errors, dtype=np.float64)
            records.append(ImageRecord(sample_id, float(errors.mean()), int(errors.size)))
            pooled.append(errors)
        if not records:
            raise ValueError("cannot aggregate an empty evaluation")
        means = np.array([r.mean_deg for r in records])
        pooled = np.concatenate(pooled)
        return cls(
            mean_deg=float(means.mean()),
            std_deg=float(means.std()),
            pct20=float((pooled < 20.0).mean()),
            pct25=float((pooled < 25.0).mean()),
            pct30=float((pooled < 30.0).mean()),
            records=records,
            dataset_id=dataset_id,
            checkpoint_id=checkpoint_id,
        )


def predict_normals(model, image):
    """Image-to-normal inference for a single (3,H,W) image array."""
    out = model.forward(Tensor(image[None].astype(np.float32)), ForwardMode.IMAGE_TO_NORMAL)
    return out.data[0]


def evaluate_dataset(dataset_dir, model=None, predictions_dir=None, checkpoint_id="",
                     report_prefix=None):
    """Evaluate a dataset against a model or a directory of prediction PFMs
    named ``<sample_id>.pred.pfm``. Returns (Report, failures) where failures
    lists (sample_id, reason) for evaluable samples that had to be excluded.
    With report_prefix, writes ``<prefix>.txt`` and ``<prefix>.csv``.
    """
    if (model is None) == (predictions_dir is None):
        raise ValueError("provide exactly one of model or predictions_dir")
    manifest = load_manifest(dataset_dir)
    per_image = []
    failures = []
    for entry in manifest["samples"]:
        kind = SampleKind(entry["kind"])
        if kind is not SampleKind.PAIRED:
            # image_only lacks ground truth, normal_only lacks the input image
            continue
        sample_id = entry["id"]
        try:
            sample = load_sample(dataset_dir, entry)
        except (OSError, ValueError) as e:
            failures.append((sample_id, f"unreadable sample: {e}"))
            continue
        if sample.normals is None:
            failures.append((sample_id, "missing ground-truth normals"))
            continue
        if model is not None:
            pred = predict_normals(model, sample.image)
        else:
            pred_path = Path(predictions_dir) / f"{sample_id}.pred.pfm"
            if not pred_path.exists():
                failures.append((sample_id, f"missing prediction {pred_path.name}"))
                continue
            try:
                pred = read_pfm(pred_path)
            except ValueError as e:
                failures.append((sample_id, f"unreadable prediction: {e}"))
                continue
        errors = angular_error_map(sample.normals[None], pred[None], sample.mask[None])
        per_image.append((sample_id, errors))
    if not per_image:
        raise ValueError("no evaluable samples (need ground-truth normals)")
    report = Report.from_image_errors(
        per_image, dataset_id=str(dataset_dir), checkpoint_id=checkpoint_id
    )
    if report_prefix is not None:
        Path(str(report_prefix) + ".txt").write_text(report.render_text())
        Path(str(report_prefix) + ".csv").write_text(report.render_csv())
    return report, failures


def shade_with_normals(normals, spec, mask):
    """Grayscale normal-mapping render.

    Masked pixels: clamp(ambient + intensity * max(0, <n/|n|, light>), 0, 1);
    unmasked pixels are 0. Degenerate normals shade as ambient only.
    Accepts (3,H,W) with (H,W) mask, or batched (B,3,H,W) with (B,1,H,W).
    """
    n = np.asarray(normals, dtype=np.float64)
    m = np.asarray(mask)
    if n.ndim == 4:
        return np.stack(
            [shade_with_normals(n[i], spec, m[i, 0])[None] for i in range(n.shape[0])]
        )
    if n.ndim != 3 or n.shape[0] != 3:
        raise ValueError(f"expected a (3,H,W) normal map, got {n.shape}")
    if m.shape != n.shape[1:]:
        raise ValueError(f"mask shape {m.shape} does not match normals {n.shape}")
    norms = np.sqrt((n * n).sum(axis=0, keepdims=True))
    unit = np.where(norms < 1e-8, 0.0, n / np.maximum(norms, 1e-20))
    d = np.asarray(spec.light.direction)
    lambert = np.maximum((unit * d[:, None, None]).sum(axis=0), 0.0)
    value = np.clip(spec.ambient + spec.light.intensity * lambert, 0.0, 1.0)
    return np.where(m > 0, value, 0.0).astype(np.float32)


def normals_from_depth(depth):
    """Normals from a (H,W) depth map via central differences (one-sided at
    the borders), n = normalize(-dz/dx, -dz/dy, 1) in pixel units."""
    z = np.asarray(depth, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError(f"expected a (H,W) depth map, got {z.shape}")
    dz_dy, dz_dx = np.gradient(z)
    n = np.stack([-dz_dx, -dz_dy, np.ones_like(z)])
    n /= np.sqrt((n * n).sum(axis=0, keepdims=True))
    return n.astype(np.float32)


def enhance_depth(depth, predicted_normals, spec, mask):
    """Shade raw-depth normals (baseline) and predicted normals (enhanced).

    NaN depth pixels are dropped from the mask with a warning; returns
    (baseline, enhanced) grayscale rasters.
    """
    z = np.asarray(depth, dtype=np.float64)
    if z.ndim == 4:
        z = z[0, 0]
    elif z.ndim == 3:
        z = z[0]
    m = np.asarray(mask)
    if m.ndim == 4:
        m = m[0, 0]
    elif m.ndim == 3:
        m = m[0]
    pred = np.asarray(predicted_normals)
    if pred.ndim == 4:
        pred = pred[0]

    bad = ~np.isfinite(z)
    if bad.any():
        n_bad = int((bad & (m > 0)).sum())
        warnings.warn(f"excluding {n_bad} NaN depth pixels from the mask", stacklevel=2)
        m = np.where(bad, 0.0, m)
        z = np.where(bad, 0.0, z)
    baseline = shade_with_normals(normals_from_depth(z), spec, m)
    enhanced = shade_with_normals(pred, spec, m)
    return baseline, enhanced
