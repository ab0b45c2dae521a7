"""Synthetic Lambertian dataset generation, crop geometry, and raster I/O.

Surfaces are sums of random Gaussian bumps over the unit square with
analytic derivatives, so ground-truth normals are exact. Images are shaded
through ``render_lambertian`` with a random light (positive-z direction,
intensity in [0,2]); the same function reproduces a generated image bitwise.
Dataset directories carry a manifest listing each sample's kind, seed,
light, file names, and file hashes, so dataset determinism is checkable by
comparing manifests alone.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .pfm import read_pfm, write_pfm

BUMP_AMPLITUDE = 0.3
BUMP_WIDTH_RANGE = (0.05, 0.3)
ALBEDO_RANGE = (0.2, 1.0)
MASK_RADIUS_FRACTION = 0.45
MANIFEST_NAME = "manifest.json"
DEFAULT_N_BUMPS = 8


class DataError(ValueError):
    pass


class SampleKind(enum.Enum):
    PAIRED = "paired"
    IMAGE_ONLY = "image_only"
    NORMAL_ONLY = "normal_only"


@dataclass
class LightSpec:
    direction: tuple  # unit 3-vector, z > 0
    intensity: float  # in [0, 2]

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64)
        if d.shape != (3,):
            raise DataError(f"light direction must be a 3-vector, got shape {d.shape}")
        norm = float(np.linalg.norm(d))
        if abs(norm - 1.0) > 1e-6:
            raise DataError(f"light direction must be unit length, |d| = {norm:.8f}")
        if d[2] <= 0:
            raise DataError(f"light direction must have positive z, got {d[2]:.6f}")
        if not 0.0 <= self.intensity <= 2.0:
            raise DataError(f"light intensity must lie in [0,2], got {self.intensity}")
        self.direction = (float(d[0]), float(d[1]), float(d[2]))
        self.intensity = float(self.intensity)


@dataclass
class HeightField:
    """Continuous surface over the unit square with analytic derivatives."""

    z: np.ndarray      # (H,W)
    dz_dx: np.ndarray  # (H,W)
    dz_dy: np.ndarray  # (H,W)

    def normals(self):
        return normals_from_gradients(self.dz_dx, self.dz_dy)


@dataclass
class Sample:
    kind: SampleKind
    mask: np.ndarray               # (1,H,W) float32 in {0,1}
    seed: int
    image: np.ndarray | None = None    # (3,H,W) float32 in [0,1]
    normals: np.ndarray | None = None  # (3,H,W) float32, unit inside mask
    light: LightSpec | None = None


def normals_from_gradients(dz_dx, dz_dy):
    """n = normalize(-dz/dx, -dz/dy, 1), stacked as a (3,H,W) float32 map."""
    n = np.stack([-dz_dx, -dz_dy, np.ones_like(dz_dx)]).astype(np.float64)
    n /= np.sqrt((n * n).sum(axis=0, keepdims=True))
    return n.astype(np.float32)


def _unit_grid(resolution):
    coords = (np.arange(resolution, dtype=np.float64) + 0.5) / resolution
    return np.meshgrid(coords, coords)  # x varies along columns, y along rows


def _random_light(rng):
    while True:
        v = rng.normal(size=3)
        norm = np.linalg.norm(v)
        if norm < 1e-6:
            continue
        v = v / norm
        v[2] = abs(v[2])
        if v[2] > 1e-6:
            break
    # renormalize after the flip to stay within the unit tolerance
    v = v / np.linalg.norm(v)
    intensity = float(rng.uniform(0.0, 2.0))
    return LightSpec(direction=(v[0], v[1], v[2]), intensity=intensity)


def _smooth_albedo(rng, resolution):
    """Smooth random RGB field in [0.2, 1], built from low-frequency cosines."""
    x, y = _unit_grid(resolution)
    lo, hi = ALBEDO_RANGE
    channels = []
    for _ in range(3):
        s = np.zeros_like(x)
        for _ in range(3):
            fx, fy = rng.uniform(0.5, 2.0, size=2)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            amp = rng.uniform(0.0, 1.0)
            s += amp * np.cos(2.0 * np.pi * (fx * x + fy * y) + phase)
        span = s.max() - s.min()
        if span < 1e-12:
            s = np.zeros_like(s)
        else:
            s = (s - s.min()) / span
        channels.append(lo + (hi - lo) * s)
    return np.stack(channels).astype(np.float32)


def _bump_field(rng, resolution, n_bumps, rotation=0.0):
    x, y = _unit_grid(resolution)
    z = np.zeros_like(x)
    dzx = np.zeros_like(x)
    dzy = np.zeros_like(x)
    cos_r, sin_r = np.cos(rotation), np.sin(rotation)
    for _ in range(n_bumps):
        cx, cy = rng.uniform(0.0, 1.0, size=2)
        amp = rng.uniform(-BUMP_AMPLITUDE, BUMP_AMPLITUDE)
        width = rng.uniform(*BUMP_WIDTH_RANGE)
        if rotation != 0.0:
            # isotropic bumps: rotating centers about the image center is an
            # exact in-plane rotation of the surface
            dx, dy = cx - 0.5, cy - 0.5
            cx = 0.5 + cos_r * dx - sin_r * dy
            cy = 0.5 + sin_r * dx + cos_r * dy
        g = amp * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * width**2))
        z += g
        dzx += g * -(x - cx) / width**2
        dzy += g * -(y - cy) / width**2
    return HeightField(z=z, dz_dx=dzx, dz_dy=dzy)


def disk_mask(resolution):
    r = np.arange(resolution, dtype=np.float64) + 0.5
    cy, cx = np.meshgrid(r, r, indexing="ij")
    center = resolution / 2.0
    dist = np.sqrt((cx - center) ** 2 + (cy - center) ** 2)
    mask = (dist < MASK_RADIUS_FRACTION * resolution).astype(np.float32)
    return mask[None]


def render_lambertian(normals, albedo, light):
    """clamp(albedo * intensity * max(0, <n, light>), 0, 1) per pixel."""
    n = np.asarray(normals, dtype=np.float32)
    a = np.asarray(albedo, dtype=np.float32)
    if n.shape != a.shape or n.ndim != 3 or n.shape[0] != 3:
        raise DataError(f"render expects matching (3,H,W) maps, got {n.shape} and {a.shape}")
    d = np.asarray(light.direction, dtype=np.float64)
    if abs(float(np.linalg.norm(d)) - 1.0) > 1e-6:
        raise DataError("light direction must be unit length")
    d32 = d.astype(np.float32)
    shading = np.float32(light.intensity) * np.maximum(
        (n * d32[:, None, None]).sum(axis=0), np.float32(0.0)
    )
    return np.clip(a * shading[None], 0.0, 1.0).astype(np.float32)


def synth_scene(seed, resolution, n_bumps=DEFAULT_N_BUMPS, rotation_augment=False):
    """Deterministic scene: height field, exact normals, albedo, light, mask.

    rotation_augment draws an in-plane rotation from [-pi/4, pi/4]; the rng
    stream with the flag off is unchanged.
    """
    rng = np.random.default_rng(seed)
    rotation = float(rng.uniform(-np.pi / 4, np.pi / 4)) if rotation_augment else 0.0
    height = _bump_field(rng, resolution, n_bumps, rotation)
    albedo = _smooth_albedo(rng, resolution)
    light = _random_light(rng)
    normals = height.normals()
    mask = disk_mask(resolution)
    return height, normals, albedo, light, mask


def gen_sample(
    seed, resolution=64, n_bumps=DEFAULT_N_BUMPS, kind=SampleKind.PAIRED, rotation_augment=False
):
    if resolution < 16:
        raise DataError(f"resolution must be at least 16, got {resolution}")
    _, normals, albedo, light, mask = synth_scene(seed, resolution, n_bumps, rotation_augment)
    image = render_lambertian(normals, albedo, light)
    return Sample(
        kind=kind,
        mask=mask,
        seed=int(seed),
        image=image if kind != SampleKind.NORMAL_ONLY else None,
        normals=normals if kind != SampleKind.IMAGE_ONLY else None,
        light=light,
    )


# ---------------------------------------------------------------------------
# Crop geometry


@dataclass
class CropSpec:
    bbox: tuple            # (x_min, y_min, x_max, y_max) of the keypoint hull
    edge: float            # tightest enclosing square edge l
    crop_edge: int         # round(1.2 * l)
    box: tuple             # (x0, y0, x1, y1), x1 - x0 == crop_edge
    target_resolution: int


def crop_from_keypoints(keypoints, image_dims, target_resolution=64, scale=1.2):
    """Square crop of edge round(scale * l) centered on the keypoint hull.

    l is the edge of the tightest square containing the hull (max of the
    bounding-box extents). The crop shifts, never shrinks, to stay inside
    the image.
    """
    pts = np.asarray(keypoints, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise DataError(f"need at least 3 (x,y) keypoints, got array of shape {pts.shape}")
    width, height = image_dims
    if (pts[:, 0] < 0).any() or (pts[:, 0] >= width).any() or (pts[:, 1] < 0).any() or (
        pts[:, 1] >= height
    ).any():
        raise DataError("keypoints must lie inside the image")
    d = pts[1:] - pts[0]
    cross = d[:, 0][:, None] * d[:, 1][None, :] - d[:, 1][:, None] * d[:, 0][None, :]
    if np.abs(cross).max() < 1e-9:
        raise DataError("keypoints are collinear; cannot form a hull")

    x_min, y_min = pts.min(axis=0)
    x_max, y_max = pts.max(axis=0)
    l = max(x_max - x_min, y_max - y_min)
    crop_edge = int(round(scale * l))
    if crop_edge > width or crop_edge > height:
        raise DataError(
            f"crop edge {crop_edge} exceeds image dimensions {width}x{height}"
        )
    cx = (x_min + x_max) / 2.0
    cy = (y_min + y_max) / 2.0
    x0 = int(round(cx - crop_edge / 2.0))
    y0 = int(round(cy - crop_edge / 2.0))
    x0 = min(max(x0, 0), width - crop_edge)
    y0 = min(max(y0, 0), height - crop_edge)
    return CropSpec(
        bbox=(float(x_min), float(y_min), float(x_max), float(y_max)),
        edge=float(l),
        crop_edge=crop_edge,
        box=(x0, y0, x0 + crop_edge, y0 + crop_edge),
        target_resolution=target_resolution,
    )


def apply_crop(image, spec):
    """Crop a (C,H,W) raster with a CropSpec and resize to the target."""
    x0, y0, x1, y1 = spec.box
    patch = image[:, y0:y1, x0:x1]
    return resize_bilinear(patch, spec.target_resolution)


def resize_bilinear(image, target):
    arr = np.asarray(image, dtype=np.float32)
    out = np.empty((arr.shape[0], target, target), dtype=np.float32)
    for c in range(arr.shape[0]):
        im = Image.fromarray(arr[c])
        out[c] = np.asarray(im.resize((target, target), Image.BILINEAR))
    return out


def read_keypoints(path):
    """Plain text keypoints: one `x y` pair per line; blank lines ignored."""
    pts = []
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise DataError(f"{path}:{line_no}: expected 'x y', got {line!r}")
        pts.append((float(parts[0]), float(parts[1])))
    return pts


# ---------------------------------------------------------------------------
# Raster file I/O and dataset directories


def write_png(path, array):
    """Write (H,W) or (C,H,W) float data in [0,1] as an 8-bit PNG."""
    arr = np.asarray(array)
    if arr.ndim == 3:
        arr = arr.transpose(1, 2, 0)
        if arr.shape[2] == 1:
            arr = arr[:, :, 0]
    q = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(q).save(path)


def read_png(path):
    """Read a PNG into (C,H,W) float32 in [0,1]."""
    with Image.open(path) as im:
        arr = np.asarray(im, dtype=np.float32) / 255.0
    if arr.ndim == 2:
        return arr[None]
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def sample_seed_for(dataset_seed, index):
    ss = np.random.SeedSequence([int(dataset_seed), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def generate_dataset(
    out_dir,
    seed,
    n_paired,
    n_image_only,
    n_normal_only,
    resolution=64,
    n_bumps=DEFAULT_N_BUMPS,
    rotation_augment=False,
):
    """Write a dataset directory with one subdirectory per sample and a
    manifest listing ids, kinds, seeds, lights and file names."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    counts = [
        (SampleKind.PAIRED, n_paired),
        (SampleKind.IMAGE_ONLY, n_image_only),
        (SampleKind.NORMAL_ONLY, n_normal_only),
    ]
    entries = []
    index = 0
    for kind, count in counts:
        for i in range(count):
            sample_seed = sample_seed_for(seed, index)
            index += 1
            sample = gen_sample(sample_seed, resolution, n_bumps, kind, rotation_augment)
            sample_id = f"{kind.value}_{i:04d}"
            sdir = out / sample_id
            sdir.mkdir(exist_ok=True)
            files = {"mask": f"{sample_id}/mask.png"}
            write_png(sdir / "mask.png", sample.mask)
            if sample.image is not None:
                write_png(sdir / "image.png", sample.image)
                files["image"] = f"{sample_id}/image.png"
            if sample.normals is not None:
                write_pfm(sample.normals, sdir / "normals.pfm")
                files["normals"] = f"{sample_id}/normals.pfm"
            hashes = {
                key: hashlib.sha256((out / rel).read_bytes()).hexdigest()
                for key, rel in files.items()
            }
            entries.append(
                {
                    "id": sample_id,
                    "kind": kind.value,
                    "seed": sample_seed,
                    "light": {
                        "direction": list(sample.light.direction),
                        "intensity": sample.light.intensity,
                    },
                    "files": files,
                    "hashes": hashes,
                }
            )
    manifest = {
        "format_version": 1,
        "dataset_seed": int(seed),
        "resolution": int(resolution),
        "n_bumps": int(n_bumps),
        "samples": entries,
    }
    with open(out / MANIFEST_NAME, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


def load_manifest(dataset_dir):
    path = Path(dataset_dir) / MANIFEST_NAME
    if not path.exists():
        raise DataError(f"no {MANIFEST_NAME} in {dataset_dir}")
    with open(path) as f:
        return json.load(f)


def load_sample(dataset_dir, entry):
    base = Path(dataset_dir)
    kind = SampleKind(entry["kind"])
    files = entry["files"]
    mask = read_png(base / files["mask"])
    mask = (mask > 0.5).astype(np.float32)
    image = read_png(base / files["image"]) if "image" in files else None
    normals = read_pfm(base / files["normals"]) if "normals" in files else None
    light = LightSpec(
        direction=tuple(entry["light"]["direction"]),
        intensity=entry["light"]["intensity"],
    )
    return Sample(kind=kind, mask=mask, seed=int(entry["seed"]), image=image, normals=normals, light=light)


def load_dataset(dataset_dir):
    manifest = load_manifest(dataset_dir)
    return [load_sample(dataset_dir, e) for e in manifest["samples"]]
