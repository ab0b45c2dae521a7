"""Generator determinism, shading, crop geometry, and dataset round trips."""

import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from crossnorm import data as D
from crossnorm.losses import check_unit_normals
from crossnorm.data import (
    DataError,
    LightSpec,
    SampleKind,
    crop_from_keypoints,
    disk_mask,
    gen_sample,
    generate_dataset,
    load_dataset,
    normals_from_gradients,
    render_lambertian,
    synth_scene,
)


class TestLightSpec:
    def test_valid(self):
        LightSpec(direction=(0.0, 0.0, 1.0), intensity=1.5)

    def test_non_unit_rejected(self):
        with pytest.raises(DataError):
            LightSpec(direction=(0.0, 0.0, 2.0), intensity=1.0)

    def test_negative_z_rejected(self):
        with pytest.raises(DataError):
            LightSpec(direction=(0.0, 0.0, -1.0), intensity=1.0)

    def test_intensity_range(self):
        with pytest.raises(DataError):
            LightSpec(direction=(0.0, 0.0, 1.0), intensity=2.5)


class TestRenderLambertian:
    def test_aligned_light_full_brightness(self):
        n = np.zeros((3, 2, 2), dtype=np.float32)
        n[2] = 1.0
        albedo = np.ones((3, 2, 2), dtype=np.float32)
        light = LightSpec((0.0, 0.0, 1.0), 1.0)
        assert np.allclose(render_lambertian(n, albedo, light), 1.0)

    def test_backface_clamps_to_zero(self):
        n = np.zeros((3, 2, 2), dtype=np.float32)
        n[2] = -1.0  # facing away
        albedo = np.ones((3, 2, 2), dtype=np.float32)
        light = LightSpec((0.0, 0.0, 1.0), 1.0)
        assert np.allclose(render_lambertian(n, albedo, light), 0.0)

    def test_45_degree_light(self):
        n = np.zeros((3, 1, 1), dtype=np.float32)
        n[2] = 1.0
        s = np.sqrt(2.0) / 2.0
        light = LightSpec((0.0, s, s), 1.0)
        out = render_lambertian(n, np.ones((3, 1, 1), dtype=np.float32), light)
        assert abs(float(out[0, 0, 0]) - 0.70711) < 1e-5


class TestGenSample:
    def test_flat_field_vertical_normals(self):
        s = gen_sample(seed=1, resolution=16, n_bumps=0)
        masked = s.normals[:, s.mask[0] > 0]
        assert np.allclose(masked[0], 0.0) and np.allclose(masked[1], 0.0)
        assert np.allclose(masked[2], 1.0)

    def test_plane_surface_normals(self):
        # z = 0.5 x has analytic gradient (0.5, 0)
        dzdx = np.full((4, 4), 0.5)
        dzdy = np.zeros((4, 4))
        n = normals_from_gradients(dzdx, dzdy)
        assert np.allclose(n[0], -0.4472, atol=1e-4)
        assert np.allclose(n[1], 0.0)
        assert np.allclose(n[2], 0.8944, atol=1e-4)

    def test_deterministic(self):
        a = gen_sample(seed=9, resolution=32)
        b = gen_sample(seed=9, resolution=32)
        assert np.array_equal(a.image, b.image)
        assert np.array_equal(a.normals, b.normals)
        assert np.array_equal(a.mask, b.mask)
        assert a.light == b.light

    def test_masked_normals_unit(self):
        s = gen_sample(seed=3, resolution=32)
        norms = np.linalg.norm(s.normals, axis=0)[s.mask[0] > 0]
        assert np.abs(norms - 1.0).max() < 1e-5

    def test_image_in_unit_interval(self):
        s = gen_sample(seed=4, resolution=32)
        assert s.image.min() >= 0.0 and s.image.max() <= 1.0

    def test_kinds_drop_fields(self):
        img_only = gen_sample(seed=5, resolution=32, kind=SampleKind.IMAGE_ONLY)
        assert img_only.image is not None and img_only.normals is None
        nrm_only = gen_sample(seed=5, resolution=32, kind=SampleKind.NORMAL_ONLY)
        assert nrm_only.image is None and nrm_only.normals is not None
        assert img_only.mask is not None and nrm_only.mask is not None

    def test_render_reproduces_image_bitwise(self):
        s = gen_sample(seed=6, resolution=32)
        _, normals, albedo, light, _ = synth_scene(6, 32)
        assert np.array_equal(render_lambertian(normals, albedo, light), s.image)

    def test_rotation_augment_changes_surface_not_stream(self):
        plain = gen_sample(seed=8, resolution=32)
        rotated = gen_sample(seed=8, resolution=32, rotation_augment=True)
        assert not np.array_equal(plain.normals, rotated.normals)
        again = gen_sample(seed=8, resolution=32)
        assert np.array_equal(plain.normals, again.normals)

    def test_too_small_resolution(self):
        with pytest.raises(DataError):
            gen_sample(seed=0, resolution=8)


class TestCropGeometry:
    def test_worked_example(self):
        spec = crop_from_keypoints([(10, 10), (30, 10), (20, 40)], (64, 64))
        assert spec.bbox == (10.0, 10.0, 30.0, 40.0)
        assert spec.edge == 30.0
        assert spec.crop_edge == 36
        assert spec.box == (2, 7, 38, 43)

    def test_square_keypoints_concentric(self):
        e = 20
        pts = [(10, 10), (10 + e, 10), (10, 10 + e), (10 + e, 10 + e)]
        spec = crop_from_keypoints(pts, (64, 64))
        assert spec.edge == e
        assert spec.crop_edge == round(1.2 * e)
        x0, y0, x1, y1 = spec.box
        assert (x0 + x1) / 2 == 10 + e / 2
        assert (y0 + y1) / 2 == 10 + e / 2

    def test_border_shifts_inside(self):
        spec = crop_from_keypoints([(1, 1), (21, 1), (11, 21)], (40, 40))
        x0, y0, x1, y1 = spec.box
        assert x0 >= 0 and y0 >= 0 and x1 <= 40 and y1 <= 40
        assert x1 - x0 == spec.crop_edge

    def test_collinear_rejected(self):
        with pytest.raises(DataError):
            crop_from_keypoints([(0, 0), (5, 5), (10, 10)], (32, 32))

    def test_too_few_points(self):
        with pytest.raises(DataError):
            crop_from_keypoints([(0, 0), (5, 5)], (32, 32))

    def test_outside_image_rejected(self):
        with pytest.raises(DataError):
            crop_from_keypoints([(0, 0), (40, 0), (20, 20)], (32, 32))

    def test_keypoint_file_parsing(self, tmp_path):
        p = tmp_path / "kp.txt"
        p.write_text("10 10\n30 10\n\n20 40\n")
        assert D.read_keypoints(p) == [(10.0, 10.0), (30.0, 10.0), (20.0, 40.0)]
        bad = tmp_path / "bad.txt"
        bad.write_text("1 2 3\n")
        with pytest.raises(DataError):
            D.read_keypoints(bad)


class TestMask:
    def test_disk_radius(self):
        m = disk_mask(32)[0]
        assert m[16, 16] == 1.0
        assert m[0, 0] == 0.0
        frac = m.mean()
        assert abs(frac - np.pi * 0.45**2) < 0.02


def _dir_hashes(root):
    out = {}
    for p in sorted(Path(root).rglob("*")):
        if p.is_file():
            out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


class TestDatasetDirectory:
    def test_round_trip_and_determinism(self, tmp_path):
        a_dir, b_dir = tmp_path / "a", tmp_path / "b"
        for d in (a_dir, b_dir):
            generate_dataset(d, seed=123, n_paired=2, n_image_only=1, n_normal_only=1, resolution=32)
        assert _dir_hashes(a_dir) == _dir_hashes(b_dir)

        manifest = json.loads((a_dir / "manifest.json").read_text())
        assert len(manifest["samples"]) == 4
        kinds = [s["kind"] for s in manifest["samples"]]
        assert kinds == ["paired", "paired", "image_only", "normal_only"]

        samples = load_dataset(a_dir)
        paired = samples[0]
        assert paired.image.shape == (3, 32, 32)
        assert paired.normals.shape == (3, 32, 32)
        assert set(np.unique(paired.mask)) <= {0.0, 1.0}
        check_unit_normals(paired.normals[None], paired.mask[None])

    def test_manifest_lists_file_hashes(self, tmp_path):
        generate_dataset(tmp_path / "h", seed=2, n_paired=1, n_image_only=0, n_normal_only=0, resolution=32)
        manifest = json.loads((tmp_path / "h" / "manifest.json").read_text())
        entry = manifest["samples"][0]
        assert set(entry["hashes"]) == set(entry["files"])
        for key, rel in entry["files"].items():
            digest = hashlib.sha256((tmp_path / "h" / rel).read_bytes()).hexdigest()
            assert entry["hashes"][key] == digest

    def test_normals_survive_disk_exactly(self, tmp_path):
        generate_dataset(tmp_path / "d", seed=5, n_paired=1, n_image_only=0, n_normal_only=0, resolution=32)
        loaded = load_dataset(tmp_path / "d")[0]
        fresh = gen_sample(json.loads((tmp_path / "d" / "manifest.json").read_text())["samples"][0]["seed"], 32)
        assert np.array_equal(loaded.normals, fresh.normals)  # PFM is lossless
        assert np.abs(loaded.image - fresh.image).max() <= 1.0 / 255.0 + 1e-6  # PNG quantizes
