"""Loss hand-cases, invariances, the naive metric oracle, and gradients."""

import numpy as np
import pytest

import crossnorm.losses as L
from crossnorm.gradcheck import gradient_check
from crossnorm.tensor import Tensor


def single_pixel(vec):
    """(1,3,1,1) map holding one normal vector."""
    return Tensor(np.asarray(vec, dtype=np.float64).reshape(1, 3, 1, 1))


def full_mask(b=1, h=1, w=1):
    return Tensor(np.ones((b, 1, h, w), dtype=np.float64))


def naive_angular_errors(n, n_hat, mask):
    """Independent oracle: explicit per-pixel double loop."""
    import math

    out = []
    B, _, H, W = n.shape
    for b in range(B):
        for i in range(H):
            for j in range(W):
                if mask[b, 0, i, j] <= 0:
                    continue
                gt = n[b, :, i, j].astype(np.float64)
                pred = n_hat[b, :, i, j].astype(np.float64)
                norm = math.sqrt(float((pred**2).sum()))
                if norm < 1e-8:
                    out.append(90.0)
                    continue
                cosang = float((gt * (pred / norm)).sum())
                cosang = min(1.0, max(-1.0, cosang))
                out.append(math.degrees(math.acos(cosang)))
    return np.array(out)


class TestCosineLoss:
    def test_identical_unit_normals(self):
        n = single_pixel([0.0, 0.0, 1.0])
        assert abs(float(L.cosine_loss(n, single_pixel([0, 0, 1.0]), full_mask()).data)) < 1e-6

    def test_orthogonal(self):
        loss = L.cosine_loss(single_pixel([0, 0, 1.0]), single_pixel([0, 1.0, 0]), full_mask())
        assert abs(float(loss.data) - 1.0) < 1e-6

    def test_hand_case_point_two(self):
        # dot = 0.8, both unit norms -> 1 - 0.8 = 0.2
        loss = L.cosine_loss(single_pixel([0, 0, 1.0]), single_pixel([0, 0.6, 0.8]), full_mask())
        assert abs(float(loss.data) - 0.2) < 1e-6

    def test_antipodal_is_two(self):
        loss = L.cosine_loss(single_pixel([0, 0, 1.0]), single_pixel([0, 0, -1.0]), full_mask())
        assert abs(float(loss.data) - 2.0) < 1e-6

    def test_scale_invariance(self, rng):
        n = rng.normal(size=(1, 3, 8, 8))
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        n_hat = rng.normal(size=(1, 3, 8, 8)) + 0.5
        mask = Tensor((rng.uniform(size=(1, 1, 8, 8)) > 0.4).astype(np.float64))
        base = float(L.cosine_loss(Tensor(n), Tensor(n_hat), mask).data)
        for c in (1e-3, 0.1, 10.0, 1e3):
            scaled = float(L.cosine_loss(Tensor(n), Tensor(c * n_hat), mask).data)
            assert abs(scaled - base) < 1e-5

    def test_mask_locality_bitwise(self, rng):
        n = rng.normal(size=(1, 3, 6, 6))
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        n_hat = rng.normal(size=(1, 3, 6, 6))
        mask = np.zeros((1, 1, 6, 6))
        mask[0, 0, :3] = 1.0
        before = L.cosine_loss(Tensor(n), Tensor(n_hat), Tensor(mask)).data.copy()
        n_hat2 = n_hat.copy()
        n_hat2[0, :, 5, 5] = 123.0  # unmasked pixel
        after = L.cosine_loss(Tensor(n), Tensor(n_hat2), Tensor(mask)).data
        assert np.array_equal(before, after)

    def test_empty_mask_rejected(self, rng):
        n = Tensor(rng.normal(size=(1, 3, 4, 4)))
        with pytest.raises(L.EmptyMaskError):
            L.cosine_loss(n, n, Tensor(np.zeros((1, 1, 4, 4))))

    def test_gradcheck(self, rng):
        n = rng.normal(size=(1, 3, 5, 5))
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        n = Tensor(n, requires_grad=True)
        pred = rng.normal(size=(1, 3, 5, 5))
        norms = np.linalg.norm(pred, axis=1, keepdims=True)
        pred = np.where(norms < 0.3, pred + 0.5, pred)
        n_hat = Tensor(pred, requires_grad=True)
        mask = Tensor((rng.uniform(size=(1, 1, 5, 5)) > 0.3).astype(np.float64))
        report = gradient_check(
            lambda i: L.cosine_loss(i[0], i[1], mask), [n, n_hat], 1e-3, "cosine_loss"
        )
        assert report.passed, report


class TestL2Loss:
    def test_identical(self, rng):
        i = Tensor(rng.uniform(size=(1, 3, 4, 4)))
        assert float(L.l2_loss(i, i, full_mask(1, 4, 4)).data) == 0.0

    def test_single_pixel_definition(self):
        i = single_pixel([0.0, 0.0, 0.0])
        i_hat = single_pixel([1.0, 1.0, 1.0])
        assert abs(float(L.l2_loss(i, i_hat, full_mask()).data) - 3.0) < 1e-12

    def test_mean_over_masked_pixels(self):
        i = Tensor(np.zeros((1, 3, 1, 2)))
        i_hat = np.zeros((1, 3, 1, 2))
        i_hat[0, :, 0, 0] = 1.0  # squared sums {3, 0}
        loss = L.l2_loss(i, Tensor(i_hat), full_mask(1, 1, 2))
        assert abs(float(loss.data) - 1.5) < 1e-12

    def test_gradcheck(self, rng):
        i = Tensor(rng.uniform(size=(1, 3, 4, 4)), requires_grad=True)
        i_hat = Tensor(rng.uniform(size=(1, 3, 4, 4)), requires_grad=True)
        mask = Tensor((rng.uniform(size=(1, 1, 4, 4)) > 0.3).astype(np.float64))
        report = gradient_check(lambda t: L.l2_loss(t[0], t[1], mask), [i, i_hat], 1e-3, "l2")
        assert report.passed, report


class TestAngularErrorStats:
    def test_perfect_prediction(self, rng):
        n = rng.normal(size=(1, 3, 8, 8))
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        stats = L.angular_error_stats(n, n, np.ones((1, 1, 8, 8)))
        assert stats.mean_deg < 1e-3 and stats.std_deg < 1e-3
        assert stats.pct20 == stats.pct25 == stats.pct30 == 1.0

    def test_two_point_statistics(self):
        n = np.zeros((1, 3, 1, 2))
        n[0, 2] = 1.0  # both gt pixels (0,0,1)
        n_hat = np.zeros((1, 3, 1, 2))
        n_hat[0, 2, 0, 0] = 1.0  # 0 deg
        n_hat[0, 1, 0, 1] = 1.0  # 90 deg
        stats = L.angular_error_stats(n, n_hat, np.ones((1, 1, 1, 2)))
        assert abs(stats.mean_deg - 45.0) < 1e-6
        assert abs(stats.std_deg - 45.0) < 1e-6
        assert stats.pct20 == stats.pct25 == stats.pct30 == 0.5

    def test_antipodal_180(self):
        n = np.zeros((1, 3, 1, 1))
        n[0, 2] = 1.0
        stats = L.angular_error_stats(n, -n, np.ones((1, 1, 1, 1)))
        assert abs(stats.mean_deg - 180.0) < 1e-4

    def test_degenerate_prediction_scores_90(self):
        n = np.zeros((1, 3, 1, 1))
        n[0, 2] = 1.0
        stats = L.angular_error_stats(n, np.zeros_like(n), np.ones((1, 1, 1, 1)))
        assert stats.mean_deg == 90.0

    def test_scale_invariance(self, rng):
        n = rng.normal(size=(1, 3, 8, 8))
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        n_hat = rng.normal(size=(1, 3, 8, 8)) + 0.2
        mask = np.ones((1, 1, 8, 8))
        base = L.angular_error_stats(n, n_hat, mask)
        scaled = L.angular_error_stats(n, 1e3 * n_hat, mask)
        assert abs(base.mean_deg - scaled.mean_deg) < 1e-6

    def test_matches_naive_double_loop(self, rng):
        for trial in range(10):
            n = rng.normal(size=(2, 3, 16, 16))
            n /= np.linalg.norm(n, axis=1, keepdims=True)
            n_hat = rng.normal(size=(2, 3, 16, 16))
            mask = (rng.uniform(size=(2, 1, 16, 16)) > 0.3).astype(np.float64)
            mask[:, :, 0, 0] = 1.0
            fast = L.angular_error_map(n, n_hat, mask)
            naive = naive_angular_errors(n, n_hat, mask)
            np.testing.assert_allclose(np.sort(fast), np.sort(naive), atol=1e-6)

    def test_empty_mask_rejected(self, rng):
        n = rng.normal(size=(1, 3, 4, 4))
        with pytest.raises(L.EmptyMaskError):
            L.angular_error_stats(n, n, np.zeros((1, 1, 4, 4)))


class TestRowFormatting:
    def test_paper_style_row(self):
        row = L.format_error_row(22.8, 6.5, 0.49, 0.629, 0.741)
        assert row == "22.8±6.5  49.0%  62.9%  74.1%"

    def test_stats_row(self):
        stats = L.AngularErrorStats(12.04, 5.26, 0.852, 0.9204, 0.956, 100)
        assert stats.row() == "12.0±5.3  85.2%  92.0%  95.6%"
