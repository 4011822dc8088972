import numpy as np
import pytest

from pvcodec import metrics, pcio
from pvcodec.errors import ConfigError


def nn_sq_oracle(a, b):
    """O(n^2) exhaustive nearest-neighbor squared distances."""
    d = ((a[:, None, :] - b[None, :, :]).astype(np.float64) ** 2).sum(axis=2)
    return d.min(axis=1)


def d1_oracle(a, b, peak):
    mse = max(nn_sq_oracle(a, b).mean(), nn_sq_oracle(b, a).mean())
    if mse == 0:
        return float("inf")
    return 10 * np.log10(3 * peak * peak / mse)


def chamfer_oracle(a, b):
    return nn_sq_oracle(a, b).mean() + nn_sq_oracle(b, a).mean()


def cloud(rng, n, hi=64, bits=6):
    return pcio.PointCloud(np.unique(rng.integers(0, hi, (n, 3)), axis=0), bits)


class TestD1:
    def test_identical_clouds_inf(self):
        rng = np.random.default_rng(91)
        a = cloud(rng, 50)
        assert metrics.d1_psnr(a, a) == float("inf")

    def test_single_pair_analytic(self):
        a = pcio.PointCloud([[0, 0, 0]], 10)
        b = pcio.PointCloud([[1, 0, 0]], 10)
        expected = 10 * np.log10(3 * 1023**2)
        assert metrics.d1_psnr(a, b, peak=1023) == pytest.approx(expected, rel=1e-12)

    def test_matches_oracle(self):
        rng = np.random.default_rng(92)
        for _ in range(10):
            a, b = cloud(rng, 300), cloud(rng, 250)
            got = metrics.d1_psnr(a, b)
            want = d1_oracle(a.points, b.points, 63)
            assert got == pytest.approx(want, rel=1e-9)

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            metrics.d1_psnr(pcio.PointCloud(np.zeros((0, 3)), 4), pcio.PointCloud([[0, 0, 0]], 4))


class TestD2:
    def test_identical_clouds_inf(self):
        rng = np.random.default_rng(93)
        a = cloud(rng, 60)
        psnr, fallback = metrics.d2_psnr(a, a)
        assert psnr == float("inf")
        assert not fallback

    def test_lifted_plane_mse_one(self):
        rng = np.random.default_rng(94)
        xy = np.unique(rng.integers(0, 32, (200, 2)), axis=0)
        a = np.column_stack([xy, np.zeros(len(xy), dtype=np.int64)])
        b = np.column_stack([xy, np.ones(len(xy), dtype=np.int64)])
        peak = 31.0
        psnr, fallback = metrics.d2_psnr(
            pcio.PointCloud(a, 5), pcio.PointCloud(b, 5), peak=peak
        )
        assert not fallback
        assert psnr == pytest.approx(10 * np.log10(3 * peak * peak / 1.0), rel=1e-9)

    def test_d2_mse_never_exceeds_d1(self):
        rng = np.random.default_rng(95)
        for _ in range(8):
            a, b = cloud(rng, 200), cloud(rng, 180)
            d1 = metrics.d1_psnr(a, b)
            d2, fb = metrics.d2_psnr(a, b)
            assert not fb
            assert d2 >= d1  # projection shrinks squared error

    def test_tiny_cloud_falls_back(self):
        a = pcio.PointCloud([[0, 0, 0], [1, 1, 1]], 4)
        b = pcio.PointCloud([[2, 2, 2]], 4)
        d2, fallback = metrics.d2_psnr(a, b)
        assert fallback
        assert d2 == metrics.d1_psnr(a, b)

    def test_collinear_neighborhood_uses_z_fallback(self):
        pts = np.array([[i, 0, 0] for i in range(12)])
        normals, flags = metrics.estimate_normals(pts)
        assert flags.all()
        np.testing.assert_array_equal(normals[0], [0, 0, 1])


class TestChamfer:
    def test_identity_zero_and_symmetry(self):
        rng = np.random.default_rng(96)
        a, b = cloud(rng, 100), cloud(rng, 90)
        assert metrics.chamfer(a, a) == 0.0
        assert metrics.chamfer(a, b) == metrics.chamfer(b, a)

    def test_single_pair(self):
        a = pcio.PointCloud([[0, 0, 0]], 6)
        b = pcio.PointCloud([[3, 4, 0]], 6)
        assert metrics.chamfer(a, b) == 50.0

    def test_matches_oracle_exactly(self):
        rng = np.random.default_rng(97)
        for _ in range(10):
            a, b = cloud(rng, 400), cloud(rng, 350)
            assert metrics.chamfer(a, b) == chamfer_oracle(a.points, b.points)


class TestEvaluate:
    def test_report_fields_and_kv(self):
        rng = np.random.default_rng(98)
        a, b = cloud(rng, 120), cloud(rng, 110)
        rep = metrics.evaluate(a, b)
        assert rep.peak == 63.0
        kv = rep.as_kv()
        assert "d1_psnr=" in kv and "chamfer=" in kv
        parsed = dict(line.split("=", 1) for line in kv.strip().splitlines())
        assert float(parsed["chamfer"]) == rep.chamfer
