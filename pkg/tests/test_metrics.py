"""PSNR/SSIM against independent oracles, plus the per-band report."""

import math

import numpy as np
import pytest
from skimage.metrics import structural_similarity

from chromacube import ConfigError, ShapeMismatchError, SpectralCube, evaluate_cube, psnr, ssim


def psnr_loop_oracle(ref, rec, data_range):
    total = 0.0
    count = 0
    for a, b in zip(ref.ravel(), rec.ravel()):
        total += (a - b) ** 2
        count += 1
    return 10.0 * math.log10(data_range**2 / (total / count))


class TestPsnr:
    def test_identical_images_hit_sentinel(self):
        img = np.random.Generator(np.random.PCG64(0)).uniform(0, 1, (8, 8))
        assert psnr(img, img) == math.inf

    def test_constant_offset_closed_form(self):
        # MSE = 0.01 at range 1 -> 20 dB
        assert psnr(np.zeros((8, 8)), np.full((8, 8), 0.1), 1.0) == pytest.approx(20.0, abs=1e-12)

    def test_matches_loop_oracle(self):
        rng = np.random.Generator(np.random.PCG64(1))
        ref = rng.uniform(0, 1, (16, 16))
        rec = rng.uniform(0, 1, (16, 16))
        assert psnr(ref, rec, 1.0) == pytest.approx(psnr_loop_oracle(ref, rec, 1.0), abs=1e-10)

    def test_symmetry(self):
        rng = np.random.Generator(np.random.PCG64(2))
        ref = rng.uniform(0, 1, (12, 12))
        rec = rng.uniform(0, 1, (12, 12))
        assert psnr(ref, rec) == psnr(rec, ref)

    def test_decreases_with_noise_level(self):
        rng = np.random.Generator(np.random.PCG64(3))
        img = rng.uniform(0.2, 0.8, (32, 32))
        noise = np.random.Generator(np.random.PCG64(50)).standard_normal((32, 32))
        values = [psnr(img, img + sigma * noise) for sigma in (0.01, 0.05, 0.1)]
        assert values[0] > values[1] > values[2]

    def test_shape_and_range_validation(self):
        with pytest.raises(ShapeMismatchError):
            psnr(np.zeros((4, 4)), np.zeros((5, 5)))
        with pytest.raises(ConfigError):
            psnr(np.zeros((4, 4)), np.zeros((4, 4)), data_range=0.0)


class TestSsim:
    def test_identical_images(self):
        img = np.random.Generator(np.random.PCG64(4)).uniform(0, 1, (16, 16))
        assert abs(ssim(img, img) - 1.0) < 1e-12

    def test_constant_images_closed_form(self):
        a, b = 0.3, 0.5
        c1 = (0.01 * 1.0) ** 2
        expected = (2 * a * b + c1) / (a**2 + b**2 + c1)
        got = ssim(np.full((16, 16), a), np.full((16, 16), b), 1.0)
        assert got == pytest.approx(expected, abs=1e-12)

    def test_matches_reference_implementation(self):
        rng = np.random.Generator(np.random.PCG64(5))
        for _ in range(5):
            ref = rng.uniform(0, 1, (32, 32))
            rec = np.clip(ref + rng.normal(0, 0.1, (32, 32)), 0, 1)
            expected = structural_similarity(
                ref, rec, data_range=1.0, gaussian_weights=True, sigma=1.5,
                use_sample_covariance=False,
            )
            assert ssim(ref, rec, 1.0) == pytest.approx(expected, abs=1e-6)

    def test_too_small_image_rejected(self):
        with pytest.raises(ConfigError):
            ssim(np.zeros((8, 8)), np.zeros((8, 8)))

    def test_symmetric_for_equal_range(self):
        rng = np.random.Generator(np.random.PCG64(6))
        ref = rng.uniform(0, 1, (16, 16))
        rec = rng.uniform(0, 1, (16, 16))
        assert ssim(ref, rec) == pytest.approx(ssim(rec, ref), abs=1e-14)


class TestEvaluateCube:
    def test_identical_cubes(self):
        rng = np.random.Generator(np.random.PCG64(7))
        cube = SpectralCube(rng.uniform(0, 1, (3, 16, 16)))
        report = evaluate_cube(cube, cube)
        assert report.mean_psnr_db == math.inf
        assert report.mean_ssim == pytest.approx(1.0, abs=1e-12)

    def test_single_corrupted_band(self):
        rng = np.random.Generator(np.random.PCG64(8))
        ref = SpectralCube(rng.uniform(0.1, 0.9, (3, 16, 16)))
        rec_data = ref.data.copy()
        rec_data[1] += 0.05
        report = evaluate_cube(ref, SpectralCube(rec_data))
        assert report.psnr_db[0] == math.inf and report.psnr_db[2] == math.inf
        assert report.psnr_db[1] < math.inf
        assert report.ssim_score[0] == pytest.approx(1.0, abs=1e-12)
        assert report.ssim_score[1] < 1.0

    def test_means_are_per_band_averages(self):
        rng = np.random.Generator(np.random.PCG64(9))
        ref = SpectralCube(rng.uniform(0, 1, (4, 16, 16)))
        rec = SpectralCube(np.clip(ref.data + rng.normal(0, 0.05, ref.shape), 0, 1))
        report = evaluate_cube(ref, rec)
        per_band_psnr = [psnr(ref.data[i], rec.data[i]) for i in range(4)]
        per_band_ssim = [ssim(ref.data[i], rec.data[i]) for i in range(4)]
        assert report.mean_psnr_db == pytest.approx(np.mean(per_band_psnr), abs=1e-12)
        assert report.mean_ssim == pytest.approx(np.mean(per_band_ssim), abs=1e-12)

    def test_csv_layout(self):
        rng = np.random.Generator(np.random.PCG64(10))
        cube = SpectralCube(rng.uniform(0, 1, (2, 16, 16)))
        text = evaluate_cube(cube, cube).to_csv()
        lines = text.strip().splitlines()
        assert lines[0] == "band,psnr_db,ssim"
        assert len(lines) == 4  # header + 2 bands + summary
        assert lines[-1].startswith("mean,")
        assert "inf" in lines[1]

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            evaluate_cube(SpectralCube(np.ones((2, 16, 16))), SpectralCube(np.ones((3, 16, 16))))
