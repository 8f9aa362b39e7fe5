import numpy as np
import pytest
from scipy.optimize import brentq, minimize_scalar

from app.ct import (
    EllipseSet,
    Sinogram,
    build_sampling_operator,
    ellipse_sinogram,
    fbp,
    limited_angles,
    measurement_layout,
    measurements_from_sinogram,
    pixel_centers,
    projector,
    radon,
    radon_adjoint,
    shepp_logan,
    spectral_stack,
    spectral_unstack,
)
from app.exceptions import DimensionError
from app.operators import dot_product_test, materialize


def _disk(radius=0.5, density=1.0):
    return EllipseSet([[0.0, 0.0, radius, radius, 0.0, density]])


def _chord_by_root_finding(ellipse, theta, t):
    """Chord length of one ellipse along the ray at (theta, t), found numerically."""
    cx, cy, a, b, phi, _ = ellipse
    foot = np.array([t * np.cos(theta), t * np.sin(theta)])
    direction = np.array([-np.sin(theta), np.cos(theta)])

    def level(tau):
        px, py = foot + tau * direction - (cx, cy)
        u = px * np.cos(phi) + py * np.sin(phi)
        v = -px * np.sin(phi) + py * np.cos(phi)
        return (u / a) ** 2 + (v / b) ** 2 - 1.0

    centre = minimize_scalar(level, bracket=(-1.0, 1.0), tol=1e-12).x
    if level(centre) >= 0:
        return 0.0
    return brentq(level, centre, centre + 10.0, xtol=1e-14) - brentq(level, centre - 10.0, centre, xtol=1e-14)


class TestPhantom:
    def test_centre_pixel_sums_ellipses_containing_origin(self):
        image, ellipses = shepp_logan(64)
        expected = ellipses.evaluate(np.array([0.0]), np.array([0.0]))[0]
        assert image[32, 32] == pytest.approx(expected)
        assert expected == pytest.approx(0.2)

    def test_corners_are_zero(self):
        image, _ = shepp_logan(64)
        assert image[0, 0] == image[0, -1] == image[-1, 0] == image[-1, -1] == 0.0

    def test_skull_ring_is_mirror_symmetric(self):
        image, _ = shepp_logan(128)
        ring = np.isclose(image, 1.0)
        assert ring.sum() > 0
        np.testing.assert_array_equal(ring, ring[:, ::-1])

    def test_original_variant_densities(self):
        image, ellipses = shepp_logan(64, "original")
        assert ellipses.params[0, 5] == 2.0
        assert image.max() == pytest.approx(2.0)

    def test_rejects_non_power_of_two(self):
        with pytest.raises(DimensionError):
            shepp_logan(48)
        with pytest.raises(ValueError):
            shepp_logan(32, oversample=0)

    def test_single_sample_is_pixel_center(self):
        image, ellipses = shepp_logan(32, oversample=1)
        np.testing.assert_array_equal(image, ellipses.evaluate(*pixel_centers(32)))

    @pytest.mark.parametrize("factor", [2, 4])
    def test_oversampling_is_block_mean_of_finer_grid(self, factor):
        n = 32
        coarse, _ = shepp_logan(n, oversample=factor)
        fine, _ = shepp_logan(n * factor)
        blocks = fine.reshape(n, factor, n, factor).mean(axis=(1, 3))
        np.testing.assert_allclose(coarse, blocks, atol=1e-12)


class TestEllipseSinogram:
    def test_unit_disk_through_centre(self):
        sino = ellipse_sinogram(_disk(1.0, 0.7), np.array([0.0, 1.0]), 63, pitch=2.0 / 32)
        assert sino.data[0, 31] == pytest.approx(1.4)
        assert sino.data[1, 31] == pytest.approx(1.4)

    def test_missing_ray_is_zero(self):
        sino = ellipse_sinogram(_disk(0.3), np.array([0.2]), 63, pitch=2.0 / 32)
        positions = sino.positions
        assert np.all(sino.data[0, np.abs(positions) > 0.3] == 0.0)

    def test_rotated_offset_ellipse_matches_root_finding(self):
        ellipse = [0.2, -0.1, 0.5, 0.25, np.deg2rad(30.0), 1.3]
        angles = np.deg2rad([0.0, 17.0, 60.0, 95.0, 150.0])
        sino = ellipse_sinogram(EllipseSet([ellipse]), angles, 41, pitch=0.05)
        for k, theta in enumerate(angles):
            for j in range(0, 41, 4):
                expected = 1.3 * _chord_by_root_finding(ellipse, theta, sino.positions[j])
                assert sino.data[k, j] == pytest.approx(expected, abs=1e-8)

    def test_linear_in_densities(self):
        _, ellipses = shepp_logan(32)
        angles = limited_angles(10.0)
        base = ellipse_sinogram(ellipses, angles, 63)
        np.testing.assert_allclose(ellipse_sinogram(ellipses.scaled(2.5), angles, 63).data, 2.5 * base.data)

    def test_phantom_end_bins_vanish(self):
        _, ellipses = shepp_logan(64)
        sino = ellipse_sinogram(ellipses, limited_angles(1.0, 25.0), 127)
        assert sino.end_bins_zero()
        assert sino.check_end_bins()


class TestAngles:
    def test_missing_wedge_of_25_degrees(self):
        angles = np.rad2deg(limited_angles(1.0, 25.0))
        assert angles.size == 155
        assert not np.any((angles >= 77.5) & (angles < 102.5))

    def test_full_range(self):
        assert limited_angles(1.0).size == 180

    def test_explicit_wedge_start(self):
        angles = np.rad2deg(limited_angles(1.0, 10.0, missing_start_deg=0.0))
        assert angles[0] == pytest.approx(10.0)
        assert angles.size == 170


class TestRadon:
    def test_zero_image(self):
        sino = radon(np.zeros((16, 16)), limited_angles(15.0), 31)
        assert np.all(sino.data == 0.0)

    def test_disk_matches_analytic_projections(self):
        n = 128
        angles = limited_angles(6.0)
        X, Y = pixel_centers(n)
        image = (X ** 2 + Y ** 2 <= 0.6 ** 2).astype(float)
        discrete = radon(image, angles, 2 * n - 1).data
        analytic = ellipse_sinogram(_disk(0.6), angles, 2 * n - 1, n=n).data
        assert np.linalg.norm(discrete - analytic) / np.linalg.norm(analytic) < 0.02

    def test_axis_aligned_rays_preserve_mass(self):
        image = np.zeros((8, 8))
        image[2:6, 3:5] = 1.0
        sino = radon(image, np.array([0.0, np.pi / 2]), 15)
        # total mass is preserved at every angle (sum over bins times pitch)
        h = 2.0 / 8
        np.testing.assert_allclose(sino.data.sum(axis=1), image.sum() * h, rtol=1e-12)

    def test_adjoint_is_transpose(self, rng):
        angles = limited_angles(20.0)
        image = rng.standard_normal((16, 16))
        data = rng.standard_normal((angles.size, 31))
        lhs = np.sum(radon(image, angles, 31).data * data)
        rhs = np.sum(image * radon_adjoint(data, angles, 16))
        assert lhs == pytest.approx(rhs, rel=1e-12)


class TestSamplingOperator:
    def test_spatial_mode_is_flattened_radon(self, rng):
        angles = limited_angles(30.0)
        image = rng.standard_normal((8, 8))
        phi = build_sampling_operator(angles, 15, 8, freq_mode=False)
        np.testing.assert_allclose(phi.matvec(image.ravel()), radon(image, angles, 15).data.ravel())

    def test_frequency_mode_preserves_norm(self, rng):
        angles = limited_angles(15.0)
        image = rng.standard_normal((16, 16))
        spatial = build_sampling_operator(angles, 31, 16, freq_mode=False).matvec(image.ravel())
        spectral = build_sampling_operator(angles, 31, 16, freq_mode=True).matvec(image.ravel())
        assert spectral.size == angles.size * 32
        assert np.linalg.norm(spectral) == pytest.approx(np.linalg.norm(spatial), rel=1e-12)

    def test_frequency_mode_matches_explicit_dft(self):
        n, d = 8, 15
        angles = limited_angles(60.0)
        L = 16
        k = np.arange(L)
        dft = np.exp(-2j * np.pi * np.outer(k, k) / L) / np.sqrt(L)
        half = L // 2
        rows = np.vstack([
            dft[0].real, np.sqrt(2) * dft[1:half].real, dft[half].real, np.sqrt(2) * dft[1:half].imag,
        ])[:, :d]
        R = projector(n, angles, d).toarray()
        oracle = np.vstack([rows @ R[i * d:(i + 1) * d] for i in range(angles.size)])
        phi = build_sampling_operator(angles, d, n, freq_mode=True)
        np.testing.assert_allclose(materialize(phi), oracle, atol=1e-12)

    def test_frequency_mode_adjoint(self, rng):
        phi = build_sampling_operator(limited_angles(9.0, 20.0), 31, 16, freq_mode=True)
        assert dot_product_test(phi, rng) < 1e-12

    def test_spectral_unstack_inverts_stack(self, rng):
        data = rng.standard_normal((3, 31))
        np.testing.assert_allclose(spectral_unstack(spectral_stack(data), 31), data, atol=1e-12)

    def test_measurement_layout(self):
        sino = ellipse_sinogram(_disk(0.5), limited_angles(45.0), 15, n=8)
        y = measurements_from_sinogram(sino, freq_mode=True)
        assert y.N == 4 * 16
        layout = measurement_layout(4, 15, True)
        assert layout.part[:16].tolist() == [0] * 9 + [1] * 7
        assert layout.bin[9] == 1
        assert measurements_from_sinogram(sino, freq_mode=False).N == 4 * 15


class TestFbp:
    def test_zero_sinogram(self):
        sino = Sinogram(angles=limited_angles(10.0), data=np.zeros((18, 31)), pitch=2.0 / 16)
        assert np.all(fbp(sino, 16) == 0.0)

    def test_disk_is_reconstructed(self):
        n = 128
        sino = ellipse_sinogram(_disk(0.5), limited_angles(1.0), 2 * n - 1, n=n)
        image = fbp(sino, n)
        X, Y = pixel_centers(n)
        r = np.hypot(X, Y)
        assert image[r < 0.45].mean() == pytest.approx(1.0, abs=0.05)
        assert np.abs(image[(r > 0.6) & (r < 0.9)]).mean() < 0.05


class TestSinogramValidation:
    def test_rejects_mismatched_angles(self):
        with pytest.raises(DimensionError):
            Sinogram(angles=np.array([0.0, 0.1]), data=np.zeros((3, 5)), pitch=1.0)

    def test_rejects_unsorted_angles(self):
        with pytest.raises(DimensionError):
            Sinogram(angles=np.array([0.5, 0.1]), data=np.zeros((2, 5)), pitch=1.0)
