import unittest

import numpy as np

from naquant.acquisition import make_coils, forward_model, adjoint_model, add_noise, acquire_noise_scan, \
    estimate_noise_sigma, expected_noise_energy, check_kspace_data, KSpaceData, CoilSensitivities, \
    InvalidAcquisitionError
from naquant.combine import sensitivity_combine
from naquant.common import ImageVolume, DimensionMismatchError, SIGNAL_UNITS
from naquant.trajectories import make_radial_trajectory, nyquist_spokes

_DIMS = (32, 32)


def _smooth_blob(dims=_DIMS, width: float=3.0) -> ImageVolume:
    coordinates = np.meshgrid(*(np.arange(n) - n // 2 for n in dims), indexing="ij")
    return ImageVolume(np.exp(-sum(x ** 2 for x in coordinates) / (2 * width ** 2)), (1.0, ) * len(dims),
                       SIGNAL_UNITS)


class TestMakeCoils(unittest.TestCase):
    """
    Tests for `make_coils`.
    """
    def test_shape(self):
        coils = make_coils(_DIMS, 4, seed=1)
        self.assertEqual(4, coils.n_coils)
        self.assertEqual(_DIMS, coils.dims)
        self.assertLessEqual(float(np.max(np.abs(coils.maps))), 1.0)
        self.assertTrue(np.all(np.abs(coils.maps) > 0))

    def test_single_coil_is_uniform(self):
        np.testing.assert_array_equal(np.ones((1, *_DIMS)), make_coils(_DIMS, 1).maps)

    def test_deterministic(self):
        np.testing.assert_array_equal(make_coils(_DIMS, 3, seed=2).maps, make_coils(_DIMS, 3, seed=2).maps)
        self.assertFalse(np.array_equal(make_coils(_DIMS, 3, seed=2).maps, make_coils(_DIMS, 3, seed=4).maps))

    def test_coils_differ(self):
        coils = make_coils(_DIMS, 2, seed=1)
        self.assertFalse(np.allclose(np.abs(coils.maps[0]), np.abs(coils.maps[1])))

    def test_3d(self):
        self.assertEqual((3, 16, 16, 16), make_coils((16, 16, 16), 3).maps.shape)

    def test_no_coils(self):
        self.assertRaises(InvalidAcquisitionError, make_coils, _DIMS, 0)


class TestForwardModel(unittest.TestCase):
    """
    Tests for `forward_model` and `adjoint_model`.
    """
    def setUp(self):
        self.trajectory = make_radial_trajectory(10, 17, _DIMS)
        self.coils = make_coils(_DIMS, 3, seed=7)

    def test_shape(self):
        data = forward_model(_smooth_blob(), self.trajectory, self.coils)
        self.assertEqual((3, 10, 33), data.samples.shape)
        check_kspace_data(data)
        self.assertEqual(0.0, data.noise_sigma)

    def test_linear(self):
        image = _smooth_blob()
        once = forward_model(image, self.trajectory, self.coils, "direct").samples
        twice = forward_model(image.with_values(2 * image.values), self.trajectory, self.coils, "direct").samples
        np.testing.assert_allclose(2 * once, twice)

    def test_dims_mismatch(self):
        self.assertRaises(DimensionMismatchError, forward_model, _smooth_blob((16, 16)), self.trajectory, self.coils)

    def test_not_finite(self):
        image = _smooth_blob()
        values = image.values.copy()
        values[0, 0] = np.nan
        self.assertRaises(InvalidAcquisitionError, forward_model, image.with_values(values), self.trajectory,
                          self.coils)

    def test_unweighted_adjoint_is_exact(self):
        rng = np.random.default_rng(3)
        image = rng.standard_normal(_DIMS) + 1j * rng.standard_normal(_DIMS)
        samples = rng.standard_normal((3, 10, 33)) + 1j * rng.standard_normal((3, 10, 33))
        data = KSpaceData(samples, self.trajectory)
        forward = forward_model(ImageVolume(image, (1.0, 1.0), SIGNAL_UNITS), self.trajectory, self.coils, "direct")
        adjoint = sensitivity_combine(adjoint_model(data, self.coils, False, "direct"), self.coils)
        left = np.vdot(forward.samples, samples)
        right = np.vdot(image, adjoint.values)
        self.assertAlmostEqual(0.0, abs(left - right) / abs(left), places=10)

    def test_weighted_adjoint_of_fully_sampled_data(self):
        blob = _smooth_blob()
        trajectory = make_radial_trajectory(nyquist_spokes(_DIMS), 17, _DIMS)
        coils = make_coils(_DIMS, 1)
        data = forward_model(blob, trajectory, coils, "direct")
        images = adjoint_model(data, coils, True, "direct", voxel_size=(2.0, 2.0))
        self.assertEqual(1, len(images))
        self.assertEqual((2.0, 2.0), images[0].voxel_size)
        error = np.sqrt(np.mean((np.real(images[0].values) - blob.values) ** 2))
        self.assertLessEqual(error, 0.05 * float(np.ptp(blob.values)))

    def test_weighted_energy_matches_image_energy(self):
        blob = _smooth_blob()
        trajectory = make_radial_trajectory(nyquist_spokes(_DIMS), 17, _DIMS)
        data = forward_model(blob, trajectory, make_coils(_DIMS, 1), "direct")
        energy = float(np.sum(trajectory.sample_weights() * np.abs(data.samples[0]) ** 2))
        self.assertAlmostEqual(1.0, energy / float(np.sum(blob.values ** 2)), delta=0.1)

    def test_adjoint_coil_mismatch(self):
        data = forward_model(_smooth_blob(), self.trajectory, self.coils)
        self.assertRaises(DimensionMismatchError, adjoint_model, data, make_coils(_DIMS, 2))

    def test_inconsistent_samples(self):
        self.assertRaises(DimensionMismatchError, check_kspace_data,
                          KSpaceData(np.zeros((3, 10, 32)), self.trajectory))


class TestNoise(unittest.TestCase):
    """
    Tests for `add_noise`, `acquire_noise_scan` and `estimate_noise_sigma`.
    """
    def setUp(self):
        self.trajectory = make_radial_trajectory(16, 17, _DIMS)
        self.data = KSpaceData(np.zeros((2, 16, 33), dtype=np.complex128), self.trajectory)

    def test_zero_noise_is_identity(self):
        noisy = add_noise(self.data, 0.0, seed=1)
        np.testing.assert_array_equal(self.data.samples, noisy.samples)
        self.assertEqual(0.0, noisy.noise_sigma)

    def test_negative_noise(self):
        self.assertRaises(InvalidAcquisitionError, add_noise, self.data, -1.0, 1)

    def test_noise_is_seeded(self):
        first = add_noise(self.data, 2.0, seed=5)
        np.testing.assert_array_equal(first.samples, add_noise(self.data, 2.0, seed=5).samples)
        self.assertFalse(np.array_equal(first.samples, add_noise(self.data, 2.0, seed=6).samples))
        self.assertEqual(2.0, first.noise_sigma)
        self.assertEqual(5, first.seed)

    def test_noise_level(self):
        scan = acquire_noise_scan((4, 4096), 3.0, seed=9)
        self.assertAlmostEqual(3.0, estimate_noise_sigma(scan), delta=0.05)
        self.assertAlmostEqual(0.0, float(np.mean(scan.real)), delta=0.1)

    def test_expected_noise_energy(self):
        sigma = 2.0
        energies = []
        for seed in range(20):
            noise = add_noise(self.data, sigma, seed).samples
            energies.append(float(np.sum(self.trajectory.sample_weights() * np.abs(noise) ** 2)))
        expected = expected_noise_energy(self.trajectory, 2, sigma)
        self.assertAlmostEqual(1.0, float(np.mean(energies)) / expected, delta=0.1)


class TestCoilSensitivities(unittest.TestCase):
    """
    Tests for `CoilSensitivities`.
    """
    def test_properties(self):
        coils = CoilSensitivities(np.ones((2, 16, 20)))
        self.assertEqual(2, coils.n_coils)
        self.assertEqual((16, 20), coils.dims)


if __name__ == "__main__":
    unittest.main()
