import unittest

import numpy as np

from naquant.trajectories import make_radial_trajectory, nyquist_spokes, Trajectory, TrajectoryMode, \
    InvalidTrajectoryError, K_MAX, DEFAULT_K0_FRACTION


def _shell_measure(trajectory: Trajectory, index: int) -> float:
    """
    Measure of the shell between the midpoints around a half-spoke sample, shared between all half-spokes.
    """
    radii = trajectory.sample_radii
    surface = 2 * np.pi if trajectory.ndim == 2 else 4 * np.pi
    width = (radii[index + 1] - radii[index - 1]) / 2
    return surface * radii[index] ** (trajectory.ndim - 1) * width / (2 * trajectory.n_spokes)


class TestMakeRadialTrajectory(unittest.TestCase):
    """
    Tests for `make_radial_trajectory`.
    """
    def test_2d_geometry(self):
        trajectory = make_radial_trajectory(16, 33, (64, 64))
        self.assertEqual(16, trajectory.n_spokes)
        self.assertEqual(65, trajectory.readout_length)
        self.assertEqual(16 * 65, trajectory.n_samples)
        coordinates = trajectory.coordinates()
        self.assertEqual((16, 65, 2), coordinates.shape)
        np.testing.assert_allclose(np.pi * np.arange(16) / 16, trajectory.spoke_angles)
        np.testing.assert_allclose(1.0, np.linalg.norm(trajectory.spoke_directions, axis=1), atol=1e-12)
        self.assertAlmostEqual(K_MAX, float(np.max(np.linalg.norm(coordinates, axis=2))))
        np.testing.assert_array_equal(np.zeros(2), coordinates[3, 32])

    def test_readout_is_diametric(self):
        trajectory = make_radial_trajectory(4, 9, (16, 16))
        np.testing.assert_allclose(-trajectory.readout_radii[::-1], trajectory.readout_radii)
        np.testing.assert_allclose(trajectory.readout_weights[::-1], trajectory.readout_weights)

    def test_3d_directions_on_half_sphere(self):
        trajectory = make_radial_trajectory(50, 9, (16, 16, 16))
        directions = trajectory.spoke_directions
        self.assertEqual((50, 3), directions.shape)
        np.testing.assert_allclose(1.0, np.linalg.norm(directions, axis=1), atol=1e-12)
        self.assertTrue(np.all(directions[:, 0] > 0))
        self.assertIsNone(trajectory.spoke_angles)

    def test_uniform_weights_cover_disc(self):
        trajectory = make_radial_trajectory(32, 33, (64, 64))
        self.assertAlmostEqual(1.0, float(np.sum(trajectory.sample_weights())) / (np.pi * K_MAX ** 2), delta=0.05)

    def test_uniform_weights_cover_ball(self):
        trajectory = make_radial_trajectory(64, 33, (64, 64, 64))
        ball = 4.0 / 3.0 * np.pi * K_MAX ** 3
        self.assertAlmostEqual(1.0, float(np.sum(trajectory.sample_weights())) / ball, delta=0.1)

    def test_density_adapted_weights_cover_disc(self):
        trajectory = make_radial_trajectory(32, 33, (64, 64), TrajectoryMode.DENSITY_ADAPTED)
        self.assertAlmostEqual(1.0, float(np.sum(trajectory.sample_weights())) / (np.pi * K_MAX ** 2), delta=0.05)

    def test_uniform_weights_match_shell_measure(self):
        for dims in ((64, 64), (32, 32, 32)):
            trajectory = make_radial_trajectory(20, 33, dims)
            for i in range(3, trajectory.samples_per_spoke - 1):
                self.assertAlmostEqual(1.0, trajectory.density_weights[i] / _shell_measure(trajectory, i),
                                       delta=0.01)

    def test_density_adapted_weights_match_shell_measure(self):
        for dims in ((64, 64), (32, 32, 32)):
            trajectory = make_radial_trajectory(20, 33, dims, TrajectoryMode.DENSITY_ADAPTED)
            m = trajectory.samples_per_spoke
            for i in range(m // 4, m - 1):
                self.assertAlmostEqual(1.0, trajectory.density_weights[i] / _shell_measure(trajectory, i),
                                       delta=0.01)

    def test_density_adapted_radii(self):
        trajectory = make_radial_trajectory(8, 33, (64, 64), TrajectoryMode.DENSITY_ADAPTED)
        radii = trajectory.sample_radii
        self.assertEqual(0.0, radii[0])
        self.assertEqual(K_MAX, radii[-1])
        self.assertTrue(np.all(np.diff(radii) > 0))
        self.assertAlmostEqual(radii[1] - radii[0], radii[2] - radii[1])
        outer = radii > DEFAULT_K0_FRACTION * K_MAX
        # Equal area per sample beyond k0
        areas = np.diff(radii[outer] ** 2)
        np.testing.assert_allclose(areas, areas[0], rtol=1e-10)
        np.testing.assert_allclose(trajectory.density_weights[outer][:-1], trajectory.density_weights[outer][0],
                                   rtol=1e-9)

    def test_density_adapted_3d_shell_volumes(self):
        trajectory = make_radial_trajectory(8, 33, (32, 32, 32), TrajectoryMode.DENSITY_ADAPTED, 0.2)
        radii = trajectory.sample_radii
        outer = radii > 0.2 * K_MAX
        volumes = np.diff(radii[outer] ** 3)
        np.testing.assert_allclose(volumes, volumes[0], rtol=1e-10)

    def test_density_adapted_is_denser_near_centre(self):
        uniform = make_radial_trajectory(8, 33, (64, 64))
        adapted = make_radial_trajectory(8, 33, (64, 64), TrajectoryMode.DENSITY_ADAPTED)
        self.assertLess(adapted.sample_radii[-1] - adapted.sample_radii[-2],
                        uniform.sample_radii[-1] - uniform.sample_radii[-2])
        self.assertGreater(adapted.sample_radii[1], uniform.sample_radii[1])

    def test_mode_from_value(self):
        trajectory = make_radial_trajectory(8, 9, (16, 16), "density-adapted")
        self.assertEqual(TrajectoryMode.DENSITY_ADAPTED, trajectory.mode)

    def test_invalid_parameters(self):
        self.assertRaises(InvalidTrajectoryError, make_radial_trajectory, 0, 9, (16, 16))
        self.assertRaises(InvalidTrajectoryError, make_radial_trajectory, 8, 4, (16, 16))
        self.assertRaises(InvalidTrajectoryError, make_radial_trajectory, 8, 9, (16, 16),
                          TrajectoryMode.DENSITY_ADAPTED, 0.0)
        self.assertRaises(InvalidTrajectoryError, make_radial_trajectory, 8, 9, (16, 16),
                          TrajectoryMode.DENSITY_ADAPTED, 0.6)
        self.assertRaises(InvalidTrajectoryError, make_radial_trajectory, 8, 9, (16, 16), "spiral")


class TestTrajectory(unittest.TestCase):
    """
    Tests for `Trajectory`.
    """
    def test_radii_must_start_at_centre(self):
        self.assertRaises(InvalidTrajectoryError, Trajectory, np.array([[0.0, 1.0]]), np.array([0.1, 0.5]),
                          np.array([1.0, 1.0]), TrajectoryMode.UNIFORM, 0.2, (16, 16))

    def test_radii_must_not_decrease(self):
        self.assertRaises(InvalidTrajectoryError, Trajectory, np.array([[0.0, 1.0]]), np.array([0.0, 0.4, 0.3]),
                          np.array([1.0, 1.0, 1.0]), TrajectoryMode.UNIFORM, 0.2, (16, 16))

    def test_weights_must_be_positive(self):
        self.assertRaises(InvalidTrajectoryError, Trajectory, np.array([[0.0, 1.0]]), np.array([0.0, 0.5]),
                          np.array([1.0, 0.0]), TrajectoryMode.UNIFORM, 0.2, (16, 16))

    def test_directions_must_match_dims(self):
        self.assertRaises(InvalidTrajectoryError, Trajectory, np.array([[0.0, 0.0, 1.0]]), np.array([0.0, 0.5]),
                          np.array([1.0, 1.0]), TrajectoryMode.UNIFORM, 0.2, (16, 16))


class TestNyquistSpokes(unittest.TestCase):
    """
    Tests for `nyquist_spokes`.
    """
    def test_2d(self):
        self.assertEqual(101, nyquist_spokes((64, 64)))

    def test_3d(self):
        self.assertEqual(403, nyquist_spokes((16, 16, 16)))


if __name__ == "__main__":
    unittest.main()
