from enum import Enum, unique
from typing import Sequence, Optional, Tuple

import numpy as np

from naquant.common import NaQuantBaseError, GridSize, as_grid_size

MINIMUM_SAMPLES_PER_SPOKE = 8
DEFAULT_K0_FRACTION = 0.2
K_MAX = 0.5

_GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


class InvalidTrajectoryError(NaQuantBaseError):
    """
    Raised when trajectory parameters are invalid.
    """


@unique
class TrajectoryMode(Enum):
    UNIFORM = "uniform"
    DENSITY_ADAPTED = "density-adapted"


class Trajectory:
    """
    Radial k-space trajectory.

    Every spoke is read out diametrically: the half-spoke radius profile is mirrored through the centre of k-space, so
    spokes spread over a half circle (2D) or half sphere (3D) cover all directions. Radii are in cycles per voxel.
    """
    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def n_spokes(self) -> int:
        return self.spoke_directions.shape[0]

    @property
    def samples_per_spoke(self) -> int:
        return self.sample_radii.shape[0]

    @property
    def readout_length(self) -> int:
        return 2 * self.samples_per_spoke - 1

    @property
    def readout_radii(self) -> np.ndarray:
        """
        Signed radius of every sample along a diametric readout.
        """
        return np.concatenate((-self.sample_radii[:0:-1], self.sample_radii))

    @property
    def readout_weights(self) -> np.ndarray:
        return np.concatenate((self.density_weights[:0:-1], self.density_weights))

    @property
    def n_samples(self) -> int:
        return self.n_spokes * self.readout_length

    def __init__(self, spoke_directions: np.ndarray, sample_radii: np.ndarray, density_weights: np.ndarray,
                 mode: TrajectoryMode, k0_fraction: float, dims: Sequence[int], spoke_angles: np.ndarray=None):
        """
        Constructor.
        :param spoke_directions: unit direction of every spoke, shape (n_spokes, ndim), array-axis order
        :param sample_radii: non-decreasing half-spoke radii in [0, 0.5] starting at 0
        :param density_weights: density compensation weight of every half-spoke radius
        :param mode: radius spacing mode
        :param k0_fraction: fraction of the maximum radius sampled with uniform spacing (density-adapted mode)
        :param dims: grid size the trajectory is designed for
        :param spoke_angles: spoke angles in radians (2D only)
        :raises InvalidTrajectoryError: if the arrays are inconsistent
        """
        self.dims: GridSize = as_grid_size(dims)
        self.spoke_directions = np.asarray(spoke_directions, dtype=np.float64)
        self.sample_radii = np.asarray(sample_radii, dtype=np.float64)
        self.density_weights = np.asarray(density_weights, dtype=np.float64)
        self.mode = TrajectoryMode(mode)
        self.k0_fraction = float(k0_fraction)
        self.spoke_angles = np.asarray(spoke_angles, dtype=np.float64) if spoke_angles is not None else None

        if self.spoke_directions.ndim != 2 or self.spoke_directions.shape[1] != self.ndim:
            raise InvalidTrajectoryError(f"Spoke directions must have shape (n_spokes, {self.ndim})")
        if self.sample_radii.ndim != 1 or self.sample_radii.shape != self.density_weights.shape:
            raise InvalidTrajectoryError("Sample radii and density weights must be matching vectors")
        if np.any(np.diff(self.sample_radii) < 0):
            raise InvalidTrajectoryError("Sample radii must be non-decreasing along a spoke")
        if self.sample_radii[0] != 0.0 or self.sample_radii[-1] > K_MAX + 1e-12:
            raise InvalidTrajectoryError(f"Sample radii must span [0, {K_MAX}]")
        if np.any(self.density_weights[self.sample_radii > 0] <= 0):
            raise InvalidTrajectoryError("Density weights must be positive at non-zero radii")

    def coordinates(self) -> np.ndarray:
        """
        K-space position of every sample.
        :return: array of shape (n_spokes, readout_length, ndim)
        """
        return self.readout_radii[np.newaxis, :, np.newaxis] * self.spoke_directions[:, np.newaxis, :]

    def sample_weights(self) -> np.ndarray:
        """
        Density compensation weight of every sample.
        :return: array of shape (n_spokes, readout_length)
        """
        return np.broadcast_to(self.readout_weights, (self.n_spokes, self.readout_length)).copy()


def make_radial_trajectory(n_spokes: int, samples_per_spoke: int, dims: Sequence[int],
                           mode: TrajectoryMode=TrajectoryMode.UNIFORM,
                           k0_fraction: float=DEFAULT_K0_FRACTION) -> Trajectory:
    """
    Makes a radial trajectory with analytic density compensation.
    :param n_spokes: number of spokes
    :param samples_per_spoke: number of samples from the centre to the edge of k-space along each spoke
    :param dims: grid size (its dimensionality selects 2D angles or 3D directions)
    :param mode: radius spacing mode
    :param k0_fraction: fraction of the maximum radius sampled with uniform spacing (density-adapted mode)
    :return: the trajectory
    :raises InvalidTrajectoryError: if a parameter is out of range
    """
    dims = as_grid_size(dims)
    try:
        mode = TrajectoryMode(mode)
    except ValueError as e:
        raise InvalidTrajectoryError(f"Unknown trajectory mode: {mode}") from e
    if n_spokes < 1:
        raise InvalidTrajectoryError(f"At least one spoke is required: {n_spokes}")
    if samples_per_spoke < MINIMUM_SAMPLES_PER_SPOKE:
        raise InvalidTrajectoryError(f"At least {MINIMUM_SAMPLES_PER_SPOKE} samples per spoke are required")
    if not 0.0 < k0_fraction <= 0.5:
        raise InvalidTrajectoryError(f"k0 fraction must be in (0, 0.5]: {k0_fraction}")

    ndim = len(dims)
    if ndim == 2:
        angles = np.pi * np.arange(n_spokes) / n_spokes
        directions = np.stack((np.sin(angles), np.cos(angles)), axis=1)
    else:
        angles = None
        directions = _half_sphere_directions(n_spokes)

    if mode == TrajectoryMode.UNIFORM:
        radii, weights = _uniform_radii(samples_per_spoke, ndim, n_spokes)
    else:
        radii, weights = _density_adapted_radii(samples_per_spoke, ndim, n_spokes, k0_fraction * K_MAX)

    return Trajectory(directions, radii, weights, mode, k0_fraction, dims, angles)


def nyquist_spokes(dims: Sequence[int]) -> int:
    """
    Number of spokes needed to meet the Nyquist criterion at the edge of k-space.
    :param dims: grid size
    :return: the number of spokes
    """
    n = max(dims)
    if len(dims) == 2:
        return int(np.ceil(np.pi / 2 * n))
    return int(np.ceil(np.pi / 2 * n ** 2))


def _half_sphere_directions(n_spokes: int) -> np.ndarray:
    index = np.arange(n_spokes)
    z = 1.0 - (index + 0.5) / n_spokes
    rho = np.sqrt(1.0 - z ** 2)
    phi = index * _GOLDEN_ANGLE
    directions = np.stack((z, rho * np.sin(phi), rho * np.cos(phi)), axis=1)
    return directions / np.linalg.norm(directions, axis=1, keepdims=True)


def _shell_surface(ndim: int) -> float:
    return 2 * np.pi if ndim == 2 else 4 * np.pi


def _ball_volume(radius: float, ndim: int) -> float:
    return np.pi * radius ** 2 if ndim == 2 else 4.0 / 3.0 * np.pi * radius ** 3


def _weights(radii: np.ndarray, derivative: np.ndarray, spacing: float, ndim: int,
             n_spokes: int) -> np.ndarray:
    """
    Density weights: the k-space measure each sample stands for, shared between the 2 * n_spokes half-spokes.
    """
    weights = _shell_surface(ndim) * radii ** (ndim - 1) * derivative / (2 * n_spokes)
    weights[0] = _ball_volume(spacing / 2, ndim) / n_spokes
    return weights


def _uniform_radii(samples_per_spoke: int, ndim: int, n_spokes: int) -> Tuple[np.ndarray, np.ndarray]:
    spacing = K_MAX / (samples_per_spoke - 1)
    radii = K_MAX * np.arange(samples_per_spoke) / (samples_per_spoke - 1)
    return radii, _weights(radii, np.full(samples_per_spoke, spacing), spacing, ndim, n_spokes)


def _density_adapted_radii(samples_per_spoke: int, ndim: int, n_spokes: int,
                           k0: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Radii spaced uniformly up to k0, then so that every sample covers the same shell volume.
    """
    d = ndim
    spacing = ((K_MAX ** d - k0 ** d) / (d * k0 ** (d - 1)) + k0) / (samples_per_spoke - 1)
    t = np.arange(samples_per_spoke, dtype=np.float64)
    t0 = k0 / spacing
    inner = t <= t0
    radii = np.empty(samples_per_spoke)
    radii[inner] = t[inner] * spacing
    radii[~inner] = (k0 ** d + d * k0 ** (d - 1) * spacing * (t[~inner] - t0)) ** (1.0 / d)
    radii[-1] = K_MAX

    derivative = np.full(samples_per_spoke, spacing)
    derivative[~inner] = k0 ** (d - 1) * spacing / radii[~inner] ** (d - 1)
    return radii, _weights(radii, derivative, spacing, ndim, n_spokes)
