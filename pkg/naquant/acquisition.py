from typing import NamedTuple, Sequence, List, Tuple

import numpy as np

from naquant._logging import create_logger
from naquant.common import NaQuantBaseError, ImageVolume, GridSize, DimensionMismatchError, as_grid_size, \
    SIGNAL_UNITS
from naquant.operators import create_fourier_operator, FourierOperator, DEFAULT_KERNEL_WIDTH, DEFAULT_OVERSAMPLING
from naquant.trajectories import Trajectory

COIL_LOBE_WIDTH = 0.4
COIL_RING_RADIUS = 0.5

logger = create_logger(__name__)


class InvalidAcquisitionError(NaQuantBaseError):
    """
    Raised when acquisition parameters are invalid.
    """


class CoilSensitivities(NamedTuple):
    """
    Complex receive sensitivity of every coil, shape (n_coils, *dims).
    """
    maps: np.ndarray

    @property
    def n_coils(self) -> int:
        return self.maps.shape[0]

    @property
    def dims(self) -> GridSize:
        return tuple(self.maps.shape[1:])


class KSpaceData(NamedTuple):
    """
    Multi-coil samples along a trajectory, shape (n_coils, n_spokes, readout_length).
    """
    samples: np.ndarray
    trajectory: Trajectory
    noise_sigma: float = 0.0
    seed: int = 0

    @property
    def n_coils(self) -> int:
        return self.samples.shape[0]


def check_kspace_data(data: KSpaceData):
    """
    Checks that the samples are consistent with the trajectory.
    :param data: the data to check
    :raises DimensionMismatchError: if the shapes are inconsistent
    """
    trajectory = data.trajectory
    expected = (trajectory.n_spokes, trajectory.readout_length)
    if data.samples.ndim != 3 or tuple(data.samples.shape[1:]) != expected:
        raise DimensionMismatchError(f"Samples of shape {data.samples.shape} do not match trajectory {expected}")


def make_coils(dims: Sequence[int], n_coils: int, seed: int=0) -> CoilSensitivities:
    """
    Makes smooth synthetic coil sensitivities: Gaussian lobes centred around the edge of the field of view with
    linear phase ramps.
    :param dims: grid size
    :param n_coils: number of coils
    :param seed: seed of the coil placement and phases
    :return: the sensitivities
    :raises InvalidAcquisitionError: if fewer than one coil is requested
    """
    dims = as_grid_size(dims)
    if n_coils < 1:
        raise InvalidAcquisitionError(f"At least one coil is required: {n_coils}")
    if n_coils == 1:
        return CoilSensitivities(np.ones((1, *dims), dtype=np.complex128))

    ndim = len(dims)
    rng = np.random.default_rng(seed)
    coordinates = np.meshgrid(*((np.arange(n) + 0.5) / n - 0.5 for n in dims), indexing="ij")

    index = np.arange(n_coils)
    if ndim == 2:
        angles = 2 * np.pi * index / n_coils + rng.uniform(-0.25, 0.25, size=n_coils) * 2 * np.pi / n_coils
        centers = COIL_RING_RADIUS * np.stack((np.sin(angles), np.cos(angles)), axis=1)
    else:
        z = 1.0 - (2 * index + 1) / n_coils
        rho = np.sqrt(1.0 - z ** 2)
        phi = index * np.pi * (3.0 - np.sqrt(5.0)) + rng.uniform(-0.25, 0.25, size=n_coils)
        centers = COIL_RING_RADIUS * np.stack((z, rho * np.sin(phi), rho * np.cos(phi)), axis=1)
    phase_offsets = rng.uniform(0.0, 2 * np.pi, size=n_coils)
    slopes = rng.uniform(-0.5, 0.5, size=(n_coils, ndim))

    maps = np.empty((n_coils, *dims), dtype=np.complex128)
    for coil in range(n_coils):
        distance_squared = sum((x - c) ** 2 for x, c in zip(coordinates, centers[coil]))
        magnitude = np.exp(-distance_squared / (2 * COIL_LOBE_WIDTH ** 2))
        phase = phase_offsets[coil] + 2 * np.pi * sum(s * x for s, x in zip(slopes[coil], coordinates))
        maps[coil] = magnitude * np.exp(1j * phase)
    return CoilSensitivities(maps)


def trajectory_operator(trajectory: Trajectory, operator: str="gridded", kernel_width: int=DEFAULT_KERNEL_WIDTH,
                        oversampling: float=DEFAULT_OVERSAMPLING) -> FourierOperator:
    """
    Creates the Fourier operator sampling the given trajectory.
    """
    return create_fourier_operator(trajectory.dims, trajectory.coordinates(), operator, kernel_width, oversampling)


def forward_model(image: ImageVolume, trajectory: Trajectory, coils: CoilSensitivities, operator: str="gridded",
                  fourier: FourierOperator=None) -> KSpaceData:
    """
    Simulates noiseless multi-coil acquisition of an image.
    :param image: the image
    :param trajectory: the k-space trajectory
    :param coils: the coil sensitivities
    :param operator: Fourier operator kind (`gridded` or `direct`), ignored when `fourier` is given
    :param fourier: pre-built Fourier operator for the trajectory
    :return: the simulated data
    :raises DimensionMismatchError: if the image, coils and trajectory grids differ
    """
    if image.dims != coils.dims or image.dims != trajectory.dims:
        raise DimensionMismatchError(
            f"Image {image.dims}, coils {coils.dims} and trajectory {trajectory.dims} grids differ")
    if not np.all(np.isfinite(image.values)):
        raise InvalidAcquisitionError("Image values must be finite")
    fourier = fourier if fourier is not None else trajectory_operator(trajectory, operator)
    samples = np.stack([fourier.forward(coil * image.values) for coil in coils.maps])
    return KSpaceData(samples.reshape(coils.n_coils, trajectory.n_spokes, trajectory.readout_length), trajectory)


def adjoint_model(data: KSpaceData, coils: CoilSensitivities, apply_density_weights: bool=True,
                  operator: str="gridded", fourier: FourierOperator=None, voxel_size: Sequence[float]=None) \
        -> List[ImageVolume]:
    """
    Regrids every coil's data back to the image grid.

    Without density weights, `sensitivity_combine` of the result is the exact adjoint of `forward_model`.
    :param data: the k-space data
    :param coils: the coil sensitivities (their count must match the data)
    :param apply_density_weights: whether to apply density compensation before regridding
    :param operator: Fourier operator kind, ignored when `fourier` is given
    :param fourier: pre-built Fourier operator for the trajectory
    :param voxel_size: voxel size recorded on the images (1 mm if `None`)
    :return: one complex image per coil
    :raises DimensionMismatchError: if the data is inconsistent with the trajectory or coils
    """
    check_kspace_data(data)
    trajectory = data.trajectory
    if data.n_coils != coils.n_coils or coils.dims != trajectory.dims:
        raise DimensionMismatchError(f"Data for {data.n_coils} coils on {trajectory.dims}, coils "
                                     f"{coils.n_coils} on {coils.dims}")
    fourier = fourier if fourier is not None else trajectory_operator(trajectory, operator)
    weights = trajectory.sample_weights().ravel() if apply_density_weights else None
    voxel_size = tuple(voxel_size) if voxel_size is not None else (1.0, ) * trajectory.ndim

    images = []
    for coil_samples in data.samples:
        values = coil_samples.ravel()
        if weights is not None:
            values = values * weights
        images.append(ImageVolume(fourier.adjoint(values), voxel_size, SIGNAL_UNITS))
    return images


def add_noise(data: KSpaceData, sigma: float, seed: int) -> KSpaceData:
    """
    Adds circularly symmetric complex Gaussian noise (standard deviation `sigma` per real component).
    :param data: noiseless data
    :param sigma: noise level
    :param seed: seed of the noise
    :return: the noisy data, recording the noise level and seed
    :raises InvalidAcquisitionError: if sigma is negative
    """
    if sigma < 0:
        raise InvalidAcquisitionError(f"Noise level must be non-negative: {sigma}")
    if sigma == 0:
        return KSpaceData(data.samples, data.trajectory, 0.0, seed)
    return KSpaceData(data.samples + acquire_noise_scan(data.samples.shape, sigma, seed), data.trajectory,
                      float(sigma), seed)


def acquire_noise_scan(shape: Tuple[int, ...], sigma: float, seed: int) -> np.ndarray:
    """
    Simulates a noise-only scan.
    :param shape: shape of the scan
    :param sigma: noise level per real component
    :param seed: seed of the noise
    :return: complex noise samples
    """
    rng = np.random.default_rng(seed)
    real = rng.standard_normal(shape)
    imaginary = rng.standard_normal(shape)
    return sigma * (real + 1j * imaginary)


def estimate_noise_sigma(samples: np.ndarray) -> float:
    """
    Estimates the noise level per real component from noise-only samples.
    """
    samples = np.asarray(samples)
    return float(np.sqrt(np.mean(samples.real ** 2 + samples.imag ** 2) / 2))


def expected_noise_energy(trajectory: Trajectory, n_coils: int, sigma: float) -> float:
    """
    Expected squared norm of density-weighted noise.
    :param trajectory: the trajectory
    :param n_coils: number of coils
    :param sigma: noise level per real component
    :return: the expected energy
    """
    return float(n_coils * trajectory.n_spokes * np.sum(trajectory.readout_weights) * 2 * sigma ** 2)
