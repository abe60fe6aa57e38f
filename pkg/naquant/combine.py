from typing import Sequence

import numpy as np
from scipy import ndimage

from naquant._logging import create_logger
from naquant.acquisition import CoilSensitivities
from naquant.common import NaQuantBaseError, ImageVolume, DimensionMismatchError, SIGNAL_UNITS

EIGEN_CHUNK_SIZE = 4096

logger = create_logger(__name__)


class InvalidWindowError(NaQuantBaseError):
    """
    Raised when a combination window does not fit the image.
    """


def _stack(per_coil_images: Sequence[ImageVolume]) -> np.ndarray:
    if len(per_coil_images) == 0:
        raise DimensionMismatchError("At least one coil image is required")
    dims = per_coil_images[0].dims
    for image in per_coil_images[1:]:
        if image.dims != dims:
            raise DimensionMismatchError(f"Coil images have different dimensions: {image.dims} != {dims}")
    return np.stack([np.asarray(image.values, dtype=np.complex128) for image in per_coil_images])


def adaptive_combine(per_coil_images: Sequence[ImageVolume], window_size: int) -> ImageVolume:
    """
    Combines coil images with the locally optimal weights: the dominant eigenvector of the coil covariance smoothed
    over a window around every voxel.

    Weights are unit vectors, so a single coil passes through as its magnitude and N identical coils are scaled by
    sqrt(N).
    :param per_coil_images: complex image of every coil
    :param window_size: odd window size in voxels
    :return: the combined magnitude image
    :raises InvalidWindowError: if the window is even or larger than the image
    """
    coils = _stack(per_coil_images)
    dims = coils.shape[1:]
    if window_size < 1 or window_size % 2 == 0:
        raise InvalidWindowError(f"Window size must be a positive odd number: {window_size}")
    if any(window_size > n for n in dims):
        raise InvalidWindowError(f"Window {window_size} is larger than the image {dims}")

    n_coils = coils.shape[0]
    covariance = np.empty((n_coils, n_coils, *dims), dtype=np.complex128)
    for p in range(n_coils):
        for q in range(p, n_coils):
            product = coils[p] * np.conj(coils[q])
            smoothed = ndimage.uniform_filter(product.real, size=window_size) \
                + 1j * ndimage.uniform_filter(product.imag, size=window_size)
            covariance[p, q] = smoothed
            covariance[q, p] = np.conj(smoothed)

    n_voxels = int(np.prod(dims))
    matrices = np.moveaxis(covariance.reshape(n_coils, n_coils, n_voxels), 2, 0)
    signals = coils.reshape(n_coils, n_voxels).T
    combined = np.empty(n_voxels)
    for start in range(0, n_voxels, EIGEN_CHUNK_SIZE):
        stop = min(start + EIGEN_CHUNK_SIZE, n_voxels)
        _, vectors = np.linalg.eigh(matrices[start:stop])
        dominant = vectors[:, :, -1]
        combined[start:stop] = np.abs(np.sum(np.conj(dominant) * signals[start:stop], axis=1))

    return ImageVolume(combined.reshape(dims), per_coil_images[0].voxel_size, SIGNAL_UNITS)


def root_sum_of_squares(per_coil_images: Sequence[ImageVolume]) -> ImageVolume:
    """
    Root-sum-of-squares combination of coil images.
    """
    coils = _stack(per_coil_images)
    return ImageVolume(np.sqrt(np.sum(np.abs(coils) ** 2, axis=0)), per_coil_images[0].voxel_size, SIGNAL_UNITS)


def sensitivity_combine(per_coil_images: Sequence[ImageVolume], coils: CoilSensitivities) -> ImageVolume:
    """
    Combines coil images with the conjugate of known sensitivities.
    :param per_coil_images: complex image of every coil
    :param coils: the sensitivities
    :return: the complex combined image
    :raises DimensionMismatchError: if the coil count or grids differ
    """
    images = _stack(per_coil_images)
    if images.shape != coils.maps.shape:
        raise DimensionMismatchError(f"Coil images {images.shape} do not match sensitivities {coils.maps.shape}")
    return ImageVolume(np.sum(np.conj(coils.maps) * images, axis=0), per_coil_images[0].voxel_size, SIGNAL_UNITS)
