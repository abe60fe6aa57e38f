from abc import ABCMeta, abstractmethod
from typing import Sequence, Optional, Tuple

import numpy as np
import scipy.sparse
from scipy.special import i0

from naquant.common import NaQuantBaseError, GridSize, DimensionMismatchError, as_grid_size

DEFAULT_KERNEL_WIDTH = 6
DEFAULT_OVERSAMPLING = 2.0
DIRECT_CHUNK_SIZE = 256


class InvalidOperatorError(NaQuantBaseError):
    """
    Raised when an operator cannot be created with the given parameters.
    """


class FourierOperator(metaclass=ABCMeta):
    """
    Non-uniform discrete Fourier transform between an image grid and a set of k-space positions.

    Image voxel `i` sits at position `i - n // 2` along each axis, so a unit impulse at the grid centre transforms to
    a constant.
    """
    @abstractmethod
    def _forward(self, image: np.ndarray) -> np.ndarray:
        """
        Transforms an image (of the operator grid size) to k-space samples.
        """

    @abstractmethod
    def _adjoint(self, values: np.ndarray) -> np.ndarray:
        """
        Applies the adjoint transform to k-space samples.
        """

    @property
    def n_samples(self) -> int:
        return self.coordinates.shape[0]

    def __init__(self, dims: Sequence[int], coordinates: np.ndarray):
        """
        Constructor.
        :param dims: image grid size
        :param coordinates: k-space positions in cycles per voxel, shape (n_samples, ndim) or (..., ndim)
        """
        self.dims: GridSize = as_grid_size(dims)
        coordinates = np.asarray(coordinates, dtype=np.float64)
        if coordinates.shape[-1] != len(self.dims):
            raise DimensionMismatchError(f"Coordinates of dimension {coordinates.shape[-1]} for grid {self.dims}")
        self.coordinates = coordinates.reshape(-1, len(self.dims))

    def forward(self, image: np.ndarray) -> np.ndarray:
        """
        Evaluates `sum_x image(x) exp(-2 pi i k.x)` at every k-space position.
        :param image: image on the operator grid
        :return: vector of samples
        :raises DimensionMismatchError: if the image does not match the grid
        """
        if tuple(image.shape) != self.dims:
            raise DimensionMismatchError(f"Image of shape {image.shape} given to operator for grid {self.dims}")
        return self._forward(np.asarray(image, dtype=np.complex128))

    def adjoint(self, values: np.ndarray) -> np.ndarray:
        """
        Applies the exact adjoint of `forward`.
        :param values: vector of samples
        :return: image on the operator grid
        :raises DimensionMismatchError: if the number of samples does not match
        """
        values = np.asarray(values, dtype=np.complex128).reshape(-1)
        if values.shape[0] != self.n_samples:
            raise DimensionMismatchError(f"Expected {self.n_samples} samples, got {values.shape[0]}")
        return self._adjoint(values)


class DirectFourierOperator(FourierOperator):
    """
    Exact transform by direct summation (for small grids).
    """
    def __init__(self, dims: Sequence[int], coordinates: np.ndarray, chunk_size: int=DIRECT_CHUNK_SIZE):
        super().__init__(dims, coordinates)
        self.chunk_size = chunk_size
        axes = (np.arange(n) - n // 2 for n in self.dims)
        self._positions = np.stack([x.ravel() for x in np.meshgrid(*axes, indexing="ij")], axis=1).astype(np.float64)

    def _forward(self, image: np.ndarray) -> np.ndarray:
        flat = image.ravel()
        values = np.empty(self.n_samples, dtype=np.complex128)
        for start in range(0, self.n_samples, self.chunk_size):
            stop = min(start + self.chunk_size, self.n_samples)
            values[start:stop] = self._kernel(start, stop) @ flat
        return values

    def _adjoint(self, values: np.ndarray) -> np.ndarray:
        flat = np.zeros(self._positions.shape[0], dtype=np.complex128)
        for start in range(0, self.n_samples, self.chunk_size):
            stop = min(start + self.chunk_size, self.n_samples)
            flat += self._kernel(start, stop).conj().T @ values[start:stop]
        return flat.reshape(self.dims)

    def _kernel(self, start: int, stop: int) -> np.ndarray:
        return np.exp(-2j * np.pi * (self.coordinates[start:stop] @ self._positions.T))


class GriddedFourierOperator(FourierOperator):
    """
    Approximate transform by Kaiser-Bessel interpolation from an oversampled Cartesian FFT, with deapodization.
    """
    @property
    def beta(self) -> float:
        return np.pi * np.sqrt((self.kernel_width / self.oversampling) ** 2 * (self.oversampling - 0.5) ** 2 - 0.8)

    def __init__(self, dims: Sequence[int], coordinates: np.ndarray, kernel_width: int=DEFAULT_KERNEL_WIDTH,
                 oversampling: float=DEFAULT_OVERSAMPLING):
        """
        Constructor.
        :param dims: image grid size
        :param coordinates: k-space positions in cycles per voxel
        :param kernel_width: width of the interpolation kernel in oversampled grid cells
        :param oversampling: grid oversampling factor
        :raises InvalidOperatorError: if the kernel parameters are unusable
        """
        super().__init__(dims, coordinates)
        if kernel_width < 2 or oversampling <= 1.0:
            raise InvalidOperatorError(f"Unusable kernel: width {kernel_width}, oversampling {oversampling}")
        if (kernel_width / oversampling) ** 2 * (oversampling - 0.5) ** 2 <= 0.8:
            raise InvalidOperatorError("Kernel too narrow for the requested oversampling")
        self.kernel_width = int(kernel_width)
        self.oversampling = float(oversampling)
        self.grid_dims: GridSize = tuple(2 * int(np.ceil(oversampling * n / 2)) for n in self.dims)
        self._interpolator = self._create_interpolator()
        self._interpolator_adjoint = self._interpolator.conj().T.tocsr()
        self._deapodization = self._create_deapodization()
        self._offsets = tuple(m // 2 - n // 2 for n, m in zip(self.dims, self.grid_dims))

    def _forward(self, image: np.ndarray) -> np.ndarray:
        padded = np.zeros(self.grid_dims, dtype=np.complex128)
        padded[self._crop] = image / self._deapodization
        grid = np.fft.fftshift(np.fft.fftn(np.fft.ifftshift(padded)))
        return self._interpolator @ grid.ravel()

    def _adjoint(self, values: np.ndarray) -> np.ndarray:
        grid = (self._interpolator_adjoint @ values).reshape(self.grid_dims)
        padded = np.fft.fftshift(np.fft.ifftn(np.fft.ifftshift(grid))) * np.prod(self.grid_dims)
        return padded[self._crop] / self._deapodization

    @property
    def _crop(self) -> Tuple[slice, ...]:
        return tuple(slice(offset, offset + n) for offset, n in zip(self._offsets, self.dims))

    def _kernel(self, distance: np.ndarray) -> np.ndarray:
        argument = 1.0 - (2.0 * distance / self.kernel_width) ** 2
        return np.where(argument > 0, i0(self.beta * np.sqrt(np.maximum(argument, 0.0))), 0.0)

    def _create_interpolator(self) -> scipy.sparse.csr_matrix:
        """
        Sparse matrix interpolating the oversampled (centred) Cartesian grid at every k-space position.
        """
        n_samples = self.n_samples
        taps = np.arange(self.kernel_width)
        indices = np.zeros((n_samples, 1), dtype=np.int64)
        weights = np.ones((n_samples, 1))
        for axis, m in enumerate(self.grid_dims):
            position = self.coordinates[:, axis] * m
            cells = np.floor(position - self.kernel_width / 2).astype(np.int64)[:, np.newaxis] + 1 + taps
            axis_weights = self._kernel(position[:, np.newaxis] - cells)
            axis_indices = np.mod(cells + m // 2, m)
            indices = (indices[:, :, np.newaxis] * m + axis_indices[:, np.newaxis, :]).reshape(n_samples, -1)
            weights = (weights[:, :, np.newaxis] * axis_weights[:, np.newaxis, :]).reshape(n_samples, -1)
        rows = np.repeat(np.arange(n_samples), indices.shape[1])
        return scipy.sparse.coo_matrix(
            (weights.ravel(), (rows, indices.ravel())), shape=(n_samples, int(np.prod(self.grid_dims)))).tocsr()

    def _create_deapodization(self) -> np.ndarray:
        """
        Continuous Fourier transform of the kernel at every image position.
        """
        profiles = []
        for n, m in zip(self.dims, self.grid_dims):
            nu = (np.arange(n) - n // 2) / m
            z = np.sqrt((self.beta ** 2 - (np.pi * self.kernel_width * nu) ** 2).astype(np.complex128))
            profiles.append(self.kernel_width * np.real(np.sinh(z) / z))
        deapodization = profiles[0]
        for profile in profiles[1:]:
            deapodization = np.multiply.outer(deapodization, profile)
        return deapodization


class EncodingOperator:
    """
    Multi-coil encoding: coil weighting followed by Fourier sampling, optionally scaled by the square root of the
    density weights.
    """
    @property
    def dims(self) -> GridSize:
        return self.fourier.dims

    @property
    def n_coils(self) -> int:
        return self.sensitivities.shape[0]

    def __init__(self, fourier: FourierOperator, sensitivities: np.ndarray, sample_weights: np.ndarray=None):
        """
        Constructor.
        :param fourier: the Fourier operator
        :param sensitivities: coil sensitivities, shape (n_coils, *dims)
        :param sample_weights: per-sample density weights (applied as square roots), `None` for none
        :raises DimensionMismatchError: if the sensitivities or weights do not match the Fourier operator
        """
        if tuple(sensitivities.shape[1:]) != fourier.dims:
            raise DimensionMismatchError(
                f"Coil sensitivities of shape {sensitivities.shape[1:]} for grid {fourier.dims}")
        self.fourier = fourier
        self.sensitivities = sensitivities
        self._sqrt_weights: Optional[np.ndarray] = None
        if sample_weights is not None:
            sample_weights = np.asarray(sample_weights, dtype=np.float64).reshape(-1)
            if sample_weights.shape[0] != fourier.n_samples:
                raise DimensionMismatchError("Density weights do not match the number of samples")
            self._sqrt_weights = np.sqrt(sample_weights)

    def forward(self, image: np.ndarray) -> np.ndarray:
        """
        :param image: image on the grid
        :return: samples of shape (n_coils, n_samples)
        """
        data = np.stack([self.fourier.forward(coil * image) for coil in self.sensitivities])
        return data * self._sqrt_weights if self._sqrt_weights is not None else data

    def adjoint(self, data: np.ndarray) -> np.ndarray:
        """
        :param data: samples of shape (n_coils, n_samples)
        :return: complex image on the grid
        """
        data = np.asarray(data).reshape(self.n_coils, -1)
        if self._sqrt_weights is not None:
            data = data * self._sqrt_weights
        image = np.zeros(self.dims, dtype=np.complex128)
        for coil, coil_data in zip(self.sensitivities, data):
            image += np.conj(coil) * self.fourier.adjoint(coil_data)
        return image

    def normal(self, image: np.ndarray) -> np.ndarray:
        return self.adjoint(self.forward(image))

    def weight(self, data: np.ndarray) -> np.ndarray:
        """
        Applies the square-root density weights to measured data.
        :param data: samples of shape (n_coils, n_samples)
        :return: the weighted samples
        """
        data = np.asarray(data).reshape(self.n_coils, -1)
        return data * self._sqrt_weights if self._sqrt_weights is not None else data.copy()


def create_fourier_operator(dims: Sequence[int], coordinates: np.ndarray, operator: str="gridded",
                            kernel_width: int=DEFAULT_KERNEL_WIDTH,
                            oversampling: float=DEFAULT_OVERSAMPLING) -> FourierOperator:
    """
    Creates a Fourier operator of the named kind.
    :param dims: image grid size
    :param coordinates: k-space positions in cycles per voxel
    :param operator: `gridded` or `direct`
    :param kernel_width: gridding kernel width
    :param oversampling: gridding oversampling factor
    :return: the operator
    :raises InvalidOperatorError: if the kind is unknown
    """
    if operator == "gridded":
        return GriddedFourierOperator(dims, coordinates, kernel_width, oversampling)
    if operator == "direct":
        return DirectFourierOperator(dims, coordinates)
    raise InvalidOperatorError(f"Unknown operator: {operator}")
