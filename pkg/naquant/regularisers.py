from abc import ABCMeta, abstractmethod
from typing import NamedTuple, Optional, Tuple

import numpy as np

from naquant._logging import create_logger
from naquant.common import NaQuantBaseError, ImageVolume, DimensionMismatchError
from naquant.phantom import PriorImage

DEFAULT_ETA_FRACTION = 0.01
DEFAULT_GAMMA = 0.95
THRESHOLD_PERCENTILE = 99.0
MINIMUM_THRESHOLD = 1e-3

logger = create_logger(__name__)


class InvalidReconConfigError(NaQuantBaseError):
    """
    Raised when reconstruction parameters are invalid.
    """


class EdgeWeightMap(NamedTuple):
    """
    Per-voxel weights in (0, 1] that lower the regularisation at prior edges.
    """
    weights: np.ndarray
    eta: float


class DirectionField(NamedTuple):
    """
    Per-voxel edge directions (unit-or-shorter vectors, axis first) of a prior and the directional strength.
    """
    xi: np.ndarray
    gamma: float
    eta: float


class ThresholdMaps(NamedTuple):
    """
    Per-axis maps in [omega, 1] made from the inverted, normalised prior derivatives.
    """
    maps: np.ndarray
    omega: float


def gradient(values: np.ndarray) -> np.ndarray:
    """
    Forward differences along every axis, zero at the far boundary (Neumann).
    :param values: the image
    :return: array of shape (ndim, *values.shape)
    """
    result = np.zeros((values.ndim, *values.shape), dtype=values.dtype)
    for axis in range(values.ndim):
        target = [slice(None)] * values.ndim
        target[axis] = slice(0, -1)
        result[axis][tuple(target)] = np.diff(values, axis=axis)
    return result


def divergence(field: np.ndarray) -> np.ndarray:
    """
    Negative adjoint of `gradient`.
    :param field: array of shape (ndim, *dims)
    :return: array of shape dims
    """
    ndim = field.shape[0]
    result = np.zeros(field.shape[1:], dtype=field.dtype)
    for axis in range(ndim):
        component = field[axis]
        n = component.shape[axis]
        head = [slice(None)] * ndim
        head[axis] = slice(0, n - 1)
        shifted = np.zeros_like(component)
        tail = [slice(None)] * ndim
        tail[axis] = slice(1, n)
        shifted[tuple(tail)] = component[tuple(head)]
        masked = np.zeros_like(component)
        masked[tuple(head)] = component[tuple(head)]
        result += masked - shifted
    return result


class Regulariser(metaclass=ABCMeta):
    """
    Regulariser of the form J(u) = sum over voxels of |M grad u|, where M is a per-voxel linear map with norm at
    most one.
    """
    @abstractmethod
    def apply(self, gradients: np.ndarray) -> np.ndarray:
        """
        Applies M to image gradients.
        :param gradients: array of shape (ndim, *dims)
        :return: the mapped gradients
        """

    @abstractmethod
    def apply_adjoint(self, field: np.ndarray) -> np.ndarray:
        """
        Applies the adjoint of M.
        """

    def value(self, values: np.ndarray) -> float:
        """
        Evaluates J at the given image.
        """
        mapped = self.apply(gradient(values))
        return float(np.sum(np.sqrt(np.sum(mapped ** 2, axis=0))))

    def forward(self, values: np.ndarray) -> np.ndarray:
        return self.apply(gradient(values))

    def transpose(self, field: np.ndarray) -> np.ndarray:
        return -divergence(self.apply_adjoint(field))


class TotalVariation(Regulariser):
    """
    Plain isotropic total variation.
    """
    def apply(self, gradients: np.ndarray) -> np.ndarray:
        return gradients

    def apply_adjoint(self, field: np.ndarray) -> np.ndarray:
        return field


class WeightedTotalVariation(Regulariser):
    """
    Total variation weighted per voxel by an edge weight map.
    """
    def __init__(self, weights: EdgeWeightMap):
        self.weights = weights

    def apply(self, gradients: np.ndarray) -> np.ndarray:
        return self.weights.weights * gradients

    def apply_adjoint(self, field: np.ndarray) -> np.ndarray:
        return self.weights.weights * field


class DirectionalTotalVariation(Regulariser):
    """
    Total variation of the gradient components not aligned with the prior's edge directions.
    """
    def __init__(self, field: DirectionField):
        self.field = field

    def apply(self, gradients: np.ndarray) -> np.ndarray:
        xi = self.field.xi
        projection = np.sum(xi * gradients, axis=0)
        return gradients - self.field.gamma ** 2 * xi * projection

    def apply_adjoint(self, field: np.ndarray) -> np.ndarray:
        # The projection is symmetric
        return self.apply(field)


class AxisWeightedTotalVariation(Regulariser):
    """
    Total variation with a separate threshold map per gradient axis.
    """
    def __init__(self, thresholds: ThresholdMaps):
        self.thresholds = thresholds

    def apply(self, gradients: np.ndarray) -> np.ndarray:
        return self.thresholds.maps * gradients

    def apply_adjoint(self, field: np.ndarray) -> np.ndarray:
        return self.thresholds.maps * field


def default_eta(prior: PriorImage) -> float:
    """
    Default prior edge scale: a fraction of the largest prior gradient magnitude (1 for a constant prior).
    """
    magnitude = np.sqrt(np.sum(gradient(np.asarray(prior.values, dtype=np.float64)) ** 2, axis=0))
    eta = DEFAULT_ETA_FRACTION * float(magnitude.max())
    return eta if eta > 0 else 1.0


def compute_wtv_weights(prior: PriorImage, eta: Optional[float]=None) -> EdgeWeightMap:
    """
    Computes the weighted-TV edge weights `eta / sqrt(|grad v|^2 + eta^2)` of a prior.
    :param prior: the prior, already on the reconstruction grid
    :param eta: prior edge scale (default from `default_eta`)
    :return: the weights
    :raises InvalidReconConfigError: if eta is not positive
    """
    eta = _check_eta(prior, eta)
    gradients = gradient(np.asarray(prior.values, dtype=np.float64))
    weights = eta / np.sqrt(np.sum(gradients ** 2, axis=0) + eta ** 2)
    return EdgeWeightMap(weights, eta)


def compute_dtv_field(prior: PriorImage, eta: Optional[float]=None, gamma: float=DEFAULT_GAMMA) -> DirectionField:
    """
    Computes the directional-TV edge direction field `grad v / sqrt(|grad v|^2 + eta^2)` of a prior.
    :param prior: the prior, already on the reconstruction grid
    :param eta: prior edge scale (default from `default_eta`)
    :param gamma: directional strength in [0, 1]
    :return: the direction field
    :raises InvalidReconConfigError: if eta is not positive or gamma is out of range
    """
    eta = _check_eta(prior, eta)
    if not 0.0 <= gamma <= 1.0:
        raise InvalidReconConfigError(f"gamma must be in [0, 1]: {gamma}")
    gradients = gradient(np.asarray(prior.values, dtype=np.float64))
    xi = gradients / np.sqrt(np.sum(gradients ** 2, axis=0) + eta ** 2)
    return DirectionField(xi, float(gamma), eta)


def compute_threshold_maps(prior: PriorImage, omega: float) -> ThresholdMaps:
    """
    Computes per-axis threshold maps: the absolute prior derivative along each axis, normalised by its 99th
    percentile over the voxels where it is non-zero, clipped to [0, 1], inverted and floored at omega.
    :param prior: the prior, already on the reconstruction grid
    :param omega: floor in [0, 1]
    :return: the maps
    :raises InvalidReconConfigError: if omega is out of range
    """
    if not 0.0 <= omega <= 1.0:
        raise InvalidReconConfigError(f"omega must be in [0, 1]: {omega}")
    derivatives = np.abs(gradient(np.asarray(prior.values, dtype=np.float64)))
    maps = np.ones_like(derivatives)
    for axis, derivative in enumerate(derivatives):
        nonzero = derivative[derivative > 0]
        if nonzero.size == 0:
            continue
        scale = np.percentile(nonzero, THRESHOLD_PERCENTILE)
        maps[axis] = 1.0 - np.clip(derivative / scale, 0.0, 1.0)
    maps = np.maximum(np.maximum(maps, omega), MINIMUM_THRESHOLD)
    return ThresholdMaps(maps, float(omega))


def fgp_prox(values: np.ndarray, alpha: float, regulariser: Regulariser, inner_iters: int,
             nonnegative: bool=False, dual: np.ndarray=None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Approximates the proximal map of `alpha * J` (optionally restricted to non-negative images) with fast gradient
    projection on the dual problem.
    :param values: the image to denoise
    :param alpha: regularisation weight
    :param regulariser: J
    :param inner_iters: number of dual iterations
    :param nonnegative: whether to restrict the solution to non-negative values
    :param dual: warm-start dual variable of shape (ndim, *dims)
    :return: tuple of the denoised image and the final dual variable
    :raises InvalidReconConfigError: if alpha is negative or no iterations are requested
    """
    if alpha < 0:
        raise InvalidReconConfigError(f"alpha must be non-negative: {alpha}")
    if inner_iters < 1:
        raise InvalidReconConfigError(f"At least one inner iteration is required: {inner_iters}")
    values = np.asarray(values, dtype=np.float64)
    shape = (values.ndim, *values.shape)
    if dual is not None and dual.shape != shape:
        raise DimensionMismatchError(f"Dual variable of shape {dual.shape} for image of shape {values.shape}")
    if alpha == 0:
        return (np.maximum(values, 0.0) if nonnegative else values.copy()), \
            (dual.copy() if dual is not None else np.zeros(shape))

    def project_image(x: np.ndarray) -> np.ndarray:
        return np.maximum(x, 0.0) if nonnegative else x

    step = 1.0 / (4.0 * values.ndim * alpha)
    previous = dual.copy() if dual is not None else np.zeros(shape)
    extrapolated = previous.copy()
    t = 1.0
    for _ in range(inner_iters):
        image = project_image(values - alpha * regulariser.transpose(extrapolated))
        current = _project_ball(extrapolated + step * regulariser.forward(image))
        t_next = (1.0 + np.sqrt(1.0 + 4.0 * t ** 2)) / 2.0
        extrapolated = current + (t - 1.0) / t_next * (current - previous)
        previous = current
        t = t_next
    return project_image(values - alpha * regulariser.transpose(previous)), previous


def tv_prox(image: ImageVolume, alpha: float, regulariser: Regulariser, inner_iters: int,
            nonnegative: bool=False) -> ImageVolume:
    """
    Proximal map of `alpha * J` applied to an image volume.
    :param image: the image
    :param alpha: regularisation weight
    :param regulariser: J (plain, weighted or directional total variation)
    :param inner_iters: number of dual iterations
    :param nonnegative: whether to restrict the solution to non-negative values
    :return: the denoised volume
    """
    values, _ = fgp_prox(image.values, alpha, regulariser, inner_iters, nonnegative)
    return image.with_values(values)


def _project_ball(field: np.ndarray) -> np.ndarray:
    magnitude = np.sqrt(np.sum(field ** 2, axis=0))
    return field / np.maximum(1.0, magnitude)


def _check_eta(prior: PriorImage, eta: Optional[float]) -> float:
    if eta is None:
        return default_eta(prior)
    if not eta > 0:
        raise InvalidReconConfigError(f"eta must be positive: {eta}")
    return float(eta)
