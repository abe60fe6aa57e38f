from typing import NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from naquant._logging import create_logger
from naquant.common import NaQuantBaseError, ImageVolume, DimensionMismatchError, GridSize, as_grid_size, \
    SIGNAL_UNITS
from naquant.operators import create_fourier_operator
from naquant.phantom import RegionMask, TUMOR
from naquant.trajectories import Trajectory

DEFAULT_PSF_UPSAMPLING = 8
PSF_MAIN_LOBE_RADIUS = 2.5
TUMOR_THRESHOLD_FRACTION = 0.5
TUMOR_THRESHOLD_PERCENTILE = 99.0

logger = create_logger(__name__)


class InvalidMetricInputError(NaQuantBaseError):
    """
    Raised when a metric cannot be computed for the given input.
    """


class OutsideFieldOfViewError(NaQuantBaseError):
    """
    Raised when a position lies outside the field of view.
    """


class SsimParams(NamedTuple):
    """
    Structural similarity parameters. The dynamic range defaults to the range of the reference image.
    """
    window: int = 11
    window_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: Optional[float] = None


class SsimResult(NamedTuple):
    mean: float
    map: np.ndarray


class SliceMetrics(NamedTuple):
    ssim_mean: float
    ssim_sd: float
    rmse_mean: float
    rmse_sd: float


class LineProfile(NamedTuple):
    start: Tuple[float, ...]
    end: Tuple[float, ...]
    positions: np.ndarray
    values: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]


class PsfResult(NamedTuple):
    """
    Point spread function of a trajectory, normalised to 1 at the impulse location.
    """
    psf: ImageVolume
    fwhm: Tuple[float, ...]
    peak_at_center: bool
    sidelobe_energy: float


def _values(image: Union[ImageVolume, np.ndarray]) -> np.ndarray:
    return np.asarray(image.values if isinstance(image, ImageVolume) else image, dtype=np.float64)


def _check_pair(reference: np.ndarray, test: np.ndarray):
    if reference.shape != test.shape:
        raise DimensionMismatchError(f"Image dimensions differ: {reference.shape} != {test.shape}")


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    offsets = np.arange(size) - size // 2
    window = np.exp(-offsets ** 2 / (2 * sigma ** 2))
    return window / np.sum(window)


def ssim(reference: Union[ImageVolume, np.ndarray], test: Union[ImageVolume, np.ndarray],
         params: SsimParams=SsimParams()) -> SsimResult:
    """
    Structural similarity with a Gaussian window. The map is defined where the window fits in the image (NaN
    elsewhere) and the score is its mean.
    :param reference: the reference image
    :param test: the image to compare
    :param params: the parameters
    :return: the mean score and the per-voxel map
    :raises DimensionMismatchError: if the images differ in size
    :raises InvalidMetricInputError: if the window does not fit or a parameter is out of range
    """
    x = _values(reference)
    y = _values(test)
    _check_pair(x, y)
    if params.window < 3 or params.window % 2 == 0:
        raise InvalidMetricInputError(f"SSIM window must be odd and at least 3: {params.window}")
    if any(params.window > n for n in x.shape):
        raise InvalidMetricInputError(f"SSIM window {params.window} does not fit in {x.shape}")
    if params.k1 <= 0 or params.k2 <= 0 or params.window_sigma <= 0:
        raise InvalidMetricInputError("SSIM constants must be positive")
    if params.dynamic_range is not None:
        if not params.dynamic_range > 0:
            raise InvalidMetricInputError(f"Dynamic range must be positive: {params.dynamic_range}")
        dynamic_range = float(params.dynamic_range)
    else:
        dynamic_range = float(x.max() - x.min())
        if dynamic_range == 0:
            dynamic_range = 1.0
    c1 = (params.k1 * dynamic_range) ** 2
    c2 = (params.k2 * dynamic_range) ** 2

    window = _gaussian_window(params.window, params.window_sigma)

    def smooth(values: np.ndarray) -> np.ndarray:
        for axis in range(values.ndim):
            values = ndimage.correlate1d(values, window, axis=axis, mode="reflect")
        return values

    mu_x = smooth(x)
    mu_y = smooth(y)
    sigma_xx = smooth(x * x) - mu_x * mu_x
    sigma_yy = smooth(y * y) - mu_y * mu_y
    sigma_xy = smooth(x * y) - mu_x * mu_y
    values = ((2 * mu_x * mu_y + c1) * (2 * sigma_xy + c2)) \
        / ((mu_x * mu_x + mu_y * mu_y + c1) * (sigma_xx + sigma_yy + c2))

    half = params.window // 2
    interior = tuple(slice(half, n - half) for n in x.shape)
    ssim_map = np.full(x.shape, np.nan)
    ssim_map[interior] = values[interior]
    return SsimResult(float(np.mean(values[interior])), ssim_map)


def rmse(reference: Union[ImageVolume, np.ndarray], test: Union[ImageVolume, np.ndarray]) -> float:
    x = _values(reference)
    y = _values(test)
    _check_pair(x, y)
    return float(np.sqrt(np.mean((x - y) ** 2)))


def _slices(values: np.ndarray):
    if values.ndim == 2:
        return [values]
    return [values[i] for i in range(values.shape[0])]


def focus_measure(image: Union[ImageVolume, np.ndarray]) -> float:
    """
    Variation of the Laplacian: variance of the 3x3 Laplacian over the interior of every in-plane slice (along
    the first axis for 3D), averaged over slices.
    :param image: the image
    :return: the focus measure
    :raises InvalidMetricInputError: if an in-plane axis has fewer than 3 voxels
    """
    values = _values(image)
    if values.ndim not in (2, 3) or any(n < 3 for n in values.shape[-2:]):
        raise InvalidMetricInputError(f"Focus measure needs at least 3x3 slices: {values.shape}")
    return float(np.mean([np.var(ndimage.laplace(plane)[1:-1, 1:-1]) for plane in _slices(values)]))


def _voxels(mask: Union[RegionMask, np.ndarray]) -> np.ndarray:
    return np.asarray(mask.voxels if isinstance(mask, RegionMask) else mask, dtype=bool)


def dice(first: Union[RegionMask, np.ndarray], second: Union[RegionMask, np.ndarray]) -> float:
    """
    Dice overlap of two masks (1 if both are empty).
    """
    a = _voxels(first)
    b = _voxels(second)
    _check_pair(a, b)
    total = int(np.count_nonzero(a)) + int(np.count_nonzero(b))
    if total == 0:
        return 1.0
    return 2.0 * int(np.count_nonzero(a & b)) / total


def line_profile(image: ImageVolume, start: Sequence[float], end: Sequence[float], n_samples: int) -> LineProfile:
    """
    Samples an image by linear interpolation at equidistant points on a line. Positions are in mm from the corner of
    the field of view, in array-axis order.
    :param image: the image
    :param start: first point
    :param end: last point
    :param n_samples: number of points (at least 2)
    :return: the profile
    :raises OutsideFieldOfViewError: if an endpoint is outside the field of view
    """
    if n_samples < 2:
        raise InvalidMetricInputError(f"A profile needs at least 2 samples: {n_samples}")
    start = tuple(float(x) for x in start)
    end = tuple(float(x) for x in end)
    if len(start) != image.ndim or len(end) != image.ndim:
        raise DimensionMismatchError(f"Endpoints must have {image.ndim} coordinates")
    for point in (start, end):
        if any(not 0.0 <= p <= fov for p, fov in zip(point, image.field_of_view)):
            raise OutsideFieldOfViewError(f"Point {point} mm is outside the field of view {image.field_of_view}")

    steps = np.arange(n_samples)
    intervals = n_samples - 1
    positions = np.stack([(a * (intervals - steps) + b * steps) / intervals for a, b in zip(start, end)], axis=1)
    indices = positions / np.asarray(image.voxel_size) - 0.5
    values = ndimage.map_coordinates(_values(image), indices.T, order=1, mode="nearest")
    return LineProfile(start, end, positions, values)


def _half_maximum_width(profile: np.ndarray, spacing: float) -> float:
    below = np.nonzero(profile <= 0.5)[0]
    if below.size == 0:
        return float("inf")
    i = int(below[0])
    if i == 0:
        return 0.0
    fraction = (profile[i - 1] - 0.5) / (profile[i - 1] - profile[i])
    return 2.0 * spacing * (i - 1 + fraction)


def psf_fwhm(trajectory: Trajectory, dims: Sequence[int]=None, upsampling: int=DEFAULT_PSF_UPSAMPLING,
             operator: str="gridded") -> PsfResult:
    """
    Point spread function of a trajectory: the density-weighted adjoint of a centred unit impulse. The FWHM along
    each axis is read from the PSF profile through the peak evaluated on a grid `upsampling` times finer than the
    voxels, with linear interpolation of the half-maximum crossing.
    :param trajectory: the trajectory
    :param dims: grid size (the trajectory's grid if `None`)
    :param upsampling: profile points per voxel
    :param operator: Fourier operator kind for the gridded PSF
    :return: the PSF and its measures
    """
    dims: GridSize = as_grid_size(dims) if dims is not None else trajectory.dims
    if upsampling < 1:
        raise InvalidMetricInputError(f"Upsampling must be at least 1: {upsampling}")
    coordinates = trajectory.coordinates().reshape(-1, trajectory.ndim)
    weights = trajectory.sample_weights().ravel()

    fourier = create_fourier_operator(dims, coordinates, operator)
    center = tuple(n // 2 for n in dims)
    psf = np.real(fourier.adjoint(weights))
    psf = psf / psf[center]
    peak_at_center = bool(np.unravel_index(np.argmax(np.abs(psf)), dims) == center)
    if not peak_at_center:
        logger.warning(f"PSF peak is not at the centre of {dims}")

    distance_squared = sum((x - c) ** 2 for x, c in zip(np.meshgrid(*(np.arange(n) for n in dims), indexing="ij"),
                                                        center))
    energy = psf ** 2
    sidelobe_energy = float(np.sum(energy[distance_squared > PSF_MAIN_LOBE_RADIUS ** 2]) / np.sum(energy))

    spacing = 1.0 / upsampling
    fwhm = []
    for axis, n in enumerate(dims):
        positions = np.arange(0, (n // 2) * upsampling + 1) * spacing
        profile = np.cos(2 * np.pi * np.outer(positions, coordinates[:, axis])) @ weights
        fwhm.append(_half_maximum_width(profile / profile[0], spacing))
    return PsfResult(ImageVolume(psf, (1.0, ) * len(dims), SIGNAL_UNITS), tuple(fwhm), peak_at_center,
                     sidelobe_energy)


def threshold_tumor_mask(image: Union[ImageVolume, np.ndarray], truth: Union[RegionMask, np.ndarray],
                         dilation: int) -> RegionMask:
    """
    Segments the tumor in an image: voxels inside the dilated bounding box of the true tumor that reach half the
    99th-percentile intensity in that box.
    :param image: the image
    :param truth: the true tumor mask on the image grid
    :param dilation: bounding box margin in voxels
    :return: the segmented mask
    """
    values = _values(image)
    voxels = _voxels(truth)
    _check_pair(values, voxels)
    if not np.any(voxels):
        raise InvalidMetricInputError("True tumor mask is empty")
    indices = np.nonzero(voxels)
    box = tuple(slice(max(int(i.min()) - dilation, 0), min(int(i.max()) + dilation + 1, n))
                for i, n in zip(indices, values.shape))
    threshold = TUMOR_THRESHOLD_FRACTION * np.percentile(values[box], TUMOR_THRESHOLD_PERCENTILE)
    mask = np.zeros(values.shape, dtype=bool)
    mask[box] = values[box] >= threshold
    return RegionMask(mask, TUMOR)


def slice_metrics(reference: Union[ImageVolume, np.ndarray], test: Union[ImageVolume, np.ndarray],
                  params: SsimParams=SsimParams()) -> SliceMetrics:
    """
    SSIM and RMSE per in-plane slice (one slice for 2D images), summarised as mean and population SD. The SSIM
    dynamic range is taken from the whole reference unless set.
    """
    x = _values(reference)
    y = _values(test)
    _check_pair(x, y)
    if params.dynamic_range is None:
        dynamic_range = float(x.max() - x.min())
        params = params._replace(dynamic_range=dynamic_range if dynamic_range > 0 else 1.0)
    ssims = [ssim(a, b, params).mean for a, b in zip(_slices(x), _slices(y))]
    rmses = [rmse(a, b) for a, b in zip(_slices(x), _slices(y))]
    return SliceMetrics(float(np.mean(ssims)), float(np.std(ssims)), float(np.mean(rmses)), float(np.std(rmses)))
