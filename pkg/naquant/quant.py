from typing import NamedTuple, Sequence, Tuple, Union

import numpy as np
from scipy.special import betainc
from scipy.stats import t as student_t

from naquant._logging import create_logger
from naquant.common import NaQuantBaseError, ImageVolume, DimensionMismatchError
from naquant.phantom import RegionMask, TISSUE_WATER_FRACTION

CONFIDENCE_LEVEL = 0.95

_TINY = np.finfo(np.float64).tiny

logger = create_logger(__name__)


class DegenerateFitError(NaQuantBaseError):
    """
    Raised when calibration points do not define an increasing line.
    """


class EmptyRegionError(NaQuantBaseError):
    """
    Raised when statistics are requested over a region with no voxels.
    """


class UndefinedCorrelationError(NaQuantBaseError):
    """
    Raised when a correlation is undefined because a variable has no variance.
    """


class InsufficientSamplesError(NaQuantBaseError):
    """
    Raised when there are too few finite samples for a statistic.
    """


class InvalidWaterFractionError(NaQuantBaseError):
    """
    Raised when a water fraction is not in (0, 1].
    """


class ZeroReferenceError(NaQuantBaseError):
    """
    Raised when a relative difference is taken against zero.
    """


class CalibrationCurve(NamedTuple):
    """
    Line `signal = slope * concentration + intercept` through two reference vials.
    """
    slope: float
    intercept: float
    vial_concentrations: Tuple[float, float]
    vial_means: Tuple[float, float]

    def concentration(self, signal: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        """
        Maps signal to apparent concentration.
        """
        return (signal - self.intercept) / self.slope


class TscResult(NamedTuple):
    region_name: str
    mean: float
    sd: float
    n_voxels: int
    water_corrected: bool


class RegionStats(NamedTuple):
    mean: float
    sd: float
    min: float
    max: float
    n_voxels: int


class PairedTestResult(NamedTuple):
    mean_diff: float
    sd_diff: float
    n: int
    ci95: Tuple[float, float]
    t_stat: float
    p_two_sided: float
    degenerate: bool = False


class CorrelationResult(NamedTuple):
    r: float
    p_two_sided: float
    n: int


def fit_calibration(vial_means: Sequence[float], vial_concentrations: Sequence[float]) -> CalibrationCurve:
    """
    Fits the exact line through two (concentration, signal) calibration points.
    :param vial_means: mean signal of each vial
    :param vial_concentrations: prepared concentration of each vial
    :return: the calibration curve
    :raises DegenerateFitError: if the points do not define an increasing line
    """
    if len(vial_means) != 2 or len(vial_concentrations) != 2:
        raise DegenerateFitError("Exactly two calibration points are required")
    means = tuple(float(x) for x in vial_means)
    concentrations = tuple(float(x) for x in vial_concentrations)
    if not all(np.isfinite(means + concentrations)):
        raise DegenerateFitError(f"Calibration points must be finite: {means}, {concentrations}")
    if concentrations[0] == concentrations[1]:
        raise DegenerateFitError(f"Calibration concentrations must differ: {concentrations}")
    slope = (means[1] - means[0]) / (concentrations[1] - concentrations[0])
    if not slope > 0:
        raise DegenerateFitError(f"Calibration slope must be positive: {slope}")
    intercept = means[0] - slope * concentrations[0]
    return CalibrationCurve(slope, intercept, concentrations, means)


def _masked(image: Union[ImageVolume, np.ndarray], mask: Union[RegionMask, np.ndarray], region_name: str=None) \
        -> np.ndarray:
    values = np.asarray(image.values if isinstance(image, ImageVolume) else image, dtype=np.float64)
    voxels = np.asarray(mask.voxels if isinstance(mask, RegionMask) else mask, dtype=bool)
    if values.shape != voxels.shape:
        raise DimensionMismatchError(f"Mask {voxels.shape} does not match image {values.shape}")
    if not np.any(voxels):
        name = region_name if region_name is not None else getattr(mask, "region_name", "region")
        raise EmptyRegionError(f"Region \"{name}\" has no voxels")
    return values[voxels]


def region_stats(image: Union[ImageVolume, np.ndarray], mask: Union[RegionMask, np.ndarray]) -> RegionStats:
    """
    Population statistics of an image over a region.
    :raises EmptyRegionError: if the region is empty
    """
    values = _masked(image, mask)
    return RegionStats(float(np.mean(values)), float(np.std(values)), float(np.min(values)), float(np.max(values)),
                       int(values.size))


def quantify_tsc(image: Union[ImageVolume, np.ndarray], mask: RegionMask, curve: CalibrationCurve,
                 is_tissue: bool, water_fraction: float=TISSUE_WATER_FRACTION) -> TscResult:
    """
    Quantifies the sodium concentration of a region. Tissue values are divided by the water fraction to correct for
    the lower water content of tissue.
    :param image: the image
    :param mask: the region
    :param curve: the calibration curve
    :param is_tissue: whether to apply the water correction
    :param water_fraction: the tissue water fraction
    :return: mean and population SD of the concentration over the region
    :raises EmptyRegionError: if the region is empty
    :raises InvalidWaterFractionError: if the water fraction is not in (0, 1]
    """
    if not 0.0 < water_fraction <= 1.0:
        raise InvalidWaterFractionError(f"Water fraction must be in (0, 1]: {water_fraction}")
    concentrations = curve.concentration(_masked(image, mask))
    if is_tissue:
        concentrations = concentrations / water_fraction
    return TscResult(mask.region_name, float(np.mean(concentrations)), float(np.std(concentrations)),
                     int(concentrations.size), bool(is_tissue))


def _finite_samples(values: Sequence[float], minimum: int) -> np.ndarray:
    samples = np.asarray(values, dtype=np.float64).ravel()
    if samples.size < minimum:
        raise InsufficientSamplesError(f"At least {minimum} samples are required, got {samples.size}")
    if not np.all(np.isfinite(samples)):
        raise InsufficientSamplesError("Samples must be finite")
    return samples


def _t_p_value(t_squared: float, degrees_of_freedom: int) -> float:
    x = degrees_of_freedom / (degrees_of_freedom + t_squared)
    return float(betainc(degrees_of_freedom / 2.0, 0.5, x))


def paired_ttest(differences: Sequence[float]) -> PairedTestResult:
    """
    Paired-samples t-test on the differences between paired measurements.
    :param differences: the paired differences
    :return: the result (sample SD, two-sided p-value, 95% confidence interval of the mean difference)
    :raises InsufficientSamplesError: if there are fewer than two finite differences
    """
    samples = _finite_samples(differences, 2)
    n = int(samples.size)
    degrees_of_freedom = n - 1
    mean = float(np.mean(samples))
    if np.ptp(samples) == 0:
        logger.warning(f"Paired differences have no spread (mean {mean})")
        t_stat = float(np.sign(mean) * np.inf) if mean != 0 else 0.0
        return PairedTestResult(mean, 0.0, n, (mean, mean), t_stat, 0.0 if mean != 0 else 1.0, True)
    sd = float(np.std(samples, ddof=1))
    standard_error = sd / np.sqrt(n)
    t_stat = mean / standard_error
    p = max(_t_p_value(t_stat ** 2, degrees_of_freedom), _TINY)
    half_width = float(student_t.ppf(0.5 + CONFIDENCE_LEVEL / 2, degrees_of_freedom)) * standard_error
    return PairedTestResult(mean, sd, n, (mean - half_width, mean + half_width), float(t_stat), min(p, 1.0))


def pearson(x: Sequence[float], y: Sequence[float]) -> CorrelationResult:
    """
    Pearson correlation with a two-sided p-value from the t distribution with n - 2 degrees of freedom.
    :raises InsufficientSamplesError: if there are fewer than 3 pairs
    :raises UndefinedCorrelationError: if either variable is constant
    """
    first = _finite_samples(x, 3)
    second = _finite_samples(y, 3)
    if first.size != second.size:
        raise DimensionMismatchError(f"Samples differ in length: {first.size} != {second.size}")
    dx = first - np.mean(first)
    dy = second - np.mean(second)
    sxx = float(np.sum(dx * dx))
    syy = float(np.sum(dy * dy))
    if np.ptp(first) == 0 or np.ptp(second) == 0:
        raise UndefinedCorrelationError("Correlation is undefined for a constant variable")
    r = float(np.clip(np.sum(dx * dy) / np.sqrt(sxx * syy), -1.0, 1.0))
    degrees_of_freedom = first.size - 2
    p = float(betainc(degrees_of_freedom / 2.0, 0.5, 1.0 - r ** 2))
    return CorrelationResult(r, p, int(first.size))


def percentage_difference(value: float, reference: float) -> float:
    """
    Difference of a value from a reference, in percent of the reference.
    :raises ZeroReferenceError: if the reference is zero
    """
    if reference == 0:
        raise ZeroReferenceError("Relative difference against a zero reference")
    return 100.0 * (value - reference) / reference
