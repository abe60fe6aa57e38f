import csv
import io
import os
from collections import OrderedDict
from typing import Dict, List, Sequence, Tuple, NamedTuple, Any, Optional, Union

import numpy as np
from PIL import Image

from naquant._logging import create_logger
from naquant.cells import CellOutcome, SubjectResult, AcquisitionResult, subject_identifier, \
    acquisition_identifier, reconstruction_identifier
from naquant.common import NaQuantBaseError, ImageVolume
from naquant.configuration import PipelineConfig
from naquant.formats import atomic_write
from naquant.metrics import SsimParams, slice_metrics, rmse, focus_measure, dice, threshold_tumor_mask, \
    line_profile, psf_fwhm
from naquant.phantom import DigitalPhantom, make_mask, TUMOR, VIAL_77, VIAL_154
from naquant.quant import CalibrationCurve, PairedTestResult, fit_calibration, region_stats, quantify_tsc, \
    paired_ttest, pearson, percentage_difference
from naquant.solvers import ReconMethod, ReconResult, ConvergenceLog, convergence_log_rows
from naquant.storage import FAILED_STATUS
from naquant.trajectories import TrajectoryMode, make_radial_trajectory

PHANTOM_STAGE = "phantom"
ACQUIRE_STAGE = "acquire"
RECON_STAGE = "recon"
METRICS_STAGE = "metrics"
TSC_STAGE = "tsc"
REPORT_STAGE = "report"
PIPELINE_STAGE = "pipeline"
STAGES = (PHANTOM_STAGE, ACQUIRE_STAGE, RECON_STAGE, METRICS_STAGE, TSC_STAGE, REPORT_STAGE, PIPELINE_STAGE)

METRICS_TABLE = "metrics"
PSF_TABLE = "psf"
FM_VS_SPOKES_TABLE = "fm_vs_spokes"
LINE_PROFILES_TABLE = "line_profiles"
QUALITY_TESTS_TABLE = "quality_tests"
CALIBRATION_TABLE = "calibration"
TSC_TABLE = "tsc"
PAIRED_TESTS_TABLE = "paired_tests"
CORRELATIONS_TABLE = "correlations"
FAILURES_TABLE = "failures"

CONVERGENCE_DIRECTORY = "convergence"
PANELS_DIRECTORY = "panels"
PANEL_GUTTER = 4
TRUTH_LABEL = "truth"
PROFILE_OVERSAMPLING = 4

PAIRED_METHODS = (
    (ReconMethod.WTV, ReconMethod.DTV), (ReconMethod.WTV, ReconMethod.AGTV), (ReconMethod.DTV, ReconMethod.AGTV),
    (ReconMethod.WTV, ReconMethod.ADC), (ReconMethod.DTV, ReconMethod.ADC), (ReconMethod.AGTV, ReconMethod.ADC))
QUALITY_PAIR = (ReconMethod.WTV, ReconMethod.DTV)

_PAIRED_COLUMNS = ("mean_diff", "sd_diff", "n", "ci_low", "ci_high", "t_stat", "p_two_sided", "degenerate")

logger = create_logger(__name__)


class InvalidDisplayWindowError(NaQuantBaseError):
    """
    Raised when a display window is empty or inverted.
    """


class ReportTable(NamedTuple):
    columns: Tuple[str, ...]
    rows: List[Tuple[Any, ...]]


class ReportBundle:
    """
    Tables, convergence logs and panels reported for a pipeline run.
    """
    @property
    def failed(self) -> List[str]:
        return [x for x, y in self.statuses.items() if y == FAILED_STATUS]

    def __init__(self, statuses: Dict[str, str], tables: Dict[str, ReportTable]=None,
                 convergence: Dict[str, ConvergenceLog]=None,
                 panels: Dict[str, Tuple[List[ImageVolume], Tuple[float, float]]]=None):
        self.statuses = statuses
        self.tables = tables if tables is not None else OrderedDict()
        self.convergence = convergence if convergence is not None else OrderedDict()
        self.panels = panels if panels is not None else OrderedDict()

    def write(self, directory: str):
        """
        Writes the tables as CSV files, the convergence logs and the panels into the given directory.
        """
        for name, table in self.tables.items():
            atomic_write(os.path.join(directory, f"{name}.csv"), format_csv(table.columns, table.rows))
        for identifier, log in self.convergence.items():
            header, rows = convergence_log_rows(log)
            atomic_write(os.path.join(directory, CONVERGENCE_DIRECTORY, f"{identifier.replace('/', '_')}.csv"),
                         format_csv(header, rows))
        for name, (images, window) in self.panels.items():
            render_panel(images, window, os.path.join(directory, PANELS_DIRECTORY, f"{name}.png"))


def stage_includes(stage: str, required: str) -> bool:
    """
    Whether running the given stage includes the work of the required stage.
    """
    return STAGES.index(stage) >= STAGES.index(required)


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    if isinstance(value, ReconMethod):
        return value.value
    return str(value)


def format_csv(columns: Sequence[str], rows: Sequence[Sequence[Any]]) -> bytes:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows([format_value(x) for x in row] for row in rows)
    return buffer.getvalue().encode()


def window_image(values: np.ndarray, window: Tuple[float, float]) -> np.ndarray:
    """
    Maps values linearly to 8-bit grey levels: the lower window bound to 0 and the upper to 255.
    :raises InvalidDisplayWindowError: if the window is empty or inverted
    """
    low, high = float(window[0]), float(window[1])
    if not low < high:
        raise InvalidDisplayWindowError(f"Display window must satisfy low < high: {window}")
    scaled = np.round((np.nan_to_num(np.asarray(values, dtype=np.float64)) - low) / (high - low) * 255.0)
    return np.clip(scaled, 0, 255).astype(np.uint8)


def render_panel(images: Sequence[Union[ImageVolume, np.ndarray]], window: Tuple[float, float], path: str):
    """
    Writes a horizontal 8-bit grayscale montage of images (the middle slice of 3D images), separated by a gutter.
    :param images: the images, all of the same size
    :param window: display window (low, high)
    :param path: the PNG file to write
    :raises InvalidDisplayWindowError: if there are no images, sizes differ or the window is invalid
    """
    if len(images) == 0:
        raise InvalidDisplayWindowError("A panel needs at least one image")
    planes = []
    for image in images:
        values = np.real(np.asarray(image.values if isinstance(image, ImageVolume) else image))
        if values.ndim == 3:
            values = values[values.shape[0] // 2]
        planes.append(window_image(values, window))
    height, width = planes[0].shape
    if any(x.shape != (height, width) for x in planes):
        raise InvalidDisplayWindowError("Panel images must have the same size")

    montage = np.zeros((height, len(planes) * width + (len(planes) - 1) * PANEL_GUTTER), dtype=np.uint8)
    for i, plane in enumerate(planes):
        offset = i * (width + PANEL_GUTTER)
        montage[:, offset:offset + width] = plane
    buffer = io.BytesIO()
    Image.fromarray(montage).save(buffer, format="PNG")
    atomic_write(path, buffer.getvalue())
    logger.info(f"Rendered panel of {len(planes)} images to {path}")


class _Results:
    """
    Successful cell results of a run, looked up by subject, spoke count and method.
    """
    def __init__(self, outcomes: Dict[str, CellOutcome]):
        self.outcomes = outcomes

    def _get(self, identifier: str) -> Optional[Any]:
        outcome = self.outcomes.get(identifier)
        return outcome.result if outcome is not None and outcome.status != FAILED_STATUS else None

    def subject(self, subject: int) -> Optional[SubjectResult]:
        return self._get(subject_identifier(subject))

    def acquisition(self, subject: int, n_spokes: int) -> Optional[AcquisitionResult]:
        return self._get(acquisition_identifier(subject, n_spokes))

    def reconstruction(self, subject: int, n_spokes: int, method: ReconMethod) -> Optional[ReconResult]:
        return self._get(reconstruction_identifier(subject, n_spokes, method))


def _paired_values(result: PairedTestResult) -> Tuple[Any, ...]:
    return (result.mean_diff, result.sd_diff, result.n, result.ci95[0], result.ci95[1], result.t_stat,
            result.p_two_sided, result.degenerate)


def _tumor_dice(image: ImageVolume, phantom: DigitalPhantom, dilation: int) -> float:
    try:
        truth = make_mask(phantom, TUMOR)
    except NaQuantBaseError as e:
        logger.warning(f"No tumor to segment: {e}")
        return float("nan")
    return dice(threshold_tumor_mask(image, truth, dilation), truth)


def _metric_rows(config: PipelineConfig, results: _Results) -> List[Tuple[Any, ...]]:
    settings = config.metrics
    params = SsimParams(settings.ssim_window, settings.ssim_sigma, settings.k1, settings.k2)
    rows = []
    for subject in range(config.n_subjects):
        subject_result = results.subject(subject)
        for n_spokes in config.acquisition.spokes:
            acquired = results.acquisition(subject, n_spokes)
            for method in config.reconstruction.methods:
                recon = results.reconstruction(subject, n_spokes, method)
                if subject_result is None or acquired is None or recon is None:
                    continue
                phantom = subject_result.phantom
                image = recon.image
                against_reference = slice_metrics(acquired.reference, image, params)
                rows.append((subject, n_spokes, method, against_reference.ssim_mean, against_reference.ssim_sd,
                             against_reference.rmse_mean, rmse(phantom.ideal_image(), image), focus_measure(image),
                             _tumor_dice(image, phantom, settings.tumor_mask_dilation), recon.log.converged))
    return rows


def _psf_rows(config: PipelineConfig) -> List[Tuple[Any, ...]]:
    dims = config.phantom.dims
    samples_per_spoke = config.acquisition.resolved_samples_per_spoke(dims)
    rows = []
    for mode in TrajectoryMode:
        for n_spokes in config.acquisition.spokes:
            trajectory = make_radial_trajectory(n_spokes, samples_per_spoke, dims, mode,
                                                config.acquisition.k0_fraction)
            psf = psf_fwhm(trajectory, upsampling=config.metrics.psf_upsampling,
                           operator=config.acquisition.operator)
            for axis, fwhm in enumerate(psf.fwhm):
                rows.append((n_spokes, mode.value, axis, fwhm, psf.sidelobe_energy, psf.peak_at_center))
    return rows


def _fm_vs_spokes_rows(config: PipelineConfig, metric_rows: List[Tuple[Any, ...]]) -> List[Tuple[Any, ...]]:
    means: Dict[Tuple[int, ReconMethod], Tuple[float, int]] = {}
    for n_spokes in config.acquisition.spokes:
        for method in config.reconstruction.methods:
            values = [row[7] for row in metric_rows if row[1] == n_spokes and row[2] == method]
            if len(values) > 0:
                means[(n_spokes, method)] = (float(np.mean(values)), len(values))
    rows = []
    for (n_spokes, method), (mean, n) in means.items():
        reference = means.get((n_spokes, ReconMethod.ADC))
        relative = percentage_difference(mean, reference[0]) \
            if reference is not None and reference[0] != 0 else None
        rows.append((method, n_spokes, mean, relative, n))
    return rows


def _line_profile_rows(config: PipelineConfig, results: _Results) -> List[Tuple[Any, ...]]:
    subject_result = results.subject(0)
    if subject_result is None:
        return []
    phantom = subject_result.phantom
    n_spokes = max(config.acquisition.spokes)
    center = tuple(phantom.geometry.vial_77_center) if phantom.geometry is not None else (0.0, ) * phantom.ndim
    center = (0.0, ) * (phantom.ndim - len(center)) + center
    fov = phantom.field_of_view
    row_position = tuple((0.5 + x) * f for x, f in zip(center[:-1], fov[:-1]))
    start = row_position + (0.0, )
    end = row_position + (fov[-1], )
    n_samples = PROFILE_OVERSAMPLING * phantom.dims[-1]

    images = [(TRUTH_LABEL, phantom.ideal_image())]
    for method in config.reconstruction.methods:
        recon = results.reconstruction(0, n_spokes, method)
        if recon is not None:
            images.append((method.value, recon.image))
    rows = []
    for label, image in images:
        profile = line_profile(image, start, end, n_samples)
        for i, (position, value) in enumerate(zip(profile.positions[:, -1], profile.values)):
            rows.append((label, n_spokes, i, position, value))
    return rows


def _quality_test_rows(config: PipelineConfig, metric_rows: List[Tuple[Any, ...]]) -> List[Tuple[Any, ...]]:
    first, second = QUALITY_PAIR
    if first not in config.reconstruction.methods or second not in config.reconstruction.methods:
        return []
    metric_columns = (("ssim", 3), ("rmse_truth", 6), ("focus_measure", 7))
    rows = []
    for n_spokes in config.acquisition.spokes:
        by_subject = {(row[0], row[2]): row for row in metric_rows if row[1] == n_spokes}
        subjects = [x for x in range(config.n_subjects) if (x, first) in by_subject and (x, second) in by_subject]
        if len(subjects) < 2:
            logger.warning(f"Not testing {first.value} against {second.value} at {n_spokes} spokes: "
                           f"{len(subjects)} paired subject(s)")
            continue
        for name, column in metric_columns:
            differences = [by_subject[(x, first)][column] - by_subject[(x, second)][column] for x in subjects]
            rows.append((n_spokes, name, first, second) + _paired_values(paired_ttest(differences)))
    return rows


def _calibrate(phantom: DigitalPhantom, image: ImageVolume, erosion_voxels: int) -> CalibrationCurve:
    means = [region_stats(image, make_mask(phantom, x, erosion_voxels=erosion_voxels)).mean
             for x in (VIAL_77, VIAL_154)]
    return fit_calibration(means, [phantom.compartment(x).concentration for x in (VIAL_77, VIAL_154)])


def _tsc_tables(config: PipelineConfig, results: _Results) \
        -> Tuple[List[Tuple[Any, ...]], List[Tuple[Any, ...]]]:
    settings = config.tsc
    calibration_rows = []
    tsc_rows = []
    for subject in range(config.n_subjects):
        subject_result = results.subject(subject)
        if subject_result is None:
            continue
        phantom = subject_result.phantom
        for n_spokes in config.acquisition.spokes:
            for method in config.reconstruction.methods:
                recon = results.reconstruction(subject, n_spokes, method)
                if recon is None:
                    continue
                try:
                    curve = _calibrate(phantom, recon.image, settings.erosion_voxels)
                except NaQuantBaseError as e:
                    logger.warning(f"Cannot calibrate {reconstruction_identifier(subject, n_spokes, method)}: {e}")
                    continue
                calibration_rows.append((subject, n_spokes, method, curve.vial_means[0], curve.vial_means[1],
                                         curve.slope, curve.intercept))
                for region in settings.regions:
                    try:
                        mask = make_mask(phantom, region, erosion_voxels=settings.erosion_voxels)
                    except NaQuantBaseError as e:
                        logger.warning(f"Skipping {region} of subject {subject}: {e}")
                        continue
                    tsc = quantify_tsc(recon.image, mask, curve, True, settings.water_fraction)
                    tsc_rows.append((subject, n_spokes, method, region, phantom.compartment(region).concentration,
                                     tsc.mean, tsc.sd, tsc.n_voxels))
    return calibration_rows, tsc_rows


def _paired_test_rows(config: PipelineConfig, tsc_rows: List[Tuple[Any, ...]]) -> List[Tuple[Any, ...]]:
    n_spokes = max(config.acquisition.spokes)
    means = {(row[0], row[2], row[3]): row[5] for row in tsc_rows if row[1] == n_spokes}
    rows = []
    for first, second in PAIRED_METHODS:
        if first not in config.reconstruction.methods or second not in config.reconstruction.methods:
            continue
        for region in config.tsc.regions:
            subjects = [x for x in range(config.n_subjects)
                        if (x, first, region) in means and (x, second, region) in means]
            if len(subjects) < 2:
                logger.warning(f"Not testing {first.value} - {second.value} TSC in {region}: "
                               f"{len(subjects)} paired subject(s)")
                continue
            differences = [means[(x, first, region)] - means[(x, second, region)] for x in subjects]
            rows.append((n_spokes, region, first, second) + _paired_values(paired_ttest(differences)))
    return rows


def _correlation_rows(config: PipelineConfig, tsc_rows: List[Tuple[Any, ...]]) -> List[Tuple[Any, ...]]:
    n_spokes = max(config.acquisition.spokes)
    rows = []
    for method in config.reconstruction.methods:
        selected = [row for row in tsc_rows if row[1] == n_spokes and row[2] == method]
        try:
            correlation = pearson([row[4] for row in selected], [row[5] for row in selected])
        except NaQuantBaseError as e:
            logger.warning(f"No correlation for {method.value}: {e}")
            continue
        rows.append((method, n_spokes, correlation.r, correlation.p_two_sided, correlation.n))
    return rows


def build_report(config: PipelineConfig, stage: str, outcomes: Dict[str, CellOutcome]) -> ReportBundle:
    """
    Computes the reports of a pipeline run.
    :param config: the pipeline configuration
    :param stage: the stage that was run
    :param outcomes: outcome of every cell
    :return: the reports
    """
    results = _Results(outcomes)
    tables: Dict[str, ReportTable] = OrderedDict()
    tables[FAILURES_TABLE] = ReportTable(
        ("identifier", "message"), [(x, y.message) for x, y in outcomes.items() if y.status == FAILED_STATUS])

    convergence: Dict[str, ConvergenceLog] = OrderedDict()
    if stage_includes(stage, RECON_STAGE):
        for identifier, outcome in outcomes.items():
            if outcome.status != FAILED_STATUS and isinstance(outcome.result, ReconResult):
                convergence[identifier] = outcome.result.log

    if stage_includes(stage, METRICS_STAGE):
        metric_rows = _metric_rows(config, results)
        tables[METRICS_TABLE] = ReportTable(
            ("subject", "spokes", "method", "ssim", "ssim_sd", "rmse_reference", "rmse_truth", "focus_measure",
             "dice", "converged"), metric_rows)
        tables[PSF_TABLE] = ReportTable(
            ("spokes", "mode", "axis", "fwhm_voxels", "sidelobe_energy", "peak_at_center"), _psf_rows(config))
        tables[FM_VS_SPOKES_TABLE] = ReportTable(
            ("method", "spokes", "focus_measure", "percent_vs_adc", "n_subjects"),
            _fm_vs_spokes_rows(config, metric_rows))
        tables[LINE_PROFILES_TABLE] = ReportTable(
            ("image", "spokes", "sample", "position_mm", "value"), _line_profile_rows(config, results))
        tables[QUALITY_TESTS_TABLE] = ReportTable(
            ("spokes", "metric", "first", "second") + _PAIRED_COLUMNS, _quality_test_rows(config, metric_rows))

    if stage_includes(stage, TSC_STAGE):
        calibration_rows, tsc_rows = _tsc_tables(config, results)
        tables[CALIBRATION_TABLE] = ReportTable(
            ("subject", "spokes", "method", "vial77_mean", "vial154_mean", "slope", "intercept"), calibration_rows)
        tables[TSC_TABLE] = ReportTable(
            ("subject", "spokes", "method", "region", "prescribed", "mean", "sd", "n_voxels"), tsc_rows)
        tables[PAIRED_TESTS_TABLE] = ReportTable(
            ("spokes", "region", "first", "second") + _PAIRED_COLUMNS, _paired_test_rows(config, tsc_rows))
        tables[CORRELATIONS_TABLE] = ReportTable(
            ("method", "spokes", "r", "p_two_sided", "n"), _correlation_rows(config, tsc_rows))

    panels = OrderedDict()
    if stage_includes(stage, REPORT_STAGE) and config.render_panels:
        subject_result = results.subject(0)
        if subject_result is not None:
            ideal = subject_result.phantom.ideal_image()
            window = (0.0, float(np.max(ideal.values)) if np.max(ideal.values) > 0 else 1.0)
            for n_spokes in config.acquisition.spokes:
                images = [x.image for x in (results.reconstruction(0, n_spokes, method)
                                            for method in config.reconstruction.methods) if x is not None]
                if len(images) > 0:
                    panels[f"spokes-{n_spokes}"] = (images, window)

    return ReportBundle({x: y.status for x, y in outcomes.items()}, tables, convergence, panels)
