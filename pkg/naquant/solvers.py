import csv
import io
from enum import Enum, unique
from typing import NamedTuple, List, Optional, Callable, Tuple

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from naquant._logging import create_logger
from naquant.acquisition import KSpaceData, CoilSensitivities, adjoint_model, trajectory_operator, \
    expected_noise_energy, check_kspace_data
from naquant.combine import adaptive_combine
from naquant.common import NaQuantBaseError, ImageVolume, DimensionMismatchError, SIGNAL_UNITS
from naquant.formats import atomic_write
from naquant.operators import EncodingOperator, FourierOperator
from naquant.phantom import PriorImage, BackgroundMask, resample_prior
from naquant.regularisers import InvalidReconConfigError, Regulariser, TotalVariation, WeightedTotalVariation, \
    DirectionalTotalVariation, AxisWeightedTotalVariation, compute_wtv_weights, compute_dtv_field, \
    compute_threshold_maps, fgp_prox, DEFAULT_GAMMA

CONVERGENCE_LOG_COLUMNS = ("iteration", "objective", "data_residual", "primal_residual", "dual_residual")
RESIDUAL_SLACK = 1.05
MINIMUM_SIGMA_SQ_FRACTION = 1e-4

_TINY = np.finfo(np.float64).tiny

logger = create_logger(__name__)


class MissingPriorError(NaQuantBaseError):
    """
    Raised when a prior-guided method is run without a prior.
    """


@unique
class ReconMethod(Enum):
    ADC = "ADC"
    ADJOINT = "adjoint"
    TV = "TV"
    WTV = "wTV"
    DTV = "dTV"
    AGTV = "AG-TV"


ADMM_METHODS = (ReconMethod.TV, ReconMethod.WTV, ReconMethod.DTV)
PRIOR_METHODS = (ReconMethod.WTV, ReconMethod.DTV, ReconMethod.AGTV)


class ReconConfig:
    """
    Reconstruction parameters.
    """
    def __init__(self, method: ReconMethod=ReconMethod.TV, alpha: float=2.0, admm_rho: float=1.0,
                 max_outer_iters: int=200, fgp_inner_iters: int=20, cg_tol: float=1e-8, cg_max_iters: int=50,
                 eta: Optional[float]=None, gamma: float=DEFAULT_GAMMA, lambda_xyz: float=1.0,
                 lambda_bm: float=1.0, omega: float=0.1, bregman_mu: float=1.0, bregman_inner_iters: int=2,
                 sigma_sq: Optional[float]=None, tol: float=1e-5, adc_window: int=5, background_margin: int=2,
                 seed: int=0):
        self.method = ReconMethod(method)
        self.alpha = alpha
        self.admm_rho = admm_rho
        self.max_outer_iters = max_outer_iters
        self.fgp_inner_iters = fgp_inner_iters
        self.cg_tol = cg_tol
        self.cg_max_iters = cg_max_iters
        self.eta = eta
        self.gamma = gamma
        self.lambda_xyz = lambda_xyz
        self.lambda_bm = lambda_bm
        self.omega = omega
        self.bregman_mu = bregman_mu
        self.bregman_inner_iters = bregman_inner_iters
        self.sigma_sq = sigma_sq
        self.tol = tol
        self.adc_window = adc_window
        self.background_margin = background_margin
        self.seed = seed

    def __eq__(self, other) -> bool:
        return type(other) == type(self) and vars(other) == vars(self)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({vars(self)})"

    def copy(self, **changes) -> "ReconConfig":
        parameters = dict(vars(self))
        parameters.update(changes)
        return ReconConfig(**parameters)

    def validate(self):
        """
        Checks the parameters.
        :raises InvalidReconConfigError: if a parameter is out of range
        """
        if self.alpha < 0:
            raise InvalidReconConfigError(f"alpha must be non-negative: {self.alpha}")
        if not 0.0 <= self.gamma <= 1.0:
            raise InvalidReconConfigError(f"gamma must be in [0, 1]: {self.gamma}")
        if not 0.0 <= self.omega <= 1.0:
            raise InvalidReconConfigError(f"omega must be in [0, 1]: {self.omega}")
        if self.eta is not None and not self.eta > 0:
            raise InvalidReconConfigError(f"eta must be positive: {self.eta}")
        for name in ("admm_rho", "bregman_mu", "cg_tol", "tol"):
            if not getattr(self, name) > 0:
                raise InvalidReconConfigError(f"{name} must be positive: {getattr(self, name)}")
        for name in ("max_outer_iters", "fgp_inner_iters", "cg_max_iters", "bregman_inner_iters"):
            if getattr(self, name) < 1:
                raise InvalidReconConfigError(f"{name} must be at least 1: {getattr(self, name)}")
        if self.lambda_xyz < 0 or self.lambda_bm < 0:
            raise InvalidReconConfigError("Regularisation weights must be non-negative")
        if self.sigma_sq is not None and self.sigma_sq < 0:
            raise InvalidReconConfigError(f"sigma_sq must be non-negative: {self.sigma_sq}")
        if self.adc_window < 1 or self.adc_window % 2 == 0:
            raise InvalidReconConfigError(f"ADC window must be a positive odd number: {self.adc_window}")
        if self.background_margin < 0:
            raise InvalidReconConfigError(f"Background margin must be non-negative: {self.background_margin}")


class IterationRecord(NamedTuple):
    iteration: int
    objective: float
    data_residual: float
    primal_residual: float
    dual_residual: float


class ConvergenceLog:
    """
    Per-iteration solver diagnostics and the convergence outcome.
    """
    @property
    def final(self) -> Optional[IterationRecord]:
        return self.records[-1] if len(self.records) > 0 else None

    def __init__(self, records: List[IterationRecord]=None, converged: bool=False, message: str=""):
        self.records = records if records is not None else []
        self.converged = converged
        self.message = message

    def append(self, record: IterationRecord):
        self.records.append(record)


class ReconResult(NamedTuple):
    image: ImageVolume
    log: ConvergenceLog
    method: ReconMethod


class _Problem:
    """
    Density-weighted least-squares problem on the real image grid.
    """
    def __init__(self, data: KSpaceData, coils: CoilSensitivities, fourier: FourierOperator):
        self.encoding = EncodingOperator(fourier, coils.maps, data.trajectory.sample_weights())
        self.measured = self.encoding.weight(data.samples)
        self.dims = coils.dims
        self.n_voxels = int(np.prod(self.dims))
        self.rhs = np.real(self.encoding.adjoint(self.measured))
        self.coil_energy = np.sum(np.abs(coils.maps) ** 2, axis=0)

    def normal(self, values: np.ndarray) -> np.ndarray:
        return np.real(self.encoding.normal(values))

    def residual(self, values: np.ndarray, target: np.ndarray=None) -> float:
        target = self.measured if target is None else target
        return float(np.sum(np.abs(self.encoding.forward(values) - target) ** 2))

    def adjoint_image(self) -> np.ndarray:
        return np.where(self.coil_energy > 0, self.rhs / np.maximum(self.coil_energy, _TINY), 0.0)

    def solve(self, matvec: Callable[[np.ndarray], np.ndarray], rhs: np.ndarray, start: np.ndarray,
              config: ReconConfig) -> np.ndarray:
        operator = LinearOperator((self.n_voxels, self.n_voxels), dtype=np.float64,
                                  matvec=lambda x: matvec(x.reshape(self.dims)).ravel())
        solution, _ = cg(operator, rhs.ravel(), x0=start.ravel(), rtol=config.cg_tol, maxiter=config.cg_max_iters)
        return solution.reshape(self.dims)


def _fourier(data: KSpaceData, operator: str, fourier: Optional[FourierOperator]) -> FourierOperator:
    return fourier if fourier is not None else trajectory_operator(data.trajectory, operator)


def _check_inputs(data: KSpaceData, coils: CoilSensitivities):
    check_kspace_data(data)
    if data.n_coils != coils.n_coils or coils.dims != data.trajectory.dims:
        raise DimensionMismatchError(f"Data for {data.n_coils} coils on {data.trajectory.dims}, coils "
                                     f"{coils.n_coils} on {coils.dims}")


def _prior_on_grid(prior: Optional[PriorImage], dims, method: ReconMethod) -> PriorImage:
    if prior is None:
        raise MissingPriorError(f"{method.value} requires a prior image")
    return resample_prior(prior, dims) if prior.dims != dims else prior


def _voxel_size(voxel_size, ndim: int):
    return tuple(voxel_size) if voxel_size is not None else (1.0, ) * ndim


def recon_adjoint(data: KSpaceData, coils: CoilSensitivities, operator: str="gridded",
                  fourier: FourierOperator=None, voxel_size=None) -> ReconResult:
    """
    Density-weighted adjoint combined with the known sensitivities, normalised by the coil energy (real part).
    """
    _check_inputs(data, coils)
    problem = _Problem(data, coils, _fourier(data, operator, fourier))
    image = ImageVolume(problem.adjoint_image(), _voxel_size(voxel_size, len(coils.dims)), SIGNAL_UNITS)
    return ReconResult(image, ConvergenceLog(converged=True, message="direct"), ReconMethod.ADJOINT)


def recon_adc(data: KSpaceData, coils: CoilSensitivities, window_size: int, operator: str="gridded",
              fourier: FourierOperator=None, voxel_size=None) -> ReconResult:
    """
    Regrids every coil and combines them adaptively. The result is divided by the root-sum-of-squares of the known
    sensitivities, so it is free of the receive gain.
    """
    _check_inputs(data, coils)
    per_coil = adjoint_model(data, coils, apply_density_weights=True, fourier=_fourier(data, operator, fourier),
                             voxel_size=_voxel_size(voxel_size, len(coils.dims)))
    combined = adaptive_combine(per_coil, window_size)
    gain = np.sqrt(np.sum(np.abs(coils.maps) ** 2, axis=0))
    values = np.where(gain > 0, combined.values / np.maximum(gain, _TINY), 0.0)
    return ReconResult(combined.with_values(values), ConvergenceLog(converged=True, message="direct"),
                       ReconMethod.ADC)


def create_regulariser(config: ReconConfig, prior: Optional[PriorImage]) -> Regulariser:
    """
    Creates the regulariser of an ADMM method.
    :param config: the configuration (selects the method)
    :param prior: prior on the reconstruction grid (required for wTV and dTV)
    :return: the regulariser
    :raises MissingPriorError: if the method needs a prior and none is given
    """
    if config.method == ReconMethod.TV:
        return TotalVariation()
    if prior is None:
        raise MissingPriorError(f"{config.method.value} requires a prior image")
    if config.method == ReconMethod.WTV:
        return WeightedTotalVariation(compute_wtv_weights(prior, config.eta))
    if config.method == ReconMethod.DTV:
        return DirectionalTotalVariation(compute_dtv_field(prior, config.eta, config.gamma))
    raise InvalidReconConfigError(f"{config.method.value} is not solved with ADMM")


def recon_admm(data: KSpaceData, coils: CoilSensitivities, config: ReconConfig, prior: PriorImage=None,
               operator: str="gridded", fourier: FourierOperator=None, voxel_size=None,
               regulariser: Regulariser=None) -> ReconResult:
    """
    Solves `min_{u >= 0} 1/2 |A u - b|^2 + alpha J(u)` with ADMM: a conjugate-gradient least-squares step, a
    non-negative proximal step of J and a scaled dual update.
    :param data: the k-space data
    :param coils: the known coil sensitivities
    :param config: the configuration (method TV, wTV or dTV)
    :param prior: the prior image (required for wTV and dTV)
    :param operator: Fourier operator kind, ignored when `fourier` is given
    :param fourier: pre-built Fourier operator for the trajectory
    :param voxel_size: voxel size of the output image
    :param regulariser: regulariser to use instead of the one the method selects
    :return: the non-negative image and the convergence log
    """
    config.validate()
    _check_inputs(data, coils)
    if regulariser is None:
        if config.method in PRIOR_METHODS:
            prior = _prior_on_grid(prior, coils.dims, config.method)
        regulariser = create_regulariser(config, prior)

    problem = _Problem(data, coils, _fourier(data, operator, fourier))
    rho = config.admm_rho
    z = np.maximum(problem.adjoint_image(), 0.0)
    u = z.copy()
    scaled_dual = np.zeros(problem.dims)
    prox_dual = None
    log = ConvergenceLog()

    def matvec(x: np.ndarray) -> np.ndarray:
        return problem.normal(x) + rho * x

    for iteration in range(1, config.max_outer_iters + 1):
        u = problem.solve(matvec, problem.rhs + rho * (z - scaled_dual), u, config)
        previous_z = z
        z, prox_dual = fgp_prox(u + scaled_dual, config.alpha / rho, regulariser, config.fgp_inner_iters,
                                nonnegative=True, dual=prox_dual)
        scaled_dual = scaled_dual + u - z

        primal = float(np.linalg.norm(u - z)) / max(float(np.linalg.norm(u)), float(np.linalg.norm(z)), _TINY)
        dual = rho * float(np.linalg.norm(z - previous_z)) / max(rho * float(np.linalg.norm(scaled_dual)), _TINY)
        data_residual = problem.residual(z)
        objective = 0.5 * data_residual + config.alpha * regulariser.value(z)
        log.append(IterationRecord(iteration, objective, data_residual, primal, dual))
        logger.debug(f"{config.method.value} iteration {iteration}: objective={objective:.6g} primal={primal:.3g} "
                     f"dual={dual:.3g}")
        if primal < config.tol and dual < config.tol:
            log.converged = True
            log.message = f"converged after {iteration} iterations"
            break

    if not log.converged:
        log.message = f"not converged after {config.max_outer_iters} iterations " \
                      f"(primal={log.final.primal_residual:.3g}, dual={log.final.dual_residual:.3g})"
        logger.warning(f"{config.method.value} {log.message}")
    image = ImageVolume(z, _voxel_size(voxel_size, len(coils.dims)), SIGNAL_UNITS)
    return ReconResult(image, log, config.method)


def default_sigma_sq(data: KSpaceData, measured_energy: float, noise_sigma: float=None) -> float:
    """
    Data-fidelity budget: the expected density-weighted noise energy, floored at a small fraction of the measured
    energy.
    :param data: the k-space data
    :param measured_energy: squared norm of the density-weighted data
    :param noise_sigma: noise level per real component (the level recorded on the data if `None`)
    :return: the budget
    """
    sigma = data.noise_sigma if noise_sigma is None else noise_sigma
    budget = expected_noise_energy(data.trajectory, data.n_coils, sigma)
    return max(budget, MINIMUM_SIGMA_SQ_FRACTION * measured_energy)


def _shrink_isotropic(field: np.ndarray, threshold: float) -> np.ndarray:
    magnitude = np.sqrt(np.sum(field ** 2, axis=0))
    return field * (np.maximum(magnitude - threshold, 0.0) / np.maximum(magnitude, _TINY))


def _shrink(values: np.ndarray, threshold: float) -> np.ndarray:
    return np.sign(values) * np.maximum(np.abs(values) - threshold, 0.0)


def recon_agtv(data: KSpaceData, coils: CoilSensitivities, prior: PriorImage, background: Optional[BackgroundMask],
               config: ReconConfig, operator: str="gridded", fourier: FourierOperator=None, voxel_size=None,
               noise_sigma: float=None) -> ReconResult:
    """
    Solves `min_u lambda_xyz |T grad u| + lambda_bm |BM u|  s.t.  |A u - b|^2 <= sigma^2` with Split-Bregman, where
    T holds the per-axis threshold maps of the prior and BM the background mask.
    :param data: the k-space data
    :param coils: the known coil sensitivities
    :param prior: the prior image
    :param background: the background mask (no background term if `None`)
    :param config: the configuration
    :param operator: Fourier operator kind, ignored when `fourier` is given
    :param fourier: pre-built Fourier operator for the trajectory
    :param voxel_size: voxel size of the output image
    :param noise_sigma: noise level used for the default budget
    :return: the image and the convergence log
    """
    config.validate()
    _check_inputs(data, coils)
    prior = _prior_on_grid(prior, coils.dims, ReconMethod.AGTV)
    regulariser = AxisWeightedTotalVariation(compute_threshold_maps(prior, config.omega))
    if background is not None and background.voxels.shape != coils.dims:
        raise DimensionMismatchError(f"Background mask {background.voxels.shape} for grid {coils.dims}")
    mask = background.voxels.astype(np.float64) if background is not None else np.zeros(coils.dims)

    problem = _Problem(data, coils, _fourier(data, operator, fourier))
    measured_energy = float(np.sum(np.abs(problem.measured) ** 2))
    sigma_sq = config.sigma_sq if config.sigma_sq is not None \
        else default_sigma_sq(data, measured_energy, noise_sigma)
    mu = config.bregman_mu

    u = problem.adjoint_image()
    target = problem.measured.copy()
    split = np.zeros((u.ndim, *u.shape))
    split_bregman = np.zeros_like(split)
    background_split = np.zeros(u.shape)
    background_bregman = np.zeros(u.shape)
    log = ConvergenceLog()

    def matvec(x: np.ndarray) -> np.ndarray:
        return problem.normal(x) + mu * regulariser.transpose(regulariser.forward(x)) + mu * mask * x

    residual = problem.residual(u)
    for iteration in range(1, config.max_outer_iters + 1):
        previous = u
        rhs_data = np.real(problem.encoding.adjoint(target))
        for _ in range(config.bregman_inner_iters):
            rhs = rhs_data + mu * regulariser.transpose(split - split_bregman) \
                + mu * mask * (background_split - background_bregman)
            u = problem.solve(matvec, rhs, u, config)
            mapped = regulariser.forward(u)
            split = _shrink_isotropic(mapped + split_bregman, config.lambda_xyz / mu)
            background_split = _shrink(mask * u + background_bregman, config.lambda_bm / mu)
            split_bregman = split_bregman + mapped - split
            background_bregman = background_bregman + mask * u - background_split

        forward = problem.encoding.forward(u)
        residual = float(np.sum(np.abs(forward - problem.measured) ** 2))
        target = target + problem.measured - forward
        change = float(np.linalg.norm(u - previous)) / max(float(np.linalg.norm(u)), _TINY)
        objective = config.lambda_xyz * regulariser.value(u) + config.lambda_bm * float(np.sum(np.abs(mask * u)))
        log.append(IterationRecord(iteration, objective, residual, change, residual / max(sigma_sq, _TINY)))
        logger.debug(f"AG-TV iteration {iteration}: residual={residual:.6g} budget={sigma_sq:.6g} "
                     f"change={change:.3g}")
        if change < config.tol and residual <= RESIDUAL_SLACK * sigma_sq:
            log.converged = True
            log.message = f"data residual within budget after {iteration} iterations"
            break
        if change < config.tol:
            log.message = f"stagnated at data residual {residual:.6g} above budget {sigma_sq:.6g}"
            break

    if not log.converged:
        if log.message == "":
            log.message = f"not converged after {config.max_outer_iters} iterations " \
                          f"(data residual {residual:.6g}, budget {sigma_sq:.6g})"
        logger.warning(f"AG-TV {log.message}")
    image = ImageVolume(u, _voxel_size(voxel_size, len(coils.dims)), SIGNAL_UNITS)
    return ReconResult(image, log, ReconMethod.AGTV)


def reconstruct(data: KSpaceData, coils: CoilSensitivities, config: ReconConfig, prior: PriorImage=None,
                background: BackgroundMask=None, operator: str="gridded", fourier: FourierOperator=None,
                voxel_size=None, noise_sigma: float=None) -> ReconResult:
    """
    Reconstructs an image with the method selected by the configuration.
    :param data: the k-space data
    :param coils: the known coil sensitivities
    :param config: the configuration
    :param prior: the prior image (required by wTV, dTV and AG-TV)
    :param background: the background mask (AG-TV)
    :param operator: Fourier operator kind, ignored when `fourier` is given
    :param fourier: pre-built Fourier operator for the trajectory
    :param voxel_size: voxel size of the output image
    :param noise_sigma: noise level for the AG-TV budget
    :return: the reconstruction
    :raises MissingPriorError: if a prior-guided method has no prior
    :raises InvalidReconConfigError: if the configuration is invalid
    """
    config.validate()
    method = config.method
    if method in PRIOR_METHODS and prior is None:
        raise MissingPriorError(f"{method.value} requires a prior image")
    logger.info(f"Reconstructing {coils.dims} with {method.value}")
    if method == ReconMethod.ADC:
        return recon_adc(data, coils, config.adc_window, operator, fourier, voxel_size)
    if method == ReconMethod.ADJOINT:
        return recon_adjoint(data, coils, operator, fourier, voxel_size)
    if method == ReconMethod.AGTV:
        return recon_agtv(data, coils, prior, background, config, operator, fourier, voxel_size, noise_sigma)
    return recon_admm(data, coils, config, prior, operator, fourier, voxel_size)


def convergence_log_rows(log: ConvergenceLog) -> Tuple[Tuple[str, ...], List[Tuple[str, ...]]]:
    """
    Formats a convergence log as CSV header and rows.
    """
    rows = [(str(record.iteration), ) + tuple(f"{value:.12g}" for value in record[1:]) for record in log.records]
    return CONVERGENCE_LOG_COLUMNS, rows


def write_convergence_log(log: ConvergenceLog, path: str):
    """
    Writes a convergence log as CSV.
    :param log: the log
    :param path: the file to write
    """
    header, rows = convergence_log_rows(log)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    atomic_write(path, buffer.getvalue().encode())


def read_convergence_log(path: str, converged: bool=False, message: str="") -> ConvergenceLog:
    """
    Reads a convergence log written by `write_convergence_log`.
    :param path: the file to read
    :param converged: the convergence outcome (not stored in the file)
    :param message: the outcome message (not stored in the file)
    :return: the log
    """
    with open(path, "r", newline="") as file:
        reader = csv.reader(file)
        header = tuple(next(reader, ()))
        if header != CONVERGENCE_LOG_COLUMNS:
            raise ValueError(f"Not a convergence log: {path}")
        records = [IterationRecord(int(row[0]), *(float(value) for value in row[1:])) for row in reader]
    return ConvergenceLog(records, converged, message)
