import os
from abc import ABCMeta, abstractmethod
from typing import List, Dict, Any, Tuple, NamedTuple

import numpy as np

from naquant._logging import create_logger
from naquant.acquisition import KSpaceData, CoilSensitivities, make_coils, forward_model, add_noise, \
    acquire_noise_scan, estimate_noise_sigma, trajectory_operator
from naquant.common import NaQuantBaseError, ImageVolume
from naquant.configuration import PhantomSettings, AcquisitionSettings, ReconstructionSettings, \
    PhantomSettingsJSONEncoder, AcquisitionSettingsJSONEncoder, ReconstructionSettingsJSONEncoder
from naquant.formats import write_volume, read_volume, write_kspace, read_kspace
from naquant.hashers import derive_seed
from naquant.phantom import DigitalPhantom, PriorImage, build_breast_phantom, render_prior, make_background_mask
from naquant.solvers import ReconMethod, ReconResult, recon_adc, reconstruct, write_convergence_log, \
    read_convergence_log
from naquant.storage import CellRecord
from naquant.trajectories import make_radial_trajectory

SUBJECT_PREFIX = "subject-"
SPOKES_PREFIX = "spokes-"

PHANTOM_FILE = "phantom.snav"
PRIOR_FILE = "prior.snav"
KSPACE_FILE = "kspace.snak"
COILS_FILE = "coils.snav"
REFERENCE_FILE = "reference.snav"
IMAGE_FILE = "image.snav"
CONVERGENCE_FILE = "convergence.csv"

NOISE_SCAN_SAMPLES = 4096

MISMATCH_DETAIL = "prior_mismatch"
NOISE_SIGMA_DETAIL = "noise_sigma_estimate"
CONVERGED_DETAIL = "converged"
MESSAGE_DETAIL = "message"

logger = create_logger(__name__)


class CellInputError(NaQuantBaseError):
    """
    Raised when a cell is run without the results of the cells it requires.
    """


def subject_identifier(subject: int) -> str:
    return f"{SUBJECT_PREFIX}{subject}"


def acquisition_identifier(subject: int, n_spokes: int) -> str:
    return f"{subject_identifier(subject)}/{SPOKES_PREFIX}{n_spokes}"


def reconstruction_identifier(subject: int, n_spokes: int, method: ReconMethod) -> str:
    return f"{acquisition_identifier(subject, n_spokes)}/{method.value}"


def _quantize_real(values: np.ndarray) -> np.ndarray:
    return np.asarray(values).astype(np.float32).astype(np.float64)


def _quantize_complex(values: np.ndarray) -> np.ndarray:
    return np.asarray(values).astype(np.complex64).astype(np.complex128)


class PipelineCell(metaclass=ABCMeta):
    """
    A unit of pipeline work with persisted, immutable results.
    """
    @property
    @abstractmethod
    def parameters(self) -> Dict[str, Any]:
        """
        JSON-serialisable parameters that (with the results of the required cells) determine the result.
        :return: the parameters
        """

    @abstractmethod
    def run(self, inputs: Dict[str, Any]) -> Any:
        """
        Computes the result of this cell.
        :param inputs: results of the required cells, keyed by identifier
        :return: the result
        """

    @abstractmethod
    def save(self, result: Any, directory: str) -> Tuple[List[str], Dict[str, Any]]:
        """
        Persists a result.
        :param result: the result of `run`
        :param directory: the output directory
        :return: tuple of the written artifacts (relative to the output directory) and scalar details to record
        """

    @abstractmethod
    def load(self, directory: str, record: CellRecord) -> Any:
        """
        Loads a previously saved result.
        :param directory: the output directory
        :param record: the record written when the result was saved
        :return: the result
        """

    def __init__(self, identifier: str, requires: List[str]=None):
        self.identifier = identifier
        self.requires = list(requires) if requires is not None else []

    def __str__(self) -> str:
        return self.identifier

    def artifact(self, name: str) -> str:
        """
        Location of an artifact of this cell, relative to the output directory.
        """
        return f"{self.identifier}/{name}"

    def _input(self, inputs: Dict[str, Any], identifier: str) -> Any:
        if identifier not in inputs:
            raise CellInputError(f"{self.identifier} requires the result of {identifier}")
        return inputs[identifier]


class SubjectResult(NamedTuple):
    phantom: DigitalPhantom
    prior: PriorImage


class AcquisitionResult(NamedTuple):
    data: KSpaceData
    coils: CoilSensitivities
    reference: ImageVolume
    noise_sigma_estimate: float


class SubjectCell(PipelineCell):
    """
    Simulates one subject: the sodium phantom and its 1H prior.
    """
    def __init__(self, subject: int, settings: PhantomSettings, master_seed: int):
        super().__init__(subject_identifier(subject))
        self.subject = subject
        self.settings = settings
        self.master_seed = master_seed

    @property
    def parameters(self) -> Dict[str, Any]:
        return {"master_seed": self.master_seed, "subject": self.subject,
                "phantom": PhantomSettingsJSONEncoder().default(self.settings)}

    def run(self, inputs: Dict[str, Any]) -> SubjectResult:
        seed = derive_seed(self.master_seed, self.identifier, "phantom")
        phantom = build_breast_phantom(self.settings.dims, self.settings.voxel_size_mm, self.settings.geometry, seed)
        prior = render_prior(phantom, self.settings.resolved_prior_dims, self.settings.prior_mismatch)
        return SubjectResult(phantom, PriorImage(_quantize_real(prior.values), prior.voxel_size,
                                                 prior.mismatch_description))

    def save(self, result: SubjectResult, directory: str) -> Tuple[List[str], Dict[str, Any]]:
        artifacts = [self.artifact(PHANTOM_FILE), self.artifact(PRIOR_FILE)]
        write_volume(result.phantom, os.path.join(directory, artifacts[0]))
        write_volume(result.prior.as_volume(), os.path.join(directory, artifacts[1]), result.phantom.seed)
        return artifacts, {MISMATCH_DETAIL: result.prior.mismatch_description}

    def load(self, directory: str, record: CellRecord) -> SubjectResult:
        phantom = read_volume(os.path.join(directory, self.artifact(PHANTOM_FILE)))
        prior = read_volume(os.path.join(directory, self.artifact(PRIOR_FILE)))
        return SubjectResult(phantom, PriorImage(prior.values.astype(np.float64), prior.voxel_size,
                                                 record.details.get(MISMATCH_DETAIL)))


class AcquisitionCell(PipelineCell):
    """
    Simulates a noisy multi-coil radial acquisition of a subject and its adaptively combined reference image.
    """
    def __init__(self, subject: int, n_spokes: int, settings: AcquisitionSettings, adc_window: int,
                 master_seed: int):
        super().__init__(acquisition_identifier(subject, n_spokes), [subject_identifier(subject)])
        self.subject = subject
        self.n_spokes = n_spokes
        self.settings = settings
        self.adc_window = adc_window
        self.master_seed = master_seed

    @property
    def parameters(self) -> Dict[str, Any]:
        return {"master_seed": self.master_seed, "n_spokes": self.n_spokes, "adc_window": self.adc_window,
                "acquisition": AcquisitionSettingsJSONEncoder().default(self.settings)}

    def run(self, inputs: Dict[str, Any]) -> AcquisitionResult:
        subject: SubjectResult = self._input(inputs, self.requires[0])
        phantom = subject.phantom
        settings = self.settings
        trajectory = make_radial_trajectory(
            self.n_spokes, settings.resolved_samples_per_spoke(phantom.dims), phantom.dims, settings.mode,
            settings.k0_fraction)
        # Coils belong to the subject, not to the spoke count
        coils = make_coils(phantom.dims, settings.n_coils,
                           derive_seed(self.master_seed, subject_identifier(self.subject), "coils"))
        coils = CoilSensitivities(_quantize_complex(coils.maps))
        fourier = trajectory_operator(trajectory, settings.operator, settings.kernel_width, settings.oversampling)

        noiseless = forward_model(phantom.ideal_image(), trajectory, coils, fourier=fourier)
        noisy = add_noise(noiseless, settings.sigma, derive_seed(self.master_seed, self.identifier, "noise"))
        data = KSpaceData(_quantize_complex(noisy.samples), trajectory, noisy.noise_sigma, noisy.seed)

        noise_scan = acquire_noise_scan((settings.n_coils, NOISE_SCAN_SAMPLES), settings.sigma,
                                        derive_seed(self.master_seed, self.identifier, "noise-scan"))
        noise_sigma = estimate_noise_sigma(noise_scan)

        reference = recon_adc(data, coils, self.adc_window, fourier=fourier, voxel_size=phantom.voxel_size).image
        reference = reference.with_values(_quantize_real(reference.values))
        logger.info(f"Acquired {self.identifier}: {trajectory.n_samples} samples per coil, estimated noise "
                    f"{noise_sigma:.4g}")
        return AcquisitionResult(data, coils, reference, noise_sigma)

    def save(self, result: AcquisitionResult, directory: str) -> Tuple[List[str], Dict[str, Any]]:
        artifacts = [self.artifact(KSPACE_FILE), self.artifact(COILS_FILE), self.artifact(REFERENCE_FILE)]
        voxel_size = result.reference.voxel_size
        write_kspace(result.data, os.path.join(directory, artifacts[0]), voxel_size)
        write_volume(ImageVolume(result.coils.maps, (1.0, ) + tuple(voxel_size), "sensitivity"),
                     os.path.join(directory, artifacts[1]), result.data.seed)
        write_volume(result.reference, os.path.join(directory, artifacts[2]), result.data.seed)
        return artifacts, {NOISE_SIGMA_DETAIL: result.noise_sigma_estimate}

    def load(self, directory: str, record: CellRecord) -> AcquisitionResult:
        data, _ = read_kspace(os.path.join(directory, self.artifact(KSPACE_FILE)))
        coils = read_volume(os.path.join(directory, self.artifact(COILS_FILE)))
        reference = read_volume(os.path.join(directory, self.artifact(REFERENCE_FILE)))
        return AcquisitionResult(
            KSpaceData(data.samples.astype(np.complex128), data.trajectory, data.noise_sigma, data.seed),
            CoilSensitivities(coils.values.astype(np.complex128)),
            reference.with_values(reference.values.astype(np.float64)),
            float(record.details[NOISE_SIGMA_DETAIL]))


class ReconstructionCell(PipelineCell):
    """
    Reconstructs one acquisition with one method.
    """
    def __init__(self, subject: int, n_spokes: int, method: ReconMethod, settings: ReconstructionSettings,
                 acquisition: AcquisitionSettings, master_seed: int):
        super().__init__(reconstruction_identifier(subject, n_spokes, method),
                         [subject_identifier(subject), acquisition_identifier(subject, n_spokes)])
        self.subject = subject
        self.n_spokes = n_spokes
        self.method = method
        self.settings = settings
        self.acquisition = acquisition
        self.master_seed = master_seed

    @property
    def parameters(self) -> Dict[str, Any]:
        return {"master_seed": self.master_seed, "method": self.method.value,
                "reconstruction": ReconstructionSettingsJSONEncoder().default(self.settings),
                "operator": [self.acquisition.operator, self.acquisition.kernel_width,
                             self.acquisition.oversampling]}

    def run(self, inputs: Dict[str, Any]) -> ReconResult:
        subject: SubjectResult = self._input(inputs, self.requires[0])
        acquired: AcquisitionResult = self._input(inputs, self.requires[1])
        config = self.settings.recon_config(self.method, derive_seed(self.master_seed, self.identifier))
        dims = acquired.coils.dims
        background = make_background_mask(subject.prior, dims, config.background_margin)
        fourier = trajectory_operator(acquired.data.trajectory, self.acquisition.operator,
                                      self.acquisition.kernel_width, self.acquisition.oversampling)
        result = reconstruct(acquired.data, acquired.coils, config, subject.prior, background, fourier=fourier,
                             voxel_size=subject.phantom.voxel_size, noise_sigma=acquired.noise_sigma_estimate)
        image = result.image.with_values(_quantize_real(np.real(result.image.values)))
        return ReconResult(image, result.log, result.method)

    def save(self, result: ReconResult, directory: str) -> Tuple[List[str], Dict[str, Any]]:
        artifacts = [self.artifact(IMAGE_FILE), self.artifact(CONVERGENCE_FILE)]
        write_volume(result.image, os.path.join(directory, artifacts[0]))
        write_convergence_log(result.log, os.path.join(directory, artifacts[1]))
        return artifacts, {CONVERGED_DETAIL: bool(result.log.converged), MESSAGE_DETAIL: result.log.message}

    def load(self, directory: str, record: CellRecord) -> ReconResult:
        image = read_volume(os.path.join(directory, self.artifact(IMAGE_FILE)))
        log = read_convergence_log(os.path.join(directory, self.artifact(CONVERGENCE_FILE)),
                                   bool(record.details.get(CONVERGED_DETAIL, False)),
                                   str(record.details.get(MESSAGE_DETAIL, "")))
        return ReconResult(image.with_values(image.values.astype(np.float64)), log, self.method)


class CellOutcome(NamedTuple):
    """
    Outcome of scheduling a cell: its status, its result (`None` if it failed) and the failure message.
    """
    status: str
    result: Any = None
    message: str = ""
