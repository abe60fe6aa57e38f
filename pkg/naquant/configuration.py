import os
from typing import Sequence, Union, Optional, Dict, Any, List

import yaml
from hgijson import JsonPropertyMapping, MappingJSONEncoderClassBuilder, MappingJSONDecoderClassBuilder
from jinja2 import Template

from naquant.common import NaQuantBaseError, DEFAULT_ENCODING, MINIMUM_GRID_SIZE, as_grid_size, as_voxel_size
from naquant.operators import DEFAULT_KERNEL_WIDTH, DEFAULT_OVERSAMPLING
from naquant.phantom import PhantomGeometry, PriorMismatch, TISSUE_COMPARTMENTS, TISSUE_WATER_FRACTION, \
    ADIPOSE, GLANDULAR, TUMOR, SKIN
from naquant.solvers import ReconConfig, ReconMethod
from naquant.trajectories import TrajectoryMode, DEFAULT_K0_FRACTION, MINIMUM_SAMPLES_PER_SPOKE

SCHEMA_VERSION = 1

VERSION_PROPERTY = "version"
OUTPUT_DIRECTORY_PROPERTY = "output_directory"
MASTER_SEED_PROPERTY = "master_seed"
N_SUBJECTS_PROPERTY = "n_subjects"
JOBS_PROPERTY = "jobs"
RENDER_PANELS_PROPERTY = "render_panels"
PHANTOM_PROPERTY = "phantom"
ACQUISITION_PROPERTY = "acquisition"
RECONSTRUCTION_PROPERTY = "reconstruction"
METRICS_PROPERTY = "metrics"
TSC_PROPERTY = "tsc"

PHANTOM_DIMS_PROPERTY = "dims"
PHANTOM_VOXEL_SIZE_PROPERTY = "voxel_size_mm"
PHANTOM_PRIOR_DIMS_PROPERTY = "prior_dims"
PHANTOM_GEOMETRY_PROPERTY = "geometry"
PHANTOM_PRIOR_MISMATCH_PROPERTY = "prior_mismatch"

GEOMETRY_PROPERTIES = tuple(vars(PhantomGeometry()).keys())
PRIOR_MISMATCH_PROPERTIES = tuple(vars(PriorMismatch()).keys())

ACQUISITION_SPOKES_PROPERTY = "spokes"
ACQUISITION_SAMPLES_PER_SPOKE_PROPERTY = "samples_per_spoke"
ACQUISITION_MODE_PROPERTY = "mode"
ACQUISITION_K0_FRACTION_PROPERTY = "k0_fraction"
ACQUISITION_N_COILS_PROPERTY = "n_coils"
ACQUISITION_SIGMA_PROPERTY = "sigma"
ACQUISITION_OPERATOR_PROPERTY = "operator"
ACQUISITION_KERNEL_WIDTH_PROPERTY = "kernel_width"
ACQUISITION_OVERSAMPLING_PROPERTY = "oversampling"

RECONSTRUCTION_METHODS_PROPERTY = "methods"
RECONSTRUCTION_PARAMETER_PROPERTIES = tuple(x for x in vars(ReconConfig()).keys() if x not in ("method", "seed"))

METRICS_SSIM_WINDOW_PROPERTY = "ssim_window"
METRICS_SSIM_SIGMA_PROPERTY = "ssim_sigma"
METRICS_K1_PROPERTY = "k1"
METRICS_K2_PROPERTY = "k2"
METRICS_TUMOR_MASK_DILATION_PROPERTY = "tumor_mask_dilation"
METRICS_PSF_UPSAMPLING_PROPERTY = "psf_upsampling"

TSC_REGIONS_PROPERTY = "regions"
TSC_EROSION_VOXELS_PROPERTY = "erosion_voxels"
TSC_WATER_FRACTION_PROPERTY = "water_fraction"

DEFAULT_SPOKES = (8, 16, 32, 64)
DEFAULT_METHODS = (ReconMethod.ADC, ReconMethod.WTV, ReconMethod.DTV, ReconMethod.AGTV)
DEFAULT_SIGMA = 30.0
OPERATOR_KINDS = ("gridded", "direct")


class ConfigurationError(NaQuantBaseError):
    """
    Raised when a configuration is invalid.
    """
    def __init__(self, key_path: str, message: str):
        super().__init__(f"{key_path}: {message}" if key_path else message)
        self.key_path = key_path


def _as_list(values: Optional[Sequence]) -> Optional[List]:
    return list(values) if values is not None else None


class PhantomSettings:
    """
    Phantom and 1H prior settings.
    """
    def __init__(self, dims: Sequence[int]=(64, 64), voxel_size_mm: Union[float, Sequence[float]]=4.0,
                 prior_dims: Sequence[int]=None, geometry: PhantomGeometry=None,
                 prior_mismatch: PriorMismatch=None):
        self.dims = tuple(int(x) for x in dims)
        self.voxel_size_mm = float(voxel_size_mm) if isinstance(voxel_size_mm, (int, float)) \
            else tuple(float(x) for x in voxel_size_mm)
        self.prior_dims = tuple(int(x) for x in prior_dims) if prior_dims is not None else None
        self.geometry = geometry if geometry is not None else PhantomGeometry()
        self.prior_mismatch = prior_mismatch if prior_mismatch is not None else PriorMismatch()

    @property
    def resolved_prior_dims(self) -> Sequence[int]:
        """
        The 1H prior is acquired at twice the sodium resolution unless set.
        """
        return self.prior_dims if self.prior_dims is not None else tuple(2 * n for n in self.dims)

    def validate(self):
        try:
            as_grid_size(self.dims, MINIMUM_GRID_SIZE)
            as_voxel_size(self.voxel_size_mm, len(self.dims))
            if len(self.resolved_prior_dims) != len(self.dims):
                raise ConfigurationError(f"{PHANTOM_PROPERTY}.{PHANTOM_PRIOR_DIMS_PROPERTY}",
                                         f"must have {len(self.dims)} axes")
            as_grid_size(self.resolved_prior_dims)
        except NaQuantBaseError as e:
            if isinstance(e, ConfigurationError):
                raise
            raise ConfigurationError(PHANTOM_PROPERTY, str(e)) from e


class AcquisitionSettings:
    """
    Acquisition settings shared by every spoke count of the sweep.
    """
    def __init__(self, spokes: Sequence[int]=DEFAULT_SPOKES, samples_per_spoke: int=None,
                 mode: Union[str, TrajectoryMode]=TrajectoryMode.UNIFORM, k0_fraction: float=DEFAULT_K0_FRACTION,
                 n_coils: int=8, sigma: float=DEFAULT_SIGMA, operator: str="gridded",
                 kernel_width: int=DEFAULT_KERNEL_WIDTH, oversampling: float=DEFAULT_OVERSAMPLING):
        self.spokes = tuple(int(x) for x in spokes)
        self.samples_per_spoke = int(samples_per_spoke) if samples_per_spoke is not None else None
        self.mode = TrajectoryMode(mode)
        self.k0_fraction = float(k0_fraction)
        self.n_coils = int(n_coils)
        self.sigma = float(sigma)
        self.operator = operator
        self.kernel_width = int(kernel_width)
        self.oversampling = float(oversampling)

    def resolved_samples_per_spoke(self, dims: Sequence[int]) -> int:
        """
        Nyquist radial sampling (one sample per k-space cell from centre to edge) unless set.
        """
        return self.samples_per_spoke if self.samples_per_spoke is not None else max(dims) // 2 + 1

    def validate(self):
        if len(self.spokes) == 0:
            raise ConfigurationError(f"{ACQUISITION_PROPERTY}.{ACQUISITION_SPOKES_PROPERTY}", "must not be empty")
        if any(n < 1 for n in self.spokes) or len(set(self.spokes)) != len(self.spokes):
            raise ConfigurationError(f"{ACQUISITION_PROPERTY}.{ACQUISITION_SPOKES_PROPERTY}",
                                     f"must be distinct positive counts: {list(self.spokes)}")
        if self.samples_per_spoke is not None and self.samples_per_spoke < MINIMUM_SAMPLES_PER_SPOKE:
            raise ConfigurationError(f"{ACQUISITION_PROPERTY}.{ACQUISITION_SAMPLES_PER_SPOKE_PROPERTY}",
                                     f"must be at least {MINIMUM_SAMPLES_PER_SPOKE}: {self.samples_per_spoke}")
        if not 0.0 < self.k0_fraction <= 0.5:
            raise ConfigurationError(f"{ACQUISITION_PROPERTY}.{ACQUISITION_K0_FRACTION_PROPERTY}",
                                     f"must be in (0, 0.5]: {self.k0_fraction}")
        if self.n_coils < 1:
            raise ConfigurationError(f"{ACQUISITION_PROPERTY}.{ACQUISITION_N_COILS_PROPERTY}",
                                     f"must be at least 1: {self.n_coils}")
        if self.sigma < 0:
            raise ConfigurationError(f"{ACQUISITION_PROPERTY}.{ACQUISITION_SIGMA_PROPERTY}",
                                     f"must be non-negative: {self.sigma}")
        if self.operator not in OPERATOR_KINDS:
            raise ConfigurationError(f"{ACQUISITION_PROPERTY}.{ACQUISITION_OPERATOR_PROPERTY}",
                                     f"must be one of {list(OPERATOR_KINDS)}: {self.operator}")


class ReconstructionSettings:
    """
    Methods to run and the parameters shared by them.
    """
    def __init__(self, methods: Sequence[Union[str, ReconMethod]]=DEFAULT_METHODS, **parameters):
        self.methods = tuple(ReconMethod(x) for x in methods)
        self.parameters = ReconConfig(**parameters)

    def recon_config(self, method: ReconMethod, seed: int=0) -> ReconConfig:
        """
        Creates the configuration of one method.
        :param method: the method
        :param seed: seed of the cell
        :return: the configuration
        """
        return self.parameters.copy(method=method, seed=seed)

    def validate(self):
        if len(self.methods) == 0:
            raise ConfigurationError(f"{RECONSTRUCTION_PROPERTY}.{RECONSTRUCTION_METHODS_PROPERTY}",
                                     "must not be empty")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigurationError(f"{RECONSTRUCTION_PROPERTY}.{RECONSTRUCTION_METHODS_PROPERTY}",
                                     "must not repeat a method")
        try:
            self.parameters.validate()
        except NaQuantBaseError as e:
            raise ConfigurationError(RECONSTRUCTION_PROPERTY, str(e)) from e


class MetricsSettings:
    def __init__(self, ssim_window: int=11, ssim_sigma: float=1.5, k1: float=0.01, k2: float=0.03,
                 tumor_mask_dilation: int=2, psf_upsampling: int=8):
        self.ssim_window = int(ssim_window)
        self.ssim_sigma = float(ssim_sigma)
        self.k1 = float(k1)
        self.k2 = float(k2)
        self.tumor_mask_dilation = int(tumor_mask_dilation)
        self.psf_upsampling = int(psf_upsampling)

    def validate(self):
        if self.ssim_window < 1 or self.ssim_window % 2 == 0:
            raise ConfigurationError(f"{METRICS_PROPERTY}.{METRICS_SSIM_WINDOW_PROPERTY}",
                                     f"must be a positive odd number: {self.ssim_window}")
        if self.tumor_mask_dilation < 0:
            raise ConfigurationError(f"{METRICS_PROPERTY}.{METRICS_TUMOR_MASK_DILATION_PROPERTY}",
                                     f"must be non-negative: {self.tumor_mask_dilation}")
        if self.psf_upsampling < 1:
            raise ConfigurationError(f"{METRICS_PROPERTY}.{METRICS_PSF_UPSAMPLING_PROPERTY}",
                                     f"must be at least 1: {self.psf_upsampling}")


class TscSettings:
    def __init__(self, regions: Sequence[str]=(ADIPOSE, GLANDULAR, TUMOR, SKIN), erosion_voxels: int=1,
                 water_fraction: float=TISSUE_WATER_FRACTION):
        self.regions = tuple(regions)
        self.erosion_voxels = int(erosion_voxels)
        self.water_fraction = float(water_fraction)

    def validate(self):
        unknown = [x for x in self.regions if x not in TISSUE_COMPARTMENTS]
        if len(self.regions) == 0 or len(unknown) > 0:
            raise ConfigurationError(f"{TSC_PROPERTY}.{TSC_REGIONS_PROPERTY}",
                                     f"must be tissue compartments {list(TISSUE_COMPARTMENTS)}: {list(self.regions)}")
        if self.erosion_voxels < 0:
            raise ConfigurationError(f"{TSC_PROPERTY}.{TSC_EROSION_VOXELS_PROPERTY}",
                                     f"must be non-negative: {self.erosion_voxels}")
        if not 0.0 < self.water_fraction <= 1.0:
            raise ConfigurationError(f"{TSC_PROPERTY}.{TSC_WATER_FRACTION_PROPERTY}",
                                     f"must be in (0, 1]: {self.water_fraction}")


class PipelineConfig:
    """
    Configuration of a full simulation experiment.
    """
    def __init__(self, version: int=SCHEMA_VERSION, output_directory: str=".", master_seed: int=0,
                 n_subjects: int=1, jobs: int=1, render_panels: bool=False, phantom: PhantomSettings=None,
                 acquisition: AcquisitionSettings=None, reconstruction: ReconstructionSettings=None,
                 metrics: MetricsSettings=None, tsc: TscSettings=None):
        self.version = int(version)
        self.output_directory = output_directory
        self.master_seed = int(master_seed)
        self.n_subjects = int(n_subjects)
        self.jobs = int(jobs)
        self.render_panels = bool(render_panels)
        self.phantom = phantom if phantom is not None else PhantomSettings()
        self.acquisition = acquisition if acquisition is not None else AcquisitionSettings()
        self.reconstruction = reconstruction if reconstruction is not None else ReconstructionSettings()
        self.metrics = metrics if metrics is not None else MetricsSettings()
        self.tsc = tsc if tsc is not None else TscSettings()

    def validate(self):
        """
        Checks the configuration.
        :raises ConfigurationError: naming the offending key if the configuration is invalid
        """
        if self.version != SCHEMA_VERSION:
            raise ConfigurationError(VERSION_PROPERTY, f"unsupported schema version: {self.version}")
        if self.n_subjects < 1:
            raise ConfigurationError(N_SUBJECTS_PROPERTY, f"must be at least 1: {self.n_subjects}")
        if self.jobs < 1:
            raise ConfigurationError(JOBS_PROPERTY, f"must be at least 1: {self.jobs}")
        for section in (self.phantom, self.acquisition, self.reconstruction, self.metrics, self.tsc):
            section.validate()


def read_configuration(location: str) -> PipelineConfig:
    """
    Reads the configuration file in the given location.
    :param location: location of the configuration file
    :return: parsed configuration from file
    :raises ConfigurationError: if the file cannot be read or the configuration is invalid
    """
    location = _process_path(location)
    try:
        with open(location, "r", encoding=DEFAULT_ENCODING) as file:
            file_context = file.read()
    except OSError as e:
        raise ConfigurationError("", f"Cannot read configuration file {location}: {e}") from e
    return read_configuration_text(file_context, os.path.abspath(os.path.dirname(location)))


def read_configuration_text(text: str, paths_relative_to: str=None) -> PipelineConfig:
    """
    Reads a configuration from YAML text, rendered as a Jinja2 template with the environment variables as `env`.
    :param text: the configuration
    :param paths_relative_to: directory that relative paths are resolved against (working directory if `None`)
    :return: the parsed configuration
    :raises ConfigurationError: if the configuration is invalid
    """
    rendered_file_contents = Template(text).render(env=os.environ)
    try:
        raw_configuration = yaml.safe_load(rendered_file_contents)
    except yaml.YAMLError as e:
        raise ConfigurationError("", f"Invalid YAML: {e}") from e
    if raw_configuration is None:
        raw_configuration = {}

    configuration = parse_configuration(raw_configuration)
    configuration.output_directory = _process_path(configuration.output_directory, paths_relative_to)
    return configuration


def parse_configuration(raw_configuration: Dict[str, Any]) -> PipelineConfig:
    """
    Parses a configuration from its (YAML-loaded) dictionary form.
    :param raw_configuration: the parsed configuration document
    :return: the validated configuration
    :raises ConfigurationError: if a key is unknown or a value is invalid
    """
    _check_keys(raw_configuration, _SCHEMA, "")
    try:
        configuration = PipelineConfigJSONDecoder().decode_parsed(raw_configuration)
    except (TypeError, ValueError, KeyError) as e:
        raise ConfigurationError("", f"Invalid configuration value: {e}") from e
    configuration.validate()
    return configuration


def write_configuration(configuration: PipelineConfig, location: str):
    """
    Writes a configuration as YAML.
    """
    with open(location, "w", encoding=DEFAULT_ENCODING) as file:
        yaml.safe_dump(PipelineConfigJSONEncoder().default(configuration), file, default_flow_style=False)


def _check_keys(raw: Any, schema: Dict[str, Optional[Dict]], key_path: str):
    if not isinstance(raw, dict):
        raise ConfigurationError(key_path, "must be a mapping")
    for key, value in raw.items():
        path = f"{key_path}.{key}" if key_path else str(key)
        if key not in schema:
            raise ConfigurationError(path, "unknown key")
        if schema[key] is not None and value is not None:
            _check_keys(value, schema[key], path)


def _process_path(path: str, path_relative_to: str=None) -> str:
    """
    Processes the given path.
    :param path: path to process
    :param path_relative_to: path to make given path relative to if it is relative (working directory if `None`)
    :return: absolute path
    """
    path = os.path.expanduser(path)
    path_relative_to = path_relative_to if path_relative_to is not None else os.getcwd()
    return os.path.join(path_relative_to, path) if not os.path.isabs(path) else path


_SCHEMA = {
    VERSION_PROPERTY: None, OUTPUT_DIRECTORY_PROPERTY: None, MASTER_SEED_PROPERTY: None, N_SUBJECTS_PROPERTY: None,
    JOBS_PROPERTY: None, RENDER_PANELS_PROPERTY: None,
    PHANTOM_PROPERTY: {
        PHANTOM_DIMS_PROPERTY: None, PHANTOM_VOXEL_SIZE_PROPERTY: None, PHANTOM_PRIOR_DIMS_PROPERTY: None,
        PHANTOM_GEOMETRY_PROPERTY: {x: None for x in GEOMETRY_PROPERTIES},
        PHANTOM_PRIOR_MISMATCH_PROPERTY: {x: None for x in PRIOR_MISMATCH_PROPERTIES}},
    ACQUISITION_PROPERTY: {x: None for x in (
        ACQUISITION_SPOKES_PROPERTY, ACQUISITION_SAMPLES_PER_SPOKE_PROPERTY, ACQUISITION_MODE_PROPERTY,
        ACQUISITION_K0_FRACTION_PROPERTY, ACQUISITION_N_COILS_PROPERTY, ACQUISITION_SIGMA_PROPERTY,
        ACQUISITION_OPERATOR_PROPERTY, ACQUISITION_KERNEL_WIDTH_PROPERTY, ACQUISITION_OVERSAMPLING_PROPERTY)},
    RECONSTRUCTION_PROPERTY: {x: None for x in (RECONSTRUCTION_METHODS_PROPERTY, ) + RECONSTRUCTION_PARAMETER_PROPERTIES},
    METRICS_PROPERTY: {x: None for x in (
        METRICS_SSIM_WINDOW_PROPERTY, METRICS_SSIM_SIGMA_PROPERTY, METRICS_K1_PROPERTY, METRICS_K2_PROPERTY,
        METRICS_TUMOR_MASK_DILATION_PROPERTY, METRICS_PSF_UPSAMPLING_PROPERTY)},
    TSC_PROPERTY: {x: None for x in (TSC_REGIONS_PROPERTY, TSC_EROSION_VOXELS_PROPERTY, TSC_WATER_FRACTION_PROPERTY)}
}


def _sequence_getter(name: str):
    return lambda obj: _as_list(getattr(obj, name))


_geometry_mappings = [
    JsonPropertyMapping(name, object_constructor_parameter_name=name, object_property_getter=_sequence_getter(name),
                        optional=True)
    if isinstance(value, tuple) else JsonPropertyMapping(name, name, name, optional=True)
    for name, value in vars(PhantomGeometry()).items()
]
PhantomGeometryJSONEncoder = MappingJSONEncoderClassBuilder(PhantomGeometry, _geometry_mappings).build()
PhantomGeometryJSONDecoder = MappingJSONDecoderClassBuilder(PhantomGeometry, _geometry_mappings).build()

_prior_mismatch_mappings = [
    JsonPropertyMapping("shift_mm", object_constructor_parameter_name="shift_mm",
                        object_property_getter=_sequence_getter("shift_mm"), optional=True),
    JsonPropertyMapping("extra_edge_center", object_constructor_parameter_name="extra_edge_center",
                        object_property_getter=_sequence_getter("extra_edge_center"), optional=True),
    JsonPropertyMapping("extra_edge_radius_mm", "extra_edge_radius_mm", "extra_edge_radius_mm", optional=True),
    JsonPropertyMapping("delete_tumor_edge", "delete_tumor_edge", "delete_tumor_edge", optional=True)
]
PriorMismatchJSONEncoder = MappingJSONEncoderClassBuilder(PriorMismatch, _prior_mismatch_mappings).build()
PriorMismatchJSONDecoder = MappingJSONDecoderClassBuilder(PriorMismatch, _prior_mismatch_mappings).build()

_phantom_settings_mappings = [
    JsonPropertyMapping(PHANTOM_DIMS_PROPERTY, object_constructor_parameter_name="dims",
                        object_property_getter=_sequence_getter("dims"), optional=True),
    JsonPropertyMapping(PHANTOM_VOXEL_SIZE_PROPERTY, object_constructor_parameter_name="voxel_size_mm",
                        object_property_getter=lambda obj: obj.voxel_size_mm if isinstance(obj.voxel_size_mm, float)
                        else list(obj.voxel_size_mm), optional=True),
    JsonPropertyMapping(PHANTOM_PRIOR_DIMS_PROPERTY, object_constructor_parameter_name="prior_dims",
                        object_property_getter=_sequence_getter("prior_dims"), optional=True),
    JsonPropertyMapping(PHANTOM_GEOMETRY_PROPERTY, "geometry", "geometry", optional=True,
                        encoder_cls=PhantomGeometryJSONEncoder, decoder_cls=PhantomGeometryJSONDecoder),
    JsonPropertyMapping(PHANTOM_PRIOR_MISMATCH_PROPERTY, "prior_mismatch", "prior_mismatch", optional=True,
                        encoder_cls=PriorMismatchJSONEncoder, decoder_cls=PriorMismatchJSONDecoder)
]
PhantomSettingsJSONEncoder = MappingJSONEncoderClassBuilder(PhantomSettings, _phantom_settings_mappings).build()
PhantomSettingsJSONDecoder = MappingJSONDecoderClassBuilder(PhantomSettings, _phantom_settings_mappings).build()

_acquisition_settings_mappings = [
    JsonPropertyMapping(ACQUISITION_SPOKES_PROPERTY, object_constructor_parameter_name="spokes",
                        object_property_getter=_sequence_getter("spokes"), optional=True),
    JsonPropertyMapping(ACQUISITION_SAMPLES_PER_SPOKE_PROPERTY, "samples_per_spoke", "samples_per_spoke",
                        optional=True),
    JsonPropertyMapping(ACQUISITION_MODE_PROPERTY, object_constructor_parameter_name="mode",
                        object_property_getter=lambda obj: obj.mode.value, optional=True),
    JsonPropertyMapping(ACQUISITION_K0_FRACTION_PROPERTY, "k0_fraction", "k0_fraction", optional=True),
    JsonPropertyMapping(ACQUISITION_N_COILS_PROPERTY, "n_coils", "n_coils", optional=True),
    JsonPropertyMapping(ACQUISITION_SIGMA_PROPERTY, "sigma", "sigma", optional=True),
    JsonPropertyMapping(ACQUISITION_OPERATOR_PROPERTY, "operator", "operator", optional=True),
    JsonPropertyMapping(ACQUISITION_KERNEL_WIDTH_PROPERTY, "kernel_width", "kernel_width", optional=True),
    JsonPropertyMapping(ACQUISITION_OVERSAMPLING_PROPERTY, "oversampling", "oversampling", optional=True)
]
AcquisitionSettingsJSONEncoder = MappingJSONEncoderClassBuilder(
    AcquisitionSettings, _acquisition_settings_mappings).build()
AcquisitionSettingsJSONDecoder = MappingJSONDecoderClassBuilder(
    AcquisitionSettings, _acquisition_settings_mappings).build()

_reconstruction_settings_mappings = [
    JsonPropertyMapping(RECONSTRUCTION_METHODS_PROPERTY, object_constructor_parameter_name="methods",
                        object_property_getter=lambda obj: [x.value for x in obj.methods], optional=True)
] + [
    JsonPropertyMapping(name, object_constructor_parameter_name=name,
                        object_property_getter=lambda obj, name=name: getattr(obj.parameters, name), optional=True)
    for name in RECONSTRUCTION_PARAMETER_PROPERTIES
]
ReconstructionSettingsJSONEncoder = MappingJSONEncoderClassBuilder(
    ReconstructionSettings, _reconstruction_settings_mappings).build()
ReconstructionSettingsJSONDecoder = MappingJSONDecoderClassBuilder(
    ReconstructionSettings, _reconstruction_settings_mappings).build()

_metrics_settings_mappings = [
    JsonPropertyMapping(name, name, name, optional=True) for name in (
        METRICS_SSIM_WINDOW_PROPERTY, METRICS_SSIM_SIGMA_PROPERTY, METRICS_K1_PROPERTY, METRICS_K2_PROPERTY,
        METRICS_TUMOR_MASK_DILATION_PROPERTY, METRICS_PSF_UPSAMPLING_PROPERTY)
]
MetricsSettingsJSONEncoder = MappingJSONEncoderClassBuilder(MetricsSettings, _metrics_settings_mappings).build()
MetricsSettingsJSONDecoder = MappingJSONDecoderClassBuilder(MetricsSettings, _metrics_settings_mappings).build()

_tsc_settings_mappings = [
    JsonPropertyMapping(TSC_REGIONS_PROPERTY, object_constructor_parameter_name="regions",
                        object_property_getter=_sequence_getter("regions"), optional=True),
    JsonPropertyMapping(TSC_EROSION_VOXELS_PROPERTY, "erosion_voxels", "erosion_voxels", optional=True),
    JsonPropertyMapping(TSC_WATER_FRACTION_PROPERTY, "water_fraction", "water_fraction", optional=True)
]
TscSettingsJSONEncoder = MappingJSONEncoderClassBuilder(TscSettings, _tsc_settings_mappings).build()
TscSettingsJSONDecoder = MappingJSONDecoderClassBuilder(TscSettings, _tsc_settings_mappings).build()

_pipeline_config_mappings = [
    JsonPropertyMapping(VERSION_PROPERTY, "version", "version", optional=True),
    JsonPropertyMapping(OUTPUT_DIRECTORY_PROPERTY, "output_directory", "output_directory", optional=True),
    JsonPropertyMapping(MASTER_SEED_PROPERTY, "master_seed", "master_seed", optional=True),
    JsonPropertyMapping(N_SUBJECTS_PROPERTY, "n_subjects", "n_subjects", optional=True),
    JsonPropertyMapping(JOBS_PROPERTY, "jobs", "jobs", optional=True),
    JsonPropertyMapping(RENDER_PANELS_PROPERTY, "render_panels", "render_panels", optional=True),
    JsonPropertyMapping(PHANTOM_PROPERTY, "phantom", "phantom", optional=True,
                        encoder_cls=PhantomSettingsJSONEncoder, decoder_cls=PhantomSettingsJSONDecoder),
    JsonPropertyMapping(ACQUISITION_PROPERTY, "acquisition", "acquisition", optional=True,
                        encoder_cls=AcquisitionSettingsJSONEncoder, decoder_cls=AcquisitionSettingsJSONDecoder),
    JsonPropertyMapping(RECONSTRUCTION_PROPERTY, "reconstruction", "reconstruction", optional=True,
                        encoder_cls=ReconstructionSettingsJSONEncoder,
                        decoder_cls=ReconstructionSettingsJSONDecoder),
    JsonPropertyMapping(METRICS_PROPERTY, "metrics", "metrics", optional=True,
                        encoder_cls=MetricsSettingsJSONEncoder, decoder_cls=MetricsSettingsJSONDecoder),
    JsonPropertyMapping(TSC_PROPERTY, "tsc", "tsc", optional=True,
                        encoder_cls=TscSettingsJSONEncoder, decoder_cls=TscSettingsJSONDecoder)
]
PipelineConfigJSONEncoder = MappingJSONEncoderClassBuilder(PipelineConfig, _pipeline_config_mappings).build()
PipelineConfigJSONDecoder = MappingJSONDecoderClassBuilder(PipelineConfig, _pipeline_config_mappings).build()
