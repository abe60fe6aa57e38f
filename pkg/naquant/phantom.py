from typing import NamedTuple, Tuple, Sequence, Dict, Optional, Iterable, List

import numpy as np
from scipy import ndimage
from scipy.stats import norm

from naquant._logging import create_logger
from naquant.common import NaQuantBaseError, ImageVolume, InvalidGridError, GridSize, as_grid_size, as_voxel_size, \
    MINIMUM_GRID_SIZE, CONCENTRATION_UNITS, SIGNAL_UNITS

BACKGROUND = "background"
ADIPOSE = "adipose"
GLANDULAR = "glandular"
TUMOR = "tumor"
VIAL_77 = "vial77"
VIAL_154 = "vial154"
SKIN = "skin"

COMPARTMENT_LABELS = {BACKGROUND: 0, ADIPOSE: 1, GLANDULAR: 2, TUMOR: 3, VIAL_77: 4, VIAL_154: 5, SKIN: 6}
TISSUE_COMPARTMENTS = (ADIPOSE, GLANDULAR, TUMOR, SKIN)
VIAL_COMPARTMENTS = (VIAL_77, VIAL_154)

DEFAULT_CONCENTRATIONS = {BACKGROUND: 0.0, ADIPOSE: 20.0, GLANDULAR: 40.0, TUMOR: 80.0, VIAL_77: 77.0,
                          VIAL_154: 154.0, SKIN: 30.0}
TISSUE_WATER_FRACTION = 0.75
VIAL_WATER_FRACTION = 1.0

# Relative proton-density-like brightness of each compartment in the synthetic 1H image
PRIOR_INTENSITIES = {BACKGROUND: 0.0, ADIPOSE: 1.0, GLANDULAR: 0.55, TUMOR: 0.4, VIAL_77: 0.15, VIAL_154: 0.15,
                     SKIN: 0.7}

TEXTURE_WAVES = 64

logger = create_logger(__name__)


class GeometryConflictError(NaQuantBaseError):
    """
    Raised when phantom objects overlap each other or do not fit in the field of view.
    """


class UnknownRegionError(NaQuantBaseError):
    """
    Raised when a region (compartment) name is not known to a phantom.
    """


class InvalidCompartmentError(NaQuantBaseError):
    """
    Raised when a compartment table is invalid or does not cover every label in a phantom.
    """


class EmptyMaskError(NaQuantBaseError):
    """
    Raised when a region mask has no voxels.
    """
    def __init__(self, region_name: str, message: str=None):
        super().__init__(message if message is not None else f"Mask for region \"{region_name}\" is empty")
        self.region_name = region_name


class InvalidMismatchError(NaQuantBaseError):
    """
    Raised when a prior mismatch cannot be applied.
    """


class Compartment(NamedTuple):
    """
    Tissue compartment with a known sodium concentration (mmol/L) and water fraction.
    """
    label: int
    name: str
    concentration: float
    water_fraction: float


class PhantomGeometry:
    """
    Resolution independent description of a breast phantom.

    Centres and radii of the breast are fractions of the field of view (FOV), in array-axis order. 2D values are
    left-padded when a 3D phantom is built. Other sizes are in mm.
    """
    def __init__(self, breast_center: Sequence[float]=(0.0, 0.06), breast_radii: Sequence[float]=(0.30, 0.36),
                 skin_thickness_mm: float=3.0, include_skin: bool=True, glandular_fraction: float=0.35,
                 texture_scale_mm: float=30.0, tumor_center: Sequence[float]=(0.05, 0.12),
                 tumor_radius_mm: float=12.0, tumor_concentration: float=DEFAULT_CONCENTRATIONS[TUMOR],
                 vial_77_center: Sequence[float]=(-0.36, -0.36), vial_154_center: Sequence[float]=(-0.36, 0.36),
                 vial_radius_mm: float=10.0):
        self.breast_center = tuple(float(x) for x in breast_center)
        self.breast_radii = tuple(float(x) for x in breast_radii)
        self.skin_thickness_mm = float(skin_thickness_mm)
        self.include_skin = bool(include_skin)
        self.glandular_fraction = float(glandular_fraction)
        self.texture_scale_mm = float(texture_scale_mm)
        self.tumor_center = tuple(float(x) for x in tumor_center)
        self.tumor_radius_mm = float(tumor_radius_mm)
        self.tumor_concentration = float(tumor_concentration)
        self.vial_77_center = tuple(float(x) for x in vial_77_center)
        self.vial_154_center = tuple(float(x) for x in vial_154_center)
        self.vial_radius_mm = float(vial_radius_mm)

    def __eq__(self, other) -> bool:
        return isinstance(other, PhantomGeometry) and vars(self) == vars(other)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({', '.join(f'{x}={y!r}' for x, y in vars(self).items())})"

    def copy(self, **changes) -> "PhantomGeometry":
        """
        Creates a copy of this geometry with the given fields changed.
        :param changes: fields to change
        :return: the copy
        """
        return PhantomGeometry(**{**vars(self), **changes})


class PriorMismatch:
    """
    Deliberate differences between the 1H prior and the sodium ground truth.
    """
    def __init__(self, shift_mm: Sequence[float]=None, extra_edge_center: Sequence[float]=None,
                 extra_edge_radius_mm: float=0.0, delete_tumor_edge: bool=False):
        self.shift_mm = tuple(float(x) for x in shift_mm) if shift_mm is not None else None
        self.extra_edge_center = tuple(float(x) for x in extra_edge_center) \
            if extra_edge_center is not None else None
        self.extra_edge_radius_mm = float(extra_edge_radius_mm)
        self.delete_tumor_edge = bool(delete_tumor_edge)

    @property
    def is_empty(self) -> bool:
        return (self.shift_mm is None or not any(self.shift_mm)) and not self.has_extra_edge \
            and not self.delete_tumor_edge

    @property
    def has_extra_edge(self) -> bool:
        return self.extra_edge_center is not None and self.extra_edge_radius_mm > 0

    @property
    def description(self) -> Optional[str]:
        if self.is_empty:
            return None
        parts = []
        if self.shift_mm is not None and any(self.shift_mm):
            parts.append(f"shift_mm={','.join(f'{x:g}' for x in self.shift_mm)}")
        if self.has_extra_edge:
            parts.append(f"extra_edge={','.join(f'{x:g}' for x in self.extra_edge_center)}"
                         f"@{self.extra_edge_radius_mm:g}mm")
        if self.delete_tumor_edge:
            parts.append("delete_tumor_edge")
        return ";".join(parts)


class DigitalPhantom:
    """
    Label grid with a compartment table.
    """
    @property
    def labels(self) -> np.ndarray:
        return self._labels

    @property
    def dims(self) -> GridSize:
        return tuple(self._labels.shape)

    @property
    def ndim(self) -> int:
        return self._labels.ndim

    @property
    def field_of_view(self) -> Tuple[float, ...]:
        return tuple(n * size for n, size in zip(self.dims, self.voxel_size))

    def __init__(self, labels: np.ndarray, compartments: Iterable[Compartment], voxel_size: Sequence[float],
                 seed: int, geometry: PhantomGeometry=None):
        """
        Constructor.
        :param labels: integer label grid (2D or 3D)
        :param compartments: compartment table (must cover every label in the grid)
        :param voxel_size: voxel size in mm per axis
        :param seed: seed the phantom was generated with
        :param geometry: geometry the labels were rasterised from, if any
        :raises InvalidGridError: if the grid is too small or the voxel size invalid
        :raises InvalidCompartmentError: if the compartment table is invalid
        """
        as_grid_size(labels.shape, MINIMUM_GRID_SIZE)
        self.voxel_size = as_voxel_size(voxel_size, labels.ndim)
        self.compartments: List[Compartment] = sorted(compartments, key=lambda compartment: compartment.label)
        self.seed = int(seed)
        self.geometry = geometry

        seen_labels = set()
        for compartment in self.compartments:
            if compartment.label in seen_labels:
                raise InvalidCompartmentError(f"Duplicate compartment label: {compartment.label}")
            seen_labels.add(compartment.label)
            if compartment.concentration < 0:
                raise InvalidCompartmentError(f"Negative concentration for {compartment.name}")
            if not 0.0 <= compartment.water_fraction <= 1.0:
                raise InvalidCompartmentError(f"Water fraction of {compartment.name} not in [0, 1]")

        self._labels = np.array(labels, dtype=np.int32)
        uncovered = set(np.unique(self._labels).tolist()) - seen_labels
        if len(uncovered) > 0:
            raise InvalidCompartmentError(f"Labels without a compartment: {sorted(uncovered)}")
        self._labels.setflags(write=False)

    def compartment(self, name: str) -> Compartment:
        """
        Gets the compartment with the given name.
        :param name: the compartment name
        :return: the compartment
        :raises UnknownRegionError: if there is no such compartment
        """
        for compartment in self.compartments:
            if compartment.name == name:
                return compartment
        raise UnknownRegionError(f"Unknown region: {name}")

    def concentration_map(self) -> ImageVolume:
        return ImageVolume(self._lookup(lambda compartment: compartment.concentration), self.voxel_size,
                           CONCENTRATION_UNITS)

    def water_fraction_map(self) -> np.ndarray:
        return self._lookup(lambda compartment: compartment.water_fraction)

    def ideal_image(self) -> ImageVolume:
        """
        Noiseless sodium signal image (concentration scaled by water fraction).
        :return: the signal image
        """
        return ImageVolume(self._lookup(lambda compartment: compartment.concentration * compartment.water_fraction),
                           self.voxel_size, SIGNAL_UNITS)

    def _lookup(self, value_getter) -> np.ndarray:
        table = np.zeros(max(compartment.label for compartment in self.compartments) + 1)
        for compartment in self.compartments:
            table[compartment.label] = value_getter(compartment)
        return table[self._labels]


class PriorImage(NamedTuple):
    """
    Synthetic 1H anatomical image used to guide reconstructions.
    """
    values: np.ndarray
    voxel_size: Tuple[float, ...]
    mismatch_description: Optional[str] = None

    @property
    def dims(self) -> GridSize:
        return tuple(self.values.shape)

    def as_volume(self) -> ImageVolume:
        return ImageVolume(self.values, self.voxel_size, SIGNAL_UNITS)


class RegionMask(NamedTuple):
    """
    Boolean mask of a named region.
    """
    voxels: np.ndarray
    region_name: str

    @property
    def n_voxels(self) -> int:
        return int(np.count_nonzero(self.voxels))


class BackgroundMask(NamedTuple):
    """
    Boolean mask of the air surrounding the imaged objects.
    """
    voxels: np.ndarray


def default_compartments(tumor_concentration: float=DEFAULT_CONCENTRATIONS[TUMOR]) -> List[Compartment]:
    """
    Creates the standard seven-compartment table.
    :param tumor_concentration: concentration assigned to the tumor
    :return: the compartments, ordered by label
    """
    compartments = []
    for name, label in COMPARTMENT_LABELS.items():
        concentration = tumor_concentration if name == TUMOR else DEFAULT_CONCENTRATIONS[name]
        if name == BACKGROUND:
            water_fraction = 0.0
        elif name in VIAL_COMPARTMENTS:
            water_fraction = VIAL_WATER_FRACTION
        else:
            water_fraction = TISSUE_WATER_FRACTION
        compartments.append(Compartment(label, name, float(concentration), water_fraction))
    return compartments


def build_breast_phantom(dims: Sequence[int], voxel_size: float, geometry: PhantomGeometry=None,
                         seed: int=0) -> DigitalPhantom:
    """
    Builds a digital breast phantom.
    :param dims: grid size (2D or 3D, at least 16 per axis)
    :param voxel_size: voxel size in mm (scalar or per axis)
    :param geometry: phantom geometry (default geometry if `None`)
    :param seed: seed of the glandular texture
    :return: the phantom
    :raises InvalidGridError: if the grid is too small
    :raises GeometryConflictError: if objects overlap or leave the field of view
    """
    dims = as_grid_size(dims, MINIMUM_GRID_SIZE)
    voxel_size = as_voxel_size(voxel_size, len(dims))
    geometry = geometry if geometry is not None else PhantomGeometry()
    labels = _rasterise(geometry, dims, voxel_size, seed)
    logger.debug(f"Built phantom {dims} ({voxel_size} mm) with seed {seed}")
    return DigitalPhantom(labels, default_compartments(geometry.tumor_concentration), voxel_size, seed, geometry)


def render_prior(phantom: DigitalPhantom, prior_dims: Sequence[int], mismatch: PriorMismatch=None) -> PriorImage:
    """
    Renders a synthetic 1H image of the phantom on a (finer) grid covering the same field of view.
    :param phantom: the phantom to image
    :param prior_dims: grid size of the prior (at least the phantom grid size on every axis)
    :param mismatch: deliberate differences to introduce
    :return: the prior image
    :raises InvalidGridError: if the prior grid is coarser than the phantom grid
    :raises InvalidMismatchError: if the mismatch cannot be applied
    """
    prior_dims = as_grid_size(prior_dims)
    if len(prior_dims) != phantom.ndim or any(x < y for x, y in zip(prior_dims, phantom.dims)):
        raise InvalidGridError(f"Prior grid {prior_dims} must not be coarser than phantom grid {phantom.dims}")
    mismatch = mismatch if mismatch is not None else PriorMismatch()
    voxel_size = tuple(fov / n for fov, n in zip(phantom.field_of_view, prior_dims))

    if mismatch.shift_mm is not None:
        if len(mismatch.shift_mm) != phantom.ndim:
            raise InvalidMismatchError(f"Shift {mismatch.shift_mm} does not have {phantom.ndim} axes")
        if any(abs(shift) > fov for shift, fov in zip(mismatch.shift_mm, phantom.field_of_view)):
            raise InvalidMismatchError(f"Shift {mismatch.shift_mm} mm is larger than the field of view")

    if phantom.geometry is not None:
        geometry = phantom.geometry
        if mismatch.delete_tumor_edge:
            geometry = geometry.copy(tumor_radius_mm=0.0)
        labels = _rasterise(geometry, prior_dims, voxel_size, phantom.seed)
    else:
        if mismatch.delete_tumor_edge:
            raise InvalidMismatchError("Cannot delete the tumor edge of a phantom without geometry")
        labels = _nearest_resample(phantom.labels, prior_dims)

    intensities = np.zeros(max(COMPARTMENT_LABELS.values()) + 1)
    for name, label in COMPARTMENT_LABELS.items():
        intensities[label] = PRIOR_INTENSITIES[name]
    values = intensities[labels]

    if mismatch.has_extra_edge:
        center = _pad_left(mismatch.extra_edge_center, len(prior_dims), 0.0)
        coordinates = _physical_coordinates(prior_dims, voxel_size)
        fov = tuple(n * size for n, size in zip(prior_dims, voxel_size))
        disc = _ball(coordinates, tuple(c * f for c, f in zip(center, fov)), mismatch.extra_edge_radius_mm)
        values[disc] = PRIOR_INTENSITIES[GLANDULAR]

    if mismatch.shift_mm is not None and any(mismatch.shift_mm):
        shift_voxels = tuple(shift / size for shift, size in zip(mismatch.shift_mm, voxel_size))
        values = ndimage.shift(values, shift_voxels, order=1, mode="constant", cval=0.0)
        values = np.maximum(values, 0.0)

    return PriorImage(values, voxel_size, mismatch.description)


def make_mask(phantom: DigitalPhantom, region_name: str, target_dims: Sequence[int]=None,
              erosion_voxels: int=0) -> RegionMask:
    """
    Makes the mask of a compartment on the given grid.
    :param phantom: the phantom
    :param region_name: name of the compartment
    :param target_dims: grid size of the mask (phantom grid if `None`)
    :param erosion_voxels: number of erosion steps applied after resampling
    :return: the mask
    :raises UnknownRegionError: if the region is not a compartment of the phantom
    :raises EmptyMaskError: if the mask is empty
    """
    if erosion_voxels < 0:
        raise ValueError(f"Erosion must be non-negative: {erosion_voxels}")
    label = phantom.compartment(region_name).label
    target_dims = phantom.dims if target_dims is None else as_grid_size(target_dims)
    if len(target_dims) != phantom.ndim:
        raise InvalidGridError(f"Target grid {target_dims} does not match phantom dimensionality")

    region = phantom.labels == label
    if target_dims == phantom.dims:
        voxels = region.copy()
    elif all(n % m == 0 for n, m in zip(phantom.dims, target_dims)):
        factors = tuple(n // m for n, m in zip(phantom.dims, target_dims))
        shape = []
        for m, factor in zip(target_dims, factors):
            shape.extend((m, factor))
        fractions = region.reshape(shape).mean(axis=tuple(range(1, 2 * len(target_dims), 2)))
        voxels = fractions >= 0.5
    else:
        fractions = region.astype(np.float64)
        for axis, (n, m) in enumerate(zip(phantom.dims, target_dims)):
            fractions = np.moveaxis(np.tensordot(_overlap_weights(n, m), fractions, axes=([1], [axis])), 0, axis)
        voxels = fractions >= 0.5

    if erosion_voxels > 0:
        structure = ndimage.generate_binary_structure(len(target_dims), 1)
        voxels = ndimage.binary_erosion(voxels, structure=structure, iterations=erosion_voxels)

    if not np.any(voxels):
        raise EmptyMaskError(region_name)
    return RegionMask(voxels, region_name)


def resample_prior(prior: PriorImage, dims: Sequence[int]) -> PriorImage:
    """
    Linearly resamples prior intensities onto another grid covering the same field of view.
    :param prior: the prior
    :param dims: the target grid size
    :return: the resampled prior
    """
    dims = as_grid_size(dims)
    if dims == prior.dims:
        return PriorImage(prior.values.copy(), prior.voxel_size, prior.mismatch_description)
    coordinates = np.meshgrid(
        *((np.arange(m) + 0.5) * (n / m) - 0.5 for n, m in zip(prior.dims, dims)), indexing="ij")
    values = ndimage.map_coordinates(prior.values, coordinates, order=1, mode="nearest")
    voxel_size = tuple(n * size / m for n, size, m in zip(prior.dims, prior.voxel_size, dims))
    return PriorImage(np.maximum(values, 0.0), voxel_size, prior.mismatch_description)


def make_background_mask(prior: PriorImage, dims: Sequence[int], margin_voxels: int=2) -> BackgroundMask:
    """
    Makes the mask of the air region: the complement of the (dilated) object support seen in the prior.
    :param prior: the prior
    :param dims: grid size of the mask
    :param margin_voxels: dilation of the object support before taking its complement
    :return: the background mask
    """
    values = resample_prior(prior, dims).values
    support = values > 0.05 * values.max() if values.max() > 0 else np.zeros(values.shape, dtype=bool)
    if margin_voxels > 0:
        structure = ndimage.generate_binary_structure(values.ndim, 1)
        support = ndimage.binary_dilation(support, structure=structure, iterations=margin_voxels)
    return BackgroundMask(~support)


def _rasterise(geometry: PhantomGeometry, dims: GridSize, voxel_size: Tuple[float, ...], seed: int) -> np.ndarray:
    """
    Rasterises the geometry onto a grid.
    :raises GeometryConflictError: if objects overlap or leave the field of view
    """
    ndim = len(dims)
    fov = tuple(n * size for n, size in zip(dims, voxel_size))
    coordinates = _physical_coordinates(dims, voxel_size)

    breast_center = _pad_left(geometry.breast_center, ndim, 0.0)
    breast_radii = _pad_left(geometry.breast_radii, ndim, geometry.breast_radii[0])
    if any(abs(c) + r > 0.5 for c, r in zip(breast_center, breast_radii)):
        raise GeometryConflictError("Breast outline does not fit in the field of view")
    breast = sum(((x - c * f) / (r * f)) ** 2
                 for x, c, r, f in zip(coordinates, breast_center, breast_radii, fov)) <= 1.0

    if geometry.include_skin and geometry.skin_thickness_mm > 0:
        # At least one voxel thick
        thickness = max(geometry.skin_thickness_mm, min(voxel_size))
        skin = breast & (ndimage.distance_transform_edt(breast, sampling=voxel_size) <= thickness)
    else:
        skin = np.zeros(dims, dtype=bool)
    interior = breast & ~skin

    labels = np.full(dims, COMPARTMENT_LABELS[BACKGROUND], dtype=np.int32)
    labels[interior] = COMPARTMENT_LABELS[ADIPOSE]
    texture = _glandular_texture(coordinates, geometry.texture_scale_mm, seed)
    labels[interior & (texture > norm.ppf(1.0 - geometry.glandular_fraction))] = COMPARTMENT_LABELS[GLANDULAR]
    labels[skin] = COMPARTMENT_LABELS[SKIN]

    if geometry.tumor_radius_mm > 0:
        tumor_center = tuple(c * f for c, f in zip(_pad_left(geometry.tumor_center, ndim, 0.0), fov))
        tumor = _ball(coordinates, tumor_center, geometry.tumor_radius_mm)
        if np.any(tumor & ~interior):
            raise GeometryConflictError("Tumor is not contained in the breast interior")
        labels[tumor] = COMPARTMENT_LABELS[TUMOR]

    vial_centers = []
    for name, center in ((VIAL_77, geometry.vial_77_center), (VIAL_154, geometry.vial_154_center)):
        center = tuple(c * f for c, f in zip(_pad_left(center, ndim, 0.0), fov))
        if any(abs(c) + geometry.vial_radius_mm > f / 2 for c, f in zip(center, fov)):
            raise GeometryConflictError(f"Vial {name} does not fit in the field of view")
        vial_centers.append(center)
        vial = _ball(coordinates, center, geometry.vial_radius_mm)
        if np.any(vial & breast):
            raise GeometryConflictError(f"Vial {name} overlaps the breast")
        labels[vial] = COMPARTMENT_LABELS[name]

    if np.linalg.norm(np.subtract(*vial_centers)) < 2 * geometry.vial_radius_mm:
        raise GeometryConflictError("Calibration vials overlap")

    return labels


def _glandular_texture(coordinates: List[np.ndarray], scale_mm: float, seed: int) -> np.ndarray:
    """
    Seeded band-limited random field with zero mean and unit variance, evaluated at physical coordinates.
    """
    ndim = len(coordinates)
    rng = np.random.default_rng(seed)
    directions = rng.normal(size=(TEXTURE_WAVES, ndim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    frequencies = directions * (rng.uniform(0.5, 1.5, size=TEXTURE_WAVES) / scale_mm)[:, np.newaxis]
    phases = rng.uniform(0.0, 2 * np.pi, size=TEXTURE_WAVES)

    field = np.zeros(coordinates[0].shape)
    for frequency, phase in zip(frequencies, phases):
        field += np.cos(2 * np.pi * sum(f * x for f, x in zip(frequency, coordinates)) + phase)
    return field * np.sqrt(2.0 / TEXTURE_WAVES)


def _physical_coordinates(dims: GridSize, voxel_size: Tuple[float, ...]) -> List[np.ndarray]:
    """
    Voxel-centre coordinates in mm, with the origin at the centre of the field of view.
    """
    axes = ((np.arange(n) + 0.5) * size - n * size / 2 for n, size in zip(dims, voxel_size))
    return np.meshgrid(*axes, indexing="ij")


def _ball(coordinates: List[np.ndarray], center: Sequence[float], radius: float) -> np.ndarray:
    if radius <= 0:
        return np.zeros(coordinates[0].shape, dtype=bool)
    return sum((x - c) ** 2 for x, c in zip(coordinates, center)) < radius ** 2


def _pad_left(values: Sequence[float], ndim: int, fill: float) -> Tuple[float, ...]:
    values = tuple(values)
    if len(values) > ndim:
        raise GeometryConflictError(f"Geometry value {values} has more than {ndim} axes")
    return (fill, ) * (ndim - len(values)) + values


def _nearest_resample(grid: np.ndarray, dims: GridSize) -> np.ndarray:
    indices = [np.minimum(((np.arange(m) + 0.5) * n / m).astype(int), n - 1) for n, m in zip(grid.shape, dims)]
    return grid[np.ix_(*indices)]


def _overlap_weights(n: int, m: int) -> np.ndarray:
    """
    Fraction of each of `m` coarse voxels covered by each of `n` fine voxels spanning the same extent.
    """
    fine = np.arange(n + 1) / n
    coarse = np.arange(m + 1) / m
    overlap = np.minimum(coarse[1:, None], fine[None, 1:]) - np.maximum(coarse[:-1, None], fine[None, :-1])
    return np.maximum(overlap, 0.0) * m
