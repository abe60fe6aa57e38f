from abc import ABCMeta
from typing import NamedTuple, Tuple, Sequence, Union

import numpy as np

DEFAULT_ENCODING = "utf-8"

SIGNAL_UNITS = "a.u."
CONCENTRATION_UNITS = "mmol/L"
LABEL_UNITS = "label"

MINIMUM_GRID_SIZE = 16

GridSize = Tuple[int, ...]


class NaQuantBaseError(Exception, metaclass=ABCMeta):
    """
    Base exception for package.
    """


class InvalidGridError(NaQuantBaseError):
    """
    Raised when a grid size or voxel size is not usable.
    """


class DimensionMismatchError(NaQuantBaseError):
    """
    Raised when two grids (or a grid and a data set) that must agree in shape do not.
    """


class ImageVolume(NamedTuple):
    """
    Scalar 2D or 3D image on a regular grid.
    """
    values: np.ndarray
    voxel_size: Tuple[float, ...]
    units: str = SIGNAL_UNITS

    @property
    def dims(self) -> GridSize:
        return tuple(self.values.shape)

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def field_of_view(self) -> Tuple[float, ...]:
        """
        Physical extent of the grid in mm, per axis.
        """
        return tuple(float(n * size) for n, size in zip(self.values.shape, self.voxel_size))

    def with_values(self, values: np.ndarray, units: str=None) -> "ImageVolume":
        """
        Creates a volume on the same grid holding the given values.
        :param values: the new values (must have the same shape)
        :param units: units of the new values (defaults to the current units)
        :return: the new volume
        """
        if values.shape != self.values.shape:
            raise DimensionMismatchError(f"Expected values of shape {self.values.shape}, got {values.shape}")
        return ImageVolume(values, self.voxel_size, self.units if units is None else units)


def as_grid_size(dims: Sequence[int], minimum: int=1) -> GridSize:
    """
    Validates and normalises a grid size.
    :param dims: size per axis (2 or 3 axes)
    :param minimum: smallest size allowed on any axis
    :return: the grid size as a tuple of ints
    :raises InvalidGridError: if the grid is not 2D/3D or an axis is too small
    """
    dims = tuple(int(x) for x in dims)
    if len(dims) not in (2, 3):
        raise InvalidGridError(f"Only 2D and 3D grids are supported: {dims}")
    if any(x < minimum for x in dims):
        raise InvalidGridError(f"Grid {dims} has an axis smaller than {minimum}")
    return dims


def as_voxel_size(voxel_size: Union[float, Sequence[float]], ndim: int) -> Tuple[float, ...]:
    """
    Expands a scalar voxel size to one value per axis and validates it.
    :param voxel_size: scalar or per-axis voxel size in mm
    :param ndim: number of axes
    :return: the per-axis voxel size
    :raises InvalidGridError: if a size is not positive or the number of axes is wrong
    """
    if np.isscalar(voxel_size):
        voxel_size = (float(voxel_size), ) * ndim
    voxel_size = tuple(float(x) for x in voxel_size)
    if len(voxel_size) != ndim:
        raise InvalidGridError(f"Voxel size {voxel_size} does not have {ndim} axes")
    if any(not x > 0 for x in voxel_size):
        raise InvalidGridError(f"Voxel size must be positive: {voxel_size}")
    return voxel_size


def check_same_dims(first: np.ndarray, second: np.ndarray, description: str="arrays"):
    """
    Checks that two grids have identical dimensions.
    :raises DimensionMismatchError: if they do not
    """
    if first.shape != second.shape:
        raise DimensionMismatchError(f"Dimensions of {description} differ: {first.shape} != {second.shape}")
