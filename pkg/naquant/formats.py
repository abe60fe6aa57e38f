import json
import os
import struct
import tempfile
from typing import Dict, Union, Tuple

import numpy as np

from naquant._logging import create_logger
from naquant.acquisition import KSpaceData
from naquant.common import NaQuantBaseError, ImageVolume, DimensionMismatchError, DEFAULT_ENCODING, LABEL_UNITS
from naquant.phantom import DigitalPhantom, Compartment, PhantomGeometry
from naquant.trajectories import Trajectory, TrajectoryMode, InvalidTrajectoryError

VOLUME_MAGIC = b"SNAV"
KSPACE_MAGIC = b"SNAK"
FORMAT_VERSION = 1

VOLUME_KIND = "volume"
PHANTOM_KIND = "phantom"

_DTYPES = {"f32": np.dtype("<f4"), "c64": np.dtype("<c8")}
_FLOAT64 = np.dtype("<f8")
_PREAMBLE = struct.Struct("<4sBI")

logger = create_logger(__name__)


class VolumeFormatError(NaQuantBaseError):
    """
    Raised when a volume or k-space file cannot be parsed.
    """


class BadMagicError(VolumeFormatError):
    """
    Raised when a file does not start with the expected magic bytes.
    """


class UnsupportedVersionError(VolumeFormatError):
    """
    Raised when a file has a format version that is not supported.
    """


class TruncatedPayloadError(VolumeFormatError):
    """
    Raised when a file ends before its header or payload is complete.
    """


class SizeMismatchError(VolumeFormatError):
    """
    Raised when the header describes a different payload size than the one stored.
    """


def atomic_write(path: str, content: bytes):
    """
    Writes a file so that readers see either the old or the complete new content.
    :param path: the file to write
    :param content: the content
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    descriptor, temp_path = tempfile.mkstemp(dir=directory, prefix=".", suffix=".tmp")
    try:
        with os.fdopen(descriptor, "wb") as file:
            file.write(content)
            file.flush()
            os.fsync(file.fileno())
        os.replace(temp_path, path)
    except BaseException:
        if os.path.exists(temp_path):
            os.remove(temp_path)
        raise
    logger.debug(f"Wrote {path}")


def _encode(magic: bytes, header: Dict[str, str], payload: bytes) -> bytes:
    header_bytes = "".join(f"{key}={value}\n" for key, value in header.items()).encode(DEFAULT_ENCODING)
    return _PREAMBLE.pack(magic, FORMAT_VERSION, len(header_bytes)) + header_bytes + payload


def _decode(content: bytes, magic: bytes) -> Tuple[Dict[str, str], bytes]:
    if len(content) < 4 or content[:4] != magic:
        raise BadMagicError(f"Expected magic {magic!r}, got {content[:4]!r}")
    if len(content) < _PREAMBLE.size:
        raise TruncatedPayloadError("File ends inside the preamble")
    _, version, header_length = _PREAMBLE.unpack_from(content)
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"Unsupported format version: {version}")
    header_end = _PREAMBLE.size + header_length
    if len(content) < header_end:
        raise TruncatedPayloadError(f"File ends inside the header ({len(content)} < {header_end} bytes)")
    try:
        text = content[_PREAMBLE.size:header_end].decode(DEFAULT_ENCODING)
    except UnicodeDecodeError as e:
        raise VolumeFormatError("Header is not valid text") from e
    header = {}
    for line in text.splitlines():
        if line == "":
            continue
        key, separator, value = line.partition("=")
        if separator == "":
            raise VolumeFormatError(f"Malformed header line: {line}")
        header[key] = value
    return header, content[header_end:]


def _get(header: Dict[str, str], key: str) -> str:
    try:
        return header[key]
    except KeyError as e:
        raise VolumeFormatError(f"Header is missing \"{key}\"") from e


def _format_floats(values) -> str:
    return ",".join(repr(float(x)) for x in values)


def _parse_ints(value: str) -> Tuple[int, ...]:
    try:
        return tuple(int(x) for x in value.split(","))
    except ValueError as e:
        raise VolumeFormatError(f"Invalid integer list: {value}") from e


def _parse_floats(value: str) -> Tuple[float, ...]:
    try:
        return tuple(float(x) for x in value.split(",")) if value != "" else ()
    except ValueError as e:
        raise VolumeFormatError(f"Invalid number list: {value}") from e


def _read_file(path: str) -> bytes:
    with open(path, "rb") as file:
        return file.read()


def encode_volume(volume: Union[ImageVolume, DigitalPhantom], seed: int=0) -> bytes:
    """
    Encodes an image volume (any number of axes) or a phantom label grid.
    :param volume: the volume or phantom
    :param seed: seed recorded for image volumes (phantoms record their own)
    :return: the encoded bytes
    """
    header = {}
    if isinstance(volume, DigitalPhantom):
        values = volume.labels.astype(_DTYPES["f32"])
        dtype_name = "f32"
        header.update(dims=",".join(str(n) for n in volume.dims), dtype=dtype_name,
                      voxel_size_mm=_format_floats(volume.voxel_size), units=LABEL_UNITS, seed=str(volume.seed),
                      kind=PHANTOM_KIND,
                      compartments=json.dumps([list(compartment) for compartment in volume.compartments]))
        if volume.geometry is not None:
            header["geometry"] = json.dumps(vars(volume.geometry))
    else:
        dtype_name = "c64" if np.iscomplexobj(volume.values) else "f32"
        values = np.asarray(volume.values).astype(_DTYPES[dtype_name])
        header.update(dims=",".join(str(n) for n in values.shape), dtype=dtype_name,
                      voxel_size_mm=_format_floats(volume.voxel_size), units=volume.units, seed=str(int(seed)),
                      kind=VOLUME_KIND)
    return _encode(VOLUME_MAGIC, header, np.ascontiguousarray(values).tobytes())


def decode_volume(content: bytes) -> Union[ImageVolume, DigitalPhantom]:
    """
    Decodes a volume encoded with `encode_volume`.
    :param content: the encoded bytes
    :return: the image volume (values in the stored precision) or phantom
    :raises VolumeFormatError: if the content cannot be parsed
    """
    header, payload = _decode(content, VOLUME_MAGIC)
    dims = _parse_ints(_get(header, "dims"))
    dtype_name = _get(header, "dtype")
    if dtype_name not in _DTYPES:
        raise VolumeFormatError(f"Unknown data type: {dtype_name}")
    dtype = _DTYPES[dtype_name]
    if len(payload) % dtype.itemsize != 0:
        raise TruncatedPayloadError(f"Payload of {len(payload)} bytes is not a whole number of {dtype_name} values")
    if len(payload) // dtype.itemsize != int(np.prod(dims)):
        raise SizeMismatchError(f"Header dims {dims} do not match {len(payload) // dtype.itemsize} stored values")
    values = np.frombuffer(payload, dtype=dtype).reshape(dims).astype(dtype.newbyteorder("="))
    voxel_size = _parse_floats(_get(header, "voxel_size_mm"))

    if header.get("kind", VOLUME_KIND) == PHANTOM_KIND:
        try:
            compartments = [Compartment(int(label), str(name), float(concentration), float(water_fraction))
                            for label, name, concentration, water_fraction
                            in json.loads(_get(header, "compartments"))]
            geometry = PhantomGeometry(**json.loads(header["geometry"])) if "geometry" in header else None
        except (ValueError, TypeError) as e:
            raise VolumeFormatError("Invalid phantom description in header") from e
        return DigitalPhantom(values.astype(np.int32), compartments, voxel_size, int(_get(header, "seed")),
                              geometry)
    return ImageVolume(values, voxel_size, _get(header, "units"))


def write_volume(volume: Union[ImageVolume, DigitalPhantom], path: str, seed: int=0):
    """
    Writes a volume or phantom atomically.
    :param volume: the volume or phantom
    :param path: the file to write
    :param seed: seed recorded for image volumes
    """
    atomic_write(path, encode_volume(volume, seed))


def read_volume(path: str) -> Union[ImageVolume, DigitalPhantom]:
    """
    Reads a volume or phantom.
    :param path: the file to read
    :return: the volume or phantom
    :raises VolumeFormatError: if the file cannot be parsed
    """
    return decode_volume(_read_file(path))


def encode_kspace(data: KSpaceData, voxel_size=None) -> bytes:
    """
    Encodes k-space data with its trajectory.
    :param data: the data
    :param voxel_size: voxel size of the grid the data was acquired on, recorded in the header
    :return: the encoded bytes
    """
    trajectory = data.trajectory
    header = dict(
        dims=",".join(str(n) for n in trajectory.dims), n_coils=str(data.n_coils), n_spokes=str(trajectory.n_spokes),
        n_samples=str(trajectory.readout_length), samples_per_spoke=str(trajectory.samples_per_spoke),
        ndim=str(trajectory.ndim), mode=trajectory.mode.value, k0_fraction=repr(trajectory.k0_fraction),
        sigma=repr(float(data.noise_sigma)), seed=str(int(data.seed)),
        voxel_size_mm=_format_floats(voxel_size if voxel_size is not None else (1.0, ) * trajectory.ndim))
    parts = [np.ascontiguousarray(data.samples).astype(_DTYPES["c64"]).tobytes(),
             trajectory.sample_radii.astype(_FLOAT64).tobytes(),
             trajectory.spoke_directions.astype(_FLOAT64).tobytes(),
             trajectory.density_weights.astype(_FLOAT64).tobytes()]
    if trajectory.spoke_angles is not None:
        parts.append(trajectory.spoke_angles.astype(_FLOAT64).tobytes())
    return _encode(KSPACE_MAGIC, header, b"".join(parts))


def decode_kspace(content: bytes) -> Tuple[KSpaceData, Tuple[float, ...]]:
    """
    Decodes k-space data encoded with `encode_kspace`.
    :param content: the encoded bytes
    :return: tuple of the data (samples in the stored precision) and the recorded voxel size
    :raises VolumeFormatError: if the content cannot be parsed
    """
    header, payload = _decode(content, KSPACE_MAGIC)
    try:
        dims = _parse_ints(_get(header, "dims"))
        n_coils, n_spokes, n_samples, samples_per_spoke, ndim = (
            int(_get(header, key)) for key in ("n_coils", "n_spokes", "n_samples", "samples_per_spoke", "ndim"))
        k0_fraction = float(_get(header, "k0_fraction"))
        sigma = float(_get(header, "sigma"))
        seed = int(_get(header, "seed"))
    except ValueError as e:
        raise VolumeFormatError("Invalid number in header") from e
    try:
        mode = TrajectoryMode(_get(header, "mode"))
    except ValueError as e:
        raise VolumeFormatError(f"Unknown trajectory mode: {header['mode']}") from e

    n_angles = n_spokes if ndim == 2 else 0
    sizes = (n_coils * n_spokes * n_samples * _DTYPES["c64"].itemsize, samples_per_spoke * _FLOAT64.itemsize,
             n_spokes * ndim * _FLOAT64.itemsize, samples_per_spoke * _FLOAT64.itemsize,
             n_angles * _FLOAT64.itemsize)
    if len(payload) % _FLOAT64.itemsize != 0:
        raise TruncatedPayloadError(f"Payload of {len(payload)} bytes ends inside a value")
    if len(payload) != sum(sizes):
        raise SizeMismatchError(f"Header describes {sum(sizes)} payload bytes, {len(payload)} stored")

    arrays = []
    offset = 0
    for size, dtype in zip(sizes, (_DTYPES["c64"], _FLOAT64, _FLOAT64, _FLOAT64, _FLOAT64)):
        arrays.append(np.frombuffer(payload[offset:offset + size], dtype=dtype).astype(dtype.newbyteorder("=")))
        offset += size
    samples, radii, directions, weights, angles = arrays
    try:
        trajectory = Trajectory(directions.reshape(n_spokes, ndim), radii, weights, mode, k0_fraction,
                                dims, angles if ndim == 2 else None)
        data = KSpaceData(samples.reshape(n_coils, n_spokes, n_samples), trajectory, sigma, seed)
    except (InvalidTrajectoryError, DimensionMismatchError) as e:
        raise VolumeFormatError(f"Invalid trajectory in k-space file: {e}") from e
    return data, _parse_floats(_get(header, "voxel_size_mm"))


def write_kspace(data: KSpaceData, path: str, voxel_size=None):
    """
    Writes k-space data atomically.
    """
    atomic_write(path, encode_kspace(data, voxel_size))


def read_kspace(path: str) -> Tuple[KSpaceData, Tuple[float, ...]]:
    """
    Reads k-space data.
    :param path: the file to read
    :return: tuple of the data and the recorded voxel size
    :raises VolumeFormatError: if the file cannot be parsed
    """
    return decode_kspace(_read_file(path))
