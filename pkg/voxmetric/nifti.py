# Copyright 2026 The voxmetric Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Reader and writer for the subset of NIfTI-1 used by voxmetric.

Only 3D volumes with uint8 (code 2), int16 (code 4) or float32 (code 16)
payloads are handled. Spacing comes from pixdim[1..3]; the qform/sform
orientation fields are read but ignored, since every metric here depends on
spacing only. Files are always written as single-file `.nii` with a 348 byte
little-endian header, 4 empty extension bytes and the payload at offset 352.

Reading accepts both byte orders (detected from sizeof_hdr), the two-file
"ni1" layout with its sibling `.img`, and gzip compressed `.nii.gz` files when
GZIP_SUPPORTED is true.
"""

import gzip
import os
import zlib

from absl import logging
import immutabledict
import numpy as np

from voxmetric import utils
from voxmetric import volume

HEADER_SIZE = 348
VOX_OFFSET = 352
GZIP_SUPPORTED = True

_MAGIC_SINGLE_FILE = b"n+1\x00"
_MAGIC_FILE_PAIR = b"ni1\x00"
_UNIT_PREFIX = b"voxmetric unit="
_XYZT_UNITS_MM = 2

_HEADER_FIELDS = [
    ("sizeof_hdr", "i4"),
    ("data_type", "S10"),
    ("db_name", "S18"),
    ("extents", "i4"),
    ("session_error", "i2"),
    ("regular", "S1"),
    ("dim_info", "u1"),
    ("dim", "i2", (8,)),
    ("intent_p1", "f4"),
    ("intent_p2", "f4"),
    ("intent_p3", "f4"),
    ("intent_code", "i2"),
    ("datatype", "i2"),
    ("bitpix", "i2"),
    ("slice_start", "i2"),
    ("pixdim", "f4", (8,)),
    ("vox_offset", "f4"),
    ("scl_slope", "f4"),
    ("scl_inter", "f4"),
    ("slice_end", "i2"),
    ("slice_code", "u1"),
    ("xyzt_units", "u1"),
    ("cal_max", "f4"),
    ("cal_min", "f4"),
    ("slice_duration", "f4"),
    ("toffset", "f4"),
    ("glmax", "i4"),
    ("glmin", "i4"),
    ("descrip", "S80"),
    ("aux_file", "S24"),
    ("qform_code", "i2"),
    ("sform_code", "i2"),
    ("quatern_b", "f4"),
    ("quatern_c", "f4"),
    ("quatern_d", "f4"),
    ("qoffset_x", "f4"),
    ("qoffset_y", "f4"),
    ("qoffset_z", "f4"),
    ("srow_x", "f4", (4,)),
    ("srow_y", "f4", (4,)),
    ("srow_z", "f4", (4,)),
    ("intent_name", "S16"),
    ("magic", "S4"),
]
HEADER_DTYPE = np.dtype(_HEADER_FIELDS).newbyteorder("<")

_CODE_TO_DTYPE = immutabledict.immutabledict({
    2: np.dtype(np.uint8),
    4: np.dtype(np.int16),
    16: np.dtype(np.float32),
})
_DTYPE_TO_CODE = immutabledict.immutabledict(
    {dtype: code for code, dtype in _CODE_TO_DTYPE.items()})
_DEFAULT_UNITS = immutabledict.immutabledict({
    np.dtype(np.uint8): "display-8bit",
    np.dtype(np.int16): "HU",
    np.dtype(np.float32): "HU",
})


class MalformedFile(volume.VoxmetricError):
  pass


class UnsupportedDatatype(volume.VoxmetricError):
  pass


class UnsupportedDimensionality(volume.VoxmetricError):
  pass


class WriteError(volume.VoxmetricError):
  pass


def _is_gzip_path(file_path: str) -> bool:
  return file_path.endswith(".gz")


def _read_payload_source(file_path: str) -> bytes:
  raw = utils.read_bytes(file_path)
  if _is_gzip_path(file_path):
    if not GZIP_SUPPORTED:
      raise MalformedFile(f"{file_path}: gzip compressed files are disabled.")
    try:
      raw = gzip.decompress(raw)
    except (OSError, EOFError, zlib.error) as error:
      raise MalformedFile(f"{file_path}: corrupt gzip stream.") from error
  return raw


def _byte_order(raw: bytes, file_path: str) -> str:
  if len(raw) < HEADER_SIZE:
    raise MalformedFile(
        f"{file_path}: {len(raw)} bytes is shorter than a NIfTI-1 header.")
  if np.frombuffer(raw, dtype="<i4", count=1)[0] == HEADER_SIZE:
    return "<"
  if np.frombuffer(raw, dtype=">i4", count=1)[0] == HEADER_SIZE:
    return ">"
  raise MalformedFile(f"{file_path}: sizeof_hdr is not {HEADER_SIZE}.")


def _sibling_image_path(file_path: str) -> str:
  stem = file_path[:-3] if _is_gzip_path(file_path) else file_path
  stem, _ = os.path.splitext(stem)
  return stem + (".img.gz" if _is_gzip_path(file_path) else ".img")


def _unit_from_header(header: np.void, dtype: np.dtype) -> str:
  descrip = bytes(header["descrip"])
  if descrip.startswith(_UNIT_PREFIX):
    unit = descrip[len(_UNIT_PREFIX):].decode("ascii", errors="replace")
    if unit in volume.UNIT_DTYPES and dtype in volume.UNIT_DTYPES[unit]:
      return unit
  return _DEFAULT_UNITS[dtype]


def load_nifti(file_path: str) -> volume.Volume:
  """Loads a 3D NIfTI-1 file.

  Args:
    file_path: Path of a `.nii`, `.hdr` or (when enabled) `.nii.gz` file.

  Returns:
    The volume with dims from dim[1..3] and spacing from pixdim[1..3].

  Raises:
    MalformedFile: Short or corrupt header, bad magic, truncated payload.
    UnsupportedDatatype: Datatype other than uint8, int16 or float32.
    UnsupportedDimensionality: dim[0] is not 3.
    FileNotFoundError: The file (or the `.img` of a file pair) is missing.
  """
  raw = _read_payload_source(file_path)
  order = _byte_order(raw, file_path)
  header = np.frombuffer(
      raw, dtype=HEADER_DTYPE.newbyteorder(order), count=1)[0]

  magic = raw[344:348]
  if magic not in (_MAGIC_SINGLE_FILE, _MAGIC_FILE_PAIR):
    raise MalformedFile(f"{file_path}: unknown magic {magic!r}.")

  dim = [int(d) for d in header["dim"]]
  if dim[0] != 3:
    raise UnsupportedDimensionality(
        f"{file_path}: only 3D volumes are supported, dim[0]={dim[0]}.")
  dims = tuple(dim[1:4])
  if min(dims) < 1:
    raise MalformedFile(f"{file_path}: non-positive dims {dims}.")

  code = int(header["datatype"])
  if code not in _CODE_TO_DTYPE:
    raise UnsupportedDatatype(f"{file_path}: datatype code {code}.")
  dtype = _CODE_TO_DTYPE[code]
  if int(header["bitpix"]) != dtype.itemsize * 8:
    raise MalformedFile(f"{file_path}: bitpix {int(header['bitpix'])} does "
                        f"not match datatype code {code}.")

  spacing = tuple(float(p) for p in header["pixdim"][1:4])
  if not all(np.isfinite(s) and s > 0 for s in spacing):
    raise MalformedFile(f"{file_path}: invalid pixdim {spacing}.")

  slope, inter = float(header["scl_slope"]), float(header["scl_inter"])
  if (slope not in (0., 1.) and not np.isnan(slope)) or (
      inter != 0. and not np.isnan(inter)):
    logging.warning("%s: ignoring intensity scaling slope=%s inter=%s.",
                    file_path, slope, inter)

  vox_offset = float(header["vox_offset"])
  if not np.isfinite(vox_offset) or vox_offset < 0:
    raise MalformedFile(f"{file_path}: invalid vox_offset {vox_offset}.")
  offset = int(vox_offset)
  if magic == _MAGIC_FILE_PAIR:
    payload_source = _read_payload_source(_sibling_image_path(file_path))
  else:
    payload_source = raw
    if offset < HEADER_SIZE:
      raise MalformedFile(f"{file_path}: vox_offset {offset} overlaps the "
                          "header.")
  n_voxels = int(np.prod(dims))
  n_bytes = n_voxels * dtype.itemsize
  if len(payload_source) < offset + n_bytes:
    raise MalformedFile(f"{file_path}: payload is truncated, expected "
                        f"{n_bytes} bytes at offset {offset}.")
  values = np.frombuffer(
      payload_source, dtype=dtype.newbyteorder(order), count=n_voxels,
      offset=offset)
  values = values.astype(dtype).reshape(dims, order="F")
  logging.debug("Loaded %s: dims=%s spacing=%s dtype=%s", file_path, dims,
                spacing, dtype)
  return volume.Volume(
      geometry=volume.Geometry(dims, spacing),
      values=values,
      unit=_unit_from_header(header, dtype))


def encode_nifti(image: volume.Volume) -> bytes:
  """Serializes a volume as a single-file NIfTI-1 byte string."""
  dtype = image.values.dtype
  if dtype not in _DTYPE_TO_CODE:
    raise ValueError(f"Unsupported element kind {dtype}.")
  header = np.zeros((), dtype=HEADER_DTYPE)
  header["sizeof_hdr"] = HEADER_SIZE
  header["regular"] = b"r"
  header["dim"] = [3, *image.geometry.dims, 1, 1, 1, 1]
  header["datatype"] = _DTYPE_TO_CODE[dtype]
  header["bitpix"] = dtype.itemsize * 8
  header["pixdim"] = [1., *image.geometry.spacing, 0., 0., 0., 0.]
  header["vox_offset"] = VOX_OFFSET
  header["scl_slope"] = 1.
  header["scl_inter"] = 0.
  header["xyzt_units"] = _XYZT_UNITS_MM
  header["descrip"] = _UNIT_PREFIX + image.unit.encode("ascii")
  header["magic"] = _MAGIC_SINGLE_FILE
  extension = b"\x00" * (VOX_OFFSET - HEADER_SIZE)
  payload = image.values.astype(dtype.newbyteorder("<")).tobytes(order="F")
  return header.tobytes() + extension + payload


def save_nifti(image: volume.Volume, file_path: str) -> None:
  """Writes a volume as NIfTI-1.

  Args:
    image: Volume to write.
    file_path: Destination. A `.gz` suffix writes a gzip compressed file.

  Raises:
    WriteError: If the destination cannot be written.
  """
  data = encode_nifti(image)
  if _is_gzip_path(file_path):
    if not GZIP_SUPPORTED:
      raise WriteError(f"{file_path}: gzip compressed files are disabled.")
    data = gzip.compress(data, mtime=0)
  try:
    utils.write_bytes(file_path, data)
  except OSError as error:
    raise WriteError(str(error)) from error
  logging.debug("Saved %s", file_path)


def load_mask(file_path: str, threshold: float = .5) -> volume.BinaryMask:
  """Loads a volume file and thresholds it into a mask."""
  return volume.threshold_to_mask(load_nifti(file_path), threshold)


def save_mask(mask: volume.BinaryMask, file_path: str) -> None:
  save_nifti(mask.to_volume(), file_path)
