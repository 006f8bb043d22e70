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

"""Volumes, binary masks and the voxel geometry they share.

Grids are stored as numpy arrays indexed [x, y, z], so `values.shape` equals
`geometry.dims`. Flattening in Fortran order gives the on-disk voxel order
(x fastest, then y, then z).

Volumes and masks are immutable: their arrays are copied on construction and
marked read-only.
"""

import dataclasses
from typing import Any, Optional, Sequence, Tuple

import immutabledict
import numpy as np
from typing_extensions import Literal

IntensityUnit = Literal["HU", "normalized", "display-8bit"]

SPACING_TOLERANCE_MM = 1e-6

SUPPORTED_DTYPES = frozenset(
    (np.dtype(np.uint8), np.dtype(np.int16), np.dtype(np.float32)))

UNIT_DTYPES = immutabledict.immutabledict({
    "HU": frozenset((np.dtype(np.int16), np.dtype(np.float32))),
    "normalized": frozenset((np.dtype(np.float32),)),
    "display-8bit": frozenset((np.dtype(np.uint8),)),
})


class VoxmetricError(Exception):
  """Base class of every data error raised by voxmetric."""


class GeometryMismatch(VoxmetricError):
  pass


class EmptyInput(VoxmetricError):
  pass


@dataclasses.dataclass(frozen=True)
class Geometry:
  """Voxel grid size and spacing.

  Attributes:
    dims: Number of voxels along x, y and z.
    spacing: Voxel size in mm along x, y and z.
  """
  dims: Tuple[int, int, int]
  spacing: Tuple[float, float, float]

  def __post_init__(self):
    dims = tuple(int(d) for d in self.dims)
    spacing = tuple(float(s) for s in self.spacing)
    if len(dims) != 3 or len(spacing) != 3:
      raise ValueError("Geometry needs exactly three dims and three spacings.")
    if min(dims) < 1:
      raise ValueError(f"All dims must be at least 1, got {dims}.")
    if not all(np.isfinite(s) and s > 0 for s in spacing):
      raise ValueError(f"All spacings must be positive, got {spacing}.")
    object.__setattr__(self, "dims", dims)
    object.__setattr__(self, "spacing", spacing)

  @property
  def voxel_count(self) -> int:
    return int(np.prod(self.dims))

  @property
  def voxel_volume_mm3(self) -> float:
    return float(np.prod(self.spacing))

  @property
  def physical_extent(self) -> Tuple[float, float, float]:
    """Size of the grid in mm along each axis."""
    return tuple(d * s for d, s in zip(self.dims, self.spacing))

  def is_compatible(self, other: "Geometry") -> bool:
    return self.dims == other.dims and all(
        abs(a - b) <= SPACING_TOLERANCE_MM
        for a, b in zip(self.spacing, other.spacing))


def check_compatible(*geometries: Geometry) -> None:
  """Raises GeometryMismatch unless all geometries are compatible."""
  for geometry in geometries[1:]:
    if not geometries[0].is_compatible(geometry):
      raise GeometryMismatch(
          f"Grids do not share geometry: {geometries[0]} vs {geometry}.")


def _frozen_copy(array: Any, dtype: Optional[np.dtype] = None) -> np.ndarray:
  array = np.array(array, dtype=dtype, copy=True, order="C")
  array.setflags(write=False)
  return array


def _bitwise_equal(a: np.ndarray, b: np.ndarray) -> bool:
  if a.dtype != b.dtype or a.shape != b.shape:
    return False
  view = np.dtype(f"u{a.dtype.itemsize}")
  return bool(np.array_equal(a.view(view), b.view(view)))


@dataclasses.dataclass(frozen=True, eq=False)
class Volume:
  """Dense scalar grid with its geometry.

  Attributes:
    geometry: Grid size and spacing.
    values: Array of shape `geometry.dims` with dtype uint8, int16 or float32.
    unit: Intensity unit of the values.
  """
  geometry: Geometry
  values: np.ndarray
  unit: IntensityUnit = "HU"

  def __post_init__(self):
    values = _frozen_copy(self.values)
    if values.dtype not in SUPPORTED_DTYPES:
      raise ValueError(
          f"Unsupported element kind {values.dtype}; use uint8, int16 or "
          "float32.")
    if values.shape != self.geometry.dims:
      raise ValueError(f"Values shape {values.shape} does not match dims "
                       f"{self.geometry.dims}.")
    if self.unit not in UNIT_DTYPES:
      raise ValueError(f"Unknown intensity unit {self.unit!r}.")
    if values.dtype not in UNIT_DTYPES[self.unit]:
      raise ValueError(
          f"Intensity unit {self.unit} cannot be stored as {values.dtype}.")
    object.__setattr__(self, "values", values)

  @property
  def dtype(self) -> np.dtype:
    return self.values.dtype

  def __eq__(self, other: Any) -> bool:
    """Bitwise equality of the payload plus compatible geometry and unit."""
    if not isinstance(other, Volume):
      return NotImplemented
    return (self.geometry.is_compatible(other.geometry) and
            self.unit == other.unit and
            _bitwise_equal(self.values, other.values))


@dataclasses.dataclass(frozen=True, eq=False)
class BinaryMask:
  """Dense boolean grid sharing a volume's geometry.

  Attributes:
    geometry: Grid size and spacing.
    bits: Boolean array of shape `geometry.dims`.
  """
  geometry: Geometry
  bits: np.ndarray

  def __post_init__(self):
    bits = _frozen_copy(self.bits, dtype=bool)
    if bits.shape != self.geometry.dims:
      raise ValueError(f"Mask shape {bits.shape} does not match dims "
                       f"{self.geometry.dims}.")
    object.__setattr__(self, "bits", bits)

  @classmethod
  def empty(cls, geometry: Geometry) -> "BinaryMask":
    return cls(geometry, np.zeros(geometry.dims, dtype=bool))

  @classmethod
  def full(cls, geometry: Geometry) -> "BinaryMask":
    return cls(geometry, np.ones(geometry.dims, dtype=bool))

  @property
  def voxel_count(self) -> int:
    return int(np.count_nonzero(self.bits))

  @property
  def is_empty(self) -> bool:
    return not self.bits.any()

  @property
  def volume_ml(self) -> float:
    return self.voxel_count * self.geometry.voxel_volume_mm3 / 1000.

  def to_volume(self) -> Volume:
    """Returns the mask as a 0/1 uint8 volume, ready to be saved."""
    return Volume(self.geometry, self.bits.astype(np.uint8),
                  unit="display-8bit")

  def __eq__(self, other: Any) -> bool:
    if not isinstance(other, BinaryMask):
      return NotImplemented
    return (self.geometry.is_compatible(other.geometry) and
            bool(np.array_equal(self.bits, other.bits)))


@dataclasses.dataclass(frozen=True)
class BoundingBox:
  """Inclusive voxel index box.

  Attributes:
    min_corner: Smallest (x, y, z) index holding a true bit.
    max_corner: Largest (x, y, z) index holding a true bit.
  """
  min_corner: Tuple[int, int, int]
  max_corner: Tuple[int, int, int]

  def padded(self, padding: Sequence[int],
             dims: Sequence[int]) -> "BoundingBox":
    """Grows the box by `padding` voxels per axis, clipped to the grid."""
    return BoundingBox(
        tuple(max(0, lo - p) for lo, p in zip(self.min_corner, padding)),
        tuple(min(n - 1, hi + p)
              for hi, p, n in zip(self.max_corner, padding, dims)))

  def union(self, other: "BoundingBox") -> "BoundingBox":
    return BoundingBox(
        tuple(min(a, b) for a, b in zip(self.min_corner, other.min_corner)),
        tuple(max(a, b) for a, b in zip(self.max_corner, other.max_corner)))

  def slices(self) -> Tuple[slice, slice, slice]:
    return tuple(
        slice(lo, hi + 1) for lo, hi in zip(self.min_corner, self.max_corner))


def threshold_to_mask(volume: Volume, threshold: float) -> BinaryMask:
  """Returns the mask of voxels strictly above the threshold."""
  return BinaryMask(volume.geometry, volume.values > threshold)


def bounding_box(mask: BinaryMask) -> Optional[BoundingBox]:
  """Tight axis-aligned box over the true bits, None for an empty mask."""
  if mask.is_empty:
    return None
  min_corner, max_corner = [], []
  for axis in range(3):
    other_axes = tuple(a for a in range(3) if a != axis)
    occupied = np.flatnonzero(mask.bits.any(axis=other_axes))
    min_corner.append(int(occupied[0]))
    max_corner.append(int(occupied[-1]))
  return BoundingBox(tuple(min_corner), tuple(max_corner))
