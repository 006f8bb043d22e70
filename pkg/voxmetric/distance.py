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

"""Exact anisotropic Euclidean distance transforms and mask surfaces.

The transform works on squared distances and is separable: one pass per axis
computes, for every line along that axis, the lower envelope of the parabolas
(x - x_j)^2 + f(j) left by the previous pass. Voxel positions are their index
times the axis spacing, so anisotropy lives inside the parabolas and no
resampling ever happens. Each pass is linear in the line length and runs over
all lines of a chunk at once with numpy.

Distances are measured between voxel centers.
"""

import dataclasses
import time
from typing import Optional, Sequence, Tuple

from absl import logging
import numpy as np
from scipy import ndimage

from voxmetric import volume

# Number of lines transformed together by one vectorized envelope pass.
_LINE_CHUNK = 1 << 15

_FACE_CONNECTIVITY = ndimage.generate_binary_structure(rank=3, connectivity=1)


class EmptySeeds(volume.VoxmetricError):
  pass


class EmptyMask(volume.VoxmetricError):
  pass


@dataclasses.dataclass(frozen=True, eq=False)
class DistanceField:
  """Distance of every voxel center to its nearest seed voxel center.

  Attributes:
    geometry: Grid the field is defined on.
    squared: Squared distances in mm^2, float64, read-only.
  """
  geometry: volume.Geometry
  squared: np.ndarray

  def __post_init__(self):
    squared = np.array(self.squared, dtype=np.float64, copy=True)
    if squared.shape != self.geometry.dims:
      raise ValueError(f"Field shape {squared.shape} does not match dims "
                       f"{self.geometry.dims}.")
    squared.setflags(write=False)
    object.__setattr__(self, "squared", squared)

  @property
  def distances(self) -> np.ndarray:
    """Distances in mm."""
    return np.sqrt(self.squared)

  def at(self, mask: volume.BinaryMask) -> np.ndarray:
    """Distances at the true voxels of a mask, x fastest, then y, then z."""
    volume.check_compatible(self.geometry, mask.geometry)
    selected = self.squared.ravel(order="F")[mask.bits.ravel(order="F")]
    return np.sqrt(selected)


def resolve_spacing(geometry: volume.Geometry,
                    spacing: Optional[Sequence[float]]) -> Tuple[float, ...]:
  """Returns the spacing to use, defaulting to the geometry's own."""
  if spacing is None:
    return geometry.spacing
  spacing = tuple(float(s) for s in spacing)
  if len(spacing) != 3 or not all(np.isfinite(s) and s > 0 for s in spacing):
    raise ValueError(
        f"Spacing must be three positive mm values, got {spacing}.")
  return spacing


def _envelope_lines(f: np.ndarray, step: float) -> np.ndarray:
  """Lower envelope pass over the rows of `f`.

  Args:
    f: Array of shape (lines, n) with squared distances, inf where a line
      position carries no parabola.
    step: Spacing in mm between consecutive positions of a line.

  Returns:
    Array of the same shape with min_j (x_i - x_j)^2 + f[:, j].
  """
  n_lines, n = f.shape
  x = np.arange(n, dtype=np.float64) * step
  anchors = np.zeros((n_lines, n), dtype=np.intp)
  # bounds[:, k] is the left end of the range where anchor k is lowest.
  bounds = np.full((n_lines, n + 1), np.inf)
  top = np.full(n_lines, -1, dtype=np.intp)

  for q in range(n):
    rows = np.flatnonzero(np.isfinite(f[:, q]))
    if not rows.size:
      continue
    first = top[rows] < 0
    fresh = rows[first]
    anchors[fresh, 0] = q
    bounds[fresh, 0] = -np.inf
    bounds[fresh, 1] = np.inf
    top[fresh] = 0

    rows = rows[~first]
    height = f[rows, q] + x[q] ** 2
    while rows.size:
      k = top[rows]
      v = anchors[rows, k]
      cross = (height - (f[rows, v] + x[v] ** 2)) / (2. * (x[q] - x[v]))
      pop = cross <= bounds[rows, k]
      settled = rows[~pop]
      slot = top[settled] + 1
      anchors[settled, slot] = q
      bounds[settled, slot] = cross[~pop]
      bounds[settled, slot + 1] = np.inf
      top[settled] = slot
      top[rows[pop]] -= 1
      rows, height = rows[pop], height[pop]

  out = np.full((n_lines, n), np.inf)
  covered = np.flatnonzero(top >= 0)
  if not covered.size:
    return out
  k = np.zeros(covered.size, dtype=np.intp)
  for i in range(n):
    while True:
      advance = (k < top[covered]) & (bounds[covered, k + 1] < x[i])
      if not advance.any():
        break
      k[advance] += 1
    v = anchors[covered, k]
    out[covered, i] = (x[i] - x[v]) ** 2 + f[covered, v]
  return out


def _transform_axis(squared: np.ndarray, axis: int, step: float) -> np.ndarray:
  moved = np.moveaxis(squared, axis, -1)
  shape = moved.shape
  lines = moved.reshape(-1, shape[-1])
  result = np.empty_like(lines)
  for start in range(0, lines.shape[0], _LINE_CHUNK):
    stop = start + _LINE_CHUNK
    result[start:stop] = _envelope_lines(lines[start:stop], step)
  return np.moveaxis(result.reshape(shape), -1, axis)


def squared_edt(bits: np.ndarray, spacing: Sequence[float]) -> np.ndarray:
  """Squared distance transform of a boolean array.

  Args:
    bits: Boolean array of shape (nx, ny, nz); true voxels are the seeds.
    spacing: Voxel size in mm along each axis.

  Returns:
    Float64 array of squared mm distances to the nearest seed, 0 at the seeds
    and inf everywhere when there is no seed at all.
  """
  squared = np.where(np.asarray(bits, dtype=bool), 0., np.inf)
  if not np.isfinite(squared).any():
    return squared
  for axis, step in enumerate(spacing):
    started = time.perf_counter()
    squared = _transform_axis(squared, axis, float(step))
    logging.debug("EDT axis %d over %s took %.3fs", axis, bits.shape,
                  time.perf_counter() - started)
  return squared


def edt(seeds: volume.BinaryMask,
        spacing: Optional[Sequence[float]] = None) -> DistanceField:
  """Exact Euclidean distance transform.

  Args:
    seeds: Mask whose true voxels are the seeds.
    spacing: Voxel size in mm, defaults to the mask geometry spacing.

  Returns:
    The distance of every voxel to the nearest seed.

  Raises:
    EmptySeeds: If the mask has no true voxel.
  """
  if seeds.is_empty:
    raise EmptySeeds("Distance transform needs at least one seed voxel.")
  spacing = resolve_spacing(seeds.geometry, spacing)
  return DistanceField(seeds.geometry, squared_edt(seeds.bits, spacing))


def _surface_bits(bits: np.ndarray) -> np.ndarray:
  interior = ndimage.binary_erosion(
      bits, structure=_FACE_CONNECTIVITY, border_value=0)
  return bits & ~interior


def surface_voxels(mask: volume.BinaryMask) -> volume.BinaryMask:
  """Mask voxels with at least one face neighbour outside the mask or grid."""
  return volume.BinaryMask(mask.geometry, _surface_bits(mask.bits))


def _cropped_surfaces(
    a: volume.BinaryMask, b: volume.BinaryMask,
    spacing: Optional[Sequence[float]]
) -> Tuple[np.ndarray, np.ndarray, Tuple[float, ...]]:
  """Surfaces of both masks on their union bounding box padded by one voxel.

  The padding keeps the surface definition intact: a voxel on the crop border
  is either on the grid border or next to a padding voxel outside both masks.
  """
  volume.check_compatible(a.geometry, b.geometry)
  box_a, box_b = volume.bounding_box(a), volume.bounding_box(b)
  if box_a is None or box_b is None:
    raise EmptyMask("Surface distances need two non-empty masks.")
  spacing = resolve_spacing(a.geometry, spacing)
  crop = box_a.union(box_b).padded((1, 1, 1), a.geometry.dims).slices()
  logging.debug("Surface distances cropped to %s", crop)
  surface_a = _surface_bits(np.ascontiguousarray(a.bits[crop]))
  surface_b = _surface_bits(np.ascontiguousarray(b.bits[crop]))
  return surface_a, surface_b, spacing


def directed_surface_distances(
    from_mask: volume.BinaryMask,
    to_mask: volume.BinaryMask,
    spacing: Optional[Sequence[float]] = None) -> np.ndarray:
  """Distances from each surface voxel of `from_mask` to the other surface.

  Args:
    from_mask: Mask whose surface voxels are measured.
    to_mask: Mask whose surface voxels seed the transform.
    spacing: Voxel size in mm, defaults to the geometry spacing.

  Returns:
    Ascending array with one mm distance per surface voxel of `from_mask`.

  Raises:
    EmptyMask: If either mask is empty.
    GeometryMismatch: If the masks do not share geometry.
  """
  surface_from, surface_to, spacing = _cropped_surfaces(
      from_mask, to_mask, spacing)
  return np.sort(np.sqrt(squared_edt(surface_to, spacing)[surface_from]))


def surface_distances(
    a: volume.BinaryMask,
    b: volume.BinaryMask,
    spacing: Optional[Sequence[float]] = None,
) -> Tuple[np.ndarray, np.ndarray]:
  """Sorted directed surface distances in both directions.

  Args:
    a: First mask.
    b: Second mask, geometry-compatible with `a`.
    spacing: Voxel size in mm, defaults to the geometry spacing.

  Returns:
    Tuple (a to b, b to a) of ascending arrays, as returned by
    `directed_surface_distances`, sharing one crop.

  Raises:
    EmptyMask: If either mask is empty.
    GeometryMismatch: If the masks do not share geometry.
  """
  surface_a, surface_b, spacing = _cropped_surfaces(a, b, spacing)
  a_to_b = squared_edt(surface_b, spacing)[surface_a]
  b_to_a = squared_edt(surface_a, spacing)[surface_b]
  return np.sort(np.sqrt(a_to_b)), np.sort(np.sqrt(b_to_a))
