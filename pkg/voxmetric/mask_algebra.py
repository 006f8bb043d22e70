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

"""Set operations on masks and isotropic CTV to PTV margin expansion."""

import dataclasses
import functools
import math
from typing import Optional, Sequence, Tuple

from absl import logging
import numpy as np

from voxmetric import distance
from voxmetric import volume


@dataclasses.dataclass(frozen=True)
class MarginSpec:
  """Isotropic safety margin.

  Attributes:
    margin_mm: Expansion distance in mm.
  """
  margin_mm: float

  def __post_init__(self):
    if not (np.isfinite(self.margin_mm) and self.margin_mm >= 0):
      raise ValueError(f"Margin must be a non-negative mm value, got "
                       f"{self.margin_mm}.")


BONE_MARROW_MARGIN = MarginSpec(2.)
LIMB_MARGIN = MarginSpec(8.)
SPLEEN_MARGIN = MarginSpec(5.)
LYMPH_NODE_MARGIN = MarginSpec(5.)


def union(masks: Sequence[volume.BinaryMask]) -> volume.BinaryMask:
  """Voxelwise OR of one or more masks.

  Args:
    masks: Geometry-compatible masks.

  Returns:
    The union mask.

  Raises:
    EmptyInput: If no mask is given.
    GeometryMismatch: If the masks do not share geometry.
  """
  if not masks:
    raise volume.EmptyInput("Union needs at least one mask.")
  volume.check_compatible(*(mask.geometry for mask in masks))
  bits = functools.reduce(np.logical_or, (mask.bits for mask in masks))
  return volume.BinaryMask(masks[0].geometry, bits)


def intersect(a: volume.BinaryMask, b: volume.BinaryMask) -> volume.BinaryMask:
  volume.check_compatible(a.geometry, b.geometry)
  return volume.BinaryMask(a.geometry, a.bits & b.bits)


def subtract(a: volume.BinaryMask, b: volume.BinaryMask) -> volume.BinaryMask:
  """Voxels of `a` that are not in `b`."""
  volume.check_compatible(a.geometry, b.geometry)
  return volume.BinaryMask(a.geometry, a.bits & ~b.bits)


def expand_margin(
    mask: volume.BinaryMask,
    margin: MarginSpec,
    spacing: Optional[Sequence[float]] = None) -> volume.BinaryMask:
  """Closed ball expansion of a mask.

  A voxel is set when its center lies within margin_mm of the center of a
  mask voxel. The transform runs on the mask bounding box grown by the margin
  along each axis, which holds every voxel that can be reached.

  Args:
    mask: Mask to expand.
    margin: Expansion distance.
    spacing: Voxel size in mm, defaults to the mask geometry spacing.

  Returns:
    The expanded mask.

  Raises:
    EmptySeeds: If the mask is empty.
  """
  box = volume.bounding_box(mask)
  if box is None:
    raise distance.EmptySeeds("Cannot expand an empty mask.")
  if margin.margin_mm == 0:
    return mask
  spacing = distance.resolve_spacing(mask.geometry, spacing)
  reach = tuple(math.ceil(margin.margin_mm / step) for step in spacing)
  crop = box.padded(reach, mask.geometry.dims).slices()
  squared = distance.squared_edt(mask.bits[crop], spacing)
  bits = np.zeros(mask.geometry.dims, dtype=bool)
  bits[crop] = squared <= margin.margin_mm ** 2
  return volume.BinaryMask(mask.geometry, bits)


def build_ptv(parts: Sequence[Tuple[volume.BinaryMask, MarginSpec]],
              spacing: Optional[Sequence[float]] = None) -> volume.BinaryMask:
  """Unions the margin expansions of several CTVs.

  Regional margins, like the larger one used for arms and legs, are given as
  separate parts with their own MarginSpec.

  Args:
    parts: Pairs of CTV mask and margin.
    spacing: Voxel size in mm, defaults to the geometry spacing.

  Returns:
    The PTV mask.

  Raises:
    EmptyInput: If no part is given.
    EmptySeeds: If one of the CTVs is empty.
    GeometryMismatch: If the CTVs do not share geometry.
  """
  if not parts:
    raise volume.EmptyInput("A PTV needs at least one CTV.")
  volume.check_compatible(*(mask.geometry for mask, _ in parts))
  expanded = [expand_margin(mask, margin, spacing) for mask, margin in parts]
  ptv = union(expanded)
  logging.debug("Built PTV of %d voxels from %d parts", ptv.voxel_count,
                len(parts))
  return ptv
