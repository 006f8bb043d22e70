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

"""Overlap and surface distance metrics between two segmentations.

Conventions:
- Dice of two empty masks is 1.0, and 0.0 when exactly one is empty.
- Hausdorff metrics are undefined (None in a MetricRecord) when a mask is
  empty. No sentinel distance is ever reported.
- HD95 is the larger of the two directed 95th percentiles, each computed with
  linear interpolation at rank (n - 1) * 0.95.
"""

import dataclasses
from typing import Any, Dict, Optional, Sequence, Tuple

from absl import logging
import numpy as np

from voxmetric import distance
from voxmetric import mask_algebra
from voxmetric import utils
from voxmetric import volume

CSV_COLUMNS = ("patient_id", "model_id", "dsc", "hd_mm", "hd95_mm",
               "dsc_bones_excluded")


class UndefinedMetric(distance.EmptyMask):
  pass


@dataclasses.dataclass(frozen=True)
class MetricRecord:
  """Evaluation of one model prediction for one patient.

  Attributes:
    patient_id: Patient identifier.
    model_id: Model identifier.
    dsc: Dice similarity coefficient.
    hd_mm: Hausdorff distance, None when undefined.
    hd95_mm: 95th percentile Hausdorff distance, None when undefined.
    dsc_bones_excluded: Dice after removing bone voxels from both masks, None
      when no bone mask was used.
    fold: Cross-validation fold of the patient, kept for audit.
    failure: Reason why the case could not be evaluated. All metric values
      are None when it is set.
  """
  patient_id: str
  model_id: str
  dsc: Optional[float]
  hd_mm: Optional[float] = None
  hd95_mm: Optional[float] = None
  dsc_bones_excluded: Optional[float] = None
  fold: Optional[int] = None
  failure: Optional[str] = None

  @classmethod
  def failed(cls, patient_id: str, model_id: str, reason: str,
             fold: Optional[int] = None) -> "MetricRecord":
    return cls(patient_id, model_id, dsc=None, fold=fold, failure=reason)

  def to_row(self) -> Dict[str, Any]:
    return {column: getattr(self, column) for column in CSV_COLUMNS}


def dice(gt: volume.BinaryMask, pred: volume.BinaryMask) -> float:
  """Dice similarity coefficient 2|X & Y| / (|X| + |Y|).

  Args:
    gt: Ground truth mask.
    pred: Predicted mask.

  Returns:
    The overlap ratio in [0, 1]; 1.0 when both masks are empty.

  Raises:
    GeometryMismatch: If the masks do not share geometry.
  """
  volume.check_compatible(gt.geometry, pred.geometry)
  total = gt.voxel_count + pred.voxel_count
  if not total:
    return 1.
  overlap = int(np.count_nonzero(gt.bits & pred.bits))
  return 2. * overlap / total


def _directed_pair(
    gt: volume.BinaryMask, pred: volume.BinaryMask,
    spacing: Optional[Sequence[float]]) -> Tuple[np.ndarray, np.ndarray]:
  try:
    return distance.surface_distances(gt, pred, spacing)
  except UndefinedMetric:
    raise
  except distance.EmptyMask as error:
    raise UndefinedMetric(
        "Hausdorff metrics are undefined for an empty mask.") from error


def _percentile_of_pair(distances: Tuple[np.ndarray, np.ndarray],
                        q: float) -> float:
  return max(utils.linear_percentile(directed, q / 100.)
             for directed in distances)


def hausdorff(gt: volume.BinaryMask,
              pred: volume.BinaryMask,
              spacing: Optional[Sequence[float]] = None) -> float:
  """Hausdorff distance in mm between the mask surfaces.

  Args:
    gt: Ground truth mask.
    pred: Predicted mask.
    spacing: Voxel size in mm, defaults to the geometry spacing.

  Returns:
    The largest of all nearest surface distances, in both directions.

  Raises:
    UndefinedMetric: If either mask is empty.
    GeometryMismatch: If the masks do not share geometry.
  """
  forward, backward = _directed_pair(gt, pred, spacing)
  return float(max(forward[-1], backward[-1]))


def surface_distance_percentile(gt: volume.BinaryMask,
                                pred: volume.BinaryMask,
                                q: float,
                                spacing: Optional[Sequence[float]] = None
                               ) -> float:
  """Symmetric percentile of the directed surface distances.

  Args:
    gt: Ground truth mask.
    pred: Predicted mask.
    q: Percentile in [0, 100]. 100 gives the Hausdorff distance.
    spacing: Voxel size in mm, defaults to the geometry spacing.

  Returns:
    The larger of the two directed percentiles, in mm.

  Raises:
    UndefinedMetric: If either mask is empty.
    ValueError: If q is outside [0, 100].
  """
  if not 0 <= q <= 100:
    raise ValueError(f"Percentile must be within [0, 100], got {q}.")
  return _percentile_of_pair(_directed_pair(gt, pred, spacing), q)


def hd95(gt: volume.BinaryMask,
         pred: volume.BinaryMask,
         spacing: Optional[Sequence[float]] = None) -> float:
  """95th percentile Hausdorff distance in mm between the mask surfaces.

  Args:
    gt: Ground truth mask.
    pred: Predicted mask.
    spacing: Voxel size in mm, defaults to the geometry spacing.

  Returns:
    The larger of the two directed 95th percentiles of the nearest surface
    distances, interpolated linearly between closest ranks.

  Raises:
    UndefinedMetric: If either mask is empty.
    GeometryMismatch: If the masks do not share geometry.
  """
  return surface_distance_percentile(gt, pred, 95., spacing)


def evaluate_pair(gt: volume.BinaryMask,
                  pred: volume.BinaryMask,
                  spacing: Optional[Sequence[float]] = None,
                  bones: Optional[volume.BinaryMask] = None,
                  patient_id: str = "",
                  model_id: str = "",
                  fold: Optional[int] = None) -> MetricRecord:
  """Computes every metric of one prediction.

  Hausdorff metrics are computed on the full masks only. With a bone mask,
  the Dice is also computed after removing the bone voxels from both masks.

  Args:
    gt: Ground truth mask.
    pred: Predicted mask.
    spacing: Voxel size in mm, defaults to the geometry spacing.
    bones: Optional bone mask to subtract.
    patient_id: Patient identifier stored in the record.
    model_id: Model identifier stored in the record.
    fold: Fold stored in the record.

  Returns:
    The metric record. HD values are None when a mask is empty.

  Raises:
    GeometryMismatch: If the masks do not share geometry.
  """
  dsc = dice(gt, pred)
  hd_mm = hd95_mm = None
  try:
    directed = _directed_pair(gt, pred, spacing)
  except UndefinedMetric:
    logging.warning("HD undefined for patient %s model %s: empty mask.",
                    patient_id, model_id)
  else:
    hd_mm = _percentile_of_pair(directed, 100.)
    hd95_mm = _percentile_of_pair(directed, 95.)

  dsc_bones_excluded = None
  if bones is not None:
    volume.check_compatible(gt.geometry, bones.geometry)
    dsc_bones_excluded = dice(
        mask_algebra.subtract(gt, bones), mask_algebra.subtract(pred, bones))
  return MetricRecord(
      patient_id=patient_id,
      model_id=model_id,
      dsc=dsc,
      hd_mm=hd_mm,
      hd95_mm=hd95_mm,
      dsc_bones_excluded=dsc_bones_excluded,
      fold=fold)
