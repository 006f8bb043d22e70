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

"""Cohort manifests and cross-validation folds.

A manifest is a YAML document:

  mask_threshold: 0.5      # optional, voxels above it are foreground
  n_folds: 5               # optional, folds are within [0, n_folds)
  patients:
    - patient_id: p001
      gt_mask_path: p001/ptv.nii
      ct_path: p001/ct.nii                # optional
      bone_mask_path: [p001/ribs.nii, p001/vertebrae.nii]  # optional
      acquisition_date: 2021-03-04        # optional, ISO-8601
      fold: 0
  models:
    - model_id: unet
      predictions:
        p001: predictions/unet/p001.nii

Relative paths are resolved against the directory of the manifest file.
`bone_mask_path` is either one path or a list of paths whose masks are
unioned.
"""

import datetime
import os
from typing import Dict, List, Optional, Sequence, Tuple, Union

from absl import logging
import pydantic
import yaml

from voxmetric import utils
from voxmetric import volume


class ManifestError(volume.VoxmetricError):
  """Schema or consistency violation, with the dotted path of the field."""

  def __init__(self, field_path: str, message: str):
    super().__init__(f"{field_path}: {message}")
    self.field_path = field_path


class MissingArtifact(volume.VoxmetricError):
  pass


class InvalidFoldCount(volume.VoxmetricError, ValueError):
  pass


class PatientEntry(pydantic.BaseModel):
  model_config = pydantic.ConfigDict(extra="forbid", frozen=True)

  patient_id: str = pydantic.Field(min_length=1)
  gt_mask_path: str = pydantic.Field(min_length=1)
  ct_path: Optional[str] = None
  bone_mask_path: Optional[Union[str, List[str]]] = None
  acquisition_date: Optional[datetime.date] = None
  fold: int = pydantic.Field(default=0, ge=0)

  @property
  def bone_mask_paths(self) -> Tuple[str, ...]:
    if self.bone_mask_path is None:
      return ()
    if isinstance(self.bone_mask_path, str):
      return (self.bone_mask_path,)
    return tuple(self.bone_mask_path)


class ModelEntry(pydantic.BaseModel):
  model_config = pydantic.ConfigDict(extra="forbid", frozen=True)

  model_id: str = pydantic.Field(min_length=1)
  predictions: Dict[str, str]


class CohortManifest(pydantic.BaseModel):
  """Patients, their files and the models to evaluate on them."""
  model_config = pydantic.ConfigDict(extra="forbid", frozen=True)

  patients: List[PatientEntry] = pydantic.Field(min_length=1)
  models: List[ModelEntry] = pydantic.Field(min_length=1)
  mask_threshold: float = .5
  n_folds: int = pydantic.Field(default=5, ge=1)

  @property
  def patient_ids(self) -> List[str]:
    return [patient.patient_id for patient in self.patients]

  @property
  def model_ids(self) -> List[str]:
    return [model.model_id for model in self.models]


def _field_path(location: Sequence[Union[str, int]]) -> str:
  return ".".join(str(part) for part in location) or "<root>"


def _check_consistency(manifest: CohortManifest) -> None:
  seen = {}
  for index, patient in enumerate(manifest.patients):
    if patient.patient_id in seen:
      raise ManifestError(
          f"patients.{index}.patient_id",
          f"duplicate patient_id {patient.patient_id!r}, first used by "
          f"patients.{seen[patient.patient_id]}.")
    seen[patient.patient_id] = index
    if patient.fold >= manifest.n_folds:
      raise ManifestError(
          f"patients.{index}.fold",
          f"fold {patient.fold} is outside [0, {manifest.n_folds}).")

  model_ids = set()
  for index, model in enumerate(manifest.models):
    if model.model_id in model_ids:
      raise ManifestError(f"models.{index}.model_id",
                          f"duplicate model_id {model.model_id!r}.")
    model_ids.add(model.model_id)
    for patient_id in manifest.patient_ids:
      if patient_id not in model.predictions:
        raise ManifestError(
            f"models.{index}.predictions",
            f"model {model.model_id!r} has no prediction for patient "
            f"{patient_id!r}.")
    for patient_id in model.predictions:
      if patient_id not in seen:
        raise ManifestError(
            f"models.{index}.predictions.{patient_id}",
            f"model {model.model_id!r} refers to unknown patient "
            f"{patient_id!r}.")


def _resolve(base_dir: str, file_path: str) -> str:
  if "://" in file_path or os.path.isabs(file_path):
    return file_path
  return os.path.join(base_dir, file_path)


def _with_resolved_paths(manifest: CohortManifest,
                         base_dir: str) -> CohortManifest:
  patients = []
  for patient in manifest.patients:
    bones = patient.bone_mask_path
    if isinstance(bones, str):
      bones = _resolve(base_dir, bones)
    elif bones is not None:
      bones = [_resolve(base_dir, path) for path in bones]
    patients.append(
        patient.model_copy(
            update=dict(
                gt_mask_path=_resolve(base_dir, patient.gt_mask_path),
                ct_path=(None if patient.ct_path is None else _resolve(
                    base_dir, patient.ct_path)),
                bone_mask_path=bones)))
  models = [
      model.model_copy(
          update=dict(predictions={
              patient_id: _resolve(base_dir, path)
              for patient_id, path in model.predictions.items()
          })) for model in manifest.models
  ]
  return manifest.model_copy(update=dict(patients=patients, models=models))


def _check_files_exist(manifest: CohortManifest) -> None:
  for patient in manifest.patients:
    paths = [patient.gt_mask_path, *patient.bone_mask_paths]
    if patient.ct_path is not None:
      paths.append(patient.ct_path)
    for model in manifest.models:
      paths.append(model.predictions[patient.patient_id])
    for file_path in paths:
      if not utils.file_exists(file_path):
        raise MissingArtifact(
            f"Patient {patient.patient_id!r} refers to missing file "
            f"{file_path}.")


def parse_manifest(document: object, base_dir: str = "") -> CohortManifest:
  """Validates a parsed manifest document.

  Args:
    document: Mapping obtained from the YAML text.
    base_dir: Directory that relative paths are resolved against.

  Returns:
    The validated manifest with resolved paths. Files are not checked.

  Raises:
    ManifestError: On schema or consistency violations.
  """
  try:
    manifest = CohortManifest.model_validate(document)
  except pydantic.ValidationError as error:
    first = error.errors()[0]
    raise ManifestError(_field_path(first["loc"]), first["msg"]) from error
  _check_consistency(manifest)
  return _with_resolved_paths(manifest, base_dir)


def load_manifest(file_path: str, check_files: bool = True) -> CohortManifest:
  """Loads and validates a manifest file.

  Args:
    file_path: Path of the YAML manifest.
    check_files: Whether every referenced file is checked for existence.

  Returns:
    The validated manifest, with paths resolved against the manifest
    directory.

  Raises:
    ManifestError: On malformed YAML, schema or consistency violations.
    MissingArtifact: If a referenced file does not exist.
  """
  try:
    document = yaml.safe_load(utils.read_text(file_path))
  except yaml.YAMLError as error:
    raise ManifestError("<root>", f"invalid YAML: {error}") from error
  manifest = parse_manifest(document, os.path.dirname(file_path))
  if check_files:
    _check_files_exist(manifest)
  logging.info("Loaded manifest %s: %d patients, %d models", file_path,
               len(manifest.patients), len(manifest.models))
  return manifest


def save_manifest(manifest: CohortManifest, file_path: str) -> None:
  """Writes a manifest as YAML. Paths are written as stored."""
  document = manifest.model_dump(mode="json", exclude_none=True)
  utils.write_text(file_path, yaml.safe_dump(document, sort_keys=False))


def make_folds(patient_ids: Sequence[str],
               k: int,
               dates: Optional[Sequence[datetime.date]] = None
              ) -> Dict[str, int]:
  """Deals patients round-robin into k folds.

  With dates, patients are first sorted by date (stable for equal dates) so
  every fold spans the whole acquisition period.

  Args:
    patient_ids: Patient identifiers.
    k: Number of folds.
    dates: Optional acquisition date per patient.

  Returns:
    Mapping from patient id to fold, in input order. Fold sizes differ by at
    most one.

  Raises:
    InvalidFoldCount: If k < 2 or k exceeds the number of patients.
  """
  if k < 2 or k > len(patient_ids):
    raise InvalidFoldCount(
        f"Cannot split {len(patient_ids)} patients into {k} folds.")
  order = list(range(len(patient_ids)))
  if dates is not None:
    if len(dates) != len(patient_ids) or any(date is None for date in dates):
      raise ValueError("Temporal folds need one date per patient.")
    order.sort(key=lambda index: dates[index])
  folds = {}
  for position, index in enumerate(order):
    folds[patient_ids[index]] = position % k
  return {patient_id: folds[patient_id] for patient_id in patient_ids}


def with_folds(manifest: CohortManifest, folds: Dict[str, int],
               n_folds: int) -> CohortManifest:
  """Returns the manifest with the given fold assignment."""
  patients = [
      patient.model_copy(update=dict(fold=folds[patient.patient_id]))
      for patient in manifest.patients
  ]
  return manifest.model_copy(update=dict(patients=patients, n_folds=n_folds))
