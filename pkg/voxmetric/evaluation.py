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

"""Batch evaluation of a cohort and the reports it produces.

Patients are evaluated independently, optionally by a pool of worker threads,
and the results are merged in manifest order, so a report only depends on the
manifest contents and on the options other than `parallelism`.

Statistics run on the per-patient values pooled across folds. Fold ids are
kept in the records and in the per-fold medians for audit only.
"""

from concurrent import futures
import dataclasses
import functools
import itertools
import json
import os
from typing import (Any, Callable, Dict, List, Optional, Sequence, Tuple,
                    TypeVar)

from absl import logging
import immutabledict
import numpy as np
import pandas as pd
from typing_extensions import Literal

from voxmetric import cohort
from voxmetric import mask_algebra
from voxmetric import metrics
from voxmetric import nifti
from voxmetric import preprocessing
from voxmetric import stats
from voxmetric import utils
from voxmetric import volume

Comparison = Literal["kruskal-wallis", "paired-t"]
Preprocessing = Literal["none", "window", "normalize"]
ReportFormat = Literal["csv", "json"]

METRICS = ("dsc", "hd_mm", "hd95_mm", "dsc_bones_excluded")
COMPARISONS = ("kruskal-wallis", "paired-t")
PREPROCESSING = ("none", "window", "normalize")
_PREPROCESSED_NAMES = immutabledict.immutabledict({
    "window": "{}_ct_window.nii",
    "normalize": "{}_ct_normalized.nii",
})
_CASE_ERRORS = (volume.VoxmetricError, OSError)
_STATS_ERRORS = (stats.DegenerateData, volume.EmptyInput, ValueError)


class EvaluationFailed(volume.VoxmetricError):
  pass


class MalformedReport(volume.VoxmetricError):
  pass


class WrongIntensityUnit(volume.VoxmetricError):
  pass


@dataclasses.dataclass(frozen=True)
class EvaluationOptions:
  """Options of a cohort evaluation.

  Attributes:
    with_bone_subtraction: Whether the Dice is also computed without the
      patient's bone voxels.
    parallelism: Number of patients evaluated at once, capped by the
      VOXMETRIC_MAX_WORKERS environment variable.
    comparison: Kruskal-Wallis with Dunn post-hoc tests, or pairwise paired
      t-tests, both with Holm adjusted pairwise p-values.
    intensity_stats: Whether the pooled CT statistics under the ground truth
      masks are added to the report.
  """
  with_bone_subtraction: bool = False
  parallelism: int = 1
  comparison: Comparison = "kruskal-wallis"
  intensity_stats: bool = False

  def __post_init__(self):
    if self.comparison not in COMPARISONS:
      raise ValueError(f"Unknown comparison {self.comparison!r}, expected one "
                       f"of {COMPARISONS}.")

  def to_json_dict(self) -> Dict[str, Any]:
    """Options that change the report, so without parallelism."""
    return dict(
        with_bone_subtraction=self.with_bone_subtraction,
        comparison=self.comparison,
        intensity_stats=self.intensity_stats)


@dataclasses.dataclass(frozen=True)
class MetricComparison:
  """Statistical comparison of the models on one metric.

  Attributes:
    metric: Compared metric.
    comparison: Procedure used.
    group_sizes: Number of values used per model, or per pair for paired
      t-tests (keyed "a vs b").
    omnibus: Kruskal-Wallis result, None for paired t-tests.
    pairwise: Pairwise results with Holm adjusted p-values.
    error: Why the statistics could not be computed, e.g. identical values.
  """
  metric: str
  comparison: Comparison
  group_sizes: Dict[str, int]
  omnibus: Optional[stats.TestResult] = None
  pairwise: List[stats.PairwiseResult] = dataclasses.field(
      default_factory=list)
  error: Optional[str] = None


@dataclasses.dataclass(frozen=True)
class EvaluationReport:
  """Everything computed for a cohort.

  Attributes:
    model_ids: Models in manifest order.
    records: One record per (patient, model), patients then models in
      manifest order.
    summaries: Summary per model and metric, over the defined values.
    comparisons: Comparison per metric with at least one defined value.
    bone_subtraction_drop: Median of dsc - dsc_bones_excluded per model.
    fold_medians: Median per model, fold and metric.
    intensity_stats: Pooled CT statistics under the ground truth masks.
    options: Options the report was computed with.
  """
  model_ids: List[str]
  records: List[metrics.MetricRecord]
  summaries: Dict[str, Dict[str, stats.Summary]]
  comparisons: Dict[str, MetricComparison]
  bone_subtraction_drop: Dict[str, Optional[float]]
  fold_medians: Dict[str, Dict[str, Dict[str, float]]]
  intensity_stats: Optional[preprocessing.NormStats]
  options: Dict[str, Any]

  def to_json_dict(self) -> Dict[str, Any]:
    return dataclasses.asdict(self)

  @classmethod
  def from_json_dict(cls, document: Dict[str, Any]) -> "EvaluationReport":
    """Rebuilds a report from `to_json_dict` output.

    Raises:
      MalformedReport: If a field is missing or has the wrong shape.
    """
    try:
      comparisons = {}
      for metric, entry in document["comparisons"].items():
        omnibus = entry["omnibus"]
        comparisons[metric] = MetricComparison(
            metric=entry["metric"],
            comparison=entry["comparison"],
            group_sizes=dict(entry["group_sizes"]),
            omnibus=None if omnibus is None else stats.TestResult(**omnibus),
            pairwise=[
                stats.PairwiseResult(**{**pair, "pair": tuple(pair["pair"])})
                for pair in entry["pairwise"]
            ],
            error=entry["error"])
      intensity = document["intensity_stats"]
      return cls(
          model_ids=list(document["model_ids"]),
          records=[
              metrics.MetricRecord(**record) for record in document["records"]
          ],
          summaries={
              model_id: {
                  metric: stats.Summary(**summary)
                  for metric, summary in by_metric.items()
              } for model_id, by_metric in document["summaries"].items()
          },
          comparisons=comparisons,
          bone_subtraction_drop=dict(document["bone_subtraction_drop"]),
          fold_medians={
              model_id: {
                  fold: dict(values) for fold, values in folds.items()
              } for model_id, folds in document["fold_medians"].items()
          },
          intensity_stats=(None if intensity is None else
                           preprocessing.NormStats(**intensity)),
          options=dict(document["options"]))
    except (KeyError, TypeError, AttributeError, ValueError) as error:
      raise MalformedReport(f"Not an evaluation report: {error!r}") from error


@dataclasses.dataclass(frozen=True)
class _PatientOutcome:
  records: List[metrics.MetricRecord]
  foreground: Optional[np.ndarray] = None


def _load_bones(patient: cohort.PatientEntry, gt: volume.BinaryMask,
                threshold: float) -> Optional[volume.BinaryMask]:
  """Union of the patient's bone masks, None when they are unusable."""
  if not patient.bone_mask_paths:
    return None
  try:
    masks = [
        nifti.load_mask(file_path, threshold)
        for file_path in patient.bone_mask_paths
    ]
    volume.check_compatible(gt.geometry, *(mask.geometry for mask in masks))
  except _CASE_ERRORS as error:
    logging.warning("Bone mask of patient %s ignored: %s", patient.patient_id,
                    error)
    return None
  return mask_algebra.union(masks)


def _evaluate_patient(patient: cohort.PatientEntry,
                      manifest: cohort.CohortManifest,
                      options: EvaluationOptions) -> _PatientOutcome:
  threshold = manifest.mask_threshold
  try:
    gt = nifti.load_mask(patient.gt_mask_path, threshold)
  except _CASE_ERRORS as error:
    reason = f"ground truth: {error}"
    logging.warning("Patient %s not evaluated, %s", patient.patient_id, reason)
    return _PatientOutcome([
        metrics.MetricRecord.failed(patient.patient_id, model.model_id, reason,
                                    patient.fold) for model in manifest.models
    ])
  bones = (
      _load_bones(patient, gt, threshold)
      if options.with_bone_subtraction else None)

  records = []
  for model in manifest.models:
    try:
      pred = nifti.load_mask(model.predictions[patient.patient_id], threshold)
      record = metrics.evaluate_pair(
          gt,
          pred,
          bones=bones,
          patient_id=patient.patient_id,
          model_id=model.model_id,
          fold=patient.fold)
    except _CASE_ERRORS as error:
      logging.warning("Case %s/%s not evaluated: %s", patient.patient_id,
                      model.model_id, error)
      record = metrics.MetricRecord.failed(patient.patient_id, model.model_id,
                                           str(error), patient.fold)
    records.append(record)

  foreground = None
  if options.intensity_stats and patient.ct_path is not None:
    try:
      foreground = preprocessing.foreground_values(
          nifti.load_nifti(patient.ct_path), gt)
    except _CASE_ERRORS as error:
      logging.warning("CT of patient %s left out of the intensity stats: %s",
                      patient.patient_id, error)
  logging.info("Evaluated patient %s", patient.patient_id)
  return _PatientOutcome(records, foreground)


def _values_by_model(records: Sequence[metrics.MetricRecord],
                     model_ids: Sequence[str],
                     metric: str) -> Dict[str, Dict[str, float]]:
  """Defined values of a metric, per model and patient."""
  values = {model_id: {} for model_id in model_ids}
  for record in records:
    value = getattr(record, metric)
    if value is not None and record.model_id in values:
      values[record.model_id][record.patient_id] = value
  return values


def _check_metric(metric: str) -> None:
  if metric not in METRICS:
    raise ValueError(f"Unknown metric {metric!r}, expected one of {METRICS}.")


def _rank_comparison(metric: str,
                     values: Dict[str, Dict[str, float]]) -> MetricComparison:
  model_ids = list(values)
  groups = [list(values[model_id].values()) for model_id in model_ids]
  group_sizes = {model_id: len(group) for model_id, group in zip(model_ids,
                                                                  groups)}
  try:
    omnibus = stats.kruskal_wallis(groups)
    pairwise = stats.dunn_posthoc(groups, labels=model_ids)
  except _STATS_ERRORS as error:
    logging.warning("No Kruskal-Wallis test for %s: %s", metric, error)
    return MetricComparison(metric, "kruskal-wallis", group_sizes,
                            error=str(error))
  return MetricComparison(metric, "kruskal-wallis", group_sizes, omnibus,
                          pairwise)


def _paired_comparison(metric: str,
                       values: Dict[str, Dict[str, float]]) -> MetricComparison:
  pairs, sizes, results = [], {}, []
  try:
    if len(values) < 2:
      raise ValueError(f"Paired t-tests need at least 2 models, got "
                       f"{len(values)}.")
    for first, second in itertools.combinations(values, 2):
      common = [
          patient_id for patient_id in values[first]
          if patient_id in values[second]
      ]
      sizes[f"{first} vs {second}"] = len(common)
      results.append(
          stats.paired_t([values[first][p] for p in common],
                         [values[second][p] for p in common]))
      pairs.append((first, second))
  except _STATS_ERRORS as error:
    logging.warning("No paired t-tests for %s: %s", metric, error)
    return MetricComparison(metric, "paired-t", sizes, error=str(error))
  adjusted = stats.holm_adjust([result.p_value for result in results])
  pairwise = [
      stats.PairwiseResult(
          pair=pair, z=result.statistic, p_raw=result.p_value, p_adjusted=p)
      for pair, result, p in zip(pairs, results, adjusted)
  ]
  return MetricComparison(metric, "paired-t", sizes, pairwise=pairwise)


def _compare(records: Sequence[metrics.MetricRecord],
             model_ids: Sequence[str], metric: str,
             comparison: Comparison) -> MetricComparison:
  values = _values_by_model(records, model_ids, metric)
  if comparison == "kruskal-wallis":
    return _rank_comparison(metric, values)
  if comparison == "paired-t":
    return _paired_comparison(metric, values)
  raise ValueError(f"Unknown comparison {comparison!r}.")


def compare_models(report: EvaluationReport,
                   metric: str,
                   comparison: Comparison = "kruskal-wallis"
                  ) -> MetricComparison:
  """Runs the statistics of one metric again from a report.

  Args:
    report: Evaluation report.
    metric: One of METRICS.
    comparison: "kruskal-wallis" (with Dunn post-hoc tests) or "paired-t".

  Returns:
    The comparison. Degenerate data is reported in its `error` field.

  Raises:
    ValueError: For an unknown metric or comparison.
    EmptyInput: If no record has a value for the metric.
  """
  _check_metric(metric)
  values = _values_by_model(report.records, report.model_ids, metric)
  if not any(values.values()):
    raise volume.EmptyInput(f"No record has a value for {metric}.")
  return _compare(report.records, report.model_ids, metric, comparison)


def _summaries(records: Sequence[metrics.MetricRecord],
               model_ids: Sequence[str]) -> Dict[str, Dict[str, stats.Summary]]:
  summaries = {model_id: {} for model_id in model_ids}
  for metric in METRICS:
    for model_id, by_patient in _values_by_model(records, model_ids,
                                                 metric).items():
      if by_patient:
        summaries[model_id][metric] = stats.summarize(list(by_patient.values()))
  return summaries


def _bone_subtraction_drop(
    records: Sequence[metrics.MetricRecord],
    model_ids: Sequence[str]) -> Dict[str, Optional[float]]:
  drops = {}
  for model_id in model_ids:
    differences = [
        record.dsc - record.dsc_bones_excluded
        for record in records
        if record.model_id == model_id and record.dsc is not None and
        record.dsc_bones_excluded is not None
    ]
    drops[model_id] = (
        utils.linear_percentile(differences, .5) if differences else None)
  return drops


def _fold_medians(
    records: Sequence[metrics.MetricRecord],
    model_ids: Sequence[str]) -> Dict[str, Dict[str, Dict[str, float]]]:
  medians = {model_id: {} for model_id in model_ids}
  folds = sorted({record.fold for record in records if record.fold is not None})
  for model_id in model_ids:
    for fold in folds:
      in_fold = [
          record for record in records
          if record.model_id == model_id and record.fold == fold
      ]
      by_metric = {}
      for metric in METRICS:
        values = [
            getattr(record, metric)
            for record in in_fold
            if getattr(record, metric) is not None
        ]
        if values:
          by_metric[metric] = utils.linear_percentile(values, .5)
      if by_metric:
        medians[model_id][str(fold)] = by_metric
  return medians


def _intensity_stats(
    outcomes: Sequence[_PatientOutcome]) -> Optional[preprocessing.NormStats]:
  samples = [
      outcome.foreground
      for outcome in outcomes
      if outcome.foreground is not None
  ]
  try:
    return preprocessing.pooled_stats(samples)
  except preprocessing.EmptyForeground as error:
    logging.warning("No intensity statistics: %s", error)
    return None


_T = TypeVar("_T")


def _map_patients(function: Callable[[cohort.PatientEntry], _T],
                  patients: Sequence[cohort.PatientEntry],
                  workers: int) -> List[_T]:
  """Applies `function` to every patient, results in manifest order."""
  if workers == 1:
    return [function(patient) for patient in patients]
  with futures.ThreadPoolExecutor(max_workers=workers) as executor:
    return list(executor.map(function, patients))


def run_evaluation(
    manifest: cohort.CohortManifest,
    options: EvaluationOptions = EvaluationOptions()) -> EvaluationReport:
  """Evaluates every model on every patient of a cohort.

  Args:
    manifest: Validated cohort manifest.
    options: Evaluation options.

  Returns:
    The report. Cases that could not be evaluated are kept as records with a
    failure reason.

  Raises:
    EvaluationFailed: If no case could be evaluated.
  """
  workers = utils.effective_workers(options.parallelism)
  evaluate = functools.partial(
      _evaluate_patient, manifest=manifest, options=options)
  logging.info("Evaluating %d patients x %d models with %d workers",
               len(manifest.patients), len(manifest.models), workers)
  outcomes = _map_patients(evaluate, manifest.patients, workers)

  records = [record for outcome in outcomes for record in outcome.records]
  failures = sum(record.failure is not None for record in records)
  if failures == len(records):
    raise EvaluationFailed(f"None of the {len(records)} cases could be "
                           "evaluated.")
  if failures:
    logging.warning("%d of %d cases could not be evaluated", failures,
                    len(records))

  model_ids = manifest.model_ids
  comparisons = {}
  for metric in METRICS:
    if any(_values_by_model(records, model_ids, metric).values()):
      comparisons[metric] = _compare(records, model_ids, metric,
                                     options.comparison)
  return EvaluationReport(
      model_ids=list(model_ids),
      records=records,
      summaries=_summaries(records, model_ids),
      comparisons=comparisons,
      bone_subtraction_drop=(_bone_subtraction_drop(records, model_ids)
                             if options.with_bone_subtraction else {}),
      fold_medians=_fold_medians(records, model_ids),
      intensity_stats=(_intensity_stats(outcomes)
                       if options.intensity_stats else None),
      options=options.to_json_dict())


def _load_ct(patient: cohort.PatientEntry) -> volume.Volume:
  image = nifti.load_nifti(patient.ct_path)
  if image.unit != "HU":
    raise WrongIntensityUnit(
        f"CT of patient {patient.patient_id} is in {image.unit}, not HU.")
  return image


def _check_cts(manifest: cohort.CohortManifest) -> None:
  missing = [p.patient_id for p in manifest.patients if p.ct_path is None]
  if missing:
    raise cohort.MissingArtifact(
        f"Preprocessing needs a CT for every patient, missing for {missing}.")


def cohort_intensity_stats(
    manifest: cohort.CohortManifest,
    parallelism: int = 1) -> preprocessing.NormStats:
  """Pooled CT statistics under the ground truth masks of every patient.

  Raises:
    MissingArtifact: If a patient has no CT.
    EmptyForeground: If every ground truth mask is empty.
  """
  _check_cts(manifest)

  def foreground(patient: cohort.PatientEntry) -> np.ndarray:
    gt = nifti.load_mask(patient.gt_mask_path, manifest.mask_threshold)
    return preprocessing.foreground_values(_load_ct(patient), gt)

  samples = _map_patients(foreground, manifest.patients,
                          utils.effective_workers(parallelism))
  return preprocessing.pooled_stats(samples)


def preprocess_cohort(
    manifest: cohort.CohortManifest,
    mode: Preprocessing,
    out_dir: str,
    norm_stats: Optional[preprocessing.NormStats] = None,
    window: preprocessing.WindowSpec = preprocessing.SOFT_TISSUE_WINDOW,
    parallelism: int = 1) -> Dict[str, str]:
  """Writes the windowed or normalized CT of every patient.

  Files are named `<patient_id>_ct_window.nii` and
  `<patient_id>_ct_normalized.nii` in `out_dir`. All patients are normalized
  with the same pooled foreground statistics.

  Args:
    manifest: Validated cohort manifest.
    mode: "window" for the 8-bit display LUT, "normalize" for the clipped
      z-score, "none" to write nothing.
    out_dir: Destination directory, created if needed.
    norm_stats: Pooled statistics used by "normalize". Computed from the CTs
      under the ground truth masks when None.
    window: Window used by "window".
    parallelism: Number of patients processed at once.

  Returns:
    The written file per patient id, in manifest order.

  Raises:
    ValueError: For an unknown mode.
    MissingArtifact: If a patient has no CT.
    EmptyForeground: If the statistics must be computed and every ground
      truth mask is empty.
    WrongIntensityUnit: If a CT is not in HU.
    DegenerateStats: If the pooled standard deviation is zero.
  """
  if mode not in PREPROCESSING:
    raise ValueError(f"Unknown preprocessing {mode!r}, expected one of "
                     f"{PREPROCESSING}.")
  if mode == "none":
    return {}
  _check_cts(manifest)
  if mode == "normalize" and norm_stats is None:
    norm_stats = cohort_intensity_stats(manifest, parallelism)
  utils.make_dirs(out_dir)

  def transform(patient: cohort.PatientEntry) -> str:
    image = _load_ct(patient)
    if mode == "window":
      result = preprocessing.window_lut(image, window)
    else:
      result = preprocessing.normalize(image, norm_stats)
    file_path = os.path.join(out_dir,
                             _PREPROCESSED_NAMES[mode].format(
                                 patient.patient_id))
    nifti.save_nifti(result, file_path)
    return file_path

  written = _map_patients(transform, manifest.patients,
                          utils.effective_workers(parallelism))
  logging.info("Wrote %s CT of %d patients to %s", mode, len(written),
               out_dir)
  return dict(zip(manifest.patient_ids, written))


def report_to_csv(report: EvaluationReport) -> str:
  """One row per record; undefined values are empty cells."""
  frame = pd.DataFrame([record.to_row() for record in report.records],
                       columns=list(metrics.CSV_COLUMNS))
  return frame.to_csv(index=False, na_rep="")


def report_to_json(report: EvaluationReport) -> str:
  return json.dumps(report.to_json_dict(), indent=2, allow_nan=False) + "\n"


def emit_report(report: EvaluationReport, report_format: ReportFormat,
                file_path: str) -> None:
  """Writes a report.

  Args:
    report: Report to write.
    report_format: "csv" for the per-record table, "json" for the full report.
    file_path: Destination path.

  Raises:
    ValueError: For an unknown format.
    WriteError: If the file cannot be written.
  """
  if report_format == "csv":
    text = report_to_csv(report)
  elif report_format == "json":
    text = report_to_json(report)
  else:
    raise ValueError(f"Unknown report format {report_format!r}.")
  try:
    utils.write_text(file_path, text)
  except OSError as error:
    raise nifti.WriteError(str(error)) from error
  logging.info("Wrote %s report to %s", report_format, file_path)


def load_report(file_path: str) -> EvaluationReport:
  """Reads a JSON report written by emit_report.

  Raises:
    MalformedReport: If the file is not a JSON evaluation report.
  """
  try:
    document = json.loads(utils.read_text(file_path))
  except json.JSONDecodeError as error:
    raise MalformedReport(f"{file_path} is not valid JSON: {error}") from error
  if not isinstance(document, dict):
    raise MalformedReport(f"{file_path} is not an evaluation report.")
  return EvaluationReport.from_json_dict(document)


def summary_table(report: EvaluationReport,
                  metric_names: Tuple[str, ...] = METRICS) -> pd.DataFrame:
  """Per-model "median (min-max)" text, one column per metric.

  Dice values are rendered in percent.
  """
  rows = {}
  for model_id in report.model_ids:
    row = {}
    for metric in metric_names:
      summary = report.summaries[model_id].get(metric)
      scale = 100. if metric.startswith("dsc") else 1.
      row[metric] = "" if summary is None else summary.describe(scale=scale)
    rows[model_id] = row
  return pd.DataFrame.from_dict(rows, orient="index",
                                columns=list(metric_names))
