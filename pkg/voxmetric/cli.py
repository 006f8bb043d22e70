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

r"""Command line interface of voxmetric.

Usage:

  voxmetric eval --manifest cohort.yaml --bones --out report.json
  voxmetric eval --manifest cohort.yaml --out report.json \
      --preprocess normalize --preprocess-dir preprocessed/
  voxmetric folds --manifest cohort.yaml -k 5 [--temporal] [--out folded.yaml]
  voxmetric phantom --spec phantom.yaml --seed 3 --out-dir phantoms/
  voxmetric stats --report report.json --metric hd95_mm [--comparison paired-t]
  voxmetric report --report report.json --out report.csv

Flag names accept dashes or underscores. Every flag can also be set in the
YAML file given by --config, whose keys are flag names; flags given on the
command line win over the file.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error. The
VOXMETRIC_MAX_WORKERS environment variable caps --parallelism.
"""

import dataclasses
import json
import sys
from typing import Callable, Dict, List, Optional, Sequence

from absl import app
from absl import flags
from absl import logging
import yaml

from voxmetric import cohort
from voxmetric import evaluation
from voxmetric import phantom
from voxmetric import utils
from voxmetric import volume

EXIT_OK = 0
EXIT_USAGE_ERROR = 1
EXIT_DATA_ERROR = 2
EXIT_INTERNAL_ERROR = 3

_CONFIG = flags.DEFINE_string(
    "config", None, "YAML file with flag values. Command line flags win.")
_MANIFEST = flags.DEFINE_string("manifest", None, "Cohort manifest (YAML).")
_REPORT = flags.DEFINE_string("report", None, "JSON evaluation report.")
_OUT = flags.DEFINE_string("out", None, "Output file.")
_FORMAT = flags.DEFINE_enum(
    "format", None, ["csv", "json"],
    "Report format. Defaults to csv for .csv outputs and json otherwise.")
_BONES = flags.DEFINE_bool(
    "bones", False, "Also compute the Dice with the bone voxels removed.")
_PARALLELISM = flags.DEFINE_integer(
    "parallelism", 1, "Number of patients evaluated at once.", lower_bound=1)
_COMPARISON = flags.DEFINE_enum("comparison", "kruskal-wallis",
                                list(evaluation.COMPARISONS),
                                "Statistical comparison of the models.")
_INTENSITY_STATS = flags.DEFINE_bool(
    "intensity_stats", False,
    "Add the pooled CT statistics under the ground truth to the report.")
_PREPROCESS = flags.DEFINE_enum(
    "preprocess", "none", list(evaluation.PREPROCESSING),
    "CT preprocessing written by eval: 8-bit window or pooled z-score.")
_PREPROCESS_DIR = flags.DEFINE_string(
    "preprocess_dir", None, "Where eval writes the preprocessed CTs.")
_METRIC = flags.DEFINE_enum("metric", "dsc", list(evaluation.METRICS),
                            "Metric compared by the stats command.")
_NUM_FOLDS = flags.DEFINE_integer(
    "num_folds", 5, "Number of cross-validation folds.", short_name="k")
_TEMPORAL = flags.DEFINE_bool(
    "temporal", False,
    "Sort patients by acquisition date before dealing them into folds.")
_SPEC = flags.DEFINE_string("spec", None, "Phantom spec (YAML).")
_SEED = flags.DEFINE_integer(
    "seed", None, "Seed of the first phantom, overrides the one in --spec.")
_OUT_DIR = flags.DEFINE_string("out_dir", None, "Output directory.")
_N_PATIENTS = flags.DEFINE_integer("n_patients", 20,
                                   "Number of phantoms to generate.",
                                   lower_bound=1)
_NOISE_LEVELS = flags.DEFINE_list(
    "noise_levels", ["0", "1", "3"],
    "Boundary noise in mm of each simulated model.")
_DROP_FRACTION = flags.DEFINE_float(
    "drop_fraction", 0., "Fraction of PTV components the models miss.")

FLAGS = flags.FLAGS


def normalize_argv(argv: Sequence[str]) -> List[str]:
  """Rewrites --flag-name into --flag_name, leaving values untouched."""
  normalized = list(argv[:1])
  for arg in argv[1:]:
    if arg.startswith("--") and len(arg) > 2:
      name, separator, value = arg[2:].partition("=")
      arg = "--" + name.replace("-", "_") + separator + value
    normalized.append(arg)
  return normalized


def apply_config(file_path: str) -> None:
  """Sets the flags found in a YAML config unless given on the command line.

  Raises:
    UsageError: If the file is not a mapping of known flags to valid values.
  """
  try:
    document = yaml.safe_load(utils.read_text(file_path)) or {}
  except yaml.YAMLError as error:
    raise app.UsageError(f"Config {file_path} is not valid YAML: {error}")
  if not isinstance(document, dict):
    raise app.UsageError(f"Config {file_path} must be a mapping of flags.")
  for name, value in document.items():
    name = str(name).replace("-", "_")
    if name not in FLAGS or name == "config":
      raise app.UsageError(f"Unknown flag {name!r} in config {file_path}.")
    if FLAGS[name].present:
      continue
    try:
      FLAGS[name].parse(value)
    except flags.Error as error:
      raise app.UsageError(f"Config {file_path}: {error}")


def _require(*flag_holders: flags.FlagHolder) -> None:
  missing = [holder.name for holder in flag_holders if holder.value is None]
  if missing:
    raise app.UsageError(
        f"Missing required flag(s): {', '.join('--' + m for m in missing)}.")


def _report_format(file_path: str) -> str:
  if _FORMAT.value is not None:
    return _FORMAT.value
  return "csv" if file_path.endswith(".csv") else "json"


def _noise_levels() -> List[float]:
  try:
    return [float(level) for level in _NOISE_LEVELS.value]
  except ValueError as error:
    raise app.UsageError(f"--noise_levels must be numbers: {error}")


def _eval() -> int:
  _require(_MANIFEST, _OUT)
  if _PREPROCESS.value != "none":
    _require(_PREPROCESS_DIR)
  manifest = cohort.load_manifest(_MANIFEST.value)
  options = evaluation.EvaluationOptions(
      with_bone_subtraction=_BONES.value,
      parallelism=_PARALLELISM.value,
      comparison=_COMPARISON.value,
      intensity_stats=_INTENSITY_STATS.value)
  report = evaluation.run_evaluation(manifest, options)
  evaluation.emit_report(report, _report_format(_OUT.value), _OUT.value)
  logging.info("Summaries:\n%s", evaluation.summary_table(report).to_string())
  if _PREPROCESS.value != "none":
    evaluation.preprocess_cohort(
        manifest,
        _PREPROCESS.value,
        _PREPROCESS_DIR.value,
        norm_stats=report.intensity_stats,
        parallelism=_PARALLELISM.value)
  return EXIT_OK


def _folds() -> int:
  _require(_MANIFEST)
  manifest = cohort.load_manifest(_MANIFEST.value, check_files=False)
  dates = None
  if _TEMPORAL.value:
    dates = [patient.acquisition_date for patient in manifest.patients]
    for index, date in enumerate(dates):
      if date is None:
        raise cohort.ManifestError(
            f"patients.{index}.acquisition_date",
            "temporal folds need an acquisition date for every patient.")
  folds = cohort.make_folds(manifest.patient_ids, _NUM_FOLDS.value, dates)
  if _OUT.value is not None:
    cohort.save_manifest(
        cohort.with_folds(manifest, folds, _NUM_FOLDS.value), _OUT.value)
  else:
    for patient_id, fold in folds.items():
      print(f"{patient_id},{fold}")
  return EXIT_OK


def _phantom() -> int:
  _require(_OUT_DIR)
  spec = (
      phantom.PhantomSpec.from_yaml(_SPEC.value)
      if _SPEC.value is not None else phantom.PhantomSpec())
  if _SEED.value is not None:
    spec = dataclasses.replace(spec, seed=_SEED.value)
  utils.make_dirs(_OUT_DIR.value)
  manifest = phantom.generate_cohort(
      spec,
      _N_PATIENTS.value,
      _noise_levels(),
      _OUT_DIR.value,
      drop_fraction=_DROP_FRACTION.value)
  logging.info("Wrote %d phantoms for models %s to %s",
               len(manifest.patients), ", ".join(manifest.model_ids),
               _OUT_DIR.value)
  return EXIT_OK


def _stats() -> int:
  _require(_REPORT)
  report = evaluation.load_report(_REPORT.value)
  comparison = evaluation.compare_models(report, _METRIC.value,
                                         _COMPARISON.value)
  text = json.dumps(dataclasses.asdict(comparison), indent=2) + "\n"
  if _OUT.value is not None:
    utils.write_text(_OUT.value, text)
  else:
    sys.stdout.write(text)
  return EXIT_OK


def _report() -> int:
  _require(_REPORT, _OUT)
  report = evaluation.load_report(_REPORT.value)
  evaluation.emit_report(report, _report_format(_OUT.value), _OUT.value)
  return EXIT_OK


COMMANDS: Dict[str, Callable[[], int]] = {
    "eval": _eval,
    "folds": _folds,
    "phantom": _phantom,
    "stats": _stats,
    "report": _report,
}


def main(argv: Sequence[str]) -> int:
  """Runs the subcommand named by argv[1] with the parsed flags.

  Returns:
    The exit code. Usage errors are raised as app.UsageError, which app.run
    turns into exit code 1.
  """
  if len(argv) < 2 or argv[1] not in COMMANDS:
    raise app.UsageError(
        f"Expected one of the commands {', '.join(COMMANDS)}.")
  if len(argv) > 2:
    raise app.UsageError(f"Unexpected arguments {' '.join(argv[2:])}.")
  try:
    if _CONFIG.value is not None:
      apply_config(_CONFIG.value)
    return COMMANDS[argv[1]]()
  except app.UsageError:
    raise
  except (volume.VoxmetricError, OSError) as error:
    logging.error("%s failed: %s", argv[1], error)
    return EXIT_DATA_ERROR
  except Exception:  # pylint: disable=broad-except
    logging.exception("%s failed with an internal error.", argv[1])
    return EXIT_INTERNAL_ERROR


def _parse_flags(argv: Sequence[str]) -> List[str]:
  return app.parse_flags_with_usage(normalize_argv(argv))


def run(argv: Optional[Sequence[str]] = None) -> None:
  """Entry point of the voxmetric console script."""
  app.run(main, argv=None if argv is None else list(argv),
          flags_parser=_parse_flags)


if __name__ == "__main__":
  run()
