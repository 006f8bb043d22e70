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

"""Set of utilities shared across the voxmetric package."""
import os
from typing import Optional, Sequence, Union

from absl import logging
import numpy as np
from tensorflow import errors as tf_errors
from tensorflow.io import gfile

MAX_WORKERS_ENV_VAR = "VOXMETRIC_MAX_WORKERS"


def read_bytes(file_path: str) -> bytes:
  """Reads the whole content of a file.

  Args:
    file_path: Local path or any path understood by gfile.

  Returns:
    The raw bytes of the file.

  Raises:
    FileNotFoundError: If the file does not exist.
    OSError: For any other read failure.
  """
  try:
    with gfile.GFile(file_path, "rb") as file:
      return file.read()
  except tf_errors.NotFoundError as error:
    raise FileNotFoundError(f"No such file: {file_path}") from error
  except tf_errors.OpError as error:
    raise OSError(f"Could not read {file_path}: {error.message}") from error


def write_bytes(file_path: str, data: bytes) -> None:
  """Writes data to the given path, replacing any existing file.

  Args:
    file_path: Local path or any path understood by gfile.
    data: Bytes to write.

  Raises:
    OSError: If the file cannot be written.
  """
  try:
    with gfile.GFile(file_path, "wb") as file:
      file.write(data)
  except tf_errors.OpError as error:
    raise OSError(f"Could not write {file_path}: {error.message}") from error


def read_text(file_path: str) -> str:
  return read_bytes(file_path).decode("utf-8")


def write_text(file_path: str, text: str) -> None:
  write_bytes(file_path, text.encode("utf-8"))


def file_exists(file_path: str) -> bool:
  try:
    return gfile.exists(file_path)
  except tf_errors.OpError:
    return False


def make_dirs(dir_path: str) -> None:
  try:
    gfile.makedirs(dir_path)
  except tf_errors.OpError as error:
    raise OSError(f"Could not create {dir_path}: {error.message}") from error


def linear_percentile(values: Union[Sequence[float], np.ndarray],
                      q: float) -> float:
  """Percentile with linear interpolation between closest ranks.

  This is the single percentile convention of the package: for sorted values
  v[0] <= ... <= v[n-1] the rank is (n - 1) * q and the result interpolates
  linearly between the two neighbouring order statistics. It is used for the
  foreground normalization percentiles, HD95 and the cohort summaries.

  Args:
    values: Non-empty sequence of values, in any order.
    q: Quantile in [0, 1].

  Returns:
    The interpolated percentile.

  Raises:
    ValueError: If values is empty or q is outside [0, 1].
  """
  values = np.asarray(values, dtype=np.float64)
  if values.size == 0:
    raise ValueError("Percentile of an empty sequence is not defined.")
  if not 0. <= q <= 1.:
    raise ValueError(f"Quantile must be within [0, 1], got {q}.")
  return float(np.quantile(values, q, method="linear"))


def effective_workers(requested: Optional[int]) -> int:
  """Caps the requested worker count with the environment limit.

  The cap is read from the VOXMETRIC_MAX_WORKERS environment variable. A
  missing or unparsable value means no cap.

  Args:
    requested: Number of workers asked for by the caller. None or values below
      one mean a single worker.

  Returns:
    Number of workers to use, at least one.
  """
  workers = max(1, requested or 1)
  cap = os.environ.get(MAX_WORKERS_ENV_VAR)
  if cap:
    try:
      workers = min(workers, max(1, int(cap)))
    except ValueError:
      logging.warning("Ignoring %s=%r, it is not an integer.",
                      MAX_WORKERS_ENV_VAR, cap)
  return workers
