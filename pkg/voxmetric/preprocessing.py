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

"""Intensity preprocessing for CT volumes.

Two pipelines are offered:
- A linear HU window mapped onto 8-bit display values.
- Foreground normalization: intensities are clipped to the 0.5 and 99.5
  percentiles of the pooled foreground and standardized with its mean and
  population standard deviation.
"""

import dataclasses
from typing import List, Sequence, Tuple

import jax
import jax.numpy as jnp
import numpy as np
from sklearn import base

from voxmetric import utils
from voxmetric import volume


class EmptyForeground(volume.VoxmetricError):
  pass


class DegenerateStats(volume.VoxmetricError):
  pass


class NotFittedNormalizerError(Exception):
  pass


@dataclasses.dataclass(frozen=True)
class WindowSpec:
  """HU window mapped linearly onto [0, 255].

  Attributes:
    lo: HU value mapped to 0.
    hi: HU value mapped to 255.
  """
  lo: float
  hi: float

  def __post_init__(self):
    if not self.lo < self.hi:
      raise ValueError(
          f"Window lower bound {self.lo} must be below upper bound {self.hi}.")


SOFT_TISSUE_WINDOW = WindowSpec(lo=-160., hi=240.)


@jax.jit
def _window(hu: jnp.ndarray, lo: float, hi: float) -> jnp.ndarray:
  scaled = (hu - lo) * 255. / (hi - lo)
  rounded = jnp.sign(scaled) * jnp.floor(jnp.abs(scaled) + .5)
  return jnp.clip(rounded, 0, 255).astype(jnp.uint8)


def window_lut(image: volume.Volume,
               window: WindowSpec = SOFT_TISSUE_WINDOW) -> volume.Volume:
  """Maps HU values onto 8-bit display values.

  Rounding is half away from zero, so the middle of the default window
  (40 HU, 127.5 before rounding) maps to 128.

  Args:
    image: Volume in HU.
    window: Window bounds.

  Returns:
    A uint8 volume with the display-8bit unit.
  """
  if image.unit != "HU":
    raise ValueError(f"Window LUT expects HU values, got {image.unit}.")
  values = _window(
      jnp.asarray(image.values, dtype=jnp.float32), window.lo, window.hi)
  return volume.Volume(image.geometry, np.asarray(values), "display-8bit")


@dataclasses.dataclass(frozen=True)
class NormStats:
  """Intensity statistics of a pooled foreground.

  Attributes:
    mean: Mean intensity.
    std: Population standard deviation.
    p_low: Lower clipping percentile (0.5th by default).
    p_high: Upper clipping percentile (99.5th by default).
    sample_count: Number of pooled foreground voxels.
  """
  mean: float
  std: float
  p_low: float
  p_high: float
  sample_count: int

  def __post_init__(self):
    if self.std < 0 or self.p_low > self.p_high or self.sample_count < 1:
      raise ValueError(f"Inconsistent normalization statistics {self}.")


def foreground_stats(
    volumes: Sequence[volume.Volume],
    masks: Sequence[volume.BinaryMask],
    percentiles: Tuple[float, float] = (.5, 99.5)) -> NormStats:
  """Computes statistics over the pooled foreground of several cases.

  Args:
    volumes: Intensity volumes.
    masks: One foreground mask per volume.
    percentiles: Lower and upper clipping percentiles, in percent.

  Returns:
    Statistics of the multiset of foreground intensities of all cases.

  Raises:
    ValueError: If the sequences differ in length.
    GeometryMismatch: If a mask does not match its volume.
    EmptyForeground: If no case has a foreground voxel.
  """
  if len(volumes) != len(masks):
    raise ValueError(f"Got {len(volumes)} volumes but {len(masks)} masks.")
  return pooled_stats(
      [foreground_values(image, mask) for image, mask in zip(volumes, masks)],
      percentiles)


def foreground_values(image: volume.Volume,
                      mask: volume.BinaryMask) -> np.ndarray:
  """Float64 intensities of the voxels under a mask."""
  volume.check_compatible(image.geometry, mask.geometry)
  return image.values[mask.bits].astype(np.float64)


def pooled_stats(samples: Sequence[np.ndarray],
                 percentiles: Tuple[float, float] = (.5, 99.5)) -> NormStats:
  """Statistics of the concatenation of several foreground samples.

  Raises:
    EmptyForeground: If the samples hold no value.
  """
  pooled = np.concatenate(samples) if len(samples) else np.empty(0)
  if not pooled.size:
    raise EmptyForeground("No foreground voxel in any case.")
  low, high = percentiles
  return NormStats(
      mean=float(pooled.mean()),
      std=float(pooled.std()),
      p_low=utils.linear_percentile(pooled, low / 100.),
      p_high=utils.linear_percentile(pooled, high / 100.),
      sample_count=int(pooled.size))


def normalize(image: volume.Volume, stats: NormStats) -> volume.Volume:
  """Clips to the percentile range and standardizes.

  Args:
    image: Volume to normalize.
    stats: Foreground statistics.

  Returns:
    A float32 volume with the normalized unit.

  Raises:
    DegenerateStats: If the standard deviation is zero.
  """
  if stats.std == 0:
    raise DegenerateStats(
        "Foreground standard deviation is zero, cannot normalize.")
  values = np.clip(image.values.astype(np.float64), stats.p_low, stats.p_high)
  values = (values - stats.mean) / stats.std
  return volume.Volume(image.geometry, values.astype(np.float32), "normalized")


def denormalize(image: volume.Volume, stats: NormStats) -> volume.Volume:
  """Maps normalized values back to HU. Clipped values are not recovered."""
  if image.unit != "normalized":
    raise ValueError(f"Expected a normalized volume, got {image.unit}.")
  values = image.values.astype(np.float64) * stats.std + stats.mean
  return volume.Volume(image.geometry, values.astype(np.float32), "HU")


class ForegroundNormalizer(base.TransformerMixin):
  """Foreground normalization with the fit/transform interface.

  The normalizer must be fit on (volume, mask) pairs before it can transform.
  Fitting pools the foreground of all given cases, so the training cohort can
  be fit once and the statistics reused on unseen volumes.

  Attributes:
    percentiles: Lower and upper clipping percentiles, in percent.
    stats: Statistics found by fit.
  """

  def __init__(self, percentiles: Tuple[float, float] = (.5, 99.5)) -> None:
    low, high = percentiles
    if not 0 <= low <= high <= 100:
      raise ValueError(f"Invalid clipping percentiles {percentiles}.")
    self.percentiles = (low, high)

  def fit(self, volumes: Sequence[volume.Volume],
          masks: Sequence[volume.BinaryMask]) -> "ForegroundNormalizer":
    """Computes the pooled foreground statistics.

    Args:
      volumes: Intensity volumes.
      masks: One foreground mask per volume.

    Returns:
      The fitted normalizer.
    """
    self.stats = foreground_stats(volumes, masks, self.percentiles)
    return self

  def _check_fitted(self) -> None:
    if not hasattr(self, "stats"):
      raise NotFittedNormalizerError(
          "transform is called without fit being called previously. Please "
          "fit normalizer first.")

  def transform(self, volumes: Sequence[volume.Volume]) -> List[volume.Volume]:
    self._check_fitted()
    return [normalize(image, self.stats) for image in volumes]

  def fit_transform(self, volumes: Sequence[volume.Volume],
                    masks: Sequence[volume.BinaryMask]) -> List[volume.Volume]:
    return self.fit(volumes, masks).transform(volumes)

  def inverse_transform(
      self, volumes: Sequence[volume.Volume]) -> List[volume.Volume]:
    self._check_fitted()
    return [denormalize(image, self.stats) for image in volumes]
