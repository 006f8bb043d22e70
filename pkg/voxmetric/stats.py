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

"""Statistics used to compare segmentation models over a cohort.

Summaries use the linear interpolation percentile of `utils`. Rank tests use
mid-ranks for ties and apply the tie correction. All p-values are two-sided.
"""

import dataclasses
import itertools
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import special
from scipy import stats as scipy_stats
from typing_extensions import Literal

from voxmetric import utils
from voxmetric import volume

TestKind = Literal["kruskal-wallis", "dunn-pairwise", "paired-t"]


class DegenerateData(volume.VoxmetricError):
  pass


class DomainError(volume.VoxmetricError, ValueError):
  pass


# Relative spread at or below which a sample counts as constant.
_RELATIVE_SPREAD_TOLERANCE = 1e-12


def _is_constant(values: np.ndarray) -> bool:
  scale = max(1., float(np.max(np.abs(values))))
  return float(np.ptp(values)) <= _RELATIVE_SPREAD_TOLERANCE * scale


@dataclasses.dataclass(frozen=True)
class Summary:
  """Order statistics of a sample.

  Attributes:
    n: Sample size.
    median: 50th percentile.
    min: Smallest value.
    max: Largest value.
    q1: 25th percentile.
    q3: 75th percentile.
  """
  n: int
  median: float
  min: float
  max: float
  q1: float
  q3: float

  def describe(self, scale: float = 1., digits: int = 1) -> str:
    """Renders "median (min-max)", e.g. 88.6 (80.2-93.1) with scale 100."""
    return (f"{self.median * scale:.{digits}f} "
            f"({self.min * scale:.{digits}f}-{self.max * scale:.{digits}f})")


@dataclasses.dataclass(frozen=True)
class TestResult:
  """Outcome of a statistical test.

  Attributes:
    kind: Test that produced the result.
    statistic: H for Kruskal-Wallis, z for Dunn, t for the paired t-test.
    df: Degrees of freedom, None for Dunn z statistics.
    p_value: Two-sided p-value.
  """
  kind: TestKind
  statistic: float
  df: Optional[float]
  p_value: float


@dataclasses.dataclass(frozen=True)
class PairwiseResult:
  """Pairwise comparison with its multiplicity-adjusted p-value.

  Attributes:
    pair: Indices or ids of the compared groups.
    z: Test statistic of the pair (z for Dunn, t for paired t).
    p_raw: Unadjusted p-value.
    p_adjusted: Holm adjusted p-value.
  """
  pair: Tuple[str, str]
  z: float
  p_raw: float
  p_adjusted: float


def summarize(values: Sequence[float]) -> Summary:
  """Median, range and quartiles of a non-empty sample.

  Raises:
    EmptyInput: If values is empty.
  """
  values = np.asarray(values, dtype=np.float64)
  if not values.size:
    raise volume.EmptyInput("Cannot summarize an empty sample.")
  return Summary(
      n=int(values.size),
      median=utils.linear_percentile(values, .5),
      min=float(values.min()),
      max=float(values.max()),
      q1=utils.linear_percentile(values, .25),
      q3=utils.linear_percentile(values, .75))


def chi2_survival(x: float, df: float) -> float:
  """Upper tail of the chi-square distribution, Q(df / 2, x / 2)."""
  if not (np.isfinite(df) and df > 0) or np.isnan(x) or x < 0:
    raise DomainError(f"chi2_survival needs x >= 0 and df > 0, got x={x}, "
                      f"df={df}.")
  return float(special.gammaincc(df / 2., x / 2.))


def normal_survival(z: float) -> float:
  """Upper tail of the standard normal distribution."""
  if np.isnan(z):
    raise DomainError("normal_survival is not defined for NaN.")
  return float(.5 * special.erfc(z / np.sqrt(2.)))


def student_t_survival(t: float, df: float) -> float:
  """Upper tail of the Student t distribution with df degrees of freedom."""
  if not (np.isfinite(df) and df > 0) or np.isnan(t):
    raise DomainError(
        f"student_t_survival needs df > 0, got t={t}, df={df}.")
  if np.isinf(t):
    return 0. if t > 0 else 1.
  tail = .5 * float(special.betainc(df / 2., .5, df / (df + t * t)))
  return tail if t >= 0 else 1. - tail


def holm_adjust(p_values: Sequence[float]) -> List[float]:
  """Holm step-down adjustment.

  Args:
    p_values: Raw p-values in [0, 1].

  Returns:
    Adjusted p-values, in the input order.

  Raises:
    DomainError: If a p-value is outside [0, 1].
  """
  p_values = np.asarray(p_values, dtype=np.float64)
  if np.any(~((p_values >= 0) & (p_values <= 1))):
    raise DomainError(f"p-values must be within [0, 1], got {p_values}.")
  m = p_values.size
  order = np.argsort(p_values, kind="stable")
  scaled = p_values[order] * (m - np.arange(m))
  stepped = np.minimum(np.maximum.accumulate(scaled), 1.)
  adjusted = np.empty(m)
  adjusted[order] = stepped
  return adjusted.tolist()


def _pooled_ranks(
    groups: Sequence[Sequence[float]]
) -> Tuple[List[np.ndarray], np.ndarray, int, float]:
  """Mid-ranks per group, the pooled sample, N and sum of t^3 - t over ties."""
  arrays = [np.asarray(group, dtype=np.float64) for group in groups]
  if len(arrays) < 2:
    raise ValueError(f"Rank tests need at least 2 groups, got {len(arrays)}.")
  if any(not array.size for array in arrays):
    raise volume.EmptyInput("Every group needs at least one value.")
  pooled = np.concatenate(arrays)
  if np.any(np.isnan(pooled)):
    raise DomainError("Rank tests do not accept NaN values.")
  if _is_constant(pooled):
    raise DegenerateData("All pooled values are identical.")
  n_total = pooled.size
  if n_total < 3:
    raise ValueError(f"Rank tests need at least 3 values, got {n_total}.")
  ranks = scipy_stats.rankdata(pooled)
  _, tie_counts = np.unique(pooled, return_counts=True)
  ties = float(np.sum(tie_counts.astype(np.float64) ** 3 - tie_counts))
  splits = np.cumsum([array.size for array in arrays])[:-1]
  return np.split(ranks, splits), pooled, n_total, ties


def kruskal_wallis(groups: Sequence[Sequence[float]]) -> TestResult:
  """Kruskal-Wallis H test with tie correction.

  Args:
    groups: At least two non-empty samples, at least three values in total.

  Returns:
    The test result, with df = k - 1 and the chi-square p-value.

  Raises:
    DegenerateData: If all pooled values are identical.
    EmptyInput: If a group is empty.
  """
  group_ranks, _, n_total, ties = _pooled_ranks(groups)
  rank_term = sum(ranks.sum() ** 2 / ranks.size for ranks in group_ranks)
  h = 12. / (n_total * (n_total + 1)) * rank_term - 3. * (n_total + 1)
  h = max(h / (1. - ties / (n_total ** 3 - n_total)), 0.)
  df = len(group_ranks) - 1
  return TestResult(kind="kruskal-wallis", statistic=float(h), df=float(df),
                    p_value=chi2_survival(h, df))


def dunn_posthoc(groups: Sequence[Sequence[float]],
                 labels: Optional[Sequence[str]] = None,
                 adjust: Literal["holm"] = "holm") -> List[PairwiseResult]:
  """Dunn's pairwise post-hoc comparisons after Kruskal-Wallis.

  Args:
    groups: Same samples given to kruskal_wallis.
    labels: Group names used in the result pairs, defaults to the indices.
    adjust: Multiplicity adjustment; Holm is the only one offered.

  Returns:
    One result per pair (i, j), i < j, in lexicographic order. z is positive
    when group i has the larger mean rank.

  Raises:
    DegenerateData: If all pooled values are identical.
  """
  if adjust != "holm":
    raise ValueError(f"Unsupported adjustment {adjust!r}.")
  group_ranks, _, n_total, ties = _pooled_ranks(groups)
  if labels is None:
    labels = [str(index) for index in range(len(group_ranks))]
  if len(labels) != len(group_ranks):
    raise ValueError("One label per group is required.")
  variance = n_total * (n_total + 1) / 12. - ties / (12. * (n_total - 1))
  mean_ranks = [ranks.mean() for ranks in group_ranks]
  pairs, z_values = [], []
  for i, j in itertools.combinations(range(len(group_ranks)), 2):
    scale = np.sqrt(variance * (1. / group_ranks[i].size +
                                1. / group_ranks[j].size))
    pairs.append((labels[i], labels[j]))
    z_values.append(float((mean_ranks[i] - mean_ranks[j]) / scale))
  p_raw = [min(1., 2. * normal_survival(abs(z))) for z in z_values]
  return [
      PairwiseResult(pair=pair, z=z, p_raw=p, p_adjusted=p_adjusted)
      for pair, z, p, p_adjusted in zip(pairs, z_values, p_raw,
                                        holm_adjust(p_raw))
  ]


def paired_t(a: Sequence[float], b: Sequence[float]) -> TestResult:
  """Two-sided paired t-test on a - b.

  Args:
    a: First sample.
    b: Second sample, paired element-wise with `a`.

  Returns:
    The test result with df = n - 1.

  Raises:
    ValueError: If the samples differ in length or have fewer than 2 pairs.
    DegenerateData: If the differences have zero standard deviation.
  """
  a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
  if a.shape != b.shape or a.ndim != 1:
    raise ValueError(f"Paired samples must have equal lengths, got {a.shape} "
                     f"and {b.shape}.")
  if a.size < 2:
    raise ValueError("Paired t-test needs at least 2 pairs.")
  differences = a - b
  if _is_constant(differences):
    raise DegenerateData("Paired differences have zero standard deviation.")
  std = float(np.std(differences, ddof=1))
  t = float(differences.mean() / (std / np.sqrt(a.size)))
  df = a.size - 1
  return TestResult(kind="paired-t", statistic=t, df=float(df),
                    p_value=min(1., 2. * student_t_survival(abs(t), df)))
