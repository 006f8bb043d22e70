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

"""Tests for metrics."""

import os
import time

from absl.testing import absltest
from absl.testing import parameterized
import numpy as np
from scipy import ndimage
from scipy.spatial import distance as scipy_distance

from voxmetric import distance
from voxmetric import metrics
from voxmetric import volume

_TIMING_ENV_VAR = "VOXMETRIC_RUN_TIMING_TESTS"
_GEOMETRY = volume.Geometry((12, 20, 10), (1., 1., 1.))
_LINE = [(x, 5, 5) for x in range(10)]


def _mask_with(points, geometry=_GEOMETRY):
  bits = np.zeros(geometry.dims, dtype=bool)
  for point in points:
    bits[point] = True
  return volume.BinaryMask(geometry, bits)


def _oracle_directed(from_bits, to_bits, spacing):
  structure = ndimage.generate_binary_structure(3, 1)
  surfaces = []
  for bits in (from_bits, to_bits):
    interior = ndimage.binary_erosion(
        np.pad(bits, 1), structure)[1:-1, 1:-1, 1:-1]
    surfaces.append(np.argwhere(bits & ~interior) * np.asarray(spacing))
  return np.sort(scipy_distance.cdist(*surfaces).min(axis=1))


def _oracle_percentile(values, q):
  ordered = np.sort(values)
  rank = (len(ordered) - 1) * q
  low = int(np.floor(rank))
  high = min(low + 1, len(ordered) - 1)
  return ordered[low] + (rank - low) * (ordered[high] - ordered[low])


class DiceTest(parameterized.TestCase):

  def test_identical_masks(self):
    mask = _mask_with(_LINE)

    self.assertEqual(metrics.dice(mask, mask), 1.)

  def test_disjoint_masks(self):
    self.assertEqual(
        metrics.dice(_mask_with([(0, 0, 0)]), _mask_with([(1, 1, 1)])), 0.)

  def test_count_arithmetic(self):
    gt = _mask_with([(0, 0, 0), (0, 0, 1), (0, 0, 2), (0, 0, 3)])
    pred = _mask_with([(0, 0, 1), (0, 0, 2), (0, 0, 3), (1, 0, 0), (2, 0, 0),
                       (3, 0, 0)])

    self.assertAlmostEqual(metrics.dice(gt, pred), .6)

  def test_empty_conventions(self):
    empty = volume.BinaryMask.empty(_GEOMETRY)

    self.assertEqual(metrics.dice(empty, empty), 1.)
    self.assertEqual(metrics.dice(empty, _mask_with([(0, 0, 0)])), 0.)

  def test_geometry_mismatch_raises(self):
    other = volume.BinaryMask.empty(volume.Geometry((12, 20, 10), (1, 1, 2)))

    with self.assertRaises(volume.GeometryMismatch):
      metrics.dice(volume.BinaryMask.empty(_GEOMETRY), other)

  def test_invariant_under_voxel_permutation(self):
    rng = np.random.default_rng(0)
    gt_bits = rng.random(_GEOMETRY.dims) > .5
    pred_bits = rng.random(_GEOMETRY.dims) > .5
    permutation = rng.permutation(_GEOMETRY.voxel_count)

    def permuted(bits):
      return volume.BinaryMask(
          _GEOMETRY, bits.ravel()[permutation].reshape(_GEOMETRY.dims))

    self.assertEqual(
        metrics.dice(volume.BinaryMask(_GEOMETRY, gt_bits),
                     volume.BinaryMask(_GEOMETRY, pred_bits)),
        metrics.dice(permuted(gt_bits), permuted(pred_bits)))


class HausdorffTest(parameterized.TestCase):

  def test_identical_masks(self):
    mask = _mask_with(_LINE)

    self.assertEqual(metrics.hausdorff(mask, mask), 0.)
    self.assertEqual(metrics.hd95(mask, mask), 0.)

  def test_three_four_five(self):
    first, second = _mask_with([(0, 0, 0)]), _mask_with([(3, 4, 0)])

    self.assertEqual(metrics.hausdorff(first, second), 5.)
    self.assertEqual(metrics.hd95(first, second), 5.)

  def test_line_plus_outlier(self):
    line = _mask_with(_LINE)
    augmented = _mask_with(_LINE + [(0, 15, 5)])

    self.assertEqual(metrics.hausdorff(line, augmented), 10.)
    self.assertEqual(metrics.hd95(line, augmented), 5.)
    self.assertEqual(metrics.hd95(augmented, line), 5.)

  def test_percentile_generalizes_hd_and_hd95(self):
    line = _mask_with(_LINE)
    augmented = _mask_with(_LINE + [(0, 15, 5)])

    self.assertEqual(
        metrics.surface_distance_percentile(line, augmented, 100.), 10.)
    self.assertEqual(
        metrics.surface_distance_percentile(line, augmented, 0.), 0.)
    with self.assertRaises(ValueError):
      metrics.surface_distance_percentile(line, augmented, 101.)

  def test_empty_mask_is_undefined(self):
    empty = volume.BinaryMask.empty(_GEOMETRY)

    with self.assertRaises(metrics.UndefinedMetric):
      metrics.hausdorff(empty, _mask_with(_LINE))
    with self.assertRaises(distance.EmptyMask):
      metrics.hd95(_mask_with(_LINE), empty)

  def test_matches_brute_force_oracle(self):
    rng = np.random.default_rng(300)
    for case in range(100):
      with self.subTest(case=case):
        dims = tuple(int(d) for d in rng.integers(5, 17, size=3))
        spacing = tuple(float(s) for s in rng.uniform(.5, 5., size=3))
        geometry = volume.Geometry(dims, spacing)
        gt = rng.random(dims) < rng.uniform(.05, .5)
        pred = rng.random(dims) < rng.uniform(.05, .5)
        gt[0, 0, 0] = pred[-1, -1, -1] = True
        gt_mask = volume.BinaryMask(geometry, gt)
        pred_mask = volume.BinaryMask(geometry, pred)

        forward = _oracle_directed(gt, pred, spacing)
        backward = _oracle_directed(pred, gt, spacing)
        overlap = 2. * np.sum(gt & pred) / (gt.sum() + pred.sum())

        self.assertAlmostEqual(metrics.dice(gt_mask, pred_mask), overlap,
                               delta=1e-12)
        self.assertAlmostEqual(metrics.hausdorff(gt_mask, pred_mask),
                               max(forward[-1], backward[-1]), delta=1e-9)
        self.assertAlmostEqual(
            metrics.hd95(gt_mask, pred_mask),
            max(_oracle_percentile(forward, .95),
                _oracle_percentile(backward, .95)),
            delta=1e-9)

  def test_metrics_are_symmetric_and_ordered(self):
    rng = np.random.default_rng(9)
    geometry = volume.Geometry((10, 10, 8), (1.171875, 1.171875, 5.))
    for _ in range(10):
      gt = volume.BinaryMask(geometry, rng.random(geometry.dims) < .2)
      pred = volume.BinaryMask(geometry, rng.random(geometry.dims) < .2)

      self.assertEqual(metrics.dice(gt, pred), metrics.dice(pred, gt))
      self.assertEqual(metrics.hausdorff(gt, pred),
                       metrics.hausdorff(pred, gt))
      self.assertEqual(metrics.hd95(gt, pred), metrics.hd95(pred, gt))
      self.assertLessEqual(metrics.hd95(gt, pred),
                           metrics.hausdorff(gt, pred))


class EvaluatePairTest(parameterized.TestCase):

  def test_identical_masks_with_bones_inside(self):
    gt = _mask_with(_LINE)
    bones = _mask_with(_LINE[:3])

    record = metrics.evaluate_pair(gt, gt, bones=bones, patient_id="p1",
                                   model_id="m1", fold=2)

    self.assertEqual(
        record,
        metrics.MetricRecord("p1", "m1", dsc=1., hd_mm=0., hd95_mm=0.,
                             dsc_bones_excluded=1., fold=2))

  def test_full_bone_mask_empties_both(self):
    gt = _mask_with(_LINE)
    pred = _mask_with(_LINE[2:])

    record = metrics.evaluate_pair(
        gt, pred, bones=volume.BinaryMask.full(_GEOMETRY))

    self.assertEqual(record.dsc_bones_excluded, 1.)

  def test_no_bones_means_absent(self):
    record = metrics.evaluate_pair(_mask_with(_LINE), _mask_with(_LINE))

    self.assertIsNone(record.dsc_bones_excluded)

  def test_empty_prediction_gives_undefined_hd(self):
    record = metrics.evaluate_pair(_mask_with(_LINE),
                                   volume.BinaryMask.empty(_GEOMETRY))

    self.assertEqual(record.dsc, 0.)
    self.assertIsNone(record.hd_mm)
    self.assertIsNone(record.hd95_mm)
    self.assertIsNone(record.failure)

  def test_bone_subtraction_matches_direct_dice(self):
    rng = np.random.default_rng(4)
    for _ in range(10):
      gt, pred, bones = (rng.random(_GEOMETRY.dims) < .3 for _ in range(3))

      record = metrics.evaluate_pair(
          volume.BinaryMask(_GEOMETRY, gt), volume.BinaryMask(_GEOMETRY, pred),
          bones=volume.BinaryMask(_GEOMETRY, bones))

      gt_rest, pred_rest = gt & ~bones, pred & ~bones
      expected = (2. * np.sum(gt_rest & pred_rest) /
                  (gt_rest.sum() + pred_rest.sum()))
      self.assertEqual(record.dsc_bones_excluded, expected)

  def test_bones_do_not_change_full_mask_metrics(self):
    rng = np.random.default_rng(5)
    gt = volume.BinaryMask(_GEOMETRY, rng.random(_GEOMETRY.dims) < .3)
    pred = volume.BinaryMask(_GEOMETRY, rng.random(_GEOMETRY.dims) < .3)
    bones = volume.BinaryMask(_GEOMETRY, rng.random(_GEOMETRY.dims) < .3)

    with_bones = metrics.evaluate_pair(gt, pred, bones=bones)
    without = metrics.evaluate_pair(gt, pred)

    self.assertEqual((with_bones.dsc, with_bones.hd_mm, with_bones.hd95_mm),
                     (without.dsc, without.hd_mm, without.hd95_mm))

  def test_to_row_has_csv_columns(self):
    record = metrics.MetricRecord("p", "m", dsc=.5, hd_mm=None, hd95_mm=None)

    self.assertEqual(list(record.to_row()), list(metrics.CSV_COLUMNS))


def _ellipsoid(dims, center, radii):
  x, y, z = np.ogrid[:dims[0], :dims[1], :dims[2]]
  return (((x - center[0]) / radii[0])**2 + ((y - center[1]) / radii[1])**2 +
          ((z - center[2]) / radii[2])**2) <= 1.


@absltest.skipUnless(
    os.environ.get(_TIMING_ENV_VAR),
    f"Set {_TIMING_ENV_VAR}=1 to run the full-size timing checks.")
class FullSizeTimingTest(absltest.TestCase):

  def test_evaluate_pair_on_a_full_ct_grid(self):
    dims = (512, 512, 237)
    geometry = volume.Geometry(dims, (1.171875, 1.171875, 5.))
    gt = volume.BinaryMask(
        geometry, _ellipsoid(dims, (256, 256, 118), (180, 140, 100)))
    pred = volume.BinaryMask(
        geometry, _ellipsoid(dims, (260, 250, 120), (176, 144, 98)))

    started = time.perf_counter()
    record = metrics.evaluate_pair(gt, pred)
    elapsed = time.perf_counter() - started

    self.assertGreater(record.dsc, .9)
    self.assertLess(elapsed, 10.)


if __name__ == "__main__":
  absltest.main()
