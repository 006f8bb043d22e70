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

"""Tests for volume."""

from absl.testing import absltest
from absl.testing import parameterized
import numpy as np

from voxmetric import volume

_GEOMETRY = volume.Geometry(dims=(4, 5, 6), spacing=(1., 1., 2.))


def _mask_with(points, geometry=_GEOMETRY):
  bits = np.zeros(geometry.dims, dtype=bool)
  for point in points:
    bits[point] = True
  return volume.BinaryMask(geometry, bits)


class GeometryTest(parameterized.TestCase):

  @parameterized.named_parameters([
      dict(testcase_name="zero_dim", dims=(0, 1, 1), spacing=(1., 1., 1.)),
      dict(testcase_name="negative_spacing", dims=(1, 1, 1),
           spacing=(1., -1., 1.)),
      dict(testcase_name="zero_spacing", dims=(1, 1, 1), spacing=(0., 1., 1.)),
      dict(testcase_name="two_dims", dims=(1, 1), spacing=(1., 1.)),
  ])
  def test_invalid_geometry_raises_valueerror(self, dims, spacing):
    with self.assertRaises(ValueError):
      volume.Geometry(dims=dims, spacing=spacing)

  def test_spacing_within_tolerance_is_compatible(self):
    other = volume.Geometry(dims=(4, 5, 6), spacing=(1. + 1e-7, 1., 2.))

    self.assertTrue(_GEOMETRY.is_compatible(other))

  def test_spacing_beyond_tolerance_is_not_compatible(self):
    other = volume.Geometry(dims=(4, 5, 6), spacing=(1. + 1e-5, 1., 2.))

    self.assertFalse(_GEOMETRY.is_compatible(other))

  def test_check_compatible_raises_geometry_mismatch(self):
    other = volume.Geometry(dims=(4, 5, 7), spacing=(1., 1., 2.))

    with self.assertRaises(volume.GeometryMismatch):
      volume.check_compatible(_GEOMETRY, _GEOMETRY, other)

  def test_derived_sizes(self):
    self.assertEqual(_GEOMETRY.voxel_count, 120)
    self.assertEqual(_GEOMETRY.voxel_volume_mm3, 2.)
    self.assertEqual(_GEOMETRY.physical_extent, (4., 5., 12.))


class VolumeTest(parameterized.TestCase):

  def test_values_are_copied_and_read_only(self):
    values = np.zeros(_GEOMETRY.dims, dtype=np.int16)
    image = volume.Volume(_GEOMETRY, values)
    values[0, 0, 0] = 7

    self.assertEqual(image.values[0, 0, 0], 0)
    with self.assertRaises(ValueError):
      image.values[0, 0, 0] = 1

  @parameterized.named_parameters([
      dict(testcase_name="hu_as_uint8", dtype=np.uint8, unit="HU"),
      dict(testcase_name="normalized_as_int16", dtype=np.int16,
           unit="normalized"),
      dict(testcase_name="display_as_float32", dtype=np.float32,
           unit="display-8bit"),
      dict(testcase_name="float64", dtype=np.float64, unit="HU"),
  ])
  def test_unit_and_dtype_mismatch_raises_valueerror(self, dtype, unit):
    with self.assertRaises(ValueError):
      volume.Volume(_GEOMETRY, np.zeros(_GEOMETRY.dims, dtype=dtype), unit)

  def test_wrong_shape_raises_valueerror(self):
    with self.assertRaises(ValueError):
      volume.Volume(_GEOMETRY, np.zeros((4, 5, 5), dtype=np.int16))

  def test_equality_is_bitwise(self):
    values = np.full(_GEOMETRY.dims, np.nan, dtype=np.float32)
    first = volume.Volume(_GEOMETRY, values)
    second = volume.Volume(_GEOMETRY, values)
    negative_zero = volume.Volume(
        _GEOMETRY, np.full(_GEOMETRY.dims, -0., dtype=np.float32))
    zero = volume.Volume(_GEOMETRY, np.zeros(_GEOMETRY.dims, np.float32))

    self.assertEqual(first, second)
    self.assertNotEqual(zero, negative_zero)


class ThresholdToMaskTest(parameterized.TestCase):

  def test_all_zero_volume_gives_empty_mask(self):
    image = volume.Volume(_GEOMETRY, np.zeros(_GEOMETRY.dims, np.uint8),
                          "display-8bit")

    self.assertTrue(volume.threshold_to_mask(image, .5).is_empty)

  def test_all_one_volume_gives_full_mask(self):
    image = volume.Volume(_GEOMETRY, np.ones(_GEOMETRY.dims, np.uint8),
                          "display-8bit")

    mask = volume.threshold_to_mask(image, .5)

    self.assertEqual(mask.voxel_count, _GEOMETRY.voxel_count)
    self.assertEqual(mask, volume.BinaryMask.full(_GEOMETRY))

  def test_threshold_is_strict(self):
    geometry = volume.Geometry((3, 1, 1), (1., 1., 1.))
    image = volume.Volume(
        geometry, np.array([0, 1, 2], dtype=np.int16).reshape(3, 1, 1))

    mask = volume.threshold_to_mask(image, 1)

    np.testing.assert_array_equal(mask.bits.ravel(), [False, False, True])

  def test_threshold_is_monotone(self):
    rng = np.random.default_rng(0)
    image = volume.Volume(
        _GEOMETRY, rng.normal(size=_GEOMETRY.dims).astype(np.float32))

    previous = volume.threshold_to_mask(image, -3.)
    for threshold in np.linspace(-2.5, 3., 12):
      current = volume.threshold_to_mask(image, threshold)
      self.assertFalse(np.any(current.bits & ~previous.bits))
      previous = current


class BinaryMaskTest(absltest.TestCase):

  def test_volume_ml(self):
    mask = _mask_with([(0, 0, 0), (1, 1, 1), (2, 2, 2)])

    self.assertAlmostEqual(mask.volume_ml, 3 * 2. / 1000.)

  def test_to_volume_is_uint8_display(self):
    mask = _mask_with([(1, 2, 3)])

    image = mask.to_volume()

    self.assertEqual(image.dtype, np.uint8)
    self.assertEqual(image.unit, "display-8bit")
    self.assertEqual(volume.threshold_to_mask(image, .5), mask)


class BoundingBoxTest(parameterized.TestCase):

  @parameterized.named_parameters([
      dict(testcase_name="single_voxel", points=[(1, 2, 3)],
           expected=((1, 2, 3), (1, 2, 3))),
      dict(testcase_name="two_voxels", points=[(0, 0, 0), (3, 1, 2)],
           expected=((0, 0, 0), (3, 1, 2))),
      dict(testcase_name="spread", points=[(2, 4, 0), (1, 0, 5), (3, 2, 2)],
           expected=((1, 0, 0), (3, 4, 5))),
  ])
  def test_bounding_box(self, points, expected):
    box = volume.bounding_box(_mask_with(points))

    self.assertEqual((box.min_corner, box.max_corner), expected)

  def test_empty_mask_has_no_bounding_box(self):
    self.assertIsNone(volume.bounding_box(volume.BinaryMask.empty(_GEOMETRY)))

  def test_bounding_box_is_tight(self):
    rng = np.random.default_rng(3)
    mask = volume.BinaryMask(_GEOMETRY, rng.random(_GEOMETRY.dims) > .9)
    box = volume.bounding_box(mask)

    inside = np.zeros(_GEOMETRY.dims, dtype=bool)
    inside[box.slices()] = True
    self.assertFalse(np.any(mask.bits & ~inside))
    for axis in range(3):
      lower = np.take(mask.bits, box.min_corner[axis], axis=axis)
      upper = np.take(mask.bits, box.max_corner[axis], axis=axis)
      self.assertTrue(lower.any())
      self.assertTrue(upper.any())

  def test_padded_is_clipped_to_grid(self):
    box = volume.BoundingBox((0, 2, 5), (1, 3, 5))

    padded = box.padded((1, 1, 1), _GEOMETRY.dims)

    self.assertEqual(padded, volume.BoundingBox((0, 1, 4), (2, 4, 5)))


if __name__ == "__main__":
  absltest.main()
