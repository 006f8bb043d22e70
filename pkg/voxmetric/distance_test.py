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

"""Tests for distance."""

from absl.testing import absltest
from absl.testing import parameterized
import numpy as np
from scipy import ndimage
from scipy.spatial import distance as scipy_distance

from voxmetric import distance
from voxmetric import volume


def _brute_force_squared(bits, spacing):
  grid = np.indices(bits.shape).reshape(3, -1).T * np.asarray(spacing)
  seeds = np.argwhere(bits) * np.asarray(spacing)
  squared = scipy_distance.cdist(grid, seeds, "sqeuclidean").min(axis=1)
  return squared.reshape(bits.shape)


def _brute_force_directed(from_bits, to_bits, spacing):
  structure = ndimage.generate_binary_structure(3, 1)
  surfaces = []
  for bits in (from_bits, to_bits):
    padded = np.pad(bits, 1)
    interior = ndimage.binary_erosion(padded, structure)[1:-1, 1:-1, 1:-1]
    surfaces.append(np.argwhere(bits & ~interior) * np.asarray(spacing))
  pairwise = scipy_distance.cdist(surfaces[0], surfaces[1])
  return np.sort(pairwise.min(axis=1))


def _mask_with(points, dims, spacing=(1., 1., 1.)):
  bits = np.zeros(dims, dtype=bool)
  for point in points:
    bits[point] = True
  return volume.BinaryMask(volume.Geometry(dims, spacing), bits)


class SurfaceVoxelsTest(parameterized.TestCase):

  def test_single_voxel_is_its_own_surface(self):
    mask = _mask_with([(2, 2, 2)], (5, 5, 5))

    self.assertEqual(distance.surface_voxels(mask), mask)

  def test_cube_interior_voxel_is_excluded(self):
    bits = np.zeros((5, 5, 5), dtype=bool)
    bits[1:4, 1:4, 1:4] = True
    mask = volume.BinaryMask(volume.Geometry((5, 5, 5), (1., 1., 1.)), bits)

    surface = distance.surface_voxels(mask)

    self.assertEqual(surface.voxel_count, 26)
    self.assertFalse(surface.bits[2, 2, 2])

  def test_full_grid_surface_is_grid_border(self):
    geometry = volume.Geometry((4, 5, 3), (1., 1., 1.))

    surface = distance.surface_voxels(volume.BinaryMask.full(geometry))

    expected = np.ones((4, 5, 3), dtype=bool)
    expected[1:-1, 1:-1, 1:-1] = False
    np.testing.assert_array_equal(surface.bits, expected)

  def test_surface_is_subset_and_sensitive_to_removal(self):
    rng = np.random.default_rng(11)
    geometry = volume.Geometry((8, 8, 8), (1., 1., 1.))
    mask = volume.BinaryMask(geometry, rng.random((8, 8, 8)) > .4)
    surface = distance.surface_voxels(mask)

    self.assertFalse(np.any(surface.bits & ~mask.bits))
    for index in np.argwhere(surface.bits)[:10]:
      bits = mask.bits.copy()
      bits[tuple(index)] = False
      reduced = distance.surface_voxels(volume.BinaryMask(geometry, bits))
      self.assertNotEqual(reduced, surface)


class EdtTest(parameterized.TestCase):

  def test_line_grid_distance_is_scaled_index_offset(self):
    mask = _mask_with([(3, 0, 0)], (9, 1, 1), spacing=(2., 1., 1.))

    field = distance.edt(mask)

    np.testing.assert_array_equal(field.distances.ravel(),
                                  2. * np.abs(np.arange(9) - 3))

  def test_three_four_five(self):
    mask = _mask_with([(0, 0, 0)], (5, 6, 2))

    field = distance.edt(mask)

    self.assertEqual(field.distances[3, 4, 0], 5.)

  def test_empty_seeds_raise(self):
    geometry = volume.Geometry((3, 3, 3), (1., 1., 1.))

    with self.assertRaises(distance.EmptySeeds):
      distance.edt(volume.BinaryMask.empty(geometry))

  def test_explicit_spacing_overrides_geometry(self):
    mask = _mask_with([(0, 0, 0)], (3, 1, 1))

    field = distance.edt(mask, spacing=(5., 1., 1.))

    np.testing.assert_array_equal(field.distances.ravel(), [0., 5., 10.])

  def test_matches_brute_force_exactly_on_integer_spacing(self):
    rng = np.random.default_rng(0)
    for case in range(100):
      with self.subTest(case=case):
        dims = tuple(int(d) for d in rng.integers(2, 17, size=3))
        spacing = tuple(float(s) for s in rng.integers(1, 6, size=3))
        bits = rng.random(dims) < rng.uniform(.002, .2)
        bits[tuple(rng.integers(0, d) for d in dims)] = True
        mask = volume.BinaryMask(volume.Geometry(dims, spacing), bits)

        field = distance.edt(mask)

        np.testing.assert_array_equal(field.squared,
                                      _brute_force_squared(bits, spacing))

  def test_matches_brute_force_on_anisotropic_spacing(self):
    rng = np.random.default_rng(100)
    for case in range(100):
      with self.subTest(case=case):
        dims = tuple(int(d) for d in rng.integers(2, 17, size=3))
        spacing = tuple(float(s) for s in rng.uniform(.3, 5., size=3))
        bits = rng.random(dims) < rng.uniform(.001, .3)
        bits[tuple(rng.integers(0, d) for d in dims)] = True
        mask = volume.BinaryMask(volume.Geometry(dims, spacing), bits)

        field = distance.edt(mask)

        np.testing.assert_allclose(
            field.distances, np.sqrt(_brute_force_squared(bits, spacing)),
            rtol=0, atol=1e-9)
        np.testing.assert_allclose(
            field.distances,
            ndimage.distance_transform_edt(~bits, sampling=spacing),
            rtol=0, atol=1e-9)

  def test_field_is_one_lipschitz_along_axes(self):
    rng = np.random.default_rng(7)
    spacing = (1.171875, 1.171875, 5.)
    bits = rng.random((12, 12, 10)) < .02
    bits[0, 0, 0] = True
    field = distance.edt(
        volume.BinaryMask(volume.Geometry(bits.shape, spacing), bits))

    for axis, step in enumerate(spacing):
      jumps = np.abs(np.diff(field.distances, axis=axis))
      self.assertLessEqual(jumps.max(), step + 1e-9)

  def test_seeds_are_exactly_zero(self):
    rng = np.random.default_rng(5)
    bits = rng.random((10, 9, 8)) < .1
    bits[1, 1, 1] = True
    field = distance.edt(
        volume.BinaryMask(volume.Geometry(bits.shape, (.7, .9, 2.5)), bits))

    self.assertTrue(np.all(field.squared[bits] == 0.))
    self.assertTrue(np.all(field.squared[~bits] > 0.))

  def test_at_samples_in_x_fastest_order(self):
    mask = _mask_with([(0, 0, 0)], (4, 2, 1))
    sites = _mask_with([(0, 1, 0), (3, 0, 0)], (4, 2, 1))

    samples = distance.edt(mask).at(sites)

    np.testing.assert_array_equal(samples, [3., 1.])


class DirectedSurfaceDistancesTest(parameterized.TestCase):

  def test_identical_masks_are_all_zero(self):
    rng = np.random.default_rng(2)
    geometry = volume.Geometry((10, 10, 10), (1., 2., 3.))
    mask = volume.BinaryMask(geometry, rng.random((10, 10, 10)) > .5)

    distances = distance.directed_surface_distances(mask, mask)

    self.assertLen(distances, distance.surface_voxels(mask).voxel_count)
    self.assertTrue(np.all(distances == 0.))

  def test_single_voxels_five_mm_apart(self):
    first = _mask_with([(0, 0, 0)], (6, 6, 2))
    second = _mask_with([(3, 4, 0)], (6, 6, 2))

    np.testing.assert_array_equal(
        distance.directed_surface_distances(first, second), [5.])

  def test_line_and_line_with_outlier(self):
    line = [(x, 5, 5) for x in range(10)]
    original = _mask_with(line, (12, 20, 10))
    augmented = _mask_with(line + [(0, 15, 5)], (12, 20, 10))

    forward = distance.directed_surface_distances(original, augmented)
    backward = distance.directed_surface_distances(augmented, original)

    np.testing.assert_array_equal(forward, np.zeros(10))
    np.testing.assert_array_equal(backward, [0.] * 10 + [10.])

  def test_empty_mask_raises(self):
    geometry = volume.Geometry((4, 4, 4), (1., 1., 1.))
    mask = _mask_with([(1, 1, 1)], (4, 4, 4))

    with self.assertRaises(distance.EmptyMask):
      distance.directed_surface_distances(mask,
                                          volume.BinaryMask.empty(geometry))
    with self.assertRaises(distance.EmptyMask):
      distance.surface_distances(volume.BinaryMask.empty(geometry), mask)

  def test_geometry_mismatch_raises(self):
    first = _mask_with([(1, 1, 1)], (4, 4, 4))
    second = _mask_with([(1, 1, 1)], (4, 4, 5))

    with self.assertRaises(volume.GeometryMismatch):
      distance.directed_surface_distances(first, second)

  @parameterized.named_parameters([
      dict(testcase_name=f"random_{seed}", seed=seed) for seed in range(8)
  ])
  def test_matches_brute_force_surface_pairs(self, seed):
    rng = np.random.default_rng(200 + seed)
    dims = tuple(rng.integers(6, 17, size=3))
    spacing = tuple(rng.uniform(.5, 4., size=3))
    first = rng.random(dims) < .3
    second = rng.random(dims) < .3
    first[0, 0, 0] = second[-1, -1, -1] = True
    geometry = volume.Geometry(dims, spacing)
    first_mask = volume.BinaryMask(geometry, first)
    second_mask = volume.BinaryMask(geometry, second)

    forward, backward = distance.surface_distances(first_mask, second_mask)

    np.testing.assert_allclose(
        forward, _brute_force_directed(first, second, spacing), atol=1e-9)
    np.testing.assert_allclose(
        backward, _brute_force_directed(second, first, spacing), atol=1e-9)
    np.testing.assert_array_equal(
        forward, distance.directed_surface_distances(first_mask, second_mask))

  def test_crop_keeps_grid_border_surface(self):
    small = _mask_with([(1, 1, 1)], (30, 30, 30))
    bits = np.zeros((30, 30, 30), dtype=bool)
    bits[0:3, 0:3, 0:3] = True
    corner = volume.BinaryMask(small.geometry, bits)

    distances = distance.directed_surface_distances(corner, small)

    self.assertLen(distances, 26)
    np.testing.assert_allclose(distances,
                               _brute_force_directed(bits, small.bits,
                                                     (1., 1., 1.)))


if __name__ == "__main__":
  absltest.main()
