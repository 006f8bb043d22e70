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

"""Synthetic CT phantoms with known targets, for end-to-end checks.

A phantom is an elliptic soft tissue cylinder in air holding bone segments
(tubes along z alternating with elongated ellipsoids), one spleen ellipsoid and
chains of spherical lymph nodes running along z. The three CTVs are the bone
segments, the spleen and the nodes; the PTV is built from them with the usual
2/5/5 mm margins.

Every random draw comes from `jax.random` with the Threefry-2x32 generator in
its partitionable mode, pinned whatever the jax default is, so a spec and seed
give the same phantom on every platform and jax version. The 64-bit seed is
split into 31-bit words: the lowest one seeds the key and the others are
folded in. Each structure draws from its own folded key, so changing one count
does not move the other structures.

HU values are typical tissue values, only their ordering matters:
air < soft tissue < lymph node < spleen < bone.
"""

import dataclasses
import functools
import math
import os
from typing import Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

from absl import logging
import immutabledict
import jax
import jax.numpy as jnp
import numpy as np
from scipy import ndimage
import yaml

from voxmetric import cohort
from voxmetric import distance
from voxmetric import mask_algebra
from voxmetric import nifti
from voxmetric import utils
from voxmetric import volume

HU = immutabledict.immutabledict({
    "air": -1000,
    "soft_tissue": 20,
    "lymph_node": 30,
    "spleen": 60,
    "bone": 700,
})

# Semi-axes of the body cylinder, as fractions of the in-plane extent.
_BODY_FRACTION = (.45, .4)
_NODE_DRIFT_MM = 2.
_MAX_SEED = 2**64
_CASE_FILES = ("ct", "ctv_bm", "ctv_spleen", "ctv_ln", "bones", "ptv")

# Folded into the case key to get one stream per structure kind.
_BODY_STREAM, _BONE_STREAM, _SPLEEN_STREAM, _NODE_STREAM = 0, 1, 2, 3
_COVERAGE_STREAM = 4


class SpecInfeasible(volume.VoxmetricError):
  pass


class InvalidSpec(volume.VoxmetricError, ValueError):
  pass


def _check_range(name: str, value: Tuple[float, float]) -> None:
  low, high = value
  if not (np.isfinite(low) and np.isfinite(high) and 0 < low <= high):
    raise InvalidSpec(f"{name} must be a positive (low, high) range, got "
                      f"{value}.")


@dataclasses.dataclass(frozen=True)
class PhantomSpec:
  """Description of a phantom family; one seed gives one phantom.

  Attributes:
    dims: Number of voxels along x, y and z.
    spacing: Voxel size in mm.
    seed: Integer in [0, 2**64).
    n_bone_segments: Number of bone segments.
    bone_radius_mm: Range of bone radii.
    bone_length_mm: Range of bone lengths along z.
    include_spleen: Whether the phantom has a spleen.
    spleen_radii_mm: Range of the spleen semi-axes.
    n_lymph_chains: Number of lymph node chains.
    nodes_per_chain: Number of nodes in each chain.
    node_diameter_mm: Range of node diameters.
    noise_hu: Standard deviation of the additive CT noise.
    bone_segmentation_coverage: Probability that a bone segment appears in the
      bone mask used for bone subtraction.
  """
  dims: Tuple[int, int, int] = (64, 64, 32)
  spacing: Tuple[float, float, float] = (1., 1., 2.)
  seed: int = 0
  n_bone_segments: int = 6
  bone_radius_mm: Tuple[float, float] = (3., 6.)
  bone_length_mm: Tuple[float, float] = (20., 60.)
  include_spleen: bool = True
  spleen_radii_mm: Tuple[float, float] = (8., 14.)
  n_lymph_chains: int = 2
  nodes_per_chain: int = 4
  node_diameter_mm: Tuple[float, float] = (4., 15.)
  noise_hu: float = 10.
  bone_segmentation_coverage: float = .8

  def __post_init__(self):
    for name in ("dims", "spacing", "bone_radius_mm", "bone_length_mm",
                 "spleen_radii_mm", "node_diameter_mm"):
      object.__setattr__(self, name, tuple(getattr(self, name)))
    try:
      volume.Geometry(self.dims, self.spacing)
    except ValueError as error:
      raise InvalidSpec(str(error)) from error
    if not 0 <= self.seed < _MAX_SEED:
      raise InvalidSpec(f"Seed must be within [0, 2**64), got {self.seed}.")
    for name in ("n_bone_segments", "n_lymph_chains", "nodes_per_chain"):
      if getattr(self, name) < 0:
        raise InvalidSpec(f"{name} must be non-negative.")
    _check_range("bone_radius_mm", self.bone_radius_mm)
    _check_range("bone_length_mm", self.bone_length_mm)
    _check_range("spleen_radii_mm", self.spleen_radii_mm)
    _check_range("node_diameter_mm", self.node_diameter_mm)
    if self.noise_hu < 0:
      raise InvalidSpec(f"noise_hu must be non-negative, got {self.noise_hu}.")
    if not 0 <= self.bone_segmentation_coverage <= 1:
      raise InvalidSpec("bone_segmentation_coverage must be within [0, 1].")

  @property
  def geometry(self) -> volume.Geometry:
    return volume.Geometry(self.dims, self.spacing)

  @classmethod
  def from_yaml(cls, file_path: str) -> "PhantomSpec":
    """Reads a spec from a YAML mapping of field names to values."""
    try:
      document = yaml.safe_load(utils.read_text(file_path)) or {}
    except yaml.YAMLError as error:
      raise InvalidSpec(f"{file_path} is not valid YAML: {error}") from error
    if not isinstance(document, dict):
      raise InvalidSpec(f"{file_path}: a phantom spec must be a mapping.")
    names = {field.name for field in dataclasses.fields(cls)}
    unknown = sorted(set(document) - names)
    if unknown:
      raise InvalidSpec(f"{file_path}: unknown phantom spec keys {unknown}.")
    try:
      return cls(**document)
    except InvalidSpec:
      raise
    except (TypeError, ValueError) as error:
      raise InvalidSpec(f"{file_path}: {error}") from error

  def scaled(self, dims: Sequence[int]) -> "PhantomSpec":
    """Same physical extent sampled on a grid of the given size."""
    extent = self.geometry.physical_extent
    return dataclasses.replace(
        self,
        dims=tuple(int(d) for d in dims),
        spacing=tuple(e / d for e, d in zip(extent, dims)))


@dataclasses.dataclass(frozen=True)
class PhantomCase:
  """One synthetic patient.

  Attributes:
    ct: CT volume in HU, int16.
    ctv_bm: Bone marrow CTV, the union of the bone segments.
    ctv_spleen: Spleen CTV.
    ctv_ln: Lymph node CTV.
    bones: Bone mask used for bone subtraction, a subset of ctv_bm.
    ptv: Planning target built from the three CTVs.
  """
  ct: volume.Volume
  ctv_bm: volume.BinaryMask
  ctv_spleen: volume.BinaryMask
  ctv_ln: volume.BinaryMask
  bones: volume.BinaryMask
  ptv: volume.BinaryMask


def ptv_parts(
    ctv_bm: volume.BinaryMask, ctv_spleen: volume.BinaryMask,
    ctv_ln: volume.BinaryMask
) -> List[Tuple[volume.BinaryMask, mask_algebra.MarginSpec]]:
  """CTVs and margins making up a phantom PTV. Empty CTVs are left out."""
  parts = [(ctv_bm, mask_algebra.BONE_MARROW_MARGIN),
           (ctv_spleen, mask_algebra.SPLEEN_MARGIN),
           (ctv_ln, mask_algebra.LYMPH_NODE_MARGIN)]
  return [(mask, margin) for mask, margin in parts if not mask.is_empty]


_T = TypeVar("_T")


def _pinned_prng_mode(function: Callable[..., _T]) -> Callable[..., _T]:
  """Runs `function` with the partitionable Threefry mode switched on."""

  @functools.wraps(function)
  def wrapper(*args, **kwargs) -> _T:
    with jax.threefry_partitionable(True):
      return function(*args, **kwargs)

  return wrapper


def _key(seed: int) -> jnp.ndarray:
  key = jax.random.PRNGKey(seed & 0x7FFFFFFF)
  for shift in (31, 62):
    key = jax.random.fold_in(key, (seed >> shift) & 0x7FFFFFFF)
  return key


def _uniform(key: jnp.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
  return np.asarray(jax.random.uniform(key, shape), dtype=np.float64)


def _between(unit: np.ndarray, value_range: Tuple[float, float]) -> np.ndarray:
  low, high = value_range
  return low + unit * (high - low)


class _Grid:
  """Voxel center coordinates in mm, broadcastable to the grid shape."""

  def __init__(self, geometry: volume.Geometry):
    self.geometry = geometry
    self.axes = [
        (np.arange(n) * s).reshape([-1 if a == axis else 1 for a in range(3)])
        for axis, (n, s) in enumerate(zip(geometry.dims, geometry.spacing))
    ]
    extent = [(n - 1) * s for n, s in zip(geometry.dims, geometry.spacing)]
    self.center = tuple(e / 2. for e in extent)
    self.extent = geometry.physical_extent
    self.body_axes = tuple(f * e for f, e in zip(_BODY_FRACTION, self.extent))

  def nearest_index(self, point: Sequence[float]) -> Tuple[int, int, int]:
    return tuple(
        int(np.clip(round(p / s), 0, n - 1))
        for p, s, n in zip(point, self.geometry.spacing, self.geometry.dims))

  def ellipsoid(self, center: Sequence[float],
                radii: Sequence[float]) -> np.ndarray:
    """Voxels whose centers lie in the ellipsoid, never empty."""
    inside = sum(((axis - c) / r)**2
                 for axis, c, r in zip(self.axes, center, radii)) <= 1.
    bits = np.broadcast_to(inside, self.geometry.dims).copy()
    bits[self.nearest_index(center)] = True
    return bits

  def tube(self, center: Sequence[float], radius: float,
           length: float) -> np.ndarray:
    """Cylinder along z of the given radius and length, never empty."""
    x, y, z = self.axes
    disk = ((x - center[0])**2 + (y - center[1])**2) <= radius**2
    span = np.abs(z - center[2]) <= length / 2.
    bits = np.broadcast_to(disk & span, self.geometry.dims).copy()
    bits[self.nearest_index(center)] = True
    return bits

  def body(self) -> np.ndarray:
    x, y, _ = self.axes
    a, b = self.body_axes
    inside = ((x - self.center[0]) / a)**2 + ((y - self.center[1]) / b)**2 <= 1
    return np.broadcast_to(inside, self.geometry.dims).copy()

  def in_body(self, unit: np.ndarray, padding: float) -> Tuple[float, float]:
    """Maps two uniform numbers to a point at least `padding` inside the body.

    Args:
      unit: Two numbers in [0, 1).
      padding: Distance to keep from the body outline, in mm.

    Returns:
      The (x, y) position in mm.

    Raises:
      SpecInfeasible: If the body is too small for the padding.
    """
    a, b = (axis - padding for axis in self.body_axes)
    if a <= 0 or b <= 0:
      raise SpecInfeasible(
          f"A structure of radius {padding:.1f} mm does not fit in a body "
          f"of semi-axes {self.body_axes[0]:.1f} x {self.body_axes[1]:.1f} mm.")
    rho, theta = math.sqrt(unit[0]), 2. * math.pi * unit[1]
    return (self.center[0] + rho * a * math.cos(theta),
            self.center[1] + rho * b * math.sin(theta))

  def along_z(self, unit: float, half_length: float) -> float:
    if 2. * half_length > self.extent[2]:
      raise SpecInfeasible(
          f"A structure of {2. * half_length:.1f} mm does not fit in the "
          f"{self.extent[2]:.1f} mm z extent.")
    low = half_length
    high = max(self.extent[2] - half_length, low)
    return low + unit * (high - low)


def _bone_segments(grid: _Grid, spec: PhantomSpec,
                   key: jnp.ndarray) -> List[np.ndarray]:
  segments = []
  for index in range(spec.n_bone_segments):
    draws = _uniform(jax.random.fold_in(key, index), (5,))
    radius = _between(draws[0], spec.bone_radius_mm)
    length = min(_between(draws[1], spec.bone_length_mm), grid.extent[2])
    x, y = grid.in_body(draws[2:4], radius)
    z = grid.along_z(draws[4], length / 2.)
    if index % 2 == 0:
      segments.append(grid.tube((x, y, z), radius, length))
    else:
      segments.append(grid.ellipsoid((x, y, z), (radius, radius, length / 2.)))
  return segments


def _spleen(grid: _Grid, spec: PhantomSpec, key: jnp.ndarray) -> np.ndarray:
  if not spec.include_spleen:
    return np.zeros(grid.geometry.dims, dtype=bool)
  draws = _uniform(key, (6,))
  radii = _between(draws[:3], spec.spleen_radii_mm)
  radii[2] = min(radii[2], grid.extent[2] / 2.)
  x, y = grid.in_body(draws[3:5], max(radii[0], radii[1]))
  z = grid.along_z(draws[5], radii[2])
  return grid.ellipsoid((x, y, z), radii)


def _lymph_nodes(grid: _Grid, spec: PhantomSpec,
                 key: jnp.ndarray) -> np.ndarray:
  bits = np.zeros(grid.geometry.dims, dtype=bool)
  if not spec.nodes_per_chain:
    return bits
  max_radius = spec.node_diameter_mm[1] / 2.
  step = grid.extent[2] / spec.nodes_per_chain
  for chain in range(spec.n_lymph_chains):
    chain_key = jax.random.fold_in(key, chain)
    x, y = grid.in_body(_uniform(chain_key, (2,)),
                        max_radius + _NODE_DRIFT_MM)
    draws = _uniform(jax.random.fold_in(chain_key, 1),
                     (spec.nodes_per_chain, 3))
    for node, (size, dx, dy) in enumerate(draws):
      radius = _between(size, spec.node_diameter_mm) / 2.
      z = min(max((node + .5) * step, radius), grid.extent[2] - radius)
      center = (x + (2. * dx - 1.) * _NODE_DRIFT_MM,
                y + (2. * dy - 1.) * _NODE_DRIFT_MM, z)
      bits |= grid.ellipsoid(center, (radius,) * 3)
  return bits


@_pinned_prng_mode
def generate_phantom(spec: PhantomSpec) -> PhantomCase:
  """Builds the phantom of a spec.

  Args:
    spec: Phantom description and seed.

  Returns:
    The CT volume and its masks. The same spec always gives a bitwise
    identical case.

  Raises:
    SpecInfeasible: If the phantom has no structure or a structure does not
      fit in the grid.
  """
  geometry = spec.geometry
  grid = _Grid(geometry)
  key = _key(spec.seed)
  if spec.node_diameter_mm[1] > grid.extent[2] and spec.n_lymph_chains:
    raise SpecInfeasible("Lymph nodes do not fit in the z extent.")

  segments = _bone_segments(grid, spec, jax.random.fold_in(key, _BONE_STREAM))
  bone_bits = np.zeros(geometry.dims, dtype=bool)
  for segment in segments:
    bone_bits |= segment
  covered = np.asarray(
      jax.random.bernoulli(
          jax.random.fold_in(key, _COVERAGE_STREAM),
          spec.bone_segmentation_coverage, (len(segments),)))
  segmented_bones = np.zeros(geometry.dims, dtype=bool)
  for segment, keep in zip(segments, covered):
    if keep:
      segmented_bones |= segment
  spleen_bits = _spleen(grid, spec, jax.random.fold_in(key, _SPLEEN_STREAM))
  node_bits = (
      _lymph_nodes(grid, spec, jax.random.fold_in(key, _NODE_STREAM))
      if spec.n_lymph_chains else np.zeros(geometry.dims, dtype=bool))

  ctv_bm = volume.BinaryMask(geometry, bone_bits)
  ctv_spleen = volume.BinaryMask(geometry, spleen_bits)
  ctv_ln = volume.BinaryMask(geometry, node_bits)
  parts = ptv_parts(ctv_bm, ctv_spleen, ctv_ln)
  if not parts:
    raise SpecInfeasible("The phantom spec describes no structure.")
  ptv = mask_algebra.build_ptv(parts)

  hu = np.full(geometry.dims, HU["air"], dtype=np.float64)
  hu[grid.body()] = HU["soft_tissue"]
  hu[node_bits] = HU["lymph_node"]
  hu[spleen_bits] = HU["spleen"]
  hu[bone_bits] = HU["bone"]
  noise = np.asarray(
      jax.random.normal(jax.random.fold_in(key, _BODY_STREAM), geometry.dims),
      dtype=np.float64)
  hu = np.clip(np.rint(hu + spec.noise_hu * noise), -32768, 32767)
  ct = volume.Volume(geometry, hu.astype(np.int16), unit="HU")

  logging.debug(
      "Phantom seed %d: %d bone, %d spleen, %d node and %d PTV voxels",
      spec.seed, ctv_bm.voxel_count, ctv_spleen.voxel_count,
      ctv_ln.voxel_count, ptv.voxel_count)
  return PhantomCase(
      ct=ct,
      ctv_bm=ctv_bm,
      ctv_spleen=ctv_spleen,
      ctv_ln=ctv_ln,
      bones=volume.BinaryMask(geometry, segmented_bones),
      ptv=ptv)


@_pinned_prng_mode
def perturb_mask(mask: volume.BinaryMask,
                 spacing: Optional[Sequence[float]] = None,
                 boundary_noise_mm: float = 0.,
                 drop_fraction: float = 0.,
                 seed: int = 0,
                 correlation_mm: float = 4.) -> volume.BinaryMask:
  """Simulates an imperfect prediction of a mask.

  First floor(drop_fraction * n) of the n 6-connected components are removed.
  Then a smooth random displacement r(v), with |r| <= boundary_noise_mm, moves
  the boundary: a background voxel is added when its distance to the mask is
  at most r(v), a mask voxel is removed when its distance to the background is
  at most -r(v).

  Args:
    mask: Mask to perturb.
    spacing: Voxel size in mm, defaults to the mask geometry spacing.
    boundary_noise_mm: Largest boundary displacement.
    drop_fraction: Fraction of connected components to remove, in [0, 1).
    seed: Integer in [0, 2**64).
    correlation_mm: Smoothing length of the displacement field.

  Returns:
    The perturbed mask, identical to `mask` when both the noise and the drop
    fraction are 0.

  Raises:
    EmptySeeds: If the mask is empty.
  """
  if mask.is_empty:
    raise distance.EmptySeeds("Cannot perturb an empty mask.")
  if not (np.isfinite(boundary_noise_mm) and boundary_noise_mm >= 0):
    raise ValueError(
        f"boundary_noise_mm must be non-negative, got {boundary_noise_mm}.")
  if not 0 <= drop_fraction < 1:
    raise ValueError(f"drop_fraction must be within [0, 1), got "
                     f"{drop_fraction}.")
  if not 0 <= seed < _MAX_SEED:
    raise ValueError(f"Seed must be within [0, 2**64), got {seed}.")
  if boundary_noise_mm == 0 and drop_fraction == 0:
    return mask
  spacing = distance.resolve_spacing(mask.geometry, spacing)
  drop_key, noise_key = jax.random.split(_key(seed))
  bits = np.array(mask.bits)

  labels, n_components = ndimage.label(
      bits, structure=ndimage.generate_binary_structure(3, 1))
  n_dropped = math.floor(drop_fraction * n_components)
  if n_dropped:
    order = np.asarray(jax.random.permutation(drop_key, n_components))
    bits[np.isin(labels, order[:n_dropped] + 1)] = False

  if boundary_noise_mm > 0:
    reach = tuple(math.ceil(boundary_noise_mm / step) + 1 for step in spacing)
    crop = volume.bounding_box(volume.BinaryMask(
        mask.geometry, bits)).padded(reach, mask.geometry.dims).slices()
    inside = bits[crop]
    field = np.asarray(
        jax.random.normal(noise_key, inside.shape), dtype=np.float64)
    field = ndimage.gaussian_filter(
        field, sigma=[correlation_mm / step for step in spacing],
        mode="nearest")
    spread = field.std()
    field = (field - field.mean()) / spread if spread > 0 else field * 0.
    shift = np.clip(field, -1., 1.) * boundary_noise_mm
    to_mask = distance.squared_edt(inside, spacing)
    to_background = distance.squared_edt(~inside, spacing)
    grown = ~inside & (shift > 0) & (to_mask <= shift**2)
    shrunk = inside & (shift < 0) & (to_background <= shift**2)
    bits[crop] = (inside | grown) & ~shrunk

  return volume.BinaryMask(mask.geometry, bits)


def save_phantom_case(case: PhantomCase, out_dir: str,
                      patient_id: str) -> Dict[str, str]:
  """Writes the volumes of a case under out_dir/patient_id.

  Returns:
    Paths of the written files keyed by ct, ctv_bm, ctv_spleen, ctv_ln, bones
    and ptv.
  """
  case_dir = os.path.join(out_dir, patient_id)
  utils.make_dirs(case_dir)
  paths = {}
  for name in _CASE_FILES:
    paths[name] = os.path.join(case_dir, f"{name}.nii")
    image = getattr(case, name)
    if isinstance(image, volume.BinaryMask):
      nifti.save_mask(image, paths[name])
    else:
      nifti.save_nifti(image, paths[name])
  return paths


def model_id_for(noise_mm: float) -> str:
  return f"noise_{noise_mm:g}mm"


def generate_cohort(spec: PhantomSpec,
                    n_patients: int,
                    noise_levels_mm: Sequence[float],
                    out_dir: str,
                    drop_fraction: float = 0.) -> cohort.CohortManifest:
  """Writes a phantom cohort with one simulated model per noise level.

  Patient i uses seed spec.seed + i. Its prediction by the model of index m
  is the PTV perturbed with seed (spec.seed + i) * 1000 + m. Folds are dealt
  round-robin into min(5, n_patients) folds.

  Args:
    spec: Phantom description; its seed is the seed of the first patient.
    n_patients: Number of phantoms.
    noise_levels_mm: Boundary noise of each simulated model.
    out_dir: Destination directory; it receives the cases, the predictions
      and `manifest.yaml`.
    drop_fraction: Fraction of PTV components every model misses.

  Returns:
    The manifest as loaded back from `out_dir/manifest.yaml`.

  Raises:
    SpecInfeasible: If a phantom cannot be generated.
  """
  if n_patients < 1:
    raise ValueError(f"A cohort needs at least 1 patient, got {n_patients}.")
  if not noise_levels_mm:
    raise ValueError("A cohort needs at least one noise level.")
  model_ids = [model_id_for(level) for level in noise_levels_mm]
  if len(set(model_ids)) != len(model_ids):
    raise ValueError(f"Noise levels must be distinct, got {noise_levels_mm}.")

  patients = []
  predictions = {model_id: {} for model_id in model_ids}
  for index in range(n_patients):
    patient_id = f"phantom_{index:03d}"
    patient_seed = (spec.seed + index) % _MAX_SEED
    case = generate_phantom(dataclasses.replace(spec, seed=patient_seed))
    save_phantom_case(case, out_dir, patient_id)
    patients.append(
        dict(
            patient_id=patient_id,
            gt_mask_path=f"{patient_id}/ptv.nii",
            ct_path=f"{patient_id}/ct.nii",
            bone_mask_path=f"{patient_id}/bones.nii"))
    for model_index, (model_id, level) in enumerate(
        zip(model_ids, noise_levels_mm)):
      predicted = perturb_mask(
          case.ptv,
          boundary_noise_mm=level,
          drop_fraction=drop_fraction,
          seed=(patient_seed * 1000 + model_index) % _MAX_SEED)
      relative_path = f"predictions/{model_id}/{patient_id}.nii"
      utils.make_dirs(os.path.join(out_dir, "predictions", model_id))
      nifti.save_mask(predicted, os.path.join(out_dir, relative_path))
      predictions[model_id][patient_id] = relative_path
    logging.info("Generated phantom %s (%d/%d)", patient_id, index + 1,
                 n_patients)

  n_folds = min(5, n_patients)
  if n_folds >= 2:
    folds = cohort.make_folds([p["patient_id"] for p in patients], n_folds)
    for patient in patients:
      patient["fold"] = folds[patient["patient_id"]]
  else:
    n_folds = 1
  manifest = cohort.parse_manifest(
      dict(
          patients=patients,
          models=[
              dict(model_id=model_id, predictions=predictions[model_id])
              for model_id in model_ids
          ],
          n_folds=n_folds))
  manifest_path = os.path.join(out_dir, "manifest.yaml")
  cohort.save_manifest(manifest, manifest_path)
  return cohort.load_manifest(manifest_path)
