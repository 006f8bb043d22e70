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

"""voxmetric library.

Evaluation toolkit for volumetric target segmentations: NIfTI volume I/O,
intensity preprocessing, exact anisotropic distance transforms, DSC/HD/HD95,
CTV to PTV margin construction, bone-subtraction re-evaluation and the
nonparametric statistics used to compare segmentation models on a cohort.
"""
__version__ = "0.1.0"
