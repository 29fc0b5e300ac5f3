#
# This source file is part of the thermsr open source project.
#
# Copyright 2025-present the thermsr authors.
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
#


# flake8: noqa

from ._version import __version__

from .enums import Degradation, Split, Scene, ResizeMode, SamplerKind
from .enums import Ablation
from .options import LossWeights, Ablations, SamplerOptions
from .imaging import Image, load_image, save_image, resize
from .guidance import GuidanceConfig, ThermalStructuralGuidance
from .quantizer import QuantizerConfig, Codebook, TokenMap, VQVAE
from .backbone import BackboneConfig, NextScaleTransformer
from .degrade import DegradationSpec, degrade_pair, synth_scene
from .dataio import SampleRecord, Manifest, load_manifest, save_manifest
from .metrics import psnr, ssim, toc_violation_rate, EvalReport

from .errors._base import ThermSRError, ThermSRMessage

__all__ = [
    "Ablation",
    "Ablations",
    "BackboneConfig",
    "Codebook",
    "Degradation",
    "DegradationSpec",
    "EvalReport",
    "GuidanceConfig",
    "Image",
    "LossWeights",
    "Manifest",
    "NextScaleTransformer",
    "QuantizerConfig",
    "ResizeMode",
    "SampleRecord",
    "SamplerKind",
    "SamplerOptions",
    "Scene",
    "Split",
    "ThermSRError",
    "ThermSRMessage",
    "ThermalStructuralGuidance",
    "TokenMap",
    "VQVAE",
    "degrade_pair",
    "load_image",
    "load_manifest",
    "psnr",
    "resize",
    "save_image",
    "save_manifest",
    "ssim",
    "synth_scene",
    "toc_violation_rate",
]


# <ERRORS-AUTOGEN>
from .errors import (
    ValidationError,
    ShapeMismatchError,
    ImageValidationError,
    CodeIndexError,
    ManifestError,
    DuplicateRecordError,
    MissingFileError,
    UnknownCategoryError,
    IncompatibleCheckpointError,
    IncompatibleDimensionsError,
    ConfigurationError,
    UnknownConfigKeyError,
    InvalidScaleScheduleError,
    ImageIOError,
    TrainingError,
    DivergenceError,
    CheckpointError,
    CheckpointFormatError,
    WarningMessage,
    CropRemainderWarning,
    DegenerateGridWarning,
    SkippedRecordWarning,
)

__all__.extend([
    "ValidationError",
    "ShapeMismatchError",
    "ImageValidationError",
    "CodeIndexError",
    "ManifestError",
    "DuplicateRecordError",
    "MissingFileError",
    "UnknownCategoryError",
    "IncompatibleCheckpointError",
    "IncompatibleDimensionsError",
    "ConfigurationError",
    "UnknownConfigKeyError",
    "InvalidScaleScheduleError",
    "ImageIOError",
    "TrainingError",
    "DivergenceError",
    "CheckpointError",
    "CheckpointFormatError",
    "WarningMessage",
    "CropRemainderWarning",
    "DegenerateGridWarning",
    "SkippedRecordWarning",
])
# </ERRORS-AUTOGEN>
