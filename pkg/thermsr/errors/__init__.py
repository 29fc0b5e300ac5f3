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


from thermsr.errors._base import *


__all__ = _base.__all__ + (  # type: ignore
    'ValidationError',
    'ShapeMismatchError',
    'ImageValidationError',
    'CodeIndexError',
    'ManifestError',
    'DuplicateRecordError',
    'MissingFileError',
    'UnknownCategoryError',
    'IncompatibleCheckpointError',
    'IncompatibleDimensionsError',
    'ConfigurationError',
    'UnknownConfigKeyError',
    'InvalidScaleScheduleError',
    'ImageIOError',
    'TrainingError',
    'DivergenceError',
    'CheckpointError',
    'CheckpointFormatError',
    'WarningMessage',
    'CropRemainderWarning',
    'DegenerateGridWarning',
    'SkippedRecordWarning',
)


class ValidationError(ThermSRError):
    _code = 0x_01_00_00_00


class ShapeMismatchError(ValidationError):
    _code = 0x_01_01_00_00


class ImageValidationError(ValidationError):
    _code = 0x_01_02_00_00


class CodeIndexError(ValidationError):
    _code = 0x_01_03_00_00


class ManifestError(ValidationError):
    _code = 0x_01_04_00_00


class DuplicateRecordError(ManifestError):
    _code = 0x_01_04_00_01


class MissingFileError(ManifestError):
    _code = 0x_01_04_00_02


class UnknownCategoryError(ManifestError):
    _code = 0x_01_04_00_03


class IncompatibleCheckpointError(ValidationError):
    _code = 0x_01_05_00_00


class IncompatibleDimensionsError(ValidationError):
    _code = 0x_01_06_00_00


class ConfigurationError(ThermSRError):
    _code = 0x_02_00_00_00


class UnknownConfigKeyError(ConfigurationError):
    _code = 0x_02_01_00_00


class InvalidScaleScheduleError(ConfigurationError):
    _code = 0x_02_02_00_00


class ImageIOError(ThermSRError):
    _code = 0x_03_00_00_00


class TrainingError(ThermSRError):
    _code = 0x_04_00_00_00


class DivergenceError(TrainingError):
    _code = 0x_04_01_00_00


class CheckpointError(ThermSRError):
    _code = 0x_05_00_00_00


class CheckpointFormatError(CheckpointError):
    _code = 0x_05_01_00_00


class WarningMessage(ThermSRMessage):
    _code = 0x_F0_01_00_00


class CropRemainderWarning(WarningMessage):
    _code = 0x_F0_01_00_01


class DegenerateGridWarning(WarningMessage):
    _code = 0x_F0_01_00_02


class SkippedRecordWarning(WarningMessage):
    _code = 0x_F0_01_00_03
