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


import enum


class Degradation(enum.Enum):

    DEFOCUS = 'defocus'
    MOTION = 'motion'


class Split(enum.Enum):

    TRAIN = 'train'
    TEST = 'test'


class Scene(enum.Enum):
    # The closed label vocabulary of the benchmark; an image may carry
    # several of these at once.
    PERSON         = 'person'          # noqa
    BICYCLE        = 'bicycle'         # noqa
    MOTORCYCLE     = 'motorcycle'      # noqa
    TRICYCLE       = 'tricycle'        # noqa
    CAR            = 'car'             # noqa
    BUS            = 'bus'             # noqa
    PLANE          = 'plane'           # noqa
    STATUE         = 'statue'          # noqa
    REGULAR_OBJECT = 'regular object'  # noqa
    BUILDING       = 'building'        # noqa
    ROAD           = 'road'            # noqa
    COMPLEX_SCENE  = 'complex scene'   # noqa


# Label frequencies of the real capture campaign, used to draw
# scene labels for synthetic corpora.
SCENE_FREQUENCIES = {
    Scene.PERSON: 309,
    Scene.BICYCLE: 22,
    Scene.MOTORCYCLE: 27,
    Scene.TRICYCLE: 13,
    Scene.CAR: 234,
    Scene.BUS: 5,
    Scene.PLANE: 54,
    Scene.STATUE: 157,
    Scene.REGULAR_OBJECT: 248,
    Scene.BUILDING: 706,
    Scene.ROAD: 132,
    Scene.COMPLEX_SCENE: 401,
}

DEGRADATION_FREQUENCIES = {
    Degradation.DEFOCUS: 1305,
    Degradation.MOTION: 152,
}


class ResizeMode(enum.Enum):

    BICUBIC = 'bicubic'
    NEAREST = 'nearest'


class SamplerKind(enum.Enum):

    ARGMAX = 'argmax'
    TOPK = 'topk'


class Ablation(enum.Enum):

    NO_TSG = 'no-tsg'
    NO_CAC = 'no-cac'
    NO_TOC = 'no-toc'
