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


from .config import ExperimentConfig, load_config
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .model import ThermSR
from .training import train_vqvae, train_ar
from .inference import infer, infer_corpus


__all__ = (
    'ExperimentConfig',
    'load_config',
    'Checkpoint',
    'load_checkpoint',
    'save_checkpoint',
    'ThermSR',
    'train_vqvae',
    'train_ar',
    'infer',
    'infer_corpus',
)
