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

"""Checkpoint archives.

A checkpoint is a ``.bin`` file holding the raw little-endian bytes of
every named tensor back to back, plus a ``.bin.json`` sidecar that lists
each tensor's shape, dtype and byte offset together with the config,
its hash and the iteration counter.
"""


from __future__ import annotations

import dataclasses
import json
import logging
import os
import pathlib
import typing

import numpy as np
import torch

from thermsr import errors


__all__ = (
    'Checkpoint',
    'save_checkpoint',
    'load_checkpoint',
    'sidecar_path',
)

logger = logging.getLogger(__name__)

FORMAT_NAME = 'thermsr-checkpoint'
FORMAT_VERSION = 1

_PathLike = typing.Union[str, os.PathLike]


@dataclasses.dataclass(frozen=True)
class Checkpoint:

    path: pathlib.Path
    kind: str
    state: typing.Mapping[str, torch.Tensor]
    config: typing.Mapping[str, typing.Any]
    config_hash: str
    iteration: int
    metrics: typing.Mapping[str, typing.Any] = dataclasses.field(
        default_factory=dict)

    def load_into(self, module: torch.nn.Module, *, prefix: str = ''):
        """Copy the stored tensors into ``module``; every parameter and
        buffer of the module must be present with a matching shape."""
        target = module.state_dict()
        missing = [k for k in target if prefix + k not in self.state]
        if missing:
            raise errors.IncompatibleCheckpointError(
                f'checkpoint {self.path} lacks {len(missing)} tensor(s), '
                f'e.g. {missing[0]!r}')
        for k, t in target.items():
            src = self.state[prefix + k]
            if tuple(src.shape) != tuple(t.shape):
                raise errors.IncompatibleCheckpointError(
                    f'tensor {k!r} has shape {tuple(src.shape)} in the '
                    f'checkpoint but {tuple(t.shape)} in the model')
        module.load_state_dict(
            {k: self.state[prefix + k] for k in target}, strict=True)
        return module


def sidecar_path(path: _PathLike) -> pathlib.Path:
    path = pathlib.Path(path)
    return path.with_name(path.name + '.json')


def save_checkpoint(
    path: _PathLike,
    state: typing.Mapping[str, torch.Tensor],
    *,
    kind: str,
    config: typing.Mapping[str, typing.Any],
    config_hash: str,
    iteration: int,
    metrics: typing.Optional[typing.Mapping[str, typing.Any]] = None,
) -> Checkpoint:
    path = pathlib.Path(path)
    entries = []
    offset = 0
    chunks = []
    for name in sorted(state):
        arr = state[name].detach().cpu().contiguous().numpy()
        arr = arr.astype(arr.dtype.newbyteorder('<'), copy=False)
        data = arr.tobytes(order='C')
        entries.append({
            'name': name,
            'shape': list(arr.shape),
            'dtype': arr.dtype.name,
            'offset': offset,
            'nbytes': len(data),
        })
        chunks.append(data)
        offset += len(data)

    meta = {
        'format': FORMAT_NAME,
        'version': FORMAT_VERSION,
        'kind': kind,
        'config_hash': config_hash,
        'iteration': iteration,
        'config': dict(config),
        'metrics': dict(metrics or {}),
        'tensors': entries,
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'wb') as f:
            for chunk in chunks:
                f.write(chunk)
        sidecar_path(path).write_text(
            json.dumps(meta, sort_keys=True, indent=2) + '\n',
            encoding='utf-8')
    except OSError as e:
        raise errors.CheckpointError(
            f'cannot write checkpoint to {path}') from e

    logger.info('saved %s checkpoint (%d tensors, %d bytes) to %s',
                kind, len(entries), offset, path)
    return Checkpoint(
        path=path,
        kind=kind,
        state={n: t.detach().cpu().clone() for n, t in state.items()},
        config=dict(config),
        config_hash=config_hash,
        iteration=iteration,
        metrics=dict(metrics or {}),
    )


def load_checkpoint(
    path: _PathLike, *, kind: typing.Optional[str] = None
) -> Checkpoint:
    path = pathlib.Path(path)
    try:
        meta_text = sidecar_path(path).read_text(encoding='utf-8')
        blob = path.read_bytes()
    except OSError as e:
        raise errors.CheckpointError(
            f'cannot read checkpoint at {path}') from e

    try:
        meta = json.loads(meta_text)
    except json.JSONDecodeError as e:
        raise errors.CheckpointFormatError(
            f'sidecar of {path} is not valid JSON: {e.msg}') from None
    if meta.get('format') != FORMAT_NAME:
        raise errors.CheckpointFormatError(
            f'{path} is not a {FORMAT_NAME} archive')
    if meta.get('version') != FORMAT_VERSION:
        raise errors.CheckpointFormatError(
            f'unsupported checkpoint version {meta.get("version")!r}')
    if kind is not None and meta.get('kind') != kind:
        raise errors.IncompatibleCheckpointError(
            f'expected a {kind!r} checkpoint, {path} holds '
            f'{meta.get("kind")!r}')

    state = {}
    for entry in meta['tensors']:
        start = entry['offset']
        end = start + entry['nbytes']
        if end > len(blob):
            raise errors.CheckpointFormatError(
                f'tensor {entry["name"]!r} runs past the end of {path}')
        dtype = np.dtype(entry['dtype']).newbyteorder('<')
        arr = np.frombuffer(blob[start:end], dtype=dtype)
        arr = arr.reshape(entry['shape']).astype(
            dtype.newbyteorder('='), copy=True)
        state[entry['name']] = torch.from_numpy(arr)

    return Checkpoint(
        path=path,
        kind=meta['kind'],
        state=state,
        config=meta['config'],
        config_hash=meta['config_hash'],
        iteration=meta['iteration'],
        metrics=meta.get('metrics', {}),
    )
