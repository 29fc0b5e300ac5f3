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


from __future__ import annotations

import logging
import os
import pathlib
import typing

import numpy as np
import torch

from thermsr import dataio
from thermsr import enums
from thermsr import errors
from thermsr import guidance
from thermsr import options
from thermsr.imaging import Image, load_image, save_image

from .checkpoint import Checkpoint, load_checkpoint
from .config import ExperimentConfig
from .model import ThermSR


__all__ = (
    'load_model',
    'infer',
    'infer_corpus',
    'dump_guidance',
)

logger = logging.getLogger(__name__)


def load_model(
    ckpt: typing.Union[Checkpoint, str, os.PathLike],
) -> typing.Tuple[ThermSR, ExperimentConfig]:
    if not isinstance(ckpt, Checkpoint):
        ckpt = load_checkpoint(ckpt, kind='ar')
    if ckpt.kind != 'ar':
        raise errors.IncompatibleCheckpointError(
            f'{ckpt.path} is a {ckpt.kind!r} checkpoint; inference needs '
            f'an autoregressive one')
    cfg = ExperimentConfig.from_dict(ckpt.config)
    model = ThermSR(cfg)
    ckpt.load_into(model)
    model.eval()
    return model, cfg


def _tiles(h: int, w: int, th: int, tw: int):
    for y in range(0, h, th):
        for x in range(0, w, tw):
            yield y, x


def infer(
    ckpt: typing.Union[Checkpoint, str, os.PathLike, ThermSR],
    lr_image: Image,
    *,
    sampler: typing.Optional[options.SamplerOptions] = None,
    seed: int = 0,
) -> Image:
    """Super-resolve ``lr_image``.

    Inputs larger than the model's LR size are processed as a grid of
    non-overlapping tiles; both sides must be multiples of the tile.
    """
    if isinstance(ckpt, ThermSR):
        model, cfg = ckpt, ckpt.cfg
    else:
        model, cfg = load_model(ckpt)
    if sampler is None:
        sampler = cfg.sampler
    th, tw = cfg.lr_hw
    h, w = lr_image.shape
    if h % th or w % tw:
        raise errors.IncompatibleDimensionsError(
            f'LR image {h}x{w} is not a multiple of the model input '
            f'{th}x{tw}')
    s = cfg.data.scale
    out = np.zeros((h * s, w * s), dtype=np.float64)
    lr = lr_image.to_tensor()[None]
    for y, x in _tiles(h, w, th, tw):
        tile = lr[..., y:y + th, x:x + tw]
        sr = model.super_resolve(tile, sampler, seed)
        out[y * s:(y + th) * s, x * s:(x + tw) * s] = \
            sr[0, 0].double().numpy()
    return Image(np.clip(out, 0.0, 1.0), bit_depth_src=lr_image.bit_depth_src)


def dump_guidance(
    lr_image: Image,
    cfg: ExperimentConfig,
    out_dir: typing.Union[str, os.PathLike],
    stem: str,
) -> typing.Tuple[pathlib.Path, pathlib.Path]:
    out_dir = pathlib.Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise errors.ImageIOError(f'cannot create {out_dir}') from e
    heat_path = out_dir / f'{stem}_heat.png'
    edge_path = out_dir / f'{stem}_edge.png'
    save_image(guidance.heat_map(lr_image, cfg.guidance), heat_path)
    save_image(guidance.edge_map(lr_image), edge_path)
    return heat_path, edge_path


def infer_corpus(
    ckpt: typing.Union[Checkpoint, str, os.PathLike],
    manifest: dataio.Manifest,
    pred_dir: typing.Union[str, os.PathLike],
    *,
    split: typing.Optional[enums.Split] = enums.Split.TEST,
    sampler: typing.Optional[options.SamplerOptions] = None,
    seed: int = 0,
    guidance_dir: typing.Optional[typing.Union[str, os.PathLike]] = None,
) -> typing.List[pathlib.Path]:
    """Write ``<id>_SR.png`` for every record of ``split``."""
    model, cfg = load_model(ckpt)
    pred_dir = pathlib.Path(pred_dir)
    try:
        pred_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise errors.ImageIOError(f'cannot create {pred_dir}') from e
    written = []
    for rec in manifest:
        if split is not None and rec.split is not split:
            continue
        lr = load_image(manifest.resolve(rec.lr_path))
        with torch.no_grad():
            sr = infer(model, lr, sampler=sampler, seed=seed)
        path = pred_dir / f'{rec.id}_SR.png'
        save_image(sr, path)
        written.append(path)
        if guidance_dir is not None:
            dump_guidance(lr, cfg, guidance_dir, rec.id)
    logger.info('wrote %d predictions to %s', len(written), pred_dir)
    return written
