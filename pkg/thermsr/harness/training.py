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

import csv
import json
import logging
import math
import pathlib
import typing

import numpy as np
import torch

from thermsr import dataio
from thermsr import degrade
from thermsr import enums
from thermsr import errors
from thermsr import metrics
from thermsr.imaging import load_image
from thermsr.quantizer import VQVAE

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import ExperimentConfig
from .inference import infer
from .model import ThermSR


__all__ = (
    'seed_everything',
    'training_manifest',
    'train_vqvae',
    'train_ar',
    'training_set_metrics',
    'ablation_report',
)

logger = logging.getLogger(__name__)

VQVAE_CURVE = 'vqvae_loss.csv'
AR_CURVE = 'ar_loss.csv'
VQVAE_CKPT = 'vqvae.bin'
AR_CKPT = 'ar.bin'


def seed_everything(seed: int) -> None:
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)


def training_manifest(cfg: ExperimentConfig) -> dataio.Manifest:
    """The records to train on: the configured manifest, or a synthetic
    corpus generated into ``<run_dir>/data`` from the run seed."""
    d = cfg.data
    if d.manifest:
        manifest = dataio.load_manifest(d.manifest)
    else:
        manifest = degrade.write_corpus(
            pathlib.Path(cfg.run_dir) / 'data',
            d.synth_count,
            cfg.seed,
            hr_size=d.hr_size,
            scale=d.scale,
            noise_sigma=d.noise_sigma,
            jitter=d.jitter,
            train_frac=d.train_frac,
        )
    if d.split != 'all':
        manifest = manifest.by_split(enums.Split(d.split))
    if not len(manifest):
        raise errors.ConfigurationError(
            f'no training records in split {d.split!r}')
    return manifest


def _batches(cfg: ExperimentConfig, manifest: dataio.Manifest, salt: int):
    d = cfg.data
    return dataio.batch_iter(
        manifest,
        cfg.optimizer.batch_size,
        (d.crop, d.crop),
        degrade.derive_seed(cfg.seed, salt),
        scale=d.scale,
        epochs=None,
        workers=d.workers,
    )


class _CurveWriter:

    def __init__(self, path: pathlib.Path, columns: typing.Sequence[str]):
        path.parent.mkdir(parents=True, exist_ok=True)
        self._f = open(path, 'w', newline='', encoding='utf-8')
        self._w = csv.writer(self._f, lineterminator='\n')
        self._w.writerow(('iteration',) + tuple(columns))
        self.path = path

    def write(self, iteration: int, values: typing.Sequence[float]):
        self._w.writerow([iteration] + [repr(float(v)) for v in values])

    def close(self):
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _check_finite(value: torch.Tensor, iteration: int, stage: str):
    value = float(value.detach())
    if not math.isfinite(value):
        raise errors.DivergenceError(
            f'{stage} loss became {value} at iteration {iteration}; '
            f'try a lower learning rate')


def _step(optimizer, params, loss, grad_clip):
    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    if grad_clip > 0:
        torch.nn.utils.clip_grad_norm_(params, grad_clip)
    optimizer.step()


def train_vqvae(
    cfg: ExperimentConfig,
    *,
    manifest: typing.Optional[dataio.Manifest] = None,
) -> Checkpoint:
    seed_everything(cfg.seed)
    if manifest is None:
        manifest = training_manifest(cfg)
    run_dir = pathlib.Path(cfg.run_dir)
    opt_cfg = cfg.optimizer

    model = VQVAE(cfg.quantizer)
    model.train()
    params = list(model.parameters())
    optimizer = torch.optim.AdamW(
        params, lr=opt_cfg.vqvae_lr, weight_decay=opt_cfg.weight_decay)

    batches = _batches(cfg, manifest, salt=1)
    first = last = None
    with _CurveWriter(run_dir / VQVAE_CURVE,
                      ('loss', 'recon', 'codebook', 'commitment')) as curve:
        for it in range(1, opt_cfg.vqvae_iterations + 1):
            batch = next(batches)
            if it == 1:
                model.init_codebook(batch.hr)
            out = model(batch.hr)
            _check_finite(out.loss, it, 'VQ-VAE')
            _step(optimizer, params, out.loss, opt_cfg.grad_clip)
            values = [float(t.detach()) for t in (
                out.loss, out.recon_loss, out.codebook_loss,
                out.commitment_loss)]
            curve.write(it, values)
            last = values[1]
            if first is None:
                first = last
            if it % opt_cfg.log_every == 0:
                logger.info('vqvae it %d loss %.6f recon %.6f',
                            it, values[0], last)

    logger.info('vqvae recon mse %.6f -> %.6f', first, last)
    return save_checkpoint(
        run_dir / VQVAE_CKPT,
        model.state_dict(),
        kind='vqvae',
        config=cfg.to_dict(),
        config_hash=cfg.config_hash(),
        iteration=opt_cfg.vqvae_iterations,
        metrics={'first_recon_mse': first, 'final_recon_mse': last},
    )


def _load_vqvae(model: ThermSR, vqvae_ckpt):
    if not isinstance(vqvae_ckpt, Checkpoint):
        vqvae_ckpt = load_checkpoint(vqvae_ckpt, kind='vqvae')
    if vqvae_ckpt.kind != 'vqvae':
        raise errors.IncompatibleCheckpointError(
            f'{vqvae_ckpt.path} is a {vqvae_ckpt.kind!r} checkpoint, '
            f'not a VQ-VAE one')
    stored = vqvae_ckpt.config.get('quantizer')
    current = model.cfg.to_dict()['quantizer']
    if stored != current:
        raise errors.IncompatibleCheckpointError(
            f'VQ-VAE checkpoint {vqvae_ckpt.path} was trained with a '
            f'different quantizer configuration')
    vqvae_ckpt.load_into(model.vqvae)


@torch.no_grad()
def training_set_metrics(
    model: ThermSR,
    manifest: dataio.Manifest,
    cfg: ExperimentConfig,
) -> typing.Dict[str, float]:
    """Argmax-sampled SR on full training pairs: mean PSNR and
    thermal-order violation rate.  Pairs whose LR is not a whole number
    of model tiles are left out."""
    model.eval()
    th, tw = cfg.lr_hw
    psnrs = []
    rates = []
    for rec in manifest:
        lr = load_image(manifest.resolve(rec.lr_path))
        hr = load_image(manifest.resolve(rec.hr_path))
        if lr.height % th or lr.width % tw:
            continue
        sr_px = infer(model, lr, sampler=cfg.sampler, seed=cfg.seed).pixels
        psnrs.append(metrics.psnr(sr_px, hr.pixels))
        rates.append(metrics.toc_violation_rate(
            sr_px, hr.pixels, cfg.losses.toc_patch))
    if not psnrs:
        return {'psnr_db': None, 'toc_violation_rate': None}
    return {
        'psnr_db': float(np.mean(psnrs)),
        'toc_violation_rate': float(np.mean(rates)),
    }


def train_ar(
    cfg: ExperimentConfig,
    vqvae_ckpt: typing.Union[Checkpoint, str, pathlib.Path],
    *,
    manifest: typing.Optional[dataio.Manifest] = None,
    model: typing.Optional[ThermSR] = None,
) -> Checkpoint:
    seed_everything(cfg.seed)
    if manifest is None:
        manifest = training_manifest(cfg)
    run_dir = pathlib.Path(cfg.run_dir)
    opt_cfg = cfg.optimizer

    if model is None:
        model = ThermSR(cfg)
    _load_vqvae(model, vqvae_ckpt)
    model.train()
    # the frozen VQ-VAE parts keep their pretraining statistics
    model.vqvae.eval()
    if opt_cfg.unfreeze_decoder:
        model.vqvae.decoder.train()

    params = model.trainable_parameters(
        unfreeze_decoder=opt_cfg.unfreeze_decoder)
    trainable = {id(p) for p in params}
    for p in model.parameters():
        p.requires_grad_(id(p) in trainable)
    optimizer = torch.optim.AdamW(
        params, lr=opt_cfg.lr, weight_decay=opt_cfg.weight_decay)

    batches = _batches(cfg, manifest, salt=2)
    first = last = None
    with _CurveWriter(run_dir / AR_CURVE,
                      ('total', 'ce', 'mse', 'toc')) as curve:
        for it in range(1, opt_cfg.iterations + 1):
            batch = next(batches)
            out = model(batch.lr, batch.hr)
            parts = out.losses
            _check_finite(parts.total, it, 'autoregressive')
            _step(optimizer, params, parts.total, opt_cfg.grad_clip)
            values = parts.as_floats()
            curve.write(it, values.values())
            last = values['total']
            if first is None:
                first = last
            if it % opt_cfg.log_every == 0:
                logger.info('ar it %d total %.6f ce %.6f mse %.6f toc %.6f',
                            it, *values.values())

    train_metrics = training_set_metrics(model, manifest, cfg)
    logger.info('ar total loss %.6f -> %.6f; train psnr %s violation %s',
                first, last, train_metrics['psnr_db'],
                train_metrics['toc_violation_rate'])
    return save_checkpoint(
        run_dir / AR_CKPT,
        model.state_dict(),
        kind='ar',
        config=cfg.to_dict(),
        config_hash=cfg.config_hash(),
        iteration=opt_cfg.iterations,
        metrics={
            'first_total_loss': first,
            'final_total_loss': last,
            'ablations': cfg.ablations.names(),
            'train': train_metrics,
        },
    )


def ablation_report(runs: typing.Mapping[str, Checkpoint]) -> str:
    """Collect the final training violation rate of each run into a JSON
    document.  ``runs`` maps an arm name (``full``, ``no-tsg``, ...) to
    its autoregressive checkpoint."""
    arms = {}
    for name, ckpt in runs.items():
        train = ckpt.metrics.get('train', {})
        arms[name] = {
            'config_hash': ckpt.config_hash,
            'ablations': list(ckpt.metrics.get('ablations', [])),
            'final_total_loss': ckpt.metrics.get('final_total_loss'),
            'psnr_db': train.get('psnr_db'),
            'toc_violation_rate': train.get('toc_violation_rate'),
        }
    report = {'runs': arms}
    full = arms.get('full', {}).get('toc_violation_rate')
    no_toc = arms.get(enums.Ablation.NO_TOC.value, {}).get(
        'toc_violation_rate')
    if full is not None and no_toc is not None:
        report['full_le_no_toc'] = full <= no_toc
    return json.dumps(report, sort_keys=True, indent=2) + '\n'
