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

"""Reference metrics and evaluation reports."""


from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
import pathlib
import typing

import numpy as np
from scipy import signal

from . import dataio
from . import enums
from . import errors
from .imaging import Image, load_image, resize


__all__ = (
    'psnr',
    'ssim',
    'toc_violation_rate',
    'EvalRow',
    'EvalReport',
    'eval_corpus',
    'scanline_profile',
)

logger = logging.getLogger(__name__)

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

CSV_COLUMNS = ('id', 'degradation', 'psnr_db', 'ssim', 'toc_violation_rate')
# filled in by external no-reference / perceptual tools
RESERVED_COLUMNS = ('lpips', 'musiq', 'maniqa')

ArrayLike = typing.Union[Image, np.ndarray]


def _as_array(x: ArrayLike) -> np.ndarray:
    if isinstance(x, Image):
        return x.pixels
    return np.asarray(x, dtype=np.float64)


def _pair(a: ArrayLike, b: ArrayLike, what: str):
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise errors.ShapeMismatchError(
            f'{what}: shapes {a.shape} and {b.shape} differ')
    return a, b


def psnr(a: ArrayLike, b: ArrayLike, peak: float = 1.0) -> float:
    a, b = _pair(a, b, 'psnr')
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(peak * peak / mse))


def _gaussian_window(size: int = SSIM_WINDOW,
                     sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def ssim(a: ArrayLike, b: ArrayLike, data_range: float = 1.0) -> float:
    a, b = _pair(a, b, 'ssim')
    if min(a.shape) < SSIM_WINDOW:
        raise errors.ImageValidationError(
            f'ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, '
            f'got {a.shape[0]}x{a.shape[1]}')
    win = _gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2

    def filt(x):
        return signal.convolve2d(x, win, mode='valid')

    mu1, mu2 = filt(a), filt(b)
    mu1_sq, mu2_sq, mu12 = mu1 * mu1, mu2 * mu2, mu1 * mu2
    s1 = filt(a * a) - mu1_sq
    s2 = filt(b * b) - mu2_sq
    s12 = filt(a * b) - mu12
    num = (2 * mu12 + c1) * (2 * s12 + c2)
    den = (mu1_sq + mu2_sq + c1) * (s1 + s2 + c2)
    return float(np.mean(num / den))


def _patch_means(x: np.ndarray, p: int) -> np.ndarray:
    h, w = x.shape
    gh, gw = h // p, w // p
    x = x[:gh * p, :gw * p]
    return x.reshape(gh, p, gw, p).mean(axis=(1, 3))


def toc_violation_rate(sr: ArrayLike, hr: ArrayLike, p: int = 8) -> float:
    """Fraction of adjacent patch pairs whose brightness order is
    strictly inverted between ``sr`` and ``hr``."""
    sr, hr = _pair(sr, hr, 'toc_violation_rate')
    s, h = _patch_means(sr, p), _patch_means(hr, p)
    gh, gw = s.shape
    n_pairs = gh * max(gw - 1, 0) + max(gh - 1, 0) * gw
    if n_pairs == 0:
        return 0.0
    right = np.diff(s, axis=1) * np.diff(h, axis=1)
    down = np.diff(s, axis=0) * np.diff(h, axis=0)
    bad = int((right < 0).sum()) + int((down < 0).sum())
    return bad / n_pairs


@dataclasses.dataclass(frozen=True)
class EvalRow:

    id: str
    degradation: str
    psnr_db: float
    ssim: float
    toc_violation_rate: float
    extras: typing.Mapping[str, float] = dataclasses.field(
        default_factory=dict)

    def to_json(self):
        rv = {
            'id': self.id,
            'degradation': self.degradation,
            'psnr_db': self.psnr_db,
            'ssim': self.ssim,
            'toc_violation_rate': self.toc_violation_rate,
        }
        if self.extras:
            rv['extras'] = dict(self.extras)
        return rv

    @classmethod
    def from_json(cls, data):
        return cls(
            id=data['id'],
            degradation=data['degradation'],
            psnr_db=data['psnr_db'],
            ssim=data['ssim'],
            toc_violation_rate=data['toc_violation_rate'],
            extras=data.get('extras', {}),
        )


_METRICS = ('psnr_db', 'ssim', 'toc_violation_rate')


def _aggregate(rows: typing.Sequence[EvalRow]):
    if not rows:
        return {m: None for m in _METRICS}
    return {
        m: float(np.mean([getattr(r, m) for r in rows])) for m in _METRICS
    }


@dataclasses.dataclass(frozen=True)
class EvalReport:

    rows: typing.Tuple[EvalRow, ...] = ()
    missing: typing.Tuple[str, ...] = ()
    metadata: typing.Mapping[str, typing.Any] = dataclasses.field(
        default_factory=dict)
    baseline_rows: typing.Optional[typing.Tuple[EvalRow, ...]] = None

    @property
    def aggregate(self):
        return _aggregate(self.rows)

    @property
    def per_degradation(self):
        return {
            d.value: _aggregate(
                [r for r in self.rows if r.degradation == d.value])
            for d in enums.Degradation
        }

    def to_json(self) -> typing.Dict[str, typing.Any]:
        rv = {
            'metadata': dict(self.metadata),
            'rows': [r.to_json() for r in self.rows],
            'aggregate': self.aggregate,
            'per_degradation': self.per_degradation,
            'missing': list(self.missing),
        }
        if self.baseline_rows is not None:
            rv['baseline'] = {
                'name': 'bicubic',
                'rows': [r.to_json() for r in self.baseline_rows],
                'aggregate': _aggregate(self.baseline_rows),
            }
        return rv

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2) + '\n'

    @classmethod
    def loads(cls, text: str) -> 'EvalReport':
        data = json.loads(text)
        baseline = data.get('baseline')
        return cls(
            rows=tuple(EvalRow.from_json(r) for r in data['rows']),
            missing=tuple(data.get('missing', ())),
            metadata=data.get('metadata', {}),
            baseline_rows=(
                None if baseline is None
                else tuple(EvalRow.from_json(r) for r in baseline['rows'])
            ),
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator='\n')
        writer.writerow(CSV_COLUMNS + RESERVED_COLUMNS)

        def emit(rows, agg_name):
            for r in rows:
                writer.writerow(
                    [r.id, r.degradation, repr(r.psnr_db), repr(r.ssim),
                     repr(r.toc_violation_rate)]
                    + [_fmt(r.extras.get(c)) for c in RESERVED_COLUMNS])
            agg = _aggregate(rows)
            writer.writerow(
                [agg_name, ''] + [_fmt(agg[m]) for m in _METRICS]
                + [''] * len(RESERVED_COLUMNS))

        emit(self.rows, '__mean__')
        if self.baseline_rows is not None:
            emit(
                [dataclasses.replace(r, id=f'bicubic:{r.id}')
                 for r in self.baseline_rows],
                'bicubic:__mean__')
        return buf.getvalue()


def _fmt(value) -> str:
    return '' if value is None else repr(value)


def _score(rec_id, degradation, sr, hr, p) -> EvalRow:
    return EvalRow(
        id=rec_id,
        degradation=degradation,
        psnr_db=psnr(sr, hr),
        ssim=ssim(sr, hr),
        toc_violation_rate=toc_violation_rate(sr, hr, p),
    )


def eval_corpus(
    pred_dir: typing.Union[str, os.PathLike],
    manifest: dataio.Manifest,
    *,
    split: typing.Optional[enums.Split] = enums.Split.TEST,
    baseline: bool = False,
    patch: int = 8,
    metadata: typing.Optional[typing.Mapping[str, typing.Any]] = None,
) -> EvalReport:
    """Score ``<id>_SR.png`` predictions against the manifest's HR images.

    Records without a prediction are listed in ``missing``; aggregates
    cover the scored rows only.
    """
    pred_dir = pathlib.Path(pred_dir)
    records = manifest.records
    if split is not None:
        records = [r for r in records if r.split is split]

    rows = []
    base_rows = []
    missing = []
    for rec in records:
        sr_path = pred_dir / f'{rec.id}_SR.png'
        if not sr_path.is_file():
            missing.append(rec.id)
            continue
        hr = load_image(manifest.resolve(rec.hr_path))
        sr = load_image(sr_path)
        rows.append(_score(rec.id, rec.degradation.value, sr, hr, patch))
        if baseline:
            lr = load_image(manifest.resolve(rec.lr_path))
            up = resize(lr, hr.height, hr.width)
            base_rows.append(
                _score(rec.id, rec.degradation.value, up, hr, patch))

    if missing:
        logger.warning('%d prediction(s) missing from %s',
                       len(missing), pred_dir)
    return EvalReport(
        rows=tuple(rows),
        missing=tuple(missing),
        metadata=dict(metadata or {}),
        baseline_rows=tuple(base_rows) if baseline else None,
    )


def scanline_profile(hr: Image, lr: Image, sr: Image, row: int) -> str:
    """CSV of HR, bicubic-upsampled LR and SR intensities along an HR
    row."""
    if sr.shape != hr.shape:
        raise errors.ShapeMismatchError(
            f'SR {sr.shape} and HR {hr.shape} differ')
    if not 0 <= row < hr.height:
        raise errors.ValidationError(
            f'row {row} is outside the image (height {hr.height})')
    up = resize(lr, hr.height, hr.width)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator='\n')
    writer.writerow(('x', 'hr', 'lr_bicubic', 'sr'))
    for x in range(hr.width):
        writer.writerow((x, repr(float(hr.pixels[row, x])),
                         repr(float(up.pixels[row, x])),
                         repr(float(sr.pixels[row, x]))))
    return buf.getvalue()
