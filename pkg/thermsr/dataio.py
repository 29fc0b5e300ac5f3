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

import collections
import concurrent.futures
import dataclasses
import json
import logging
import os
import pathlib
import typing
import warnings

import numpy as np
import torch

from . import enums
from . import errors
from .imaging import load_image


__all__ = (
    'SampleRecord',
    'Manifest',
    'Batch',
    'load_manifest',
    'save_manifest',
    'validate_record',
    'split',
    'batch_iter',
)

logger = logging.getLogger(__name__)

MANIFEST_VERSION = '1'
RECORD_FIELDS = ('id', 'lr_path', 'hr_path', 'degradation', 'scenes',
                 'split')
OPTIONAL_FIELDS = ('meta',)
_HEADER_KEY = 'manifest_version'


@dataclasses.dataclass(frozen=True)
class SampleRecord:

    id: str
    lr_path: str
    hr_path: str
    degradation: enums.Degradation
    scenes: typing.Tuple[enums.Scene, ...] = ()
    split: enums.Split = enums.Split.TRAIN
    meta: typing.Optional[typing.Mapping[str, typing.Any]] = None

    def to_json(self) -> typing.Dict[str, typing.Any]:
        rv = {
            'id': self.id,
            'lr_path': self.lr_path,
            'hr_path': self.hr_path,
            'degradation': self.degradation.value,
            'scenes': [s.value for s in self.scenes],
            'split': self.split.value,
        }
        if self.meta:
            rv['meta'] = dict(self.meta)
        return rv


def validate_record(data: typing.Any) -> SampleRecord:
    if not isinstance(data, dict):
        raise errors.ManifestError('manifest record must be a JSON object')

    unknown = set(data) - set(RECORD_FIELDS) - set(OPTIONAL_FIELDS)
    if unknown:
        raise errors.ManifestError(
            f'unknown record field(s): {", ".join(sorted(unknown))}')

    rid = data.get('id')
    if not isinstance(rid, str) or not rid:
        raise errors.ManifestError('`id` must be a non-empty string')

    paths = {}
    for key in ('lr_path', 'hr_path'):
        value = data.get(key)
        if not isinstance(value, str) or not value:
            raise errors.ManifestError(f'`{key}` must be a non-empty string')
        paths[key] = value

    try:
        degradation = enums.Degradation(data.get('degradation'))
    except ValueError:
        raise errors.ManifestError(
            f'invalid `degradation` value {data.get("degradation")!r}'
        ) from None

    scenes = data.get('scenes', [])
    if not isinstance(scenes, list):
        raise errors.ManifestError('`scenes` must be a list')
    labels = []
    for s in scenes:
        try:
            labels.append(enums.Scene(s))
        except ValueError:
            raise errors.UnknownCategoryError(
                f'unknown scene category {s!r}') from None

    try:
        split_ = enums.Split(data.get('split', enums.Split.TRAIN.value))
    except ValueError:
        raise errors.ManifestError(
            f'invalid `split` value {data.get("split")!r}') from None

    meta = data.get('meta')
    if meta is not None and not isinstance(meta, dict):
        raise errors.ManifestError('`meta` must be an object')

    return SampleRecord(
        id=rid,
        lr_path=paths['lr_path'],
        hr_path=paths['hr_path'],
        degradation=degradation,
        scenes=tuple(labels),
        split=split_,
        meta=meta,
    )


@dataclasses.dataclass(frozen=True)
class Manifest:

    records: typing.Tuple[SampleRecord, ...] = ()
    root: pathlib.Path = pathlib.Path('.')
    version: str = MANIFEST_VERSION

    def __post_init__(self):
        object.__setattr__(self, 'records', tuple(self.records))
        object.__setattr__(self, 'root', pathlib.Path(self.root))

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def resolve(self, path: str) -> pathlib.Path:
        return self.root / path

    def get(self, record_id: str) -> typing.Optional[SampleRecord]:
        for r in self.records:
            if r.id == record_id:
                return r
        return None

    def with_records(self, records) -> 'Manifest':
        return dataclasses.replace(self, records=tuple(records))

    def by_split(self, which: enums.Split) -> 'Manifest':
        return self.with_records(r for r in self.records if r.split is which)

    def scene_counts(self) -> typing.Dict[enums.Scene, int]:
        counts = collections.Counter(s for r in self.records for s in r.scenes)
        return {s: counts.get(s, 0) for s in enums.Scene}

    def degradation_counts(self) -> typing.Dict[enums.Degradation, int]:
        counts = collections.Counter(r.degradation for r in self.records)
        return {d: counts.get(d, 0) for d in enums.Degradation}


def load_manifest(
    path: typing.Union[str, os.PathLike],
    *,
    check_files: bool = True,
) -> Manifest:
    path = pathlib.Path(path)
    try:
        source = path.read_text(encoding='utf-8')
    except OSError as e:
        raise errors.ImageIOError(f'cannot read manifest at {path}') from e

    root = path.parent
    version = MANIFEST_VERSION
    records = []
    seen = {}

    for lineno, line in enumerate(source.splitlines(), 1):
        if not line.strip():
            continue
        try:
            try:
                data = json.loads(line)
            except json.JSONDecodeError as e:
                raise errors.ManifestError(
                    f'malformed JSON: {e.msg}') from None
            if (not records and isinstance(data, dict)
                    and set(data) == {_HEADER_KEY}):
                version = str(data[_HEADER_KEY])
                continue
            rec = validate_record(data)
            if rec.id in seen:
                raise errors.DuplicateRecordError(
                    f'duplicate record id {rec.id!r} '
                    f'(first seen on line {seen[rec.id]})')
            if check_files:
                for p in (rec.lr_path, rec.hr_path):
                    if not (root / p).is_file():
                        raise errors.MissingFileError(
                            f'record {rec.id!r} references missing '
                            f'file {p}')
        except errors.ManifestError as e:
            raise e.with_source(
                source, line=lineno, path=path, hint='invalid record')

        seen[rec.id] = lineno
        records.append(rec)

    logger.debug('loaded %d records from %s', len(records), path)
    return Manifest(tuple(records), root, version)


def save_manifest(
    manifest: Manifest, path: typing.Union[str, os.PathLike]
) -> None:
    path = pathlib.Path(path)
    target = path.parent
    lines = [json.dumps({_HEADER_KEY: manifest.version})]
    for rec in manifest.records:
        data = rec.to_json()
        if target.resolve() != manifest.root.resolve():
            for key in ('lr_path', 'hr_path'):
                data[key] = pathlib.Path(os.path.relpath(
                    manifest.resolve(data[key]), target)).as_posix()
        lines.append(json.dumps(data))
    try:
        path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    except OSError as e:
        raise errors.ImageIOError(f'cannot write manifest to {path}') from e


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def split(
    manifest: Manifest, train_frac: float, seed: int
) -> typing.Tuple[Manifest, Manifest]:
    """Partition into train/test, stratified by degradation label.

    The global train count is ``round(train_frac * N)``; per-label
    quotas are allotted by largest remainder.
    """
    if not 0.0 < train_frac < 1.0:
        raise errors.ConfigurationError(
            f'train_frac must lie in (0, 1), got {train_frac}')

    groups = collections.OrderedDict(
        (d, [i for i, r in enumerate(manifest.records) if r.degradation is d])
        for d in enums.Degradation
    )
    n_train = _round_half_up(train_frac * len(manifest))
    quotas = {d: train_frac * len(idx) for d, idx in groups.items()}
    alloc = {d: int(np.floor(q)) for d, q in quotas.items()}
    leftover = n_train - sum(alloc.values())
    by_remainder = sorted(
        groups, key=lambda d: (-(quotas[d] - alloc[d]),
                               list(groups).index(d)))
    for d in by_remainder[:max(leftover, 0)]:
        alloc[d] += 1

    train_idx = set()
    for gi, (d, idx) in enumerate(groups.items()):
        rng = np.random.default_rng([seed, gi])
        order = rng.permutation(len(idx))
        train_idx.update(idx[j] for j in order[:alloc[d]])

    train, test = [], []
    for i, r in enumerate(manifest.records):
        if i in train_idx:
            train.append(dataclasses.replace(r, split=enums.Split.TRAIN))
        else:
            test.append(dataclasses.replace(r, split=enums.Split.TEST))
    return manifest.with_records(train), manifest.with_records(test)


class Batch(typing.NamedTuple):

    lr: torch.Tensor
    hr: torch.Tensor
    ids: typing.Tuple[str, ...]
    windows: typing.Tuple[typing.Tuple[int, int], ...]


class _Item(typing.NamedTuple):

    lr: np.ndarray
    hr: np.ndarray
    id: str
    window: typing.Tuple[int, int]


def _load_pair(manifest: Manifest, rec: SampleRecord):
    lr = load_image(manifest.resolve(rec.lr_path))
    hr = load_image(manifest.resolve(rec.hr_path))
    return lr, hr


def _crop_item(
    manifest: Manifest,
    rec: SampleRecord,
    crop_hw: typing.Tuple[int, int],
    scale: int,
    rng: np.random.Generator,
) -> typing.Optional[_Item]:
    lr, hr = _load_pair(manifest, rec)
    ch, cw = crop_hw
    lh, lw = ch // scale, cw // scale
    if hr.shape != (lr.height * scale, lr.width * scale):
        warnings.warn(errors.SkippedRecordWarning(
            f'record {rec.id!r}: HR {hr.height}x{hr.width} is not '
            f'{scale}x LR {lr.height}x{lr.width}'))
        return None
    if lh > lr.height or lw > lr.width:
        warnings.warn(errors.SkippedRecordWarning(
            f'record {rec.id!r}: crop {ch}x{cw} exceeds HR size '
            f'{hr.height}x{hr.width}'))
        return None
    ly = int(rng.integers(0, lr.height - lh + 1))
    lx = int(rng.integers(0, lr.width - lw + 1))
    return _Item(
        lr.pixels[ly:ly + lh, lx:lx + lw],
        hr.pixels[ly * scale:(ly + lh) * scale,
                  lx * scale:(lx + lw) * scale],
        rec.id,
        (ly, lx),
    )


def _collate(items: typing.List[_Item]) -> Batch:
    lr = torch.as_tensor(np.stack([it.lr for it in items])[:, None],
                         dtype=torch.float32)
    hr = torch.as_tensor(np.stack([it.hr for it in items])[:, None],
                         dtype=torch.float32)
    return Batch(lr, hr, tuple(it.id for it in items),
                 tuple(it.window for it in items))


def batch_iter(
    manifest: Manifest,
    batch_size: int,
    crop_hw: typing.Tuple[int, int],
    seed: int,
    *,
    scale: int = 4,
    epochs: typing.Optional[int] = 1,
    drop_last: bool = False,
    workers: int = 0,
) -> typing.Iterator[Batch]:
    """Yield batches of aligned random crops.

    ``crop_hw`` is the HR crop; the LR crop is ``crop_hw / scale`` at the
    corresponding location.  Each epoch visits records in an order
    shuffled by ``(seed, epoch)``; the crop window of every visit depends
    only on ``(seed, epoch, position)``, so prefetching with ``workers``
    threads yields exactly the single-worker stream.  ``epochs=None``
    iterates forever.
    """
    ch, cw = crop_hw
    if batch_size < 1:
        raise errors.ConfigurationError('batch_size must be positive')
    if ch % scale or cw % scale:
        raise errors.IncompatibleDimensionsError(
            f'crop {ch}x{cw} is not divisible by scale {scale}')
    records = manifest.records
    if not records:
        return

    executor = None
    if workers > 0:
        executor = concurrent.futures.ThreadPoolExecutor(workers)

    def load(args):
        epoch, pos, rec = args
        rng = np.random.default_rng([seed, epoch, pos])
        return _crop_item(manifest, rec, crop_hw, scale, rng)

    try:
        epoch = 0
        while epochs is None or epoch < epochs:
            order = np.random.default_rng([seed, epoch]).permutation(
                len(records))
            jobs = [(epoch, pos, records[i]) for pos, i in enumerate(order)]
            if executor is not None:
                items = executor.map(load, jobs)
            else:
                items = map(load, jobs)

            pending: typing.List[_Item] = []
            yielded = False
            for item in items:
                if item is None:
                    continue
                pending.append(item)
                if len(pending) == batch_size:
                    yield _collate(pending)
                    yielded = True
                    pending = []
            if pending and not drop_last:
                yield _collate(pending)
                yielded = True
            if not yielded:
                logger.warning('epoch %d produced no batches', epoch)
                return
            epoch += 1
    finally:
        if executor is not None:
            executor.shutdown(wait=True)
