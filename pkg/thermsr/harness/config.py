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

import dataclasses
import enum
import hashlib
import json
import os
import pathlib
import re
import typing

from thermsr import compat
from thermsr import errors
from thermsr import options
from thermsr.backbone import BackboneConfig
from thermsr.guidance import GuidanceConfig
from thermsr.quantizer import QuantizerConfig


__all__ = (
    'DataConfig',
    'OptimizerConfig',
    'ExperimentConfig',
    'ResolvedConfig',
    'load_config',
    'parse_override',
)


SOURCE_DEFAULT = 'default'
SOURCE_FILE = 'file'
SOURCE_ENV = 'env'
SOURCE_CLI = 'cli'

ENV_VARS = {
    'THERMSR_SEED': 'seed',
    'THERMSR_RUN_DIR': 'run_dir',
}


@dataclasses.dataclass(frozen=True)
class DataConfig:

    manifest: str = ''
    split: str = 'train'
    synth_count: int = 8
    hr_size: int = 64
    scale: int = 4
    crop: int = 64
    train_frac: float = 0.8
    noise_sigma: float = 0.01
    jitter: bool = False
    workers: int = 0

    def __post_init__(self):
        if self.split not in ('train', 'test', 'all'):
            raise errors.ConfigurationError(
                f'data.split must be train, test or all, got {self.split!r}')
        if self.scale < 2:
            raise errors.ConfigurationError('data.scale must be at least 2')
        if self.crop % self.scale or self.hr_size % self.scale:
            raise errors.ConfigurationError(
                f'data.crop and data.hr_size must be divisible by '
                f'data.scale={self.scale}')
        if self.crop > self.hr_size:
            raise errors.ConfigurationError(
                'data.crop cannot exceed data.hr_size')
        if self.synth_count < 1:
            raise errors.ConfigurationError('data.synth_count must be >= 1')
        if not 0.0 < self.train_frac < 1.0:
            raise errors.ConfigurationError(
                'data.train_frac must lie in (0, 1)')
        if self.workers < 0:
            raise errors.ConfigurationError('data.workers must be >= 0')


@dataclasses.dataclass(frozen=True)
class OptimizerConfig:

    lr: float = 5e-5
    weight_decay: float = 5e-2
    batch_size: int = 4
    iterations: int = 1000
    vqvae_lr: float = 1e-3
    vqvae_iterations: int = 200
    grad_clip: float = 1.0
    unfreeze_decoder: bool = False
    log_every: int = 50

    def __post_init__(self):
        for name in ('lr', 'vqvae_lr'):
            if not getattr(self, name) > 0:
                raise errors.ConfigurationError(
                    f'optimizer.{name} must be positive')
        if self.weight_decay < 0:
            raise errors.ConfigurationError(
                'optimizer.weight_decay must be >= 0')
        for name in ('batch_size', 'iterations', 'vqvae_iterations',
                     'log_every'):
            if getattr(self, name) < 1:
                raise errors.ConfigurationError(
                    f'optimizer.{name} must be >= 1')
        if self.grad_clip < 0:
            raise errors.ConfigurationError(
                'optimizer.grad_clip must be >= 0 (0 disables clipping)')


# option classes are not dataclasses; their keys and defaults are listed
# here so the schema stays closed
_OPTION_SECTIONS = {
    'losses': (options.LossWeights, {
        'lambda1': 0.2, 'lambda2': 0.8, 'toc_patch': 8}),
    'ablations': (options.Ablations, {
        'use_tsg': True, 'use_cac': True, 'use_toc': True}),
    'sampler': (options.SamplerOptions, {
        'kind': 'argmax', 'top_k': 1, 'temperature': 1.0}),
}

_DATACLASS_SECTIONS = {
    'guidance': GuidanceConfig,
    'quantizer': QuantizerConfig,
    'backbone': BackboneConfig,
    'data': DataConfig,
    'optimizer': OptimizerConfig,
}

_TOP_LEVEL = {'seed': 0, 'run_dir': 'runs/default'}


def _schema() -> typing.Dict[str, typing.Dict[str, typing.Any]]:
    schema = {}
    for name, cls in _DATACLASS_SECTIONS.items():
        schema[name] = {f.name: f.default for f in dataclasses.fields(cls)}
    for name, (_, defaults) in _OPTION_SECTIONS.items():
        schema[name] = dict(defaults)
    return schema


SCHEMA = _schema()


def _jsonable(value):
    if isinstance(value, tuple):
        return [_jsonable(v) for v in value]
    if isinstance(value, enum.Enum):
        return value.value
    return value


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:

    guidance: GuidanceConfig = GuidanceConfig()
    quantizer: QuantizerConfig = QuantizerConfig()
    backbone: BackboneConfig = BackboneConfig()
    losses: options.LossWeights = options.LossWeights()
    data: DataConfig = DataConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    ablations: options.Ablations = options.Ablations()
    sampler: options.SamplerOptions = options.SamplerOptions()
    seed: int = 0
    run_dir: str = 'runs/default'

    def __post_init__(self):
        if not self.ablations.use_toc and self.losses.lambda2 != 0.0:
            object.__setattr__(
                self, 'losses', self.losses.with_lambda2(0.0))
        if self.quantizer.image_hw != (self.data.crop, self.data.crop):
            raise errors.ConfigurationError(
                f'data.crop={self.data.crop} does not match the quantizer '
                f'image size {self.quantizer.image_hw[0]}x'
                f'{self.quantizer.image_hw[1]} (latent grid times '
                f'downsample)')
        if self.seed < 0:
            raise errors.ConfigurationError('seed must be non-negative')

    @property
    def lr_hw(self) -> typing.Tuple[int, int]:
        h, w = self.quantizer.image_hw
        return h // self.data.scale, w // self.data.scale

    def to_dict(self) -> typing.Dict[str, typing.Any]:
        rv = {}
        for name in _DATACLASS_SECTIONS:
            section = getattr(self, name)
            rv[name] = {
                f.name: _jsonable(getattr(section, f.name))
                for f in dataclasses.fields(section)
            }
        rv['losses'] = self.losses.as_dict()
        rv['ablations'] = self.ablations.as_dict()
        rv['sampler'] = {
            'kind': self.sampler.kind.value,
            'top_k': self.sampler.top_k,
            'temperature': self.sampler.temperature,
        }
        rv['seed'] = self.seed
        rv['run_dir'] = self.run_dir
        return rv

    @classmethod
    def from_dict(cls, data: typing.Mapping[str, typing.Any]):
        return _build(_flatten(data, source_text=None))

    def config_hash(self) -> str:
        """SHA-1 of the canonical JSON of everything that affects
        results (``run_dir`` is excluded)."""
        data = self.to_dict()
        del data['run_dir']
        canonical = json.dumps(data, sort_keys=True, separators=(',', ':'))
        return hashlib.sha1(canonical.encode('utf-8')).hexdigest()

    def with_overrides(self, **flat) -> 'ExperimentConfig':
        """Return a copy with dotted-key overrides, e.g.
        ``with_overrides(**{'optimizer.lr': 1e-3})``."""
        values = _flatten(self.to_dict(), source_text=None)
        for key, value in flat.items():
            values[_check_key(key)] = value
        return _build(values)

    def with_ablations(self, names: typing.Iterable[str]):
        abl = self.ablations
        for n in names:
            abl = abl.with_ablation(n)
        return dataclasses.replace(self, ablations=abl)


class ResolvedConfig(typing.NamedTuple):

    config: ExperimentConfig
    sources: typing.Mapping[str, str]


class _Resolver:

    def __init__(self):
        self._values = {}
        self._sources = {}

    def _set_param(self, param, value, source, validator=None):
        # first writer wins; callers go from highest precedence down
        if param not in self._values and value is not None:
            self._values[param] = (
                validator(value) if validator else value)
            self._sources[param] = source

    def set_many(self, values, source):
        for param, value in values.items():
            self._set_param(param, value, source)

    def resolve(self) -> ResolvedConfig:
        for section, keys in SCHEMA.items():
            for key, default in keys.items():
                self._set_param(f'{section}.{key}', default, SOURCE_DEFAULT)
        for key, default in _TOP_LEVEL.items():
            self._set_param(key, default, SOURCE_DEFAULT)
        return ResolvedConfig(_build(self._values), dict(self._sources))


def _check_key(key: str) -> str:
    if key in _TOP_LEVEL:
        return key
    section, _, name = key.partition('.')
    if section not in SCHEMA or name not in SCHEMA[section]:
        raise errors.UnknownConfigKeyError(f'unknown config key {key!r}')
    return key


def _key_line(source_text: str, key: str) -> int:
    name = re.escape(key.rpartition('.')[2])
    for i, line in enumerate(source_text.splitlines(), 1):
        if re.match(rf'\s*(\[\s*)?{name}\s*(=|\])', line):
            return i
    return 0


def _flatten(data, *, source_text, path=None) -> typing.Dict[str, typing.Any]:
    flat = {}
    for key, value in data.items():
        if isinstance(value, dict):
            if key not in SCHEMA:
                err = errors.UnknownConfigKeyError(
                    f'unknown config section [{key}]')
                if source_text is not None:
                    err.with_source(source_text,
                                    line=_key_line(source_text, key),
                                    path=path, hint='unknown section')
                raise err
            for name, v in value.items():
                dotted = f'{key}.{name}'
                try:
                    _check_key(dotted)
                except errors.UnknownConfigKeyError as e:
                    if source_text is not None:
                        e.with_source(source_text,
                                      line=_key_line(source_text, dotted),
                                      path=path, hint='unknown key')
                    raise
                flat[dotted] = v
        else:
            if key not in _TOP_LEVEL:
                raise errors.UnknownConfigKeyError(
                    f'unknown top-level config key {key!r}')
            flat[key] = value
    return flat


def _coerce(key: str, value, default):
    if isinstance(default, bool):
        if isinstance(value, str) and value.lower() in ('true', 'false'):
            return value.lower() == 'true'
        if not isinstance(value, bool):
            raise errors.ConfigurationError(f'{key} must be a boolean')
        return value
    if isinstance(default, int):
        if isinstance(value, str):
            try:
                value = int(value)
            except ValueError:
                raise errors.ConfigurationError(
                    f'{key} must be an integer') from None
        if isinstance(value, bool) or not isinstance(value, int):
            raise errors.ConfigurationError(f'{key} must be an integer')
        return value
    if isinstance(default, float):
        if isinstance(value, str):
            try:
                value = float(value)
            except ValueError:
                raise errors.ConfigurationError(
                    f'{key} must be a number') from None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise errors.ConfigurationError(f'{key} must be a number')
        return float(value)
    if isinstance(default, tuple):
        if isinstance(value, str):
            value = json.loads(value)
        if not isinstance(value, (list, tuple)):
            raise errors.ConfigurationError(f'{key} must be a list')
        return tuple(tuple(v) if isinstance(v, list) else v for v in value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise errors.ConfigurationError(f'{key} must be a string')
    return value


def _build(values: typing.Mapping[str, typing.Any]) -> ExperimentConfig:
    sections = {}
    for section, keys in SCHEMA.items():
        kwargs = {}
        for name, default in keys.items():
            dotted = f'{section}.{name}'
            if dotted in values:
                kwargs[name] = _coerce(dotted, values[dotted], default)
        if section in _DATACLASS_SECTIONS:
            sections[section] = _DATACLASS_SECTIONS[section](**kwargs)
        else:
            cls, _ = _OPTION_SECTIONS[section]
            sections[section] = cls(**kwargs)
    top = {
        key: _coerce(key, values[key], default)
        for key, default in _TOP_LEVEL.items() if key in values
    }
    return ExperimentConfig(**sections, **top)


def parse_override(text: str) -> typing.Tuple[str, typing.Any]:
    """Parse a ``section.key=value`` command-line override.  The value is
    read as a TOML scalar or array when possible, as a string otherwise."""
    key, sep, raw = text.partition('=')
    if not sep:
        raise errors.ConfigurationError(
            f'override {text!r} must have the form section.key=value')
    key = _check_key(key.strip())
    try:
        value = compat.loads_toml(f'v = {raw.strip()}')['v']
    except compat.tomllib.TOMLDecodeError:
        value = raw.strip()
    return key, value


def load_config(
    path: typing.Optional[typing.Union[str, os.PathLike]] = None,
    *,
    overrides: typing.Optional[typing.Mapping[str, typing.Any]] = None,
    env: typing.Optional[typing.Mapping[str, str]] = None,
) -> ResolvedConfig:
    """Resolve an experiment config.

    Precedence per parameter: ``overrides`` (command line), environment,
    TOML file, built-in default.  The returned ``sources`` map records
    where each parameter came from.
    """
    if env is None:
        env = os.environ
    resolver = _Resolver()

    if overrides:
        resolver.set_many(
            {_check_key(k): v for k, v in overrides.items()}, SOURCE_CLI)

    resolver.set_many(
        {param: env[var] for var, param in ENV_VARS.items() if env.get(var)},
        SOURCE_ENV)

    if path is not None:
        path = pathlib.Path(path)
        try:
            text = path.read_text(encoding='utf-8')
        except OSError as e:
            raise errors.ConfigurationError(
                f'cannot read config file {path}') from e
        try:
            data = compat.loads_toml(text)
        except compat.tomllib.TOMLDecodeError as e:
            raise errors.ConfigurationError(
                f'invalid TOML in {path}: {e}') from None
        resolver.set_many(_flatten(data, source_text=text, path=path),
                          SOURCE_FILE)

    return resolver.resolve()
