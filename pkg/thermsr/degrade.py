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

"""Acquisition simulator.

Blurs an in-focus HR frame with a defocus (disk) or motion (line) point
spread function, downsamples it and adds sensor noise.  Also provides a
synthetic infrared scene generator and a corpus writer so that every
experiment can run without external data.
"""


from __future__ import annotations

import dataclasses
import logging
import math
import os
import pathlib
import typing

import numpy as np
import PIL.Image
import PIL.ImageDraw
from scipy import ndimage

from . import dataio
from . import enums
from . import errors
from . import guidance
from .imaging import Image, resize, save_image


__all__ = (
    'DegradationSpec',
    'DegradedPair',
    'defocus_kernel',
    'motion_kernel',
    'degrade_pair',
    'random_spec',
    'synth_scene',
    'derive_seed',
    'write_corpus',
)

logger = logging.getLogger(__name__)

SUPERSAMPLE = 4
DEFOCUS_RANGE = (0.5, 6.0)
MOTION_RANGE = (3.0, 15.0)
MIN_SCENE_SIDE = 32

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(root: int, *keys: int) -> int:
    """Derive an independent 63-bit seed from a root seed and a key path
    by chained splitmix64 steps."""
    s = _splitmix64(root & _MASK64)
    for k in keys:
        s = _splitmix64(s ^ (k & _MASK64))
    return s >> 1


@dataclasses.dataclass(frozen=True)
class DegradationSpec:

    kind: enums.Degradation = enums.Degradation.DEFOCUS
    defocus_radius: float = 2.0
    motion_length: float = 7.0
    motion_angle: float = 0.0
    noise_sigma: float = 0.01
    scale: int = 4
    seed: int = 0
    jitter: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'kind', enums.Degradation(self.kind))
        lo, hi = DEFOCUS_RANGE
        if not lo <= self.defocus_radius <= hi:
            raise errors.ValidationError(
                f'defocus_radius must lie in [{lo}, {hi}], '
                f'got {self.defocus_radius}')
        lo, hi = MOTION_RANGE
        if not lo <= self.motion_length <= hi:
            raise errors.ValidationError(
                f'motion_length must lie in [{lo}, {hi}], '
                f'got {self.motion_length}')
        if not 0.0 <= self.motion_angle < math.pi:
            raise errors.ValidationError(
                f'motion_angle must lie in [0, pi), got {self.motion_angle}')
        if self.noise_sigma < 0:
            raise errors.ValidationError('noise_sigma must be non-negative')
        if self.scale < 2:
            raise errors.ValidationError(
                f'scale must be at least 2, got {self.scale}')

    def kernel(self) -> np.ndarray:
        if self.kind is enums.Degradation.DEFOCUS:
            return defocus_kernel(self.defocus_radius)
        return motion_kernel(self.motion_length, self.motion_angle)

    def as_dict(self) -> typing.Dict[str, typing.Any]:
        d = dataclasses.asdict(self)
        d['kind'] = self.kind.value
        return d


class DegradedPair(typing.NamedTuple):

    lr: Image
    hr: Image
    degradation: enums.Degradation
    spec: DegradationSpec


def _subpixel_grid(size: int) -> typing.Tuple[np.ndarray, np.ndarray]:
    """Sample offsets (x, y) of a size×size kernel, each pixel split into
    SUPERSAMPLE×SUPERSAMPLE points, relative to the kernel center."""
    c = size // 2
    sub = (np.arange(SUPERSAMPLE) + 0.5) / SUPERSAMPLE - 0.5
    coords = (np.arange(size) - c)[:, None] + sub[None, :]
    coords = coords.reshape(-1)
    y, x = np.meshgrid(coords, coords, indexing='ij')
    return x, y


def _coverage(inside: np.ndarray, size: int) -> np.ndarray:
    cov = inside.reshape(size, SUPERSAMPLE, size, SUPERSAMPLE)
    k = cov.mean(axis=(1, 3))
    return k / k.sum()


def defocus_kernel(radius: float) -> np.ndarray:
    if radius < 0.5:
        raise errors.ValidationError(
            f'defocus radius must be at least 0.5, got {radius}')
    size = 2 * math.ceil(radius) + 1
    x, y = _subpixel_grid(size)
    return _coverage((x * x + y * y <= radius * radius).astype(float), size)


def motion_kernel(length: float, angle: float) -> np.ndarray:
    if length < 1:
        raise errors.ValidationError(
            f'motion length must be at least 1, got {length}')
    half = length / 2.0
    size = 2 * math.ceil(half + 1) + 1
    x, y = _subpixel_grid(size)
    c, s = math.cos(angle), math.sin(angle)
    along = x * c + y * s
    across = -x * s + y * c
    inside = (np.abs(along) <= half) & (np.abs(across) <= 0.5)
    return _coverage(inside.astype(float), size)


def degrade_pair(hr: Image, spec: DegradationSpec) -> DegradedPair:
    hr.validate(spec.scale)
    h, w = hr.shape
    rng = np.random.default_rng(spec.seed)

    src = hr.pixels
    if spec.jitter:
        # shift by less than one LR pixel
        dy, dx = rng.integers(-(spec.scale - 1), spec.scale, size=2)
        src = ndimage.shift(src, (int(dy), int(dx)), order=0, mode='reflect')

    blurred = ndimage.convolve(src, spec.kernel(), mode='reflect')
    lr = resize(Image.from_array(blurred, clip=True),
                h // spec.scale, w // spec.scale)
    px = lr.pixels
    if spec.noise_sigma > 0:
        px = px + rng.normal(0.0, spec.noise_sigma, size=px.shape)
    lr = Image(np.clip(px, 0.0, 1.0), bit_depth_src=hr.bit_depth_src)
    return DegradedPair(lr, hr, spec.kind, spec)


def random_spec(
    seed: int,
    *,
    kind: typing.Optional[enums.Degradation] = None,
    mix: typing.Optional[typing.Mapping[enums.Degradation, float]] = None,
    noise_sigma: float = 0.01,
    scale: int = 4,
    jitter: bool = False,
) -> DegradationSpec:
    rng = np.random.default_rng(seed)
    if kind is None:
        if mix is None:
            mix = enums.DEGRADATION_FREQUENCIES
        kinds = list(mix)
        weights = np.array([mix[k] for k in kinds], dtype=float)
        kind = kinds[int(rng.choice(len(kinds), p=weights / weights.sum()))]
    return DegradationSpec(
        kind=kind,
        defocus_radius=float(rng.uniform(*DEFOCUS_RANGE)),
        motion_length=float(rng.uniform(*MOTION_RANGE)),
        motion_angle=float(rng.uniform(0.0, math.pi)),
        noise_sigma=noise_sigma,
        scale=scale,
        seed=derive_seed(seed, 1),
        jitter=jitter,
    )


def _polygon_mask(rng, h, w) -> np.ndarray:
    n = int(rng.integers(3, 7))
    side = min(h, w)
    cy = rng.uniform(0.2 * h, 0.8 * h)
    cx = rng.uniform(0.2 * w, 0.8 * w)
    angles = np.sort(rng.uniform(0.0, 2 * math.pi, size=n))
    radii = rng.uniform(side / 8, side / 4, size=n)
    pts = [(float(cx + r * math.cos(a)), float(cy + r * math.sin(a)))
           for a, r in zip(angles, radii)]
    canvas = PIL.Image.new('L', (w, h), 0)
    PIL.ImageDraw.Draw(canvas).polygon(pts, fill=255)
    return np.asarray(canvas) > 0


def _compose_scene(rng, h, w):
    side = min(h, w)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)

    phi = rng.uniform(0.0, 2 * math.pi)
    ramp = xx / max(w - 1, 1) * math.cos(phi) + yy / max(h - 1, 1) * \
        math.sin(phi)
    ramp = (ramp - ramp.min()) / max(np.ptp(ramp), 1e-12)
    scene = rng.uniform(0.0, 0.08) + rng.uniform(0.0, 0.12) * ramp

    mask = np.zeros((h, w), dtype=bool)
    for _ in range(int(rng.integers(1, 4))):
        poly = _polygon_mask(rng, h, w)
        scene = np.where(poly, rng.uniform(0.55, 0.75), scene)
        mask |= poly

    for i in range(int(rng.integers(1, 5))):
        # heat sources are placed independently of the structure
        by = rng.uniform(0.1 * h, 0.9 * h)
        bx = rng.uniform(0.1 * w, 0.9 * w)
        sigma = rng.uniform(side / 12, side / 6)
        amp = rng.uniform(1.0, 1.2) if i == 0 else rng.uniform(0.2, 0.8)
        scene = scene + amp * np.exp(
            -((yy - by) ** 2 + (xx - bx) ** 2) / (2 * sigma ** 2))

    return np.clip(scene, 0.0, 1.0), mask


def _polygon_border(mask: np.ndarray) -> np.ndarray:
    return ndimage.binary_dilation(mask) & ~ndimage.binary_erosion(mask)


def synth_scene(seed: int, h: int, w: int, *, return_mask: bool = False):
    """Generate a synthetic thermal scene.

    A cool background gradient carries one to three flat polygons at
    intermediate temperature and one to four Gaussian heat sources.
    Draws are rejected until the scene spans the intensity range and the
    polygon borders stay visible to the edge detector.
    """
    if h < MIN_SCENE_SIDE or w < MIN_SCENE_SIDE:
        raise errors.ImageValidationError(
            f'synthetic scenes must be at least '
            f'{MIN_SCENE_SIDE}x{MIN_SCENE_SIDE}, got {h}x{w}')
    attempt = 0
    while True:
        rng = np.random.default_rng([seed & _MASK64, attempt])
        px, mask = _compose_scene(rng, h, w)
        attempt += 1
        if px.max() <= 0.9 or px.min() >= 0.1:
            continue
        img = Image(px)
        edges = guidance.edge_map(img).pixels
        if edges[_polygon_border(mask)].max() <= 0.5:
            continue
        if attempt > 1:
            logger.debug('scene %d accepted after %d draws', seed, attempt)
        if return_mask:
            return img, mask
        return img


def _draw_scenes(rng: np.random.Generator, k_max: int = 2):
    labels = list(enums.SCENE_FREQUENCIES)
    weights = np.array([enums.SCENE_FREQUENCIES[s] for s in labels], float)
    n = int(rng.integers(1, k_max + 1))
    picks = rng.choice(len(labels), size=n, replace=False,
                       p=weights / weights.sum())
    return tuple(labels[i] for i in sorted(picks))


def _quantized(img: Image, bit_depth: int) -> Image:
    peak = 2 ** bit_depth - 1
    return Image(np.floor(img.pixels * peak + 0.5) / peak,
                 bit_depth_src=bit_depth)


def write_corpus(
    out_dir: typing.Union[str, os.PathLike],
    count: int,
    seed: int,
    *,
    hr_size: int = 64,
    scale: int = 4,
    mix: typing.Optional[typing.Mapping[enums.Degradation, float]] = None,
    noise_sigma: float = 0.01,
    jitter: bool = False,
    scene_labels: bool = False,
    train_frac: float = 0.8,
    bit_depth: int = 8,
) -> dataio.Manifest:
    """Synthesize ``count`` LR-HR pairs into ``out_dir`` with a manifest.

    Writes ``<id>_HR.png``, ``<id>_LR.png`` and ``manifest.jsonl``.
    Sample ``i`` uses seeds derived from ``(seed, i)`` only.
    """
    out = pathlib.Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise errors.ImageIOError(f'cannot create {out}') from e

    records = []
    for i in range(count):
        rid = f'{i:05d}'
        hr = synth_scene(derive_seed(seed, i, 0), hr_size, hr_size)
        # LR derives from the HR exactly as stored
        hr = _quantized(hr, bit_depth)
        spec = random_spec(
            derive_seed(seed, i, 1), mix=mix, noise_sigma=noise_sigma,
            scale=scale, jitter=jitter)
        pair = degrade_pair(hr, spec)
        save_image(pair.hr, out / f'{rid}_HR.png', bit_depth)
        save_image(pair.lr, out / f'{rid}_LR.png', bit_depth)
        scenes = ()
        if scene_labels:
            scenes = _draw_scenes(
                np.random.default_rng(derive_seed(seed, i, 2)))
        records.append(dataio.SampleRecord(
            id=rid,
            lr_path=f'{rid}_LR.png',
            hr_path=f'{rid}_HR.png',
            degradation=pair.degradation,
            scenes=scenes,
            meta={'spec': spec.as_dict()},
        ))

    manifest = dataio.Manifest(tuple(records), out)
    if count > 1:
        train, test = dataio.split(manifest, train_frac, seed)
        by_id = {r.id: r for r in train.records + test.records}
        manifest = manifest.with_records(by_id[r.id] for r in records)
    dataio.save_manifest(manifest, out / 'manifest.jsonl')
    logger.info('wrote %d pairs to %s', count, out)
    return manifest
