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

"""Image and feature-map representations, file I/O and resampling.

All processing is single-channel: three-channel inputs collapse to
ITU-R BT.601 luma on load.  Pixel values live in ``[0, 1]`` and carry
radiometric-intensity semantics (brighter means hotter).
"""


from __future__ import annotations

import dataclasses
import functools
import math
import os
import pathlib
import typing

import numpy as np
import PIL.Image
import torch

from . import enums
from . import errors

__all__ = (
    'Image',
    'FeatureMap',
    'load_image',
    'save_image',
    'resize',
    'check_feature_map',
)


FeatureMap = torch.Tensor

BICUBIC_A = -0.5
LUMA_WEIGHTS = (0.299, 0.587, 0.114)
DEFAULT_SCALE = 4
MIN_SIDE = 16

_PathLike = typing.Union[str, os.PathLike]


@dataclasses.dataclass(frozen=True, eq=False)
class Image:
    """A single-channel H×W intensity grid in ``[0, 1]``."""

    pixels: np.ndarray
    bit_depth_src: int = 8

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2:
            raise errors.ImageValidationError(
                f'expected a 2-D pixel grid, got shape {px.shape}')
        if px.size == 0:
            raise errors.ImageValidationError('image has zero size')
        if not np.all(np.isfinite(px)):
            raise errors.ImageValidationError('image has non-finite pixels')
        if px.min() < 0.0 or px.max() > 1.0:
            raise errors.ImageValidationError(
                f'pixel values must lie in [0, 1], got '
                f'[{px.min():.6g}, {px.max():.6g}]')
        if self.bit_depth_src not in (8, 16):
            raise errors.ImageValidationError(
                f'bit_depth_src must be 8 or 16, got {self.bit_depth_src}')
        px.setflags(write=False)
        object.__setattr__(self, 'pixels', px)

    @property
    def shape(self) -> typing.Tuple[int, int]:
        return self.pixels.shape

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @classmethod
    def from_array(cls, pixels, *, clip: bool = False, bit_depth_src=8):
        px = np.asarray(pixels, dtype=np.float64)
        if clip:
            px = np.clip(px, 0.0, 1.0)
        return cls(px, bit_depth_src=bit_depth_src)

    def validate(self, scale: int = DEFAULT_SCALE) -> 'Image':
        """Check the size contract of images fed to the pipeline."""
        h, w = self.shape
        if h < MIN_SIDE or w < MIN_SIDE:
            raise errors.ImageValidationError(
                f'image must be at least {MIN_SIDE}x{MIN_SIDE}, '
                f'got {h}x{w}')
        if h % scale or w % scale:
            raise errors.IncompatibleDimensionsError(
                f'image size {h}x{w} is not divisible by scale {scale}')
        return self

    def to_tensor(self, dtype=torch.float32) -> torch.Tensor:
        return torch.as_tensor(np.array(self.pixels), dtype=dtype)[None]

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return (
            self.shape == other.shape
            and bool(np.array_equal(self.pixels, other.pixels))
        )

    def __repr__(self):
        h, w = self.shape
        return f'<thermsr.Image {h}x{w} from {self.bit_depth_src}-bit>'


def check_feature_map(fm: FeatureMap, *, name: str = 'feature map'):
    if fm.dim() not in (3, 4):
        raise errors.ShapeMismatchError(
            f'{name} must be C×H×W or B×C×H×W, got {tuple(fm.shape)}')
    if not bool(torch.isfinite(fm).all()):
        raise errors.ValidationError(f'{name} has non-finite values')
    return fm


def load_image(path: _PathLike) -> Image:
    try:
        with PIL.Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ('I;16', 'I;16B', 'I;16L', 'I'):
                bit_depth = 16
                arr = np.asarray(im, dtype=np.float64)
            elif mode in ('L', 'LA'):
                bit_depth = 8
                arr = np.asarray(im.convert('L'), dtype=np.float64)
            elif mode == '1':
                bit_depth = 8
                arr = np.asarray(im.convert('L'), dtype=np.float64)
            else:
                bit_depth = 8
                rgb = np.asarray(im.convert('RGB'), dtype=np.float64)
                arr = rgb @ np.asarray(LUMA_WEIGHTS)
    except OSError as e:
        raise errors.ImageIOError(f'cannot read image at {path}') from e

    if arr.size == 0:
        raise errors.ImageValidationError(f'image at {path} has zero size')

    peak = float(2 ** bit_depth - 1)
    if arr.max() > peak:
        raise errors.ImageValidationError(
            f'image at {path} has values above the {bit_depth}-bit range')
    return Image(arr / peak, bit_depth_src=bit_depth)


def save_image(img: Image, path: _PathLike, bit_depth: int = 8) -> None:
    if bit_depth not in (8, 16):
        raise errors.ImageValidationError(
            f'bit_depth must be 8 or 16, got {bit_depth}')
    path = pathlib.Path(path)
    fmt = path.suffix.lower()
    if fmt == '.bmp' and bit_depth != 8:
        raise errors.ImageValidationError(
            'BMP output is limited to 8-bit grayscale')

    peak = 2 ** bit_depth - 1
    # round half up
    q = np.floor(img.pixels * peak + 0.5)
    if bit_depth == 8:
        im = PIL.Image.fromarray(q.astype(np.uint8))
    else:
        im = PIL.Image.fromarray(q.astype(np.uint16))

    try:
        im.save(path, format='BMP' if fmt == '.bmp' else 'PNG')
    except OSError as e:
        raise errors.ImageIOError(f'cannot write image to {path}') from e


def resize(
    img: Image,
    out_h: int,
    out_w: int,
    mode: typing.Union[str, enums.ResizeMode] = enums.ResizeMode.BICUBIC,
) -> Image:
    mode = enums.ResizeMode(mode)
    if out_h < 1 or out_w < 1:
        raise errors.ImageValidationError(
            f'output size must be positive, got {out_h}x{out_w}')
    h, w = img.shape
    wh = _resize_weights(h, out_h, mode)
    ww = _resize_weights(w, out_w, mode)
    out = wh @ img.pixels @ ww.T
    return Image(np.clip(out, 0.0, 1.0), bit_depth_src=img.bit_depth_src)


def _cubic(x: np.ndarray, a: float = BICUBIC_A) -> np.ndarray:
    x = np.abs(x)
    x2 = x * x
    x3 = x2 * x
    near = (a + 2.0) * x3 - (a + 3.0) * x2 + 1.0
    far = a * x3 - 5.0 * a * x2 + 8.0 * a * x - 4.0 * a
    return np.where(x <= 1.0, near, np.where(x < 2.0, far, 0.0))


def _mirror(idx: np.ndarray, n: int) -> np.ndarray:
    # symmetric boundary: ... 1 0 | 0 1 ... n-1 | n-1 n-2 ...
    period = 2 * n
    m = np.mod(idx, period)
    return np.where(m >= n, period - 1 - m, m)


@functools.lru_cache(maxsize=64)
def _resize_weights(
    in_size: int, out_size: int, mode: enums.ResizeMode
) -> np.ndarray:
    scale = out_size / in_size
    centers = (np.arange(out_size) + 0.5) / scale - 0.5
    weights = np.zeros((out_size, in_size), dtype=np.float64)

    if mode is enums.ResizeMode.NEAREST:
        src = np.floor((np.arange(out_size) + 0.5) / scale).astype(np.int64)
        src = np.minimum(src, in_size - 1)
        weights[np.arange(out_size), src] = 1.0
    else:
        # widen the kernel when shrinking so it acts as a low-pass filter
        kscale = min(scale, 1.0)
        support = 2.0 / kscale
        for i, u in enumerate(centers):
            taps = np.arange(
                math.floor(u - support), math.ceil(u + support) + 1)
            w = kscale * _cubic(kscale * (u - taps))
            w = w / w.sum()
            np.add.at(weights[i], _mirror(taps, in_size), w)

    weights.setflags(write=False)
    return weights
