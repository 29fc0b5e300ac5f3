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

"""Training objectives for the autoregressive stage.

Token cross-entropy over the scale pyramid, pixel MSE, and the
thermal-order hinge over adjacent patch means of one grid.
"""


import typing
import warnings

import torch
import torch.nn.functional as F

from . import errors
from .imaging import Image
from .options import LossWeights
from .quantizer import TokenMap


__all__ = (
    'LossBreakdown',
    'ce_loss',
    'mse_loss',
    'patch_means',
    'toc_loss',
    'total_loss',
)


ImageLike = typing.Union[Image, torch.Tensor]


class LossBreakdown(typing.NamedTuple):

    total: torch.Tensor
    ce: torch.Tensor
    mse: torch.Tensor
    toc: torch.Tensor

    def as_floats(self) -> typing.Dict[str, float]:
        return {k: float(v.detach()) for k, v in self._asdict().items()}


def _as_tensor(x: ImageLike) -> torch.Tensor:
    if isinstance(x, Image):
        return torch.as_tensor(x.pixels.copy(), dtype=torch.float64)
    return x


def _check_shapes(a: torch.Tensor, b: torch.Tensor, what: str):
    if a.shape != b.shape:
        raise errors.ShapeMismatchError(
            f'{what}: shapes {tuple(a.shape)} and {tuple(b.shape)} differ')


def ce_loss(logits: typing.Sequence[torch.Tensor],
            targets: TokenMap) -> torch.Tensor:
    """Mean token negative log-likelihood over every scale, in nats."""
    if len(logits) != len(targets.indices):
        raise errors.ShapeMismatchError(
            f'{len(logits)} logit grids for {len(targets.indices)} '
            f'token grids')
    flat_logits = []
    flat_targets = []
    for lg, tg in zip(logits, targets.indices):
        if tuple(lg.shape[:-1]) != tuple(tg.shape):
            raise errors.ShapeMismatchError(
                f'logits {tuple(lg.shape)} do not match tokens '
                f'{tuple(tg.shape)}')
        flat_logits.append(lg.reshape(-1, lg.shape[-1]))
        flat_targets.append(tg.reshape(-1))
    return F.cross_entropy(torch.cat(flat_logits), torch.cat(flat_targets))


def mse_loss(sr: ImageLike, hr: ImageLike) -> torch.Tensor:
    sr, hr = _as_tensor(sr), _as_tensor(hr)
    _check_shapes(sr, hr, 'mse_loss')
    return ((sr - hr) ** 2).mean()


def patch_means(img: ImageLike, p: int) -> torch.Tensor:
    """Block means of non-overlapping p×p patches over the last two
    dimensions.  A bottom/right remainder is cropped with a warning."""
    x = _as_tensor(img)
    h, w = x.shape[-2:]
    gh, gw = h // p, w // p
    if h % p or w % p:
        warnings.warn(errors.CropRemainderWarning(
            f'{h}x{w} is not divisible by patch size {p}; '
            f'cropping to {gh * p}x{gw * p}'), stacklevel=2)
    lead = x.shape[:-2]
    if gh == 0 or gw == 0:
        return x.new_zeros(*lead, gh, gw)
    x = x[..., :gh * p, :gw * p].reshape(-1, 1, gh * p, gw * p)
    return F.avg_pool2d(x, p).reshape(*lead, gh, gw)


def _pair_products(s: torch.Tensor, h: torch.Tensor):
    right = (s[..., :, 1:] - s[..., :, :-1]) * (h[..., :, 1:] - h[..., :, :-1])
    down = (s[..., 1:, :] - s[..., :-1, :]) * (h[..., 1:, :] - h[..., :-1, :])
    return right, down


def toc_loss(sr: ImageLike, hr: ImageLike, p: int = 8) -> torch.Tensor:
    sr, hr = _as_tensor(sr), _as_tensor(hr)
    _check_shapes(sr, hr, 'toc_loss')
    s = patch_means(sr, p)
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', errors.CropRemainderWarning)
        h = patch_means(hr, p)
    gh, gw = s.shape[-2:]
    if min(gh, gw) == 0 or max(gh, gw) < 2:
        warnings.warn(errors.DegenerateGridWarning(
            f'patch grid {gh}x{gw} has no adjacent pairs'), stacklevel=2)
        return sr.sum() * 0.0

    right, down = _pair_products(s, h)
    n_pairs = gh * (gw - 1) + (gh - 1) * gw
    penalty = (F.relu(-right).sum(dim=(-2, -1))
               + F.relu(-down).sum(dim=(-2, -1)))
    return (penalty / n_pairs).mean()


def total_loss(ce, mse, toc, w: typing.Optional[LossWeights] = None):
    if w is None:
        w = LossWeights.defaults()
    return ce + w.lambda1 * mse + w.lambda2 * toc
