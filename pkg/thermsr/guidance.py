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

"""Thermal-structural guidance.

Heat and edge maps are derived from the LR input, encoded, fused by a
learnable spatial gate and injected into the LR features with
cross-attention.  The result (``F_TSG``) conditions both the codebook
modulation and the autoregressive backbone.
"""


from __future__ import annotations

import dataclasses
import logging
import typing

import numpy as np
import torch
import torch.nn.functional as F
from scipy import ndimage
from torch import nn

from . import errors
from .imaging import Image


__all__ = (
    'GuidanceConfig',
    'GuidanceOutput',
    'heat_map',
    'edge_map',
    'guidance_maps',
    'FeatureEncoder',
    'ConvEncoder',
    'GatedFusion',
    'CrossAttention',
    'ThermalStructuralGuidance',
)

logger = logging.getLogger(__name__)

GAUSS_TRUNCATE = 4.0


@dataclasses.dataclass(frozen=True)
class GuidanceConfig:

    heat_quantile: float = 0.7
    heat_smooth_sigma: float = 2.0
    encoder_width: int = 32
    attn_dim: int = 64
    heads: int = 4

    def __post_init__(self):
        if not 0.0 < self.heat_quantile < 1.0:
            raise errors.ConfigurationError(
                f'heat_quantile must lie in (0, 1), '
                f'got {self.heat_quantile}')
        if not self.heat_smooth_sigma > 0:
            raise errors.ConfigurationError(
                f'heat_smooth_sigma must be positive, '
                f'got {self.heat_smooth_sigma}')
        if self.encoder_width < 1:
            raise errors.ConfigurationError(
                f'encoder_width must be positive, got {self.encoder_width}')
        if self.attn_dim < 1 or self.heads < 1:
            raise errors.ConfigurationError(
                'attn_dim and heads must be positive')
        if self.attn_dim % self.heads:
            raise errors.ConfigurationError(
                f'attn_dim {self.attn_dim} is not divisible by '
                f'heads {self.heads}')


class GuidanceOutput(typing.NamedTuple):

    f_tsg: torch.Tensor
    fused: typing.Optional[torch.Tensor]
    gate: typing.Optional[torch.Tensor]


def heat_map(img: Image, cfg: GuidanceConfig) -> Image:
    px = img.pixels
    q = np.quantile(px, cfg.heat_quantile, method='inverted_cdf')
    top = px.max()
    if top > q:
        pre = np.clip((px - q) / (top - q), 0.0, 1.0)
    elif px.min() == top:
        pre = np.zeros_like(px)
    else:
        # the hottest level itself is the heat source
        pre = (px >= q).astype(np.float64)
    out = ndimage.gaussian_filter(
        pre, cfg.heat_smooth_sigma, mode='reflect', truncate=GAUSS_TRUNCATE)
    return Image(np.clip(out, 0.0, 1.0))


def edge_map(img: Image) -> Image:
    px = img.pixels
    gx = ndimage.sobel(px, axis=1, mode='reflect')
    gy = ndimage.sobel(px, axis=0, mode='reflect')
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak <= 0:
        return Image(np.zeros_like(px))
    return Image(np.clip(mag / peak, 0.0, 1.0))


def guidance_maps(
    lr: torch.Tensor, cfg: GuidanceConfig
) -> typing.Tuple[torch.Tensor, torch.Tensor]:
    """Compute heat and edge maps for a B×1×H×W batch of LR images."""
    if lr.dim() != 4 or lr.shape[1] != 1:
        raise errors.ShapeMismatchError(
            f'expected a B×1×H×W batch, got {tuple(lr.shape)}')
    heats = []
    edges = []
    for sample in lr.detach().cpu().double().numpy():
        img = Image.from_array(sample[0], clip=True)
        heats.append(heat_map(img, cfg).pixels)
        edges.append(edge_map(img).pixels)
    heat = torch.as_tensor(np.stack(heats)[:, None], dtype=lr.dtype)
    edge = torch.as_tensor(np.stack(edges)[:, None], dtype=lr.dtype)
    return heat.to(lr.device), edge.to(lr.device)


def _check_same_shape(a: torch.Tensor, b: torch.Tensor, what: str):
    if a.shape != b.shape:
        raise errors.ShapeMismatchError(
            f'{what}: shapes {tuple(a.shape)} and {tuple(b.shape)} differ')


class FeatureEncoder(nn.Module):
    """Maps a B×1×H×W map to a B×C×(H/2)×(W/2) feature map.

    Subclasses may wrap pretrained backbones as long as they keep the
    output geometry.
    """

    out_channels: int

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError


class ConvEncoder(FeatureEncoder):

    def __init__(self, width: int = 32, *, in_channels: int = 1,
                 zero_init_last: bool = False):
        super().__init__()
        self.out_channels = width
        self.stage1 = nn.Conv2d(in_channels, width, 3, stride=1, padding=1)
        self.stage2 = nn.Conv2d(width, width, 3, stride=2, padding=1)
        if zero_init_last:
            nn.init.zeros_(self.stage2.weight)
            nn.init.zeros_(self.stage2.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4:
            raise errors.ShapeMismatchError(
                f'encoder input must be B×C×H×W, got {tuple(x.shape)}')
        return self.stage2(F.gelu(self.stage1(x)))


class GatedFusion(nn.Module):
    """Spatially adaptive mixing of heat and edge features.

    ``W = sigmoid(L(A) + G(A))`` with ``A = F_heat + F_edge``, where ``L``
    is a depthwise 3×3 convolution and ``G`` a pooled two-layer
    perceptron broadcast over positions.  The fused map is
    ``F_heat * W + F_edge * (1 - W)``.
    """

    def __init__(self, channels: int, hidden: typing.Optional[int] = None):
        super().__init__()
        hidden = hidden or max(channels // 4, 1)
        self.local = nn.Conv2d(
            channels, channels, 3, padding=1, groups=channels)
        self.global_fc1 = nn.Linear(channels, hidden)
        self.global_fc2 = nn.Linear(hidden, channels)

    def gate(self, a: torch.Tensor) -> torch.Tensor:
        g = a.mean(dim=(2, 3))
        g = self.global_fc2(F.relu(self.global_fc1(g)))
        return torch.sigmoid(self.local(a) + g[:, :, None, None])

    def forward(
        self,
        f_heat: torch.Tensor,
        f_edge: torch.Tensor,
        *,
        w_override: typing.Optional[torch.Tensor] = None,
    ) -> typing.Tuple[torch.Tensor, torch.Tensor]:
        _check_same_shape(f_heat, f_edge, 'fuse')
        if w_override is None:
            w = self.gate(f_heat + f_edge)
        else:
            w = torch.as_tensor(w_override, dtype=f_heat.dtype)
            w = w.expand_as(f_heat)
        fused = f_heat * w + f_edge * (1 - w)
        return fused, w


class CrossAttention(nn.Module):
    """Multi-head attention with queries from one map and keys/values
    from another.  There is no output projection: the result lives in
    the value space of width ``attn_dim``."""

    def __init__(self, q_channels: int, kv_channels: int,
                 attn_dim: int = 64, heads: int = 4):
        super().__init__()
        if attn_dim % heads:
            raise errors.ConfigurationError(
                f'attn_dim {attn_dim} is not divisible by heads {heads}')
        self.attn_dim = attn_dim
        self.heads = heads
        self.w_q = nn.Linear(q_channels, attn_dim, bias=False)
        self.w_k = nn.Linear(kv_channels, attn_dim, bias=False)
        self.w_v = nn.Linear(kv_channels, attn_dim, bias=False)

    def attend(
        self,
        q_tokens: torch.Tensor,
        kv_tokens: torch.Tensor,
    ) -> typing.Tuple[torch.Tensor, torch.Tensor]:
        """Attend B×Nq×Cq queries over B×Nk×Ckv tokens.

        Returns the B×Nq×attn_dim output and the B×heads×Nq×Nk weights.
        """
        b, nq, _ = q_tokens.shape
        nk = kv_tokens.shape[1]
        hd = self.attn_dim // self.heads
        q = self.w_q(q_tokens).view(b, nq, self.heads, hd).transpose(1, 2)
        k = self.w_k(kv_tokens).view(b, nk, self.heads, hd).transpose(1, 2)
        v = self.w_v(kv_tokens).view(b, nk, self.heads, hd).transpose(1, 2)
        logits = q @ k.transpose(-2, -1) / (hd ** 0.5)
        weights = logits.softmax(dim=-1)
        out = (weights @ v).transpose(1, 2).reshape(b, nq, self.attn_dim)
        return out, weights

    def forward(
        self, f_lr: torch.Tensor, f_fused: torch.Tensor
    ) -> torch.Tensor:
        if f_lr.dim() != 4 or f_fused.dim() != 4:
            raise errors.ShapeMismatchError(
                'cross attention expects B×C×H×W feature maps')
        b, _, h, w = f_lr.shape
        q_tokens = f_lr.flatten(2).transpose(1, 2)
        kv_tokens = f_fused.flatten(2).transpose(1, 2)
        out, _ = self.attend(q_tokens, kv_tokens)
        return out.transpose(1, 2).reshape(b, self.attn_dim, h, w)


class ThermalStructuralGuidance(nn.Module):

    def __init__(self, cfg: GuidanceConfig, *, use_tsg: bool = True):
        super().__init__()
        self.cfg = cfg
        self.use_tsg = use_tsg
        width = cfg.encoder_width
        if use_tsg:
            self.heat_encoder = ConvEncoder(width)
            self.edge_encoder = ConvEncoder(width)
            self.lr_encoder = ConvEncoder(width)
            self.fusion = GatedFusion(width)
            self.attention = CrossAttention(
                width, width, cfg.attn_dim, cfg.heads)
        else:
            # stands in for F_TSG when guidance is ablated
            self.constant = nn.Parameter(
                torch.zeros(1, cfg.attn_dim, 1, 1))

    @property
    def out_channels(self) -> int:
        return self.cfg.attn_dim

    def encode_heat(self, hm: torch.Tensor) -> torch.Tensor:
        return self.heat_encoder(hm)

    def encode_edge(self, em: torch.Tensor) -> torch.Tensor:
        return self.edge_encoder(em)

    def encode_lr(self, lr: torch.Tensor) -> torch.Tensor:
        return self.lr_encoder(lr)

    def maps(self, lr: torch.Tensor):
        return guidance_maps(lr, self.cfg)

    def forward(
        self,
        lr: torch.Tensor,
        heat: typing.Optional[torch.Tensor] = None,
        edge: typing.Optional[torch.Tensor] = None,
    ) -> GuidanceOutput:
        b, _, h, w = lr.shape
        if not self.use_tsg:
            f_tsg = self.constant.expand(
                b, self.cfg.attn_dim, (h + 1) // 2, (w + 1) // 2)
            return GuidanceOutput(f_tsg, None, None)

        if heat is None or edge is None:
            heat, edge = self.maps(lr)
        _check_same_shape(heat, lr, 'heat map vs LR')
        _check_same_shape(edge, lr, 'edge map vs LR')

        f_heat = self.encode_heat(heat)
        f_edge = self.encode_edge(edge)
        fused, gate = self.fusion(f_heat, f_edge)
        f_tsg = self.attention(self.encode_lr(lr), fused)
        return GuidanceOutput(f_tsg, fused, gate)
