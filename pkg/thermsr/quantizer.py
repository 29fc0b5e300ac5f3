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

"""Multi-scale residual vector quantization with a condition-adaptive
codebook, and the small VQ-VAE whose latent grid it tokenizes."""


from __future__ import annotations

import dataclasses
import math
import typing

import torch
import torch.nn.functional as F
from torch import nn

from . import errors


__all__ = (
    'QuantizerConfig',
    'Codebook',
    'ConditionProjector',
    'TokenMap',
    'VQOutput',
    'VQVAE',
    'normalize_scales',
    'condition_vector',
    'nearest_code',
    'quantize',
    'lookup_codes',
    'upsample_latent',
    'encode_multiscale',
    'embed_multiscale',
    'decode_multiscale',
)


Scale = typing.Tuple[int, int]
ScaleSpec = typing.Union[int, typing.Sequence[int]]

UPSAMPLE_MODES = ('nearest', 'bilinear')


def normalize_scales(
    scales: typing.Iterable[ScaleSpec],
    latent_hw: typing.Optional[Scale] = None,
) -> typing.Tuple[Scale, ...]:
    rv = []
    for s in scales:
        if isinstance(s, int):
            rv.append((s, s))
        else:
            h, w = s
            rv.append((int(h), int(w)))
    if not rv:
        raise errors.InvalidScaleScheduleError('scale schedule is empty')
    for h, w in rv:
        if h < 1 or w < 1:
            raise errors.InvalidScaleScheduleError(
                f'scale {h}x{w} must be positive')
    for (h0, w0), (h1, w1) in zip(rv, rv[1:]):
        if not (h1 > h0 and w1 > w0):
            raise errors.InvalidScaleScheduleError(
                f'scales must be strictly increasing, got '
                f'{h0}x{w0} followed by {h1}x{w1}')
    if latent_hw is not None and rv[-1] != tuple(latent_hw):
        raise errors.InvalidScaleScheduleError(
            f'final scale {rv[-1][0]}x{rv[-1][1]} does not match the '
            f'latent grid {latent_hw[0]}x{latent_hw[1]}')
    return tuple(rv)


@dataclasses.dataclass(frozen=True)
class QuantizerConfig:

    codebook_size: int = 256
    code_dim: int = 32
    rank: int = 8
    scales: typing.Tuple[ScaleSpec, ...] = (1, 2, 4, 8)
    downsample: int = 8
    hidden: int = 128
    res_blocks: int = 2
    res_channels: int = 32
    upsample: str = 'nearest'
    beta: float = 0.25
    cac_at_selection: bool = True

    def __post_init__(self):
        if self.codebook_size < 2:
            raise errors.ConfigurationError(
                f'codebook_size must be at least 2, '
                f'got {self.codebook_size}')
        if not 1 <= self.rank <= self.code_dim:
            raise errors.ConfigurationError(
                f'rank must lie in [1, code_dim={self.code_dim}], '
                f'got {self.rank}')
        if self.downsample < 2 or self.downsample & (self.downsample - 1):
            raise errors.ConfigurationError(
                f'downsample must be a power of two >= 2, '
                f'got {self.downsample}')
        if self.res_blocks < 0 or self.res_channels < 1:
            raise errors.ConfigurationError(
                f'res_blocks must be >= 0 and res_channels >= 1, '
                f'got {self.res_blocks} and {self.res_channels}')
        if self.upsample not in UPSAMPLE_MODES:
            raise errors.ConfigurationError(
                f'upsample must be one of {UPSAMPLE_MODES}, '
                f'got {self.upsample!r}')
        object.__setattr__(
            self, 'scales', normalize_scales(self.scales))

    @property
    def latent_hw(self) -> Scale:
        return self.scales[-1]

    @property
    def image_hw(self) -> Scale:
        h, w = self.latent_hw
        return h * self.downsample, w * self.downsample


class Codebook(nn.Module):
    """K×d code table with a per-code low-rank modulation.

    ``Z'(g)[i] = Z[i] + tanh(alpha) * (U[i] * h(g)) @ V.T``
    """

    def __init__(self, size: int = 256, dim: int = 32, rank: int = 8):
        super().__init__()
        if size < 2:
            raise errors.ConfigurationError('codebook needs at least 2 codes')
        if not 1 <= rank <= dim:
            raise errors.ConfigurationError(
                f'rank {rank} must lie in [1, {dim}]')
        self.size = size
        self.dim = dim
        self.rank = rank
        self.Z = nn.Parameter(torch.empty(size, dim).uniform_(
            -1.0 / size, 1.0 / size))
        self.U = nn.Parameter(torch.randn(size, rank) * 0.1)
        self.V = nn.Parameter(torch.randn(dim, rank) / math.sqrt(dim))
        self.alpha = nn.Parameter(torch.zeros(()))
        self.modulation_calls = 0

    def modulated_table(self, cond: torch.Tensor) -> torch.Tensor:
        """Return the modulated table, K×d for an r-vector or B×K×d for
        a B×r batch of conditions."""
        self.modulation_calls += 1
        if cond.shape[-1] != self.rank:
            raise errors.ShapeMismatchError(
                f'condition has {cond.shape[-1]} dims, '
                f'codebook rank is {self.rank}')
        delta = (self.U * cond[..., None, :]) @ self.V.T
        return self.Z + torch.tanh(self.alpha) * delta

    def modulated_embedding(self, i: int, cond: torch.Tensor) -> torch.Tensor:
        self.modulation_calls += 1
        if not 0 <= i < self.size:
            raise errors.CodeIndexError(
                f'code index {i} out of range [0, {self.size})')
        if cond.shape != (self.rank,):
            raise errors.ShapeMismatchError(
                f'condition must be a {self.rank}-vector, '
                f'got {tuple(cond.shape)}')
        delta = (self.U[i] * cond) @ self.V.T
        return self.Z[i] + torch.tanh(self.alpha) * delta

    def table(
        self,
        cond: typing.Optional[torch.Tensor] = None,
        use_cac: bool = True,
    ) -> torch.Tensor:
        if use_cac and cond is not None:
            return self.modulated_table(cond)
        return self.Z

    @torch.no_grad()
    def init_from(self, vectors: torch.Tensor) -> None:
        """Overwrite ``Z`` with the first K rows of an N×d sample.

        Fewer than K rows are repeated with a little Gaussian noise.
        """
        n, d = vectors.shape
        if d != self.dim:
            raise errors.ShapeMismatchError(
                f'samples have {d} dims, codebook dim is {self.dim}')
        if n == 0:
            raise errors.ShapeMismatchError('no samples to initialize from')
        if n < self.size:
            vectors = vectors.repeat(-(-self.size // n), 1)
            vectors = vectors + torch.randn_like(vectors) * (
                0.01 / math.sqrt(d))
        self.Z.copy_(vectors[:self.size])

    def extra_repr(self):
        return f'size={self.size}, dim={self.dim}, rank={self.rank}'


class ConditionProjector(nn.Module):
    """h(g): linear projection of the globally pooled F_TSG."""

    def __init__(self, in_channels: int, rank: int):
        super().__init__()
        self.proj = nn.Linear(in_channels, rank)

    def forward(self, f_tsg: torch.Tensor) -> torch.Tensor:
        return self.proj(f_tsg.mean(dim=(-2, -1)))


def condition_vector(
    f_tsg: torch.Tensor, projector: ConditionProjector
) -> torch.Tensor:
    return projector(f_tsg)


@dataclasses.dataclass(frozen=True)
class TokenMap:
    """Per-scale grids of code indices, each B×h_k×w_k."""

    indices: typing.Tuple[torch.Tensor, ...]
    scales: typing.Tuple[Scale, ...]

    def __post_init__(self):
        object.__setattr__(self, 'indices', tuple(self.indices))
        object.__setattr__(self, 'scales', normalize_scales(self.scales))
        if len(self.indices) != len(self.scales):
            raise errors.ShapeMismatchError(
                f'{len(self.indices)} index grids for '
                f'{len(self.scales)} scales')
        batch = None
        for t, (h, w) in zip(self.indices, self.scales):
            if t.dim() != 3 or tuple(t.shape[1:]) != (h, w):
                raise errors.ShapeMismatchError(
                    f'token grid of shape {tuple(t.shape)} does not match '
                    f'scale {h}x{w}')
            if batch is not None and t.shape[0] != batch:
                raise errors.ShapeMismatchError(
                    'token grids disagree on batch size')
            batch = t.shape[0]

    @property
    def batch_size(self) -> int:
        return self.indices[0].shape[0]

    @property
    def num_tokens(self) -> int:
        return sum(h * w for h, w in self.scales)

    def validate(self, vocab: int) -> 'TokenMap':
        for t in self.indices:
            if t.numel() and (int(t.min()) < 0 or int(t.max()) >= vocab):
                raise errors.CodeIndexError(
                    f'token index out of range [0, {vocab})')
        return self

    def flatten(self) -> torch.Tensor:
        """Concatenate all scales into one B×N sequence, coarse first."""
        return torch.cat([t.flatten(1) for t in self.indices], dim=1)

    @classmethod
    def unflatten(cls, seq: torch.Tensor, scales) -> 'TokenMap':
        scales = normalize_scales(scales)
        grids = []
        start = 0
        for h, w in scales:
            grids.append(seq[:, start:start + h * w].reshape(-1, h, w))
            start += h * w
        return cls(tuple(grids), scales)

    def equal(self, other: 'TokenMap') -> bool:
        return self.scales == other.scales and all(
            torch.equal(a, b) for a, b in zip(self.indices, other.indices))


def nearest_code(
    cb: Codebook,
    cond: typing.Optional[torch.Tensor],
    v: torch.Tensor,
    use_cac: bool = True,
) -> int:
    table = cb.table(cond, use_cac)
    dist = ((v[None, :] - table) ** 2).sum(dim=-1)
    # torch.argmin returns the first minimal index
    return int(torch.argmin(dist))


def quantize(features: torch.Tensor, table: torch.Tensor) -> torch.Tensor:
    """Nearest-code indices (B×h×w) of B×d×h×w features against a K×d or
    B×K×d table."""
    b, d, h, w = features.shape
    v = features.flatten(2).transpose(1, 2)
    if table.dim() == 2:
        table = table[None]
    dist = ((v[:, :, None, :] - table[:, None, :, :]) ** 2).sum(dim=-1)
    return dist.argmin(dim=-1).reshape(b, h, w)


def lookup_codes(
    indices: torch.Tensor, table: torch.Tensor
) -> torch.Tensor:
    b, h, w = indices.shape
    flat = indices.reshape(b, h * w)
    if table.dim() == 2:
        emb = table[flat]
    else:
        emb = table[torch.arange(b, device=flat.device)[:, None], flat]
    return emb.transpose(1, 2).reshape(b, -1, h, w)


def upsample_latent(x: torch.Tensor, size: Scale, mode: str) -> torch.Tensor:
    if tuple(x.shape[-2:]) == tuple(size):
        return x
    if mode == 'nearest':
        return F.interpolate(x, size=size, mode='nearest')
    return F.interpolate(x, size=size, mode='bilinear', align_corners=False)


def encode_multiscale(
    f: torch.Tensor,
    cb: Codebook,
    cond: typing.Optional[torch.Tensor],
    scales,
    *,
    use_cac: bool = True,
    upsample: str = 'nearest',
    return_reconstruction: bool = False,
):
    """Tokenize a B×d×H×W latent with the residual recurrence.

    At each scale the remaining residual is area-averaged to the scale's
    grid, quantized, and the upsampled code embeddings are added to the
    running reconstruction.
    """
    scales = normalize_scales(scales, tuple(f.shape[-2:]))
    table = cb.table(cond, use_cac)
    latent = tuple(f.shape[-2:])
    acc = torch.zeros_like(f)
    tokens = []
    for hw in scales:
        with torch.no_grad():
            residual = F.adaptive_avg_pool2d(f - acc, hw)
            idx = quantize(residual, table)
        tokens.append(idx)
        e = lookup_codes(idx, table)
        acc = acc + upsample_latent(e, latent, upsample)
    tm = TokenMap(tuple(tokens), scales)
    if return_reconstruction:
        return tm, acc
    return tm


def embed_multiscale(
    tm: TokenMap,
    cb: Codebook,
    cond: typing.Optional[torch.Tensor],
    *,
    use_cac: bool = True,
    upsample: str = 'nearest',
) -> torch.Tensor:
    tm.validate(cb.size)
    table = cb.table(cond, use_cac)
    latent = tm.scales[-1]
    acc = None
    for idx in tm.indices:
        e = upsample_latent(lookup_codes(idx, table), latent,
                            upsample)
        acc = e if acc is None else acc + e
    return acc


def decode_multiscale(
    tm: TokenMap,
    cb: Codebook,
    cond: typing.Optional[torch.Tensor],
    decoder: nn.Module,
    *,
    use_cac: bool = True,
    upsample: str = 'nearest',
) -> torch.Tensor:
    return decoder(embed_multiscale(
        tm, cb, cond, use_cac=use_cac, upsample=upsample))


class VQOutput(typing.NamedTuple):

    recon: torch.Tensor
    tokens: TokenMap
    recon_loss: torch.Tensor
    codebook_loss: torch.Tensor
    commitment_loss: torch.Tensor
    loss: torch.Tensor


class _ResidualStack(nn.Module):
    """``n`` blocks of ReLU, 3x3 conv, ReLU, 1x1 conv with identity skips,
    followed by a ReLU."""

    def __init__(self, channels: int, hidden: int, n: int):
        super().__init__()
        self.blocks = nn.ModuleList(
            nn.Sequential(
                nn.ReLU(),
                nn.Conv2d(channels, hidden, 3, padding=1),
                nn.ReLU(),
                nn.Conv2d(hidden, channels, 1),
            )
            for _ in range(n)
        )

    def forward(self, x):
        for block in self.blocks:
            x = x + block(x)
        return F.relu(x)


class _Encoder(nn.Module):

    def __init__(self, cfg: QuantizerConfig, stages: int):
        super().__init__()
        layers = []
        ch = 1
        for _ in range(stages):
            layers += [nn.Conv2d(ch, cfg.hidden, 4, stride=2, padding=1),
                       nn.ReLU()]
            ch = cfg.hidden
        layers += [
            nn.Conv2d(cfg.hidden, cfg.hidden, 3, padding=1),
            _ResidualStack(cfg.hidden, cfg.res_channels, cfg.res_blocks),
            nn.Conv2d(cfg.hidden, cfg.code_dim, 1),
        ]
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(x)


class _Decoder(nn.Module):

    def __init__(self, cfg: QuantizerConfig, stages: int):
        super().__init__()
        layers = [
            nn.Conv2d(cfg.code_dim, cfg.hidden, 3, padding=1),
            _ResidualStack(cfg.hidden, cfg.res_channels, cfg.res_blocks),
        ]
        for i in range(stages):
            last = i == stages - 1
            layers.append(nn.ConvTranspose2d(
                cfg.hidden, 1 if last else cfg.hidden, 4, stride=2,
                padding=1))
            if not last:
                layers.append(nn.ReLU())
        self.net = nn.Sequential(*layers)

    def forward(self, z):
        return torch.sigmoid(self.net(z))


class VQVAE(nn.Module):
    """Convolutional VQ-VAE over a multi-scale residual token pyramid."""

    def __init__(self, cfg: QuantizerConfig):
        super().__init__()
        self.cfg = cfg
        stages = int(math.log2(cfg.downsample))
        self.encoder = _Encoder(cfg, stages)
        self.decoder = _Decoder(cfg, stages)
        self.codebook = Codebook(cfg.codebook_size, cfg.code_dim, cfg.rank)

    def encode(self, hr: torch.Tensor) -> torch.Tensor:
        h, w = hr.shape[-2:]
        if h % self.cfg.downsample or w % self.cfg.downsample:
            raise errors.IncompatibleDimensionsError(
                f'image size {h}x{w} is not divisible by '
                f'{self.cfg.downsample}')
        return self.encoder(hr)

    @torch.no_grad()
    def init_codebook(self, hr: torch.Tensor) -> None:
        """Seed the code table with latent residuals of ``hr``.

        Residuals are taken as if every scale were quantized exactly and
        are queued coarse scale first, so each scale gets codes near its
        own residual magnitude.
        """
        f = self.encode(hr)
        latent = tuple(f.shape[-2:])
        acc = torch.zeros_like(f)
        rows = []
        for hw in self.cfg.scales:
            r = F.adaptive_avg_pool2d(f - acc, hw)
            v = r.flatten(2).transpose(1, 2).reshape(-1, r.shape[1])
            rows.append(v[torch.randperm(v.shape[0])])
            acc = acc + upsample_latent(r, latent, self.cfg.upsample)
        self.codebook.init_from(torch.cat(rows))

    def tokenize(
        self,
        hr: torch.Tensor,
        cond: typing.Optional[torch.Tensor] = None,
        *,
        use_cac: bool = True,
    ) -> TokenMap:
        with torch.no_grad():
            f = self.encode(hr)
            return encode_multiscale(
                f, self.codebook, cond, self.cfg.scales,
                use_cac=use_cac and self.cfg.cac_at_selection,
                upsample=self.cfg.upsample)

    def decode(
        self,
        tm: TokenMap,
        cond: typing.Optional[torch.Tensor] = None,
        *,
        use_cac: bool = True,
    ) -> torch.Tensor:
        return decode_multiscale(
            tm, self.codebook, cond, self.decoder,
            use_cac=use_cac, upsample=self.cfg.upsample)

    def forward(self, hr: torch.Tensor) -> VQOutput:
        z = self.encode(hr)
        tm, z_q = encode_multiscale(
            z, self.codebook, None, self.cfg.scales,
            use_cac=False, upsample=self.cfg.upsample,
            return_reconstruction=True)
        codebook_loss = F.mse_loss(z_q, z.detach())
        commitment_loss = F.mse_loss(z, z_q.detach())
        # straight-through: decoder gradients pass to the encoder unchanged
        z_st = z + (z_q - z).detach()
        recon = self.decoder(z_st)
        recon_loss = F.mse_loss(recon, hr)
        loss = recon_loss + codebook_loss + self.cfg.beta * commitment_loss
        return VQOutput(
            recon, tm, recon_loss, codebook_loss, commitment_loss, loss)
