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

"""Next-scale autoregressive transformer.

The token sequence is ``[prefix | scale 1 | scale 2 | ... | scale S]``.
The prefix holds the pooled guidance features and attends only to
itself; every token of scale k attends to the prefix and to all tokens
of scales 1..k.  Inputs at scale k are derived from the tokens of the
coarser scales only, so the logits of scale k never depend on tokens of
scale k or finer.
"""


from __future__ import annotations

import dataclasses
import math
import typing

import torch
import torch.nn.functional as F
from torch import nn

from . import errors
from . import options
from .quantizer import (
    TokenMap, lookup_codes, normalize_scales, upsample_latent,
)


__all__ = (
    'BackboneConfig',
    'NextScaleTransformer',
    'sample_tokens',
)


LogitsPyramid = typing.List[torch.Tensor]


@dataclasses.dataclass(frozen=True)
class BackboneConfig:

    layers: int = 4
    width: int = 128
    heads: int = 4
    mlp_ratio: float = 4.0
    dropout: float = 0.0
    cond_grid: typing.Tuple[int, int] = (8, 8)

    def __post_init__(self):
        if self.layers < 1:
            raise errors.ConfigurationError('layers must be positive')
        if self.width < 1 or self.heads < 1:
            raise errors.ConfigurationError(
                'width and heads must be positive')
        if self.width % self.heads:
            raise errors.ConfigurationError(
                f'width {self.width} is not divisible by heads {self.heads}')
        if not 0.0 <= self.dropout < 1.0:
            raise errors.ConfigurationError(
                f'dropout must lie in [0, 1), got {self.dropout}')
        grid = self.cond_grid
        if isinstance(grid, int):
            grid = (grid, grid)
        grid = tuple(int(g) for g in grid)
        if len(grid) != 2 or min(grid) < 1:
            raise errors.ConfigurationError(
                f'cond_grid must be two positive ints, got {self.cond_grid}')
        object.__setattr__(self, 'cond_grid', grid)


class _SelfAttention(nn.Module):

    def __init__(self, width: int, heads: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.qkv = nn.Linear(width, 3 * width)
        self.proj = nn.Linear(width, width)
        self.dropout = dropout

    def forward(self, x: torch.Tensor, attn_bias: torch.Tensor):
        b, n, c = x.shape
        qkv = self.qkv(x).view(b, n, 3, self.heads, c // self.heads)
        q, k, v = qkv.permute(2, 0, 3, 1, 4).unbind(0)
        out = F.scaled_dot_product_attention(
            q, k, v, attn_mask=attn_bias,
            dropout_p=self.dropout if self.training else 0.0)
        return self.proj(out.transpose(1, 2).reshape(b, n, c))


class _Block(nn.Module):

    def __init__(self, width: int, heads: int, mlp_ratio: float,
                 dropout: float):
        super().__init__()
        hidden = int(round(width * mlp_ratio))
        self.ln1 = nn.LayerNorm(width)
        self.attn = _SelfAttention(width, heads, dropout)
        self.ln2 = nn.LayerNorm(width)
        self.mlp = nn.Sequential(
            nn.Linear(width, hidden),
            nn.GELU(),
            nn.Linear(hidden, width),
            nn.Dropout(dropout),
        )

    def forward(self, x, attn_bias):
        x = x + self.attn(self.ln1(x), attn_bias)
        return x + self.mlp(self.ln2(x))


def sample_tokens(
    logits: torch.Tensor,
    sampler: options.SamplerOptions,
    generator: typing.Optional[torch.Generator] = None,
) -> torch.Tensor:
    """Pick one token per position from ``...×K`` logits."""
    if sampler.is_deterministic():
        return logits.argmax(dim=-1)
    vocab = logits.shape[-1]
    k = min(sampler.top_k, vocab)
    flat = logits.reshape(-1, vocab) / sampler.temperature
    top_vals, top_idx = flat.topk(k, dim=-1)
    probs = top_vals.softmax(dim=-1)
    choice = torch.multinomial(probs, 1, generator=generator)
    return top_idx.gather(-1, choice).reshape(logits.shape[:-1])


class NextScaleTransformer(nn.Module):

    def __init__(
        self,
        cfg: BackboneConfig,
        *,
        scales,
        vocab: int,
        code_dim: int,
        cond_dim: int,
        upsample: str = 'nearest',
    ):
        super().__init__()
        self.cfg = cfg
        self.scales = normalize_scales(scales)
        self.vocab = vocab
        self.code_dim = code_dim
        self.upsample = upsample
        c = cfg.width

        self.prefix_len = cfg.cond_grid[0] * cfg.cond_grid[1]
        self.lens = [h * w for h, w in self.scales]
        self.L = sum(self.lens)
        self.begin_ends = []
        cur = 0
        for n in self.lens:
            self.begin_ends.append((cur, cur + n))
            cur += n

        init_std = math.sqrt(1 / c / 3)
        self.cond_embed = nn.Linear(cond_dim, c)
        self.cond_pos = nn.Parameter(torch.empty(1, self.prefix_len, c))
        self.word_embed = nn.Linear(code_dim, c)
        self.pos_start = nn.Parameter(torch.empty(1, self.lens[0], c))
        self.pos_1LC = nn.Parameter(torch.empty(1, self.L, c))
        self.lvl_embed = nn.Embedding(len(self.scales), c)
        for p in (self.cond_pos, self.pos_start, self.pos_1LC,
                  self.lvl_embed.weight):
            nn.init.trunc_normal_(p.data, mean=0, std=init_std)

        self.blocks = nn.ModuleList([
            _Block(c, cfg.heads, cfg.mlp_ratio, cfg.dropout)
            for _ in range(cfg.layers)
        ])
        self.head_norm = nn.LayerNorm(c)
        self.head = nn.Linear(c, vocab)

        lvl = torch.cat([
            torch.full((n,), i) for i, n in enumerate(self.lens)])
        self.register_buffer('lvl_1L', lvl[None], persistent=False)
        # prefix tokens carry level -1: visible to everyone, see only
        # each other
        d = torch.cat([torch.full((self.prefix_len,), -1), lvl])
        bias = torch.where(
            d[:, None] >= d[None, :], 0.0, -torch.inf)
        self.register_buffer('attn_bias', bias, persistent=False)

    def _prefix(self, f_tsg: torch.Tensor) -> torch.Tensor:
        pooled = F.adaptive_avg_pool2d(f_tsg, self.cfg.cond_grid)
        tokens = pooled.flatten(2).transpose(1, 2)
        return self.cond_embed(tokens) + self.cond_pos

    def _scale_inputs(
        self,
        tokens: typing.Sequence[torch.Tensor],
        table: torch.Tensor,
        batch: int,
    ) -> torch.Tensor:
        """Inputs for scales 1..len(tokens)+1 (capped at S)."""
        latent = self.scales[-1]
        xs = [self.pos_start.expand(batch, -1, -1)]
        acc = None
        for k, idx in enumerate(tokens[:len(self.scales) - 1]):
            e = upsample_latent(
                lookup_codes(idx, table), latent, self.upsample)
            acc = e if acc is None else acc + e
            nxt = F.adaptive_avg_pool2d(acc, self.scales[k + 1])
            xs.append(self.word_embed(nxt.flatten(2).transpose(1, 2)))
        x = torch.cat(xs, dim=1)
        n = x.shape[1]
        return (x + self.lvl_embed(self.lvl_1L[:, :n])
                + self.pos_1LC[:, :n])

    def _run(self, prefix: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
        h = torch.cat([prefix, x], dim=1)
        n = h.shape[1]
        bias = self.attn_bias[:n, :n].to(h.dtype)
        for block in self.blocks:
            h = block(h, bias)
        return self.head(self.head_norm(h[:, self.prefix_len:]))

    def forward_teacher_forced(
        self,
        tm: TokenMap,
        f_tsg: torch.Tensor,
        table: torch.Tensor,
    ) -> LogitsPyramid:
        if tm.scales != self.scales:
            raise errors.ShapeMismatchError(
                f'token map scales {tm.scales} do not match the backbone '
                f'schedule {self.scales}')
        tm.validate(self.vocab)
        b = tm.batch_size
        x = self._scale_inputs(tm.indices, table, b)
        logits = self._run(self._prefix(f_tsg), x)
        return [
            logits[:, st:en].reshape(b, h, w, self.vocab)
            for (st, en), (h, w) in zip(self.begin_ends, self.scales)
        ]

    forward = forward_teacher_forced

    @torch.no_grad()
    def generate(
        self,
        f_tsg: torch.Tensor,
        table: torch.Tensor,
        sampler: typing.Optional[options.SamplerOptions] = None,
        seed: int = 0,
    ) -> TokenMap:
        if sampler is None:
            sampler = options.SamplerOptions.defaults()
        gen = torch.Generator(device=f_tsg.device)
        gen.manual_seed(seed)
        b = f_tsg.shape[0]
        prefix = self._prefix(f_tsg)
        tokens: typing.List[torch.Tensor] = []
        for k, (h, w) in enumerate(self.scales):
            x = self._scale_inputs(tokens, table, b)
            st, en = self.begin_ends[k]
            logits = self._run(prefix, x)[:, st:en]
            idx = sample_tokens(logits, sampler, gen)
            tokens.append(idx.reshape(b, h, w))
        return TokenMap(tuple(tokens), self.scales)

    def extra_repr(self):
        return (f'scales={self.scales}, vocab={self.vocab}, '
                f'prefix_len={self.prefix_len}')
