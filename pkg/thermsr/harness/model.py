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

import typing

import torch
import torch.nn.functional as F
from torch import nn

from thermsr import errors
from thermsr import losses
from thermsr import options
from thermsr.backbone import NextScaleTransformer
from thermsr.guidance import GuidanceOutput, ThermalStructuralGuidance
from thermsr.quantizer import (
    ConditionProjector, TokenMap, VQVAE, lookup_codes, upsample_latent,
)

from .config import ExperimentConfig


__all__ = ('ThermSR', 'ForwardResult')


class ForwardResult(typing.NamedTuple):

    losses: losses.LossBreakdown
    sr: torch.Tensor
    targets: TokenMap
    logits: typing.List[torch.Tensor]


class ThermSR(nn.Module):
    """Guidance, condition-adaptive VQ-VAE and next-scale transformer."""

    def __init__(self, cfg: ExperimentConfig):
        super().__init__()
        self.cfg = cfg
        self.ablations = cfg.ablations
        q = cfg.quantizer
        self.guidance = ThermalStructuralGuidance(
            cfg.guidance, use_tsg=cfg.ablations.use_tsg)
        self.vqvae = VQVAE(q)
        self.projector = ConditionProjector(cfg.guidance.attn_dim, q.rank)
        self.backbone = NextScaleTransformer(
            cfg.backbone,
            scales=q.scales,
            vocab=q.codebook_size,
            code_dim=q.code_dim,
            cond_dim=cfg.guidance.attn_dim,
            upsample=q.upsample,
        )

    @property
    def use_cac(self) -> bool:
        return self.ablations.use_cac

    @property
    def codebook(self):
        return self.vqvae.codebook

    def check_lr(self, lr: torch.Tensor):
        if tuple(lr.shape[-2:]) != self.cfg.lr_hw:
            raise errors.IncompatibleDimensionsError(
                f'LR input {lr.shape[-2]}x{lr.shape[-1]} does not match '
                f'the model input {self.cfg.lr_hw[0]}x{self.cfg.lr_hw[1]}')

    def condition(
        self, lr: torch.Tensor
    ) -> typing.Tuple[GuidanceOutput, torch.Tensor]:
        self.check_lr(lr)
        g = self.guidance(lr)
        return g, self.projector(g.f_tsg)

    def code_table(self, cond: torch.Tensor) -> torch.Tensor:
        return self.codebook.table(cond, self.use_cac)

    def _straight_through_sr(
        self, logits: typing.Sequence[torch.Tensor], table: torch.Tensor
    ) -> torch.Tensor:
        # forward uses the argmax codes, gradients flow through softmax
        latent = self.backbone.scales[-1]
        upsample = self.cfg.quantizer.upsample
        if table.dim() == 2:
            table = table.expand(logits[0].shape[0], -1, -1)
        acc = None
        for lg in logits:
            probs = lg.softmax(dim=-1)
            hard = F.one_hot(lg.argmax(dim=-1), lg.shape[-1]).to(probs.dtype)
            st = hard + probs - probs.detach()
            b, h, w, k = st.shape
            emb = torch.bmm(st.reshape(b, h * w, k), table)
            emb = emb.transpose(1, 2).reshape(b, -1, h, w)
            e = upsample_latent(emb, latent, upsample)
            acc = e if acc is None else acc + e
        return self.vqvae.decoder(acc)

    def forward(
        self,
        lr: torch.Tensor,
        hr: torch.Tensor,
        weights: typing.Optional[options.LossWeights] = None,
    ) -> ForwardResult:
        if weights is None:
            weights = self.cfg.losses
        g, cond = self.condition(lr)
        targets = self.vqvae.tokenize(hr, cond.detach(), use_cac=self.use_cac)
        table = self.code_table(cond)
        logits = self.backbone(targets, g.f_tsg, table)

        ce = losses.ce_loss(logits, targets)
        sr = self._straight_through_sr(logits, table)
        mse = losses.mse_loss(sr, hr)
        if self.ablations.use_toc:
            toc = losses.toc_loss(sr, hr, weights.toc_patch)
        else:
            toc = sr.new_zeros(())
        total = losses.total_loss(ce, mse, toc, weights)
        return ForwardResult(
            losses.LossBreakdown(total, ce, mse, toc), sr, targets, logits)

    @torch.no_grad()
    def super_resolve(
        self,
        lr: torch.Tensor,
        sampler: typing.Optional[options.SamplerOptions] = None,
        seed: int = 0,
    ) -> torch.Tensor:
        g, cond = self.condition(lr)
        table = self.code_table(cond)
        tm = self.backbone.generate(g.f_tsg, table, sampler, seed)
        return self.decode_tokens(tm, table)

    def decode_tokens(self, tm: TokenMap, table: torch.Tensor):
        latent = tm.scales[-1]
        acc = None
        for idx in tm.indices:
            e = upsample_latent(lookup_codes(idx, table), latent,
                                self.cfg.quantizer.upsample)
            acc = e if acc is None else acc + e
        return self.vqvae.decoder(acc)

    def trainable_parameters(self, *, unfreeze_decoder: bool = False):
        """Parameters optimized during the autoregressive stage: the
        codebook table and the VQ-VAE stay frozen except for the
        modulation terms (and the decoder when requested)."""
        params = list(self.guidance.parameters())
        params += list(self.projector.parameters())
        params += list(self.backbone.parameters())
        if self.use_cac:
            cb = self.codebook
            params += [cb.U, cb.V, cb.alpha]
        if unfreeze_decoder:
            params += list(self.vqvae.decoder.parameters())
        return params
