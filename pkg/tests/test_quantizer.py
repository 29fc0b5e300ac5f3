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


import math

import numpy as np
import torch

from thermsr import _testbase as tb
from thermsr import errors
from thermsr import quantizer as q


class TestScales(tb.TestCase):

    def test_normalize_scales(self):
        self.assertEqual(q.normalize_scales([1, (2, 3), 4]),
                         ((1, 1), (2, 3), (4, 4)))
        with self.assertRaises(errors.InvalidScaleScheduleError):
            q.normalize_scales([1, 2, 2])
        with self.assertRaises(errors.InvalidScaleScheduleError):
            q.normalize_scales([(1, 2), (2, 2)])
        with self.assertRaises(errors.InvalidScaleScheduleError):
            q.normalize_scales([1, 2], latent_hw=(4, 4))
        with self.assertRaises(errors.InvalidScaleScheduleError):
            q.normalize_scales([])

    def test_scale_schedule_is_a_config_error(self):
        self.assertTrue(issubclass(errors.InvalidScaleScheduleError,
                                   errors.ConfigurationError))
        with self.assertRaises(errors.ConfigurationError):
            q.QuantizerConfig(scales=(4, 2, 8))

    def test_config_geometry(self):
        cfg = q.QuantizerConfig()
        self.assertEqual(cfg.latent_hw, (8, 8))
        self.assertEqual(cfg.image_hw, (64, 64))
        with self.assertRaises(errors.ConfigurationError):
            q.QuantizerConfig(downsample=6)
        with self.assertRaises(errors.ConfigurationError):
            q.QuantizerConfig(rank=64, code_dim=32)


class TestCodebook(tb.TestCase):

    def test_identity_cases(self):
        cb = q.Codebook(8, 4, 2).double()
        cond = torch.randn(2, dtype=torch.float64)
        for i in range(8):
            self.assertTrue(torch.equal(
                cb.modulated_embedding(i, cond), cb.Z[i]))
        with torch.no_grad():
            cb.alpha.fill_(0.7)
        zero = torch.zeros(2, dtype=torch.float64)
        for i in range(8):
            self.assertAllClose(cb.modulated_embedding(i, zero), cb.Z[i],
                                atol=1e-12)

    def test_hand_arithmetic(self):
        cb = q.Codebook(2, 2, 1).double()
        with torch.no_grad():
            cb.Z[0] = torch.tensor([1.0, 0.0])
            cb.U[0] = torch.tensor([2.0])
            cb.V.copy_(torch.tensor([[0.5], [0.5]]))
            cb.alpha.fill_(math.atanh(0.5))
        cond = torch.tensor([1.0], dtype=torch.float64)
        out = cb.modulated_embedding(0, cond)
        self.assertAllClose(out, [1.5, 0.5], rtol=1e-12)

    def test_table_matches_embeddings(self):
        cb = q.Codebook(6, 4, 3)
        with torch.no_grad():
            cb.alpha.fill_(0.3)
        cond = torch.randn(3)
        table = cb.modulated_table(cond)
        for i in range(6):
            self.assertAllClose(table[i], cb.modulated_embedding(i, cond),
                                rtol=1e-5, atol=1e-6)
        batch = cb.modulated_table(torch.stack([cond, -cond]))
        self.assertEqual(tuple(batch.shape), (2, 6, 4))
        self.assertAllClose(batch[0], table, atol=1e-6)

    def test_boundedness(self):
        cb = q.Codebook(16, 6, 3).double()
        with torch.no_grad():
            cb.alpha.fill_(1.3)
        sigma = float(np.linalg.svd(cb.V.detach().numpy(),
                                    compute_uv=False)[0])
        t = abs(math.tanh(1.3))
        # 625 conditions x 16 codes = 10^4 draws
        cond = torch.randn(625, 3, dtype=torch.float64) * 3
        with torch.no_grad():
            table = cb.modulated_table(cond)
            dev = (table - cb.Z).norm(dim=-1)
            bound = t * (cb.U * cond[:, None, :]).norm(dim=-1) * sigma
        self.assertEqual(dev.numel(), 10_000)
        self.assertTrue(bool((dev <= bound + 1e-12).all()))

    def test_init_from_samples(self):
        cb = q.Codebook(4, 3, 2)
        rows = torch.arange(18, dtype=torch.float32).reshape(6, 3)
        cb.init_from(rows)
        self.assertTrue(torch.equal(cb.Z.detach(), rows[:4]))

    def test_init_from_few_samples(self):
        cb = q.Codebook(8, 3, 2)
        rows = torch.tensor([[1.0, 0.0, 0.0], [0.0, 5.0, 0.0]])
        cb.init_from(rows)
        z = cb.Z.detach()
        self.assertAllClose(z[0::2], rows[0].expand(4, 3), atol=0.05)
        self.assertAllClose(z[1::2], rows[1].expand(4, 3), atol=0.05)
        # repeated rows are jittered apart
        self.assertEqual(len({tuple(r.tolist()) for r in z}), 8)
        with self.assertRaises(errors.ShapeMismatchError):
            cb.init_from(torch.zeros(5, 4))
        with self.assertRaises(errors.ShapeMismatchError):
            cb.init_from(torch.zeros(0, 3))

    def test_errors_and_counter(self):
        cb = q.Codebook(4, 4, 2)
        before = cb.modulation_calls
        cb.modulated_table(torch.zeros(2))
        self.assertEqual(cb.modulation_calls, before + 1)
        with self.assertRaises(errors.CodeIndexError):
            cb.modulated_embedding(4, torch.zeros(2))
        with self.assertRaises(errors.CodeIndexError):
            cb.modulated_embedding(-1, torch.zeros(2))
        with self.assertRaises(errors.ShapeMismatchError):
            cb.modulated_table(torch.zeros(3))
        with self.assertRaises(errors.ConfigurationError):
            q.Codebook(1, 4, 2)

    def test_table_without_cac(self):
        cb = q.Codebook(4, 4, 2)
        self.assertIs(cb.table(torch.ones(2), use_cac=False), cb.Z)
        self.assertIs(cb.table(None), cb.Z)


class TestConditionProjector(tb.TestCase):

    def test_zero_input(self):
        proj = q.ConditionProjector(5, 3)
        with torch.no_grad():
            proj.proj.bias.zero_()
        out = q.condition_vector(torch.zeros(2, 5, 4, 4), proj)
        self.assertTrue(bool((out == 0).all()))

    def test_matches_matrix_oracle(self):
        proj = q.ConditionProjector(5, 3).double()
        f = torch.randn(1, 5, 4, 4, dtype=torch.float64)
        pooled = f.numpy().mean(axis=(2, 3))[0]
        m = proj.proj.weight.detach().numpy()
        b = proj.proj.bias.detach().numpy()
        self.assertAllClose(proj(f)[0], m @ pooled + b, rtol=1e-12)


class TestNearestCode(tb.TestCase):

    def test_exact_hit(self):
        cb = q.Codebook(8, 3, 2)
        v = cb.Z[5].detach().clone()
        self.assertEqual(q.nearest_code(cb, None, v, use_cac=False), 5)

    def test_tie_break(self):
        cb = q.Codebook(2, 1, 1)
        with torch.no_grad():
            cb.Z.copy_(torch.tensor([[0.0], [1.0]]))
        self.assertEqual(
            q.nearest_code(cb, None, torch.tensor([0.5]), use_cac=False), 0)

    def test_brute_force_oracle(self):
        cb = q.Codebook(16, 4, 2).double()
        with torch.no_grad():
            cb.alpha.fill_(0.5)
        rng = self.rng(11)
        for trial in range(1000):
            v = torch.as_tensor(rng.normal(size=4) * 0.1)
            cond = torch.as_tensor(rng.normal(size=2))
            table = cb.modulated_table(cond).detach().numpy()
            dist = ((table - v.numpy()) ** 2).sum(axis=1)
            expected = int(np.flatnonzero(dist == dist.min())[0])
            self.assertEqual(q.nearest_code(cb, cond, v), expected)

    def test_quantize_batched_table(self):
        cb = q.Codebook(8, 3, 2)
        cond = torch.randn(2, 2)
        f = torch.randn(2, 3, 2, 2)
        idx = q.quantize(f, cb.modulated_table(cond))
        for b in range(2):
            for y in range(2):
                for x in range(2):
                    self.assertEqual(
                        int(idx[b, y, x]),
                        q.nearest_code(cb, cond[b], f[b, :, y, x]))


class TestTokenMap(tb.TestCase):

    def test_flatten_unflatten(self):
        grids = (torch.zeros(2, 1, 1, dtype=torch.long),
                 torch.arange(8).reshape(2, 2, 2))
        tm = q.TokenMap(grids, (1, 2))
        self.assertEqual(tm.num_tokens, 5)
        self.assertEqual(tm.batch_size, 2)
        seq = tm.flatten()
        self.assertEqual(seq.tolist(), [[0, 0, 1, 2, 3], [0, 4, 5, 6, 7]])
        self.assertTrue(q.TokenMap.unflatten(seq, (1, 2)).equal(tm))

    def test_validation(self):
        with self.assertRaises(errors.ShapeMismatchError):
            q.TokenMap((torch.zeros(1, 2, 2, dtype=torch.long),), (1,))
        with self.assertRaises(errors.ShapeMismatchError):
            q.TokenMap((torch.zeros(1, 1, 1, dtype=torch.long),), (1, 2))
        tm = q.TokenMap((torch.full((1, 1, 1), 9),), (1,))
        with self.assertRaises(errors.CodeIndexError):
            tm.validate(8)
        tm.validate(10)


class TestMultiscale(tb.TestCase):

    def _codebook_with_zero(self, size=16, dim=4):
        cb = q.Codebook(size, dim, 2)
        with torch.no_grad():
            cb.Z.normal_()
            cb.Z[0] = 0.0
        return cb

    def test_single_scale_exact_hit(self):
        cb = q.Codebook(8, 4, 2)
        f = cb.Z[3].detach()[None, :, None, None].expand(1, 4, 4, 4)
        tm, acc = q.encode_multiscale(f.clone(), cb, None, [4],
                                      use_cac=False,
                                      return_reconstruction=True)
        self.assertTrue(bool((tm.indices[0] == 3).all()))
        self.assertTrue(torch.equal(acc, f))

    def test_zero_fixed_point(self):
        cb = self._codebook_with_zero()
        tm = q.encode_multiscale(torch.zeros(2, 4, 4, 4), cb, None,
                                 [1, 2, 4], use_cac=False)
        for grid in tm.indices:
            self.assertTrue(bool((grid == 0).all()))

    def test_residual_error_never_grows(self):
        cb = self._codebook_with_zero()
        for trial in range(100):
            f = torch.randn(1, 4, 4, 4)
            tm = q.encode_multiscale(f, cb, None, [1, 2, 4], use_cac=False)
            acc = torch.zeros_like(f)
            prev = float((f ** 2).sum())
            for idx in tm.indices:
                e = q.lookup_codes(idx, cb.Z.detach())
                acc = acc + q.upsample_latent(e, (4, 4), 'nearest')
                err = float(((f - acc) ** 2).sum())
                self.assertLessEqual(err, prev + 1e-5)
                prev = err

    def test_embed_matches_encode_reconstruction(self):
        cb = q.Codebook(16, 4, 2)
        cond = torch.randn(2)
        f = torch.randn(1, 4, 4, 4)
        tm, acc = q.encode_multiscale(f, cb, cond, [1, 2, 4],
                                      return_reconstruction=True)
        emb = q.embed_multiscale(tm, cb, cond)
        self.assertAllClose(emb, acc, atol=1e-6)

    def test_bad_schedule(self):
        cb = q.Codebook(4, 4, 2)
        with self.assertRaises(errors.InvalidScaleScheduleError):
            q.encode_multiscale(torch.zeros(1, 4, 4, 4), cb, None, [1, 2])


class TestVQVAE(tb.TestCase):

    def test_decoder_geometry(self):
        vq = q.VQVAE(q.QuantizerConfig())
        tm = q.TokenMap(
            tuple(torch.randint(0, 256, (1, s, s)) for s in (1, 2, 4, 8)),
            (1, 2, 4, 8))
        out = vq.decode(tm)
        self.assertEqual(tuple(out.shape), (1, 1, 64, 64))
        self.assertTrue(bool(((out > 0) & (out < 1)).all()))

    def test_tokenize_deterministic(self):
        vq = q.VQVAE(tb.tiny_quantizer_config())
        hr = torch.rand(2, 1, 16, 16)
        a = vq.tokenize(hr)
        b = vq.tokenize(hr)
        self.assertTrue(a.equal(b))
        self.assertEqual(a.scales, ((1, 1), (2, 2), (4, 4)))

    def test_bad_dimensions(self):
        vq = q.VQVAE(tb.tiny_quantizer_config())
        with self.assertRaises(errors.IncompatibleDimensionsError):
            vq.encode(torch.rand(1, 1, 18, 18))

    def test_straight_through_gradients(self):
        vq = q.VQVAE(tb.tiny_quantizer_config())
        out = vq(torch.rand(2, 1, 16, 16))
        self.assertEqual(tuple(out.recon.shape), (2, 1, 16, 16))
        out.recon_loss.backward()
        grad = vq.encoder.net[0].weight.grad
        self.assertIsNotNone(grad)
        self.assertGreater(float(grad.abs().sum()), 0.0)
        # the reconstruction term alone never reaches the code table
        self.assertIsNone(vq.codebook.Z.grad)

    def test_straight_through_is_identity_on_gradient(self):
        z = torch.randn(1, 4, 2, 2, requires_grad=True)
        z_q = torch.randn(1, 4, 2, 2)
        z_st = z + (z_q - z).detach()
        self.assertTrue(torch.equal(z_st, z_q))
        weight = torch.randn(1, 4, 2, 2)
        (z_st * weight).sum().backward()
        self.assertTrue(torch.equal(z.grad, weight))

    def test_training_losses(self):
        vq = q.VQVAE(tb.tiny_quantizer_config())
        out = vq(torch.rand(2, 1, 16, 16))
        expected = (out.recon_loss + out.codebook_loss
                    + 0.25 * out.commitment_loss)
        self.assertAllClose(out.loss, expected, rtol=1e-6)
        out.loss.backward()
        self.assertIsNotNone(vq.codebook.Z.grad)

    def test_init_codebook_from_residuals(self):
        vq = q.VQVAE(tb.tiny_quantizer_config())
        hr = torch.rand(2, 1, 16, 16)
        hr[1] *= 0.25
        vq.init_codebook(hr)
        with torch.no_grad():
            means = vq.encode(hr).mean(dim=(2, 3))
        z = vq.codebook.Z.detach()
        # coarsest residuals come first and are copied exactly
        for b in range(2):
            dist = (z[:2] - means[b]).norm(dim=-1)
            self.assertLess(float(dist.min()), 1e-5)
        tm = vq.tokenize(hr, use_cac=False)
        self.assertEqual(sorted(tm.indices[0].flatten().tolist()), [0, 1])
