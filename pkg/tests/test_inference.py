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


import numpy as np

from thermsr import _testbase as tb
from thermsr import degrade
from thermsr import enums
from thermsr import errors
from thermsr import options
from thermsr.harness import checkpoint
from thermsr.harness import inference
from thermsr.harness.model import ThermSR
from thermsr.imaging import Image, load_image


class InferenceTestCase(tb.TestCase):

    def setUp(self):
        super().setUp()
        self.cfg = tb.tiny_config()
        self.model = ThermSR(self.cfg).eval()

    def save_ar(self, kind='ar'):
        path = self.tempdir() / 'ar.bin'
        checkpoint.save_checkpoint(
            path, self.model.state_dict(), kind=kind,
            config=self.cfg.to_dict(), config_hash=self.cfg.config_hash(),
            iteration=0)
        return path


class TestInfer(InferenceTestCase):

    def test_single_tile(self):
        lr = Image(self.rng(1).random((4, 4)))
        sr = inference.infer(self.model, lr)
        self.assertEqual(sr.shape, (16, 16))
        self.assertGreaterEqual(sr.pixels.min(), 0.0)
        self.assertLessEqual(sr.pixels.max(), 1.0)

    def test_tiled_input(self):
        lr = Image(self.rng(2).random((8, 12)), bit_depth_src=16)
        sr = inference.infer(self.model, lr)
        self.assertEqual(sr.shape, (32, 48))
        self.assertEqual(sr.bit_depth_src, 16)
        corner = inference.infer(self.model, Image(lr.pixels[4:8, 8:12]))
        self.assertAllClose(sr.pixels[16:32, 32:48], corner.pixels)

    def test_argmax_is_deterministic(self):
        lr = Image(self.rng(3).random((4, 4)))
        a = inference.infer(self.model, lr)
        b = inference.infer(self.model, lr, seed=99)
        self.assertEqual(a, b)

    def test_topk_is_seeded(self):
        lr = Image(self.rng(4).random((4, 4)))
        sampler = options.SamplerOptions.topk(4)
        a = inference.infer(self.model, lr, sampler=sampler, seed=5)
        b = inference.infer(self.model, lr, sampler=sampler, seed=5)
        self.assertEqual(a, b)

    def test_incompatible_dimensions(self):
        with self.assertRaises(errors.IncompatibleDimensionsError):
            inference.infer(self.model, Image(np.zeros((6, 4))))

    def test_from_checkpoint(self):
        path = self.save_ar()
        lr = Image(self.rng(5).random((4, 4)))
        self.assertEqual(inference.infer(path, lr),
                         inference.infer(self.model, lr))
        model, cfg = inference.load_model(path)
        self.assertFalse(model.training)
        self.assertEqual(cfg.config_hash(), self.cfg.config_hash())

    def test_rejects_vqvae_checkpoint(self):
        path = self.save_ar(kind='vqvae')
        with self.assertRaises(errors.IncompatibleCheckpointError):
            inference.load_model(path)
        ckpt = checkpoint.load_checkpoint(path)
        with self.assertRaises(errors.IncompatibleCheckpointError):
            inference.load_model(ckpt)


class TestInferCorpus(InferenceTestCase):

    def test_writes_predictions(self):
        data = self.tempdir()
        manifest = degrade.write_corpus(data, 5, 2, hr_size=32)
        pred = self.tempdir()
        heat = self.tempdir()
        written = inference.infer_corpus(
            self.save_ar(), manifest, pred, split=None, guidance_dir=heat)
        self.assertEqual(sorted(p.name for p in written),
                         sorted(f'{r.id}_SR.png' for r in manifest))
        for p in written:
            self.assertEqual(load_image(p).shape, (32, 32))
        self.assertEqual(len(list(heat.glob('*_heat.png'))), 5)
        self.assertEqual(len(list(heat.glob('*_edge.png'))), 5)

        test_only = inference.infer_corpus(
            self.save_ar(), manifest, self.tempdir())
        self.assertEqual(
            [p.name for p in test_only],
            [f'{r.id}_SR.png' for r in manifest.by_split(enums.Split.TEST)])

    def test_dump_guidance(self):
        lr = Image(np.full((4, 4), 0.3))
        heat, edge = inference.dump_guidance(
            lr, self.cfg, self.tempdir() / 'g', 'x')
        self.assertEqual((heat.name, edge.name), ('x_heat.png', 'x_edge.png'))
        self.assertEqual(load_image(edge).shape, (4, 4))
        self.assertEqual(float(load_image(edge).pixels.max()), 0.0)
