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

from thermsr import _testbase as tb
from thermsr import dataio
from thermsr import degrade
from thermsr import enums
from thermsr import errors
from thermsr import guidance
from thermsr.imaging import Image, load_image


class TestKernels(tb.TestCase):

    def test_defocus_normalized_and_symmetric(self):
        for radius in (0.5, 1.0, 1.7, 2.5, 4.2, 6.0):
            with self.annotate(radius=radius):
                k = degrade.defocus_kernel(radius)
                self.assertAllClose(k.sum(), 1.0, atol=1e-9)
                self.assertGreaterEqual(k.min(), 0.0)
                self.assertAllClose(k, np.rot90(k), atol=1e-15)
                self.assertAllClose(k, k.T, atol=1e-15)

    def test_defocus_small_radius_is_near_delta(self):
        k = degrade.defocus_kernel(0.5)
        self.assertEqual(k.shape, (3, 3))
        self.assertGreater(k[1, 1], 0.9)

    def test_motion_horizontal(self):
        k = degrade.motion_kernel(5.0, 0.0)
        c = k.shape[0] // 2
        self.assertAllClose(k[c], [0, 0, 0.2, 0.2, 0.2, 0.2, 0.2, 0, 0],
                            atol=1e-12)
        self.assertAllClose(np.delete(k, c, axis=0), 0.0)
        self.assertAllClose(k, k[:, ::-1], atol=1e-15)

    def test_motion_rotation(self):
        k0 = degrade.motion_kernel(5.0, 0.0)
        k90 = degrade.motion_kernel(5.0, math.pi / 2)
        self.assertAllClose(k90, k0.T, atol=1e-12)

    def test_motion_normalized(self):
        rng = self.rng(1)
        for trial in range(100):
            length = rng.uniform(*degrade.MOTION_RANGE)
            angle = rng.uniform(0.0, math.pi)
            k = degrade.motion_kernel(length, angle)
            self.assertAllClose(k.sum(), 1.0, atol=1e-9)
            self.assertGreaterEqual(k.min(), 0.0)

    def test_spec_ranges(self):
        with self.assertRaises(errors.ValidationError):
            degrade.DegradationSpec(defocus_radius=7.0)
        with self.assertRaises(errors.ValidationError):
            degrade.DegradationSpec(motion_length=1.0)
        with self.assertRaises(errors.ValidationError):
            degrade.DegradationSpec(motion_angle=math.pi)
        with self.assertRaises(errors.ValidationError):
            degrade.DegradationSpec(scale=1)
        spec = degrade.DegradationSpec(kind='motion')
        self.assertIs(spec.kind, enums.Degradation.MOTION)
        self.assertEqual(spec.as_dict()['kind'], 'motion')


class TestDegradePair(tb.TestCase):

    def test_constant_hr(self):
        spec = degrade.DegradationSpec(defocus_radius=0.5, noise_sigma=0.0)
        pair = degrade.degrade_pair(Image(np.full((32, 32), 0.42)), spec)
        self.assertEqual(pair.lr.shape, (8, 8))
        self.assertAllClose(pair.lr.pixels, 0.42, atol=1e-12)

    def test_deterministic(self):
        hr = degrade.synth_scene(3, 32, 32)
        for kind in enums.Degradation:
            spec = degrade.DegradationSpec(kind=kind, seed=9, jitter=True)
            a = degrade.degrade_pair(hr, spec)
            b = degrade.degrade_pair(hr, spec)
            self.assertEqual(a.lr, b.lr)
            self.assertIs(a.degradation, kind)
            self.assertEqual(a.lr.shape, (8, 8))

    def test_affine_commutes(self):
        hr = Image(0.3 + 0.3 * self.rng(2).random((32, 32)))
        spec = degrade.DegradationSpec(defocus_radius=2.0, noise_sigma=0.0)
        base = degrade.degrade_pair(hr, spec).lr.pixels
        mapped = Image(0.5 * hr.pixels + 0.2)
        out = degrade.degrade_pair(mapped, spec).lr.pixels
        self.assertAllClose(out, 0.5 * base + 0.2, atol=1e-12)

    def test_bad_dimensions(self):
        spec = degrade.DegradationSpec()
        with self.assertRaises(errors.IncompatibleDimensionsError):
            degrade.degrade_pair(Image(np.zeros((18, 20))), spec)
        with self.assertRaises(errors.ImageValidationError):
            degrade.degrade_pair(Image(np.zeros((8, 8))), spec)

    def test_random_spec_mix(self):
        n = 2000
        kinds = [degrade.random_spec(s).kind for s in range(n)]
        frac = kinds.count(enums.Degradation.DEFOCUS) / n
        p = 1305 / 1457
        tol = 4 * math.sqrt(p * (1 - p) / n)
        self.assertLess(abs(frac - p), tol)

        only = {enums.Degradation.MOTION: 1.0}
        self.assertTrue(all(degrade.random_spec(s, mix=only).kind
                            is enums.Degradation.MOTION for s in range(20)))

    def test_derive_seed(self):
        self.assertEqual(degrade.derive_seed(1, 2, 3),
                         degrade.derive_seed(1, 2, 3))
        self.assertNotEqual(degrade.derive_seed(1, 2, 3),
                            degrade.derive_seed(1, 3, 2))
        self.assertLess(degrade.derive_seed(2 ** 70, 5), 2 ** 63)


class TestSynthScene(tb.TestCase):

    def test_scene_dynamic_range(self):
        for seed in range(1000):
            img = degrade.synth_scene(seed, 32, 32)
            self.assertGreater(img.pixels.max(), 0.9)
            self.assertLess(img.pixels.min(), 0.1)

    def test_scene_borders_visible(self):
        for seed in range(20):
            img, mask = degrade.synth_scene(seed, 48, 48, return_mask=True)
            border = degrade._polygon_border(mask)
            edges = guidance.edge_map(img).pixels
            self.assertGreater(edges[border].max(), 0.5)

    def test_scene_deterministic(self):
        self.assertEqual(degrade.synth_scene(7, 32, 40),
                         degrade.synth_scene(7, 32, 40))
        self.assertNotEqual(degrade.synth_scene(7, 32, 40),
                            degrade.synth_scene(8, 32, 40))

    def test_scene_too_small(self):
        with self.assertRaises(errors.ImageValidationError):
            degrade.synth_scene(0, 16, 64)


class TestWriteCorpus(tb.TestCase):

    def test_corpus_layout(self):
        out = self.tempdir() / 'corpus'
        manifest = degrade.write_corpus(out, 5, 1, hr_size=32,
                                        scene_labels=True)
        self.assertEqual(len(manifest), 5)
        loaded = dataio.load_manifest(out / 'manifest.jsonl')
        self.assertEqual([r.id for r in loaded],
                         ['00000', '00001', '00002', '00003', '00004'])
        for rec in loaded:
            hr = load_image(loaded.resolve(rec.hr_path))
            lr = load_image(loaded.resolve(rec.lr_path))
            self.assertEqual(hr.shape, (32, 32))
            self.assertEqual(lr.shape, (8, 8))
            self.assertIsNotNone(rec.split)
            self.assertGreaterEqual(len(rec.scenes), 1)
            self.assertEqual(rec.meta['spec']['kind'], rec.degradation.value)
        self.assertEqual(
            sum(1 for r in loaded if r.split is enums.Split.TRAIN), 4)

    def test_corpus_deterministic(self):
        tmp = self.tempdir()
        degrade.write_corpus(tmp / 'a', 3, 11, hr_size=32)
        degrade.write_corpus(tmp / 'b', 3, 11, hr_size=32)
        names = sorted(p.name for p in (tmp / 'a').iterdir())
        self.assertEqual(names, sorted(p.name for p in (tmp / 'b').iterdir()))
        for name in names:
            self.assertEqual((tmp / 'a' / name).read_bytes(),
                             (tmp / 'b' / name).read_bytes())

    def test_lr_matches_stored_hr(self):
        out = self.tempdir()
        manifest = degrade.write_corpus(out, 1, 2, hr_size=32,
                                        noise_sigma=0.0)
        rec = manifest.records[0]
        hr = load_image(manifest.resolve(rec.hr_path))
        spec = degrade.DegradationSpec(**{
            **rec.meta['spec'], 'kind': rec.degradation})
        expected = degrade.degrade_pair(hr, spec).lr.pixels
        lr = load_image(manifest.resolve(rec.lr_path)).pixels
        self.assertAllClose(lr, np.floor(expected * 255 + 0.5) / 255,
                            atol=1e-12)
