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
import shutil

import numpy as np

from thermsr import _testbase as tb
from thermsr import degrade
from thermsr import enums
from thermsr import errors
from thermsr import metrics
from thermsr.imaging import Image


class TestPSNR(tb.TestCase):

    def test_identical_is_capped(self):
        img = Image(self.rng().random((8, 8)))
        self.assertEqual(metrics.psnr(img, img), 100.0)

    def test_closed_forms(self):
        a = np.zeros((4, 4))
        self.assertAllClose(metrics.psnr(a, np.full((4, 4), 0.1)), 20.0,
                            atol=1e-6)
        self.assertAllClose(metrics.psnr(a, np.ones((4, 4)), peak=255.0),
                            20 * math.log10(255), atol=1e-9)
        self.assertAllClose(20 * math.log10(255), 48.1308, atol=1e-4)

    def test_symmetry_and_shift(self):
        rng = self.rng(1)
        a, b = rng.random((16, 16)), rng.random((16, 16))
        self.assertEqual(metrics.psnr(a, b), metrics.psnr(b, a))
        self.assertAllClose(metrics.psnr(a + 3.0, b + 3.0),
                            metrics.psnr(a, b), rtol=1e-9)

    def test_shape_mismatch(self):
        with self.assertRaises(errors.ShapeMismatchError):
            metrics.psnr(np.zeros((4, 4)), np.zeros((4, 5)))


class TestSSIM(tb.TestCase):

    def test_self_similarity(self):
        x = self.rng(2).random((24, 24))
        self.assertAllClose(metrics.ssim(x, x), 1.0, atol=1e-9)

    def test_inverted_binary_image(self):
        x = (self.rng(3).random((24, 24)) > 0.5).astype(np.float64)
        self.assertLess(metrics.ssim(x, 1.0 - x), 0.5)

    def test_constants_follow_luminance_term(self):
        mu1, mu2 = 0.4, 0.5
        c1 = (0.01 * 1.0) ** 2
        expected = (2 * mu1 * mu2 + c1) / (mu1 ** 2 + mu2 ** 2 + c1)
        got = metrics.ssim(np.full((16, 16), mu1), np.full((16, 16), mu2))
        self.assertAllClose(got, expected, atol=1e-9)

    def test_symmetry(self):
        rng = self.rng(4)
        a, b = rng.random((16, 16)), rng.random((16, 16))
        self.assertAllClose(metrics.ssim(a, b), metrics.ssim(b, a),
                            atol=1e-12)

    def test_too_small(self):
        with self.assertRaises(errors.ImageValidationError):
            metrics.ssim(np.zeros((10, 16)), np.zeros((10, 16)))


class TestTOCViolationRate(tb.TestCase):

    def _distinct(self, seed):
        means = self.rng(seed).permutation(16).reshape(4, 4) / 16.0
        return np.kron(means, np.ones((8, 8)))

    def test_identical(self):
        hr = self._distinct(0)
        self.assertEqual(metrics.toc_violation_rate(hr, hr), 0.0)

    def test_inversion_violates_every_pair(self):
        hr = self._distinct(1)
        self.assertEqual(metrics.toc_violation_rate(1.0 - hr, hr), 1.0)

    def test_hand_enumerated_pairs(self):
        s = np.array([[1.0, 2.0], [3.0, 4.0]])
        h = np.array([[2.0, 1.0], [3.0, 4.0]])
        self.assertEqual(metrics.toc_violation_rate(s, h, p=1), 0.25)

    def test_monotone_map_invariance(self):
        rng = self.rng(5)
        sr, hr = rng.random((32, 32)), rng.random((32, 32))
        base = metrics.toc_violation_rate(sr, hr)
        self.assertEqual(metrics.toc_violation_rate(sr, 2.0 * hr + 1.0),
                         base)
        self.assertEqual(metrics.toc_violation_rate(sr * 3.0, hr), base)

    def test_single_patch(self):
        x = self.rng(6).random((8, 8))
        self.assertEqual(metrics.toc_violation_rate(x, 1.0 - x), 0.0)


class TestEvalCorpus(tb.TestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        import tempfile
        cls._tmp = tempfile.TemporaryDirectory(prefix='thermsr-test-')
        cls.manifest = degrade.write_corpus(
            cls._tmp.name, 5, 11, hr_size=32)

    @classmethod
    def tearDownClass(cls):
        cls._tmp.cleanup()
        super().tearDownClass()

    def _predict(self, records):
        pred = self.tempdir()
        for rec in records:
            shutil.copy(self.manifest.resolve(rec.hr_path),
                        pred / f'{rec.id}_SR.png')
        return pred

    def test_perfect_predictions(self):
        pred = self._predict(self.manifest.records)
        report = metrics.eval_corpus(pred, self.manifest, split=None)
        self.assertEqual(len(report.rows), 5)
        self.assertEqual(report.missing, ())
        agg = report.aggregate
        self.assertEqual(agg['psnr_db'], 100.0)
        self.assertAllClose(agg['ssim'], 1.0, atol=1e-9)
        self.assertEqual(agg['toc_violation_rate'], 0.0)

    def test_missing_prediction(self):
        pred = self._predict(self.manifest.records[1:])
        report = metrics.eval_corpus(pred, self.manifest, split=None)
        self.assertEqual(report.missing, (self.manifest.records[0].id,))
        self.assertEqual(len(report.rows), 4)

    def test_test_split_only(self):
        pred = self._predict(self.manifest.records)
        report = metrics.eval_corpus(pred, self.manifest)
        tested = [r.id for r in self.manifest.by_split(enums.Split.TEST)]
        self.assertEqual([r.id for r in report.rows], tested)

    def test_empty_report(self):
        report = metrics.eval_corpus(
            self.tempdir(), self.manifest.with_records(()))
        self.assertEqual(report.rows, ())
        self.assertEqual(report.aggregate, {
            'psnr_db': None, 'ssim': None, 'toc_violation_rate': None})

    def test_serializations(self):
        pred = self._predict(self.manifest.records)
        report = metrics.eval_corpus(
            pred, self.manifest, split=None, baseline=True,
            metadata={'config_hash': 'abc'})
        self.assertEqual(metrics.EvalReport.loads(report.dumps()), report)
        again = metrics.eval_corpus(
            pred, self.manifest, split=None, baseline=True,
            metadata={'config_hash': 'abc'})
        self.assertEqual(report.dumps(), again.dumps())
        self.assertEqual(report.to_csv(), again.to_csv())

        lines = report.to_csv().splitlines()
        self.assertEqual(
            lines[0],
            'id,degradation,psnr_db,ssim,toc_violation_rate,'
            'lpips,musiq,maniqa')
        self.assertEqual(len(lines), 1 + 6 + 6)
        self.assertTrue(lines[6].startswith('__mean__,'))
        self.assertTrue(lines[-1].startswith('bicubic:__mean__,'))
        self.assertEqual(len(report.baseline_rows), 5)
        for row in report.baseline_rows:
            self.assertLess(row.psnr_db, 100.0)


class TestScanlineProfile(tb.TestCase):

    def test_profile_columns(self):
        hr = Image(self.rng(7).random((16, 16)))
        lr = Image(np.full((4, 4), 0.5))
        out = metrics.scanline_profile(hr, lr, hr, 3).splitlines()
        self.assertEqual(out[0], 'x,hr,lr_bicubic,sr')
        self.assertEqual(len(out), 17)
        x, h, up, s = out[5].split(',')
        self.assertEqual((int(x), float(h)), (4, hr.pixels[3, 4]))
        self.assertEqual(float(s), float(h))
        self.assertAllClose(float(up), 0.5, atol=1e-9)

    def test_bad_row(self):
        hr = Image(np.zeros((16, 16)))
        lr = Image(np.zeros((4, 4)))
        with self.assertRaises(errors.ValidationError):
            metrics.scanline_profile(hr, lr, hr, 16)
        with self.assertRaises(errors.ShapeMismatchError):
            metrics.scanline_profile(hr, lr, Image(np.zeros((8, 8))), 0)