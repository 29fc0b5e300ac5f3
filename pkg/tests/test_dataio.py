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


import json
import warnings

import numpy as np

from thermsr import _testbase as tb
from thermsr import dataio
from thermsr import degrade
from thermsr import enums
from thermsr import errors
from thermsr.imaging import Image, load_image, save_image


def _record(rid, **kwargs):
    data = {
        'id': rid,
        'lr_path': f'{rid}_LR.png',
        'hr_path': f'{rid}_HR.png',
        'degradation': 'defocus',
        'scenes': [],
        'split': 'train',
    }
    data.update(kwargs)
    return data


class TestManifest(tb.TestCase):

    def _write(self, lines, files=()):
        tmp = self.tempdir()
        for name in files:
            save_image(Image(np.zeros((4, 4))), tmp / name)
        path = tmp / 'manifest.jsonl'
        path.write_text(''.join(
            (line if isinstance(line, str) else json.dumps(line)) + '\n'
            for line in lines))
        return path

    def test_empty_manifest(self):
        path = self._write([])
        self.assertEqual(len(dataio.load_manifest(path)), 0)

    def test_multi_label_record(self):
        path = self._write([_record('a', scenes=['car', 'building'])],
                           files=['a_LR.png', 'a_HR.png'])
        rec = dataio.load_manifest(path).records[0]
        self.assertEqual(rec.scenes,
                         (enums.Scene.CAR, enums.Scene.BUILDING))

    def test_unknown_category(self):
        path = self._write([
            {'manifest_version': '1'},
            _record('a', scenes=['dog']),
        ], files=['a_LR.png', 'a_HR.png'])
        with self.assertRaisesRegex(errors.UnknownCategoryError, 'dog',
                                    _line=2):
            dataio.load_manifest(path)

    def test_duplicate_id(self):
        path = self._write([_record('a'), _record('a')],
                           files=['a_LR.png', 'a_HR.png'])
        with self.assertRaisesRegex(errors.DuplicateRecordError,
                                    'duplicate', _line=2):
            dataio.load_manifest(path)

    def test_missing_file(self):
        path = self._write([_record('a')], files=['a_LR.png'])
        with self.assertRaisesRegex(errors.MissingFileError, 'a_HR.png',
                                    _line=1):
            dataio.load_manifest(path)
        self.assertEqual(
            len(dataio.load_manifest(path, check_files=False)), 1)

    def test_malformed_lines(self):
        path = self._write(['{"id": '])
        with self.assertRaisesRegex(errors.ManifestError, 'JSON'):
            dataio.load_manifest(path)
        path = self._write([_record('a', extra=1)])
        with self.assertRaisesRegex(errors.ManifestError, 'extra'):
            dataio.load_manifest(path, check_files=False)
        path = self._write([_record('a', degradation='haze')])
        with self.assertRaisesRegex(errors.ManifestError, 'haze'):
            dataio.load_manifest(path, check_files=False)

    def test_error_names_the_file(self):
        path = self._write([_record('a', split='val')])
        with self.assertRaises(errors.ManifestError) as ctx:
            dataio.load_manifest(path, check_files=False)
        self.assertEqual(ctx.exception._path, str(path))

    def test_unreadable_manifest(self):
        with self.assertRaises(errors.ImageIOError):
            dataio.load_manifest(self.tempdir() / 'none.jsonl')

    def test_round_trip(self):
        path = self._write([
            _record('a', scenes=['road'], meta={'k': [1, 2]}),
            _record('b', degradation='motion', split='test'),
        ], files=['a_LR.png', 'a_HR.png', 'b_LR.png', 'b_HR.png'])
        first = dataio.load_manifest(path)
        dataio.save_manifest(first, path)
        second = dataio.load_manifest(path)
        self.assertEqual(first.records, second.records)
        self.assertEqual(second.version, '1')

    def test_save_elsewhere_rewrites_paths(self):
        path = self._write([_record('a')], files=['a_LR.png', 'a_HR.png'])
        m = dataio.load_manifest(path)
        sub = path.parent / 'sub'
        sub.mkdir()
        dataio.save_manifest(m, sub / 'm.jsonl')
        moved = dataio.load_manifest(sub / 'm.jsonl')
        self.assertEqual(moved.records[0].lr_path, '../a_LR.png')

    def test_counts(self):
        m = dataio.Manifest(tuple(
            dataio.validate_record(r) for r in (
                _record('a', scenes=['car']),
                _record('b', scenes=['car', 'road'], degradation='motion'),
            )))
        self.assertEqual(m.scene_counts()[enums.Scene.CAR], 2)
        self.assertEqual(m.scene_counts()[enums.Scene.BUS], 0)
        self.assertEqual(m.degradation_counts(), {
            enums.Degradation.DEFOCUS: 1, enums.Degradation.MOTION: 1})
        self.assertIsNone(m.get('c'))
        self.assertEqual(m.get('b').id, 'b')


class TestSplit(tb.TestCase):

    def _manifest(self, n_defocus, n_motion):
        recs = [dataio.validate_record(_record(f'd{i}'))
                for i in range(n_defocus)]
        recs += [dataio.validate_record(_record(f'm{i}',
                                                degradation='motion'))
                 for i in range(n_motion)]
        return dataio.Manifest(tuple(recs))

    def test_benchmark_split_sizes(self):
        m = self._manifest(1305, 152)
        train, test = dataio.split(m, 1192 / 1457, seed=0)
        self.assertEqual((len(train), len(test)), (1192, 265))
        train_ids = {r.id for r in train}
        test_ids = {r.id for r in test}
        self.assertFalse(train_ids & test_ids)
        self.assertEqual(train_ids | test_ids, {r.id for r in m})
        self.assertTrue(all(r.split is enums.Split.TRAIN for r in train))
        self.assertTrue(all(r.split is enums.Split.TEST for r in test))

        frac = 1192 / 1457
        counts = train.degradation_counts()
        self.assertLessEqual(abs(counts[enums.Degradation.DEFOCUS]
                                 - frac * 1305), 1)
        self.assertLessEqual(abs(counts[enums.Degradation.MOTION]
                                 - frac * 152), 1)

    def test_split_deterministic(self):
        m = self._manifest(20, 7)
        a, _ = dataio.split(m, 0.7, seed=5)
        b, _ = dataio.split(m, 0.7, seed=5)
        c, _ = dataio.split(m, 0.7, seed=6)
        self.assertEqual([r.id for r in a], [r.id for r in b])
        self.assertNotEqual([r.id for r in a], [r.id for r in c])

    def test_bad_fraction(self):
        with self.assertRaises(errors.ConfigurationError):
            dataio.split(self._manifest(2, 0), 1.0, seed=0)


class TestBatchIter(tb.TestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        import tempfile
        cls._tmp = tempfile.TemporaryDirectory(prefix='thermsr-test-')
        cls.manifest = degrade.write_corpus(
            cls._tmp.name, 5, 3, hr_size=32)

    @classmethod
    def tearDownClass(cls):
        cls._tmp.cleanup()
        super().tearDownClass()

    def test_batch_shapes(self):
        batches = list(dataio.batch_iter(self.manifest, 2, (16, 16), 0))
        self.assertEqual([b.lr.shape[0] for b in batches], [2, 2, 1])
        self.assertEqual(tuple(batches[0].lr.shape), (2, 1, 4, 4))
        self.assertEqual(tuple(batches[0].hr.shape), (2, 1, 16, 16))
        self.assertEqual(sorted(i for b in batches for i in b.ids),
                         sorted(r.id for r in self.manifest))

    def test_drop_last_and_epochs(self):
        batches = list(dataio.batch_iter(
            self.manifest, 2, (16, 16), 0, epochs=3, drop_last=True))
        self.assertEqual(len(batches), 6)

    def test_deterministic_and_worker_independent(self):
        def stream(workers, seed=1):
            return list(dataio.batch_iter(
                self.manifest, 2, (16, 16), seed, epochs=2,
                workers=workers))

        a, b, c = stream(0), stream(0), stream(3)
        for x, y, z in zip(a, b, c):
            self.assertEqual(x.ids, y.ids)
            self.assertEqual(x.ids, z.ids)
            self.assertEqual(x.windows, z.windows)
            self.assertTrue(bool((x.hr == z.hr).all()))
            self.assertTrue(bool((x.lr == y.lr).all()))
        self.assertNotEqual([x.windows for x in a],
                            [x.windows for x in stream(0, seed=2)])

    def test_crops_are_aligned(self):
        for batch in dataio.batch_iter(self.manifest, 5, (16, 16), 4):
            for k, (rid, (ly, lx)) in enumerate(zip(batch.ids,
                                                    batch.windows)):
                rec = self.manifest.get(rid)
                hr = load_image(self.manifest.resolve(rec.hr_path)).pixels
                lr = load_image(self.manifest.resolve(rec.lr_path)).pixels
                self.assertAllClose(
                    batch.hr[k, 0].numpy(),
                    hr[ly * 4:ly * 4 + 16, lx * 4:lx * 4 + 16], atol=1e-6)
                self.assertAllClose(
                    batch.lr[k, 0].numpy(),
                    lr[ly:ly + 4, lx:lx + 4], atol=1e-6)
            up = np.kron(batch.lr[:, 0].numpy(), np.ones((1, 4, 4)))
            corr = np.corrcoef(up.ravel(), batch.hr[:, 0].numpy().ravel())
            self.assertGreater(corr[0, 1], 0.0)

    def test_oversized_crop_is_skipped(self):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter('always')
            batches = list(dataio.batch_iter(self.manifest, 2, (64, 64), 0))
        self.assertEqual(batches, [])
        self.assertTrue(any(issubclass(w.category,
                                       errors.SkippedRecordWarning)
                            for w in caught))

    def test_mismatched_pair_is_skipped(self):
        tmp = self.tempdir()
        save_image(Image(np.zeros((16, 16))), tmp / 'x_HR.png')
        save_image(Image(np.zeros((8, 8))), tmp / 'x_LR.png')
        bad = dataio.validate_record(_record('x'))
        good = self.manifest.records[0]
        good = dataio.validate_record({
            **good.to_json(),
            'lr_path': str(self.manifest.resolve(good.lr_path)),
            'hr_path': str(self.manifest.resolve(good.hr_path)),
        })
        m = dataio.Manifest((bad, good), tmp)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter('always')
            batches = list(dataio.batch_iter(m, 2, (16, 16), 0))
        self.assertEqual([b.ids for b in batches], [(good.id,)])
        self.assertTrue(any(issubclass(w.category,
                                       errors.SkippedRecordWarning)
                            for w in caught))

    def test_crop_must_divide(self):
        with self.assertRaises(errors.IncompatibleDimensionsError):
            list(dataio.batch_iter(self.manifest, 2, (18, 16), 0))
