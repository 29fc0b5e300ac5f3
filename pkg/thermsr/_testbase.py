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


import contextlib
import functools
import inspect
import os
import pathlib
import tempfile
import unittest

import numpy as np
import torch

from thermsr import backbone
from thermsr import guidance
from thermsr import quantizer
from thermsr.harness import config


SLOW_TESTS = os.getenv('THERMSR_SLOW_TESTS', '') == '1'


def tiny_guidance_config(**kwargs) -> guidance.GuidanceConfig:
    params = dict(encoder_width=8, attn_dim=16, heads=2)
    params.update(kwargs)
    return guidance.GuidanceConfig(**params)


def tiny_quantizer_config(**kwargs) -> quantizer.QuantizerConfig:
    params = dict(codebook_size=16, code_dim=8, rank=4, scales=(1, 2, 4),
                  downsample=4, hidden=16, res_blocks=1, res_channels=8)
    params.update(kwargs)
    return quantizer.QuantizerConfig(**params)


def tiny_backbone_config(**kwargs) -> backbone.BackboneConfig:
    params = dict(layers=2, width=32, heads=2, cond_grid=(2, 2))
    params.update(kwargs)
    return backbone.BackboneConfig(**params)


def tiny_config(run_dir='runs/test', **overrides) -> config.ExperimentConfig:
    """A 16x16 HR / 4x4 LR experiment that trains in seconds.

    ``overrides`` use dotted keys: ``tiny_config(**{'optimizer.lr': 1e-2})``.
    """
    cfg = config.ExperimentConfig(
        guidance=tiny_guidance_config(),
        quantizer=tiny_quantizer_config(),
        backbone=tiny_backbone_config(),
        data=config.DataConfig(synth_count=4, hr_size=32, crop=16,
                               split='all'),
        optimizer=config.OptimizerConfig(
            batch_size=2, iterations=4, vqvae_iterations=4, log_every=2),
        run_dir=str(run_dir),
    )
    if overrides:
        cfg = cfg.with_overrides(**overrides)
    return cfg


class TestCaseMeta(type(unittest.TestCase)):

    @staticmethod
    def _iter_methods(ns):
        for methname, meth in ns.items():
            if methname.startswith('test_') and inspect.isfunction(meth):
                yield methname, meth

    @classmethod
    def wrap(mcls, meth):
        @functools.wraps(meth)
        def wrapper(self, *args, __meth__=meth, **kwargs):
            # Every test starts from the same global RNG state.
            torch.manual_seed(0)
            np.random.seed(0)
            return __meth__(self, *args, **kwargs)

        return wrapper

    def __new__(mcls, name, bases, ns):
        for methname, meth in list(mcls._iter_methods(ns)):
            ns[methname] = mcls.wrap(meth)
        cls = super().__new__(mcls, name, bases, ns)
        if ns.get('SLOW') and not SLOW_TESTS:
            cls = unittest.skip('set THERMSR_SLOW_TESTS=1 to run')(cls)
        return cls


class TestCase(unittest.TestCase, metaclass=TestCaseMeta):

    SLOW = False

    @staticmethod
    def rng(seed: int = 0) -> np.random.Generator:
        return np.random.default_rng(seed)

    def tempdir(self) -> pathlib.Path:
        tmp = tempfile.TemporaryDirectory(prefix='thermsr-test-')
        self.addCleanup(tmp.cleanup)
        return pathlib.Path(tmp.name)

    def assertAllClose(self, actual, expected, *, rtol=1e-7, atol=0.0,
                       msg=None):
        if isinstance(actual, torch.Tensor):
            actual = actual.detach().cpu().numpy()
        if isinstance(expected, torch.Tensor):
            expected = expected.detach().cpu().numpy()
        try:
            np.testing.assert_allclose(actual, expected, rtol=rtol,
                                       atol=atol)
        except AssertionError as e:
            raise self.failureException(
                self._formatMessage(msg, str(e))) from None

    def assertGradcheck(self, fn, *inputs, eps=1e-6, atol=1e-5):
        """Finite-difference gradient check in double precision."""
        inputs = tuple(
            x.detach().double().requires_grad_(True)
            if isinstance(x, torch.Tensor) else x
            for x in inputs)
        self.assertTrue(torch.autograd.gradcheck(
            fn, inputs, eps=eps, atol=atol, raise_exception=True))

    def add_fail_notes(self, **kwargs):
        if not hasattr(self, 'fail_notes'):
            self.fail_notes = {}
        self.fail_notes.update(kwargs)

    @contextlib.contextmanager
    def annotate(self, **kwargs):
        # Notes given here apply only to failures inside the block.
        saved = dict(getattr(self, 'fail_notes', {}))
        self.add_fail_notes(**kwargs)
        try:
            yield
        finally:
            self.fail_notes = saved

    def _formatMessage(self, msg, standardMsg):
        text = super()._formatMessage(msg, standardMsg)
        notes = getattr(self, 'fail_notes', None)
        if notes:
            text += ''.join(f'\n  {k}: {v}' for k, v in notes.items())
        return text

    @contextlib.contextmanager
    def assertRaisesRegex(self, exception, regex, msg=None,
                          **kwargs):
        with super().assertRaisesRegex(exception, regex, msg=msg):
            try:
                yield
            except BaseException as e:
                if isinstance(e, exception):
                    for attr_name, expected_val in kwargs.items():
                        val = getattr(e, attr_name)
                        if val != expected_val:
                            raise self.failureException(
                                f'{exception.__name__} context attribute '
                                f'{attr_name!r} is {val} (expected '
                                f'{expected_val!r})') from e
                raise
