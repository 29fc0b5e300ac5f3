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
import typing

from . import enums
from . import errors


class LossWeights:
    """An immutable set of weights for the combined training objective."""
    __slots__ = ['_mse', '_toc', '_toc_patch']

    def __init__(
        self,
        lambda1: float = 0.2,
        lambda2: float = 0.8,
        toc_patch: int = 8,
    ):
        for name, value in (('lambda1', lambda1), ('lambda2', lambda2)):
            if not math.isfinite(value) or value < 0:
                raise errors.ConfigurationError(
                    f'{name} must be a finite non-negative number, '
                    f'got {value!r}')
        if not isinstance(toc_patch, int) or toc_patch < 1:
            raise errors.ConfigurationError(
                f'toc_patch must be a positive integer, got {toc_patch!r}')
        self._mse = float(lambda1)
        self._toc = float(lambda2)
        self._toc_patch = toc_patch

    @classmethod
    def defaults(cls):
        return cls()

    @property
    def lambda1(self) -> float:
        return self._mse

    @property
    def lambda2(self) -> float:
        return self._toc

    @property
    def toc_patch(self) -> int:
        return self._toc_patch

    def with_lambda1(self, value: float) -> 'LossWeights':
        return LossWeights(value, self._toc, self._toc_patch)

    def with_lambda2(self, value: float) -> 'LossWeights':
        return LossWeights(self._mse, value, self._toc_patch)

    def with_toc_patch(self, value: int) -> 'LossWeights':
        return LossWeights(self._mse, self._toc, value)

    def as_dict(self) -> typing.Dict[str, typing.Any]:
        return {
            'lambda1': self._mse,
            'lambda2': self._toc,
            'toc_patch': self._toc_patch,
        }

    def __eq__(self, other):
        if not isinstance(other, LossWeights):
            return NotImplemented
        return (
            self._mse == other._mse
            and self._toc == other._toc
            and self._toc_patch == other._toc_patch
        )

    def __hash__(self):
        return hash((self._mse, self._toc, self._toc_patch))

    def __repr__(self):
        return (
            f'<{self.__class__.__name__} '
            f'lambda1:{self._mse}, '
            f'lambda2:{self._toc}, '
            f'toc_patch:{self._toc_patch}>'
        )


class Ablations:
    """Switches that disable one component of the guided model."""
    __slots__ = ['_use_tsg', '_use_cac', '_use_toc']

    def __init__(
        self,
        use_tsg: bool = True,
        use_cac: bool = True,
        use_toc: bool = True,
    ):
        self._use_tsg = bool(use_tsg)
        self._use_cac = bool(use_cac)
        self._use_toc = bool(use_toc)

    @classmethod
    def defaults(cls):
        return cls()

    @classmethod
    def from_names(cls, names: typing.Iterable[str]) -> 'Ablations':
        result = cls.defaults()
        for name in names:
            result = result.with_ablation(name)
        return result

    @property
    def use_tsg(self) -> bool:
        return self._use_tsg

    @property
    def use_cac(self) -> bool:
        return self._use_cac

    @property
    def use_toc(self) -> bool:
        return self._use_toc

    def with_ablation(
        self, ablation: typing.Union[str, enums.Ablation]
    ) -> 'Ablations':
        try:
            ablation = enums.Ablation(ablation)
        except ValueError:
            raise errors.ConfigurationError(
                f'unknown ablation {ablation!r}; expected one of '
                + ', '.join(a.value for a in enums.Ablation)
            ) from None
        flags = {
            'use_tsg': self._use_tsg,
            'use_cac': self._use_cac,
            'use_toc': self._use_toc,
        }
        if ablation is enums.Ablation.NO_TSG:
            flags['use_tsg'] = False
        elif ablation is enums.Ablation.NO_CAC:
            flags['use_cac'] = False
        else:
            flags['use_toc'] = False
        return Ablations(**flags)

    def names(self) -> typing.List[str]:
        rv = []
        if not self._use_tsg:
            rv.append(enums.Ablation.NO_TSG.value)
        if not self._use_cac:
            rv.append(enums.Ablation.NO_CAC.value)
        if not self._use_toc:
            rv.append(enums.Ablation.NO_TOC.value)
        return rv

    def as_dict(self) -> typing.Dict[str, bool]:
        return {
            'use_tsg': self._use_tsg,
            'use_cac': self._use_cac,
            'use_toc': self._use_toc,
        }

    def __eq__(self, other):
        if not isinstance(other, Ablations):
            return NotImplemented
        return self.as_dict() == other.as_dict()

    def __hash__(self):
        return hash((self._use_tsg, self._use_cac, self._use_toc))

    def __repr__(self):
        return (
            f'<{self.__class__.__name__} '
            f'use_tsg:{self._use_tsg}, '
            f'use_cac:{self._use_cac}, '
            f'use_toc:{self._use_toc}>'
        )


class SamplerOptions:
    """Token sampling rule used by scale-by-scale generation."""
    __slots__ = ['_kind', '_top_k', '_temperature']

    def __init__(
        self,
        kind: typing.Union[str, enums.SamplerKind] = enums.SamplerKind.ARGMAX,
        top_k: int = 1,
        temperature: float = 1.0,
    ):
        kind = enums.SamplerKind(kind)
        if top_k < 1:
            raise errors.ConfigurationError(
                f'top_k must be at least 1, got {top_k}')
        if not temperature > 0:
            raise errors.ConfigurationError(
                f'temperature must be positive, got {temperature}')
        self._kind = kind
        self._top_k = int(top_k)
        self._temperature = float(temperature)

    @classmethod
    def defaults(cls):
        return cls()

    @classmethod
    def topk(cls, k: int, temperature: float = 1.0) -> 'SamplerOptions':
        return cls(enums.SamplerKind.TOPK, k, temperature)

    @property
    def kind(self) -> enums.SamplerKind:
        return self._kind

    @property
    def top_k(self) -> int:
        return self._top_k

    @property
    def temperature(self) -> float:
        return self._temperature

    def is_deterministic(self) -> bool:
        return self._kind is enums.SamplerKind.ARGMAX or self._top_k == 1

    def __eq__(self, other):
        if not isinstance(other, SamplerOptions):
            return NotImplemented
        return (
            self._kind is other._kind
            and self._top_k == other._top_k
            and self._temperature == other._temperature
        )

    def __hash__(self):
        return hash((self._kind, self._top_k, self._temperature))

    def __repr__(self):
        if self._kind is enums.SamplerKind.ARGMAX:
            return f'<{self.__class__.__name__} argmax>'
        return (
            f'<{self.__class__.__name__} '
            f'topk:{self._top_k}, '
            f'temperature:{self._temperature}>'
        )
