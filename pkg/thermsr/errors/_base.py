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


import io
import os
import traceback
import unicodedata
import warnings

__all__ = (
    'ThermSRError', 'ThermSRMessage',
)


class Meta(type):

    def __new__(mcls, name, bases, dct):
        cls = super().__new__(mcls, name, bases, dct)

        code = dct.get('_code')
        if code is not None:
            prev = mcls._index.get(code)
            if prev is not None:
                raise TypeError(
                    f'{name} reuses code {code:#010x} of {prev.__name__}')
            mcls._index[code] = cls

        return cls


class ThermSRMessageMeta(Meta):

    _index = {}


class ThermSRMessage(Warning, metaclass=ThermSRMessageMeta):

    _code = None

    def get_code(self):
        return self._code


class ThermSRErrorMeta(Meta):

    _index = {}


class ThermSRError(Exception, metaclass=ThermSRErrorMeta):

    _code = None
    _source = None

    def __init__(self, *args, **kwargs):
        self._attrs = {}
        super().__init__(*args, **kwargs)

    @property
    def _line(self):
        # not a stable API method
        return int(self._attrs.get(FIELD_LINE, -1))

    @property
    def _path(self):
        # not a stable API method
        return self._attrs.get(FIELD_PATH)

    @property
    def _hint(self):
        # not a stable API method
        return self._attrs.get(FIELD_HINT)

    def get_code(self):
        return self._code

    def with_source(self, source, *, line, path=None, hint=None):
        """Attach the offending text so ``str()`` can render an excerpt."""
        self._source = source
        self._attrs[FIELD_LINE] = line
        if path is not None:
            self._attrs[FIELD_PATH] = str(path)
        if hint is not None:
            self._attrs[FIELD_HINT] = hint
        return self

    def __str__(self):
        msg = super().__str__()
        if SHOW_HINT and self._source is not None and self._line > 0:
            try:
                return _format_error(
                    msg,
                    self._source,
                    self._line,
                    self._path or "?",
                    self._hint or "error",
                )
            except Exception:
                return "".join(
                    (
                        msg,
                        LINESEP,
                        LINESEP,
                        "During formatting of the above exception, "
                        "another exception occurred:",
                        LINESEP,
                        LINESEP,
                        traceback.format_exc(),
                    )
                )
        else:
            return msg


def _format_error(msg, source, line, path, hint):
    c = get_color()
    rv = io.StringIO()
    rv.write(f"{c.BOLD}{msg}{c.ENDC}{LINESEP}")
    lines = source.splitlines()
    num_len = len(str(line))
    rv.write(f"{c.BLUE}{'':>{num_len}} ┌─{c.ENDC} {path}:{line}{LINESEP}")
    rv.write(f"{c.BLUE}{'':>{num_len}} │ {c.ENDC}{LINESEP}")
    text = lines[line - 1] if line <= len(lines) else ''
    text = repr(text)[1:-1]
    rv.write(f"{c.BLUE}{line:>{num_len}} │   {c.ENDC}{text}{LINESEP}")
    size = max(1, _unicode_width(text))
    rv.write(f"{c.BLUE}{'':>{num_len}} │   "
             f"{c.FAIL}{'^' * size} {hint}{c.ENDC}")
    return rv.getvalue()


def _unicode_width(text):
    return sum(0 if unicodedata.category(c) in ('Mn', 'Cf') else
               2 if unicodedata.east_asian_width(c) == "W" else 1
               for c in text)


FIELD_HINT = 0x_00_01
FIELD_LINE = 0x_FF_F3
FIELD_PATH = 0x_FF_F4


LINESEP = os.linesep

try:
    SHOW_HINT = {"default": True, "enabled": True, "disabled": False}[
        os.getenv("THERMSR_ERROR_HINT", "default")
    ]
except KeyError:
    warnings.warn(
        "THERMSR_ERROR_HINT can only be one of: default, enabled or disabled"
    )
    SHOW_HINT = False


from thermsr.color import get_color
