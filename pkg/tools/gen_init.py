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


"""Regenerate the error re-exports in ``thermsr/__init__.py``.

Run after adding a class to ``thermsr/errors/__init__.py``.
"""

import pathlib
import re


BEGIN = '# <ERRORS-AUTOGEN>'
END = '# </ERRORS-AUTOGEN>'


def render(names):
    names_list = '\n'.join(f'    {name},' for name in names)
    all_list = '\n'.join(f'    "{name}",' for name in names)
    return (
        f'''from .errors import (\n{names_list}\n)\n'''
        f'''\n__all__.extend([\n{all_list}\n])'''
    ).splitlines()


def splice(lines, code):
    start = end = -1
    for no, line in enumerate(lines):
        if line.startswith(BEGIN):
            start = no
        elif line.startswith(END):
            end = no

    if start == -1:
        raise RuntimeError(f'could not find the {BEGIN} tag')

    if end == -1:
        raise RuntimeError(f'could not find the {END} tag')

    lines[start + 1:end] = code
    return lines


if __name__ == '__main__':
    root = pathlib.Path(__file__).parent.parent

    errors_fn = root / 'thermsr' / 'errors' / '__init__.py'
    init_fn = root / 'thermsr' / '__init__.py'

    errors_txt = errors_fn.read_text()
    names = re.findall(r'^class\s+(?P<name>\w+)', errors_txt, re.M)

    lines = splice(init_fn.read_text().splitlines(), render(names))
    init_fn.write_text('\n'.join(lines) + '\n')
