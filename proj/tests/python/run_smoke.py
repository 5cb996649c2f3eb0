# Copyright 2026 The SER Lab Authors. All Rights Reserved.
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
"""Runs the Python smoke tests; exits 77 (skipped) when ser_lab is not installed."""

import sys

try:
    import ser_lab  # noqa: F401
except ImportError:
    print("ser_lab is not installed; run `pip install --no-build-isolation .` first")
    sys.exit(77)

import pytest

sys.exit(pytest.main(["-q", "-p", "no:cacheprovider", sys.argv[1] if len(sys.argv) > 1 else "."]))
