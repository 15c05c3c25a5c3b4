# Copyright (C) 2021 The hrcae Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

# Problem types:
# Error: input or state that stops the pipeline for this item.
TYPE_ERROR = 0
# Warning: suspicious input that is handled, e.g. dropped or skipped.
TYPE_WARNING = 1
# Notice: an issue unrelated to data.
TYPE_NOTICE = 2

ALL_TYPES = [TYPE_ERROR, TYPE_WARNING, TYPE_NOTICE]

# Process exit codes used by hrcaetool.py.
EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2

class Error(Exception):
  pass
