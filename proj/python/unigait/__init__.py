# Copyright 2026 The unigait Authors
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

"""Python front end for the unigait C++ core."""

import json

from unigait import _core
from unigait._core import (
    DiffusionPrior,
    Error,
    InputError,
    compose_action,
    gae,
    karras_schedule,
    kl_adaptive_lr,
    precondition,
    read_dataset,
)

__all__ = [
    "DiffusionPrior",
    "Error",
    "InputError",
    "ToyEnv",
    "compose_action",
    "default_config",
    "default_embodiments",
    "gae",
    "karras_schedule",
    "kl_adaptive_lr",
    "precondition",
    "read_dataset",
    "run",
]


def default_config():
  return json.loads(_core.default_config_json())


def default_embodiments():
  return json.loads(_core.embodiments_json())


def run(command, out_dir, config=None, residual=False):
  """Runs one pipeline command and returns the CSV path it wrote."""
  text = json.dumps(config) if config else ""
  return _core.run_command(command, text, str(out_dir), residual)


class ToyEnv(_core.ToyEnv):

  def __init__(self, config):
    super().__init__(json.dumps(config))
