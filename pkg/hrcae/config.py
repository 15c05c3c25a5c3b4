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

"""RunConfig: the declarative configuration shared by every subcommand.

Defaults reproduce the study's protocol; a JSON file is deep-merged over
them and explicit command line flags win over both.
"""

import collections
import copy
import json
import os

from . import evaluation
from . import nets
from . import problems as problems_module
from . import segmenter
from . import synth
from . import trainer
from . import windowscan

CACHE_DIR_ENVIRONMENT = 'HRCAE_CACHE_DIR'
DEFAULT_EXPERIMENT = 'default'
SECTIONS = ('paths', 'model', 'schedule', 'finetune_schedule',
            'classifier_schedule', 'evaluation', 'synth', 'seed', 'jobs')

Experiment = collections.namedtuple('Experiment',
                                    ['name', 'model_config', 'mode'])


def _Defaults():
  synth_defaults = synth.GeneratorConfig().ToDict()
  del synth_defaults['seed']
  return collections.OrderedDict([
      ('paths', collections.OrderedDict([('data_dir', 'cohort'),
                                         ('cache_dir', 'cache'),
                                         ('output_dir', 'output')])),
      ('model', nets.ModelConfig().ToDict()),
      ('schedule', trainer.TrainSchedule().ToDict()),
      ('finetune_schedule',
       trainer.TrainSchedule(max_epochs=30).ToDict()),
      ('classifier_schedule',
       trainer.TrainSchedule(lr_init=0.01, max_epochs=50).ToDict()),
      ('evaluation', collections.OrderedDict([
          ('mode', None),
          ('macro', False),
          ('shifts', [0]),
          ('completeness_threshold',
           segmenter.DEFAULT_COMPLETENESS_THRESHOLD),
          ('experiments', []),
          ('scan_all_windows', False),
          ('scan_shifts', list(windowscan.DEFAULT_SCAN_SHIFTS)),
      ])),
      ('synth', synth_defaults),
      ('seed', 0),
      ('jobs', 1),
  ])


def DeepMerge(base, override):
  """A copy of base with override's values; nested dicts merge key by key."""
  merged = copy.deepcopy(base)
  for key, value in override.items():
    if isinstance(value, dict) and isinstance(merged.get(key), dict):
      merged[key] = DeepMerge(merged[key], value)
    else:
      merged[key] = copy.deepcopy(value)
  return merged


def _Invalid(column_name, value, reason=None):
  return problems_module.InvalidConfig(column_name=column_name, value=value,
                                       reason=reason)


class RunConfig(object):
  """Validated, fully populated configuration of a run."""

  def __init__(self, values=None):
    values = DeepMerge(_Defaults(), values or {})
    unknown = set(values) - set(SECTIONS)
    if unknown:
      raise _Invalid('config', sorted(unknown), 'unknown sections')
    self._values = values
    self.paths = values['paths']
    self.model_config = nets.ModelConfig.FromDict(values['model'])
    self.schedule = trainer.TrainSchedule.FromDict(values['schedule'])
    self.finetune_schedule = trainer.TrainSchedule.FromDict(
        values['finetune_schedule'])
    self.classifier_schedule = trainer.TrainSchedule.FromDict(
        values['classifier_schedule'])
    self.evaluation = values['evaluation']
    self.seed = values['seed']
    self.jobs = values['jobs']

  def GeneratorConfig(self):
    return synth.GeneratorConfig.FromDict(
        dict(self._values['synth'], seed=self.seed))

  def Validate(self):
    for name in ('data_dir', 'cache_dir', 'output_dir'):
      if not isinstance(self.paths.get(name), str) or not self.paths[name]:
        raise _Invalid('paths.%s' % name, self.paths.get(name))
    if not isinstance(self.seed, int) or self.seed < 0:
      raise _Invalid('seed', self.seed)
    if not isinstance(self.jobs, int) or self.jobs < 1:
      raise _Invalid('jobs', self.jobs)
    self.model_config.Validate()
    for schedule in (self.schedule, self.finetune_schedule,
                     self.classifier_schedule):
      schedule.Validate()
    ev = self.evaluation
    if ev['mode'] is not None and ev['mode'] not in evaluation.MODES:
      raise _Invalid('evaluation.mode', ev['mode'],
                     'expected one of %s' % ', '.join(evaluation.MODES))
    if not 0 <= ev['completeness_threshold'] <= 1:
      raise _Invalid('evaluation.completeness_threshold',
                     ev['completeness_threshold'])
    if not ev['shifts'] or not all(isinstance(s, int) for s in ev['shifts']):
      raise _Invalid('evaluation.shifts', ev['shifts'])
    if not all(isinstance(s, int) for s in ev['scan_shifts']):
      raise _Invalid('evaluation.scan_shifts', ev['scan_shifts'])
    names = set()
    for experiment in self.Experiments():
      if experiment.name in names:
        raise _Invalid('evaluation.experiments', experiment.name,
                       'duplicate experiment name')
      names.add(experiment.name)
      experiment.model_config.Validate()
      if experiment.mode not in evaluation.MODES:
        raise _Invalid('evaluation.experiments', experiment.mode)
    self.GeneratorConfig().Validate()
    return self

  def Experiments(self):
    """The model variants a LOSO run compares.

    Each configured experiment overrides fields of the model section and
    optionally the evaluation mode. Without experiments the model section
    itself is the only one.
    """
    configured = self.evaluation.get('experiments') or []
    if not configured:
      return [Experiment(DEFAULT_EXPERIMENT, self.model_config,
                         self._Mode(self.model_config))]
    experiments = []
    for spec in configured:
      if 'name' not in spec:
        raise _Invalid('evaluation.experiments', spec, 'missing name')
      model = nets.ModelConfig.FromDict(
          DeepMerge(self.model_config.ToDict(), spec.get('model', {})))
      experiments.append(Experiment(spec['name'], model,
                                    spec.get('mode') or self._Mode(model)))
    return experiments

  def _Mode(self, model_config):
    mode = self.evaluation.get('mode')
    if mode is not None and model_config.family in \
        evaluation._MODE_FAMILIES[mode]:
      return mode
    return evaluation.DefaultModeForFamily(model_config.family)

  def ToDict(self):
    return copy.deepcopy(self._values)

  @classmethod
  def FromDict(cls, d):
    return cls(d)

  def __eq__(self, other):
    return isinstance(other, RunConfig) and self.ToDict() == other.ToDict()

  def __ne__(self, other):
    return not self.__eq__(other)


def LoadRunConfig(path=None, overrides=None, environ=None):
  """Defaults, then the JSON file at path, then HRCAE_CACHE_DIR, then
  overrides (a dict shaped like the config)."""
  values = {}
  if path:
    if not os.path.exists(path):
      raise problems_module.MissingFile(file_name=path)
    with open(path) as f:
      try:
        values = json.load(f)
      except ValueError as e:
        raise _Invalid('config', path, 'not valid JSON: %s' % e)
    if not isinstance(values, dict):
      raise _Invalid('config', path, 'expected a JSON object')
  environ = os.environ if environ is None else environ
  cache_dir = environ.get(CACHE_DIR_ENVIRONMENT)
  if cache_dir:
    values = DeepMerge(values, {'paths': {'cache_dir': cache_dir}})
  values = DeepMerge(values, overrides or {})
  return RunConfig(values).Validate()


def WriteRunConfig(path, config):
  with open(path, 'w') as f:
    json.dump(config.ToDict(), f, indent=2)
    f.write('\n')
