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

# Code shared between tests.

import datetime
import os
import os.path
import re
import shutil
import subprocess
import sys
import tempfile
import traceback
import unittest

import numpy as np

import hrcae
from hrcae import config as config_module
from hrcae import heartrate
from hrcae import manifest as manifest_module
from hrcae import nets
from hrcae import problems as problems_module
from hrcae import segmenter
from hrcae import synth
from hrcae import trainer
from hrcae import util

SLOW_TESTS = bool(os.environ.get('HRCAE_SLOW_TESTS'))
slow = unittest.skipUnless(SLOW_TESTS, 'set HRCAE_SLOW_TESTS to run')

START_DATE = datetime.date(2021, 1, 4)
TIMEZONE_OFFSET = 60


def check_call(cmd, expected_retcode=0, stdin_str='', **kwargs):
  """Run cmd, raising an Exception unless it exits with expected_retcode.
  Returns a tuple of strings, (stdout, stderr)."""
  try:
    if 'stdout' in kwargs or 'stderr' in kwargs or 'stdin' in kwargs:
      raise Exception("Don't pass stdout or stderr")
    p = subprocess.Popen(cmd, stdout=subprocess.PIPE,
                         stderr=subprocess.PIPE, stdin=subprocess.PIPE,
                         universal_newlines=True, **kwargs)
    (out, err) = p.communicate(stdin_str)
    retcode = p.returncode
  except Exception as e:
    raise Exception('When running %s: %s' % (cmd, e))
  if retcode < 0:
    raise Exception(
        "Child '%s' was terminated by signal %d. Output:\n%s\n%s\n" %
        (cmd, -retcode, out, err))
  elif retcode != expected_retcode:
    raise Exception(
        "Child '%s' returned %d. Output:\n%s\n%s\n" %
        (cmd, retcode, out, err))
  return (out, err)


class TestCase(unittest.TestCase):
  """Base of every TestCase class in this project."""

  def assertMatchesRegex(self, regex, string):
    """Assert that regex is found in string."""
    if not re.search(regex, string):
      self.fail('string %r did not match regex %r' % (string, regex))

  def assertArrayAlmostEqual(self, expected, actual, atol=1e-7, rtol=0.0):
    np.testing.assert_allclose(np.asarray(actual, dtype=np.float64),
                               np.asarray(expected, dtype=np.float64),
                               rtol=rtol, atol=atol)


class GetPathTestCase(TestCase):
  """TestCase with method to get paths to files in the distribution."""
  def setUp(self):
    super(GetPathTestCase, self).setUp()
    self._origcwd = os.getcwd()

  def GetPath(self, *path):
    """Return absolute path of path. path is relative main source directory."""
    here = os.path.dirname(__file__)
    return os.path.abspath(os.path.join(self._origcwd, here, '..', *path))


class TempDirTestCaseBase(GetPathTestCase):
  """Make a temporary directory the current directory before running the test
  and remove it after the test.
  """
  def setUp(self):
    GetPathTestCase.setUp(self)
    self.tempdirpath = tempfile.mkdtemp()
    os.chdir(self.tempdirpath)

  def tearDown(self):
    os.chdir(self._origcwd)
    shutil.rmtree(self.tempdirpath)
    GetPathTestCase.tearDown(self)

  def CheckCallWithPath(self, cmd, expected_retcode=0, stdin_str='',
                        env=None):
    """Run python script cmd[0] with args cmd[1:], making sure 'import
    hrcae' will use the package in this source tree. Returns a tuple of
    strings, (stdout, stderr)."""
    source_root = os.path.dirname(os.path.dirname(hrcae.__file__))
    child_env = dict(os.environ)
    child_env['PYTHONPATH'] = os.pathsep.join([source_root] + sys.path)
    child_env.update(env or {})
    return check_call([sys.executable] + list(cmd),
                      expected_retcode=expected_retcode, shell=False,
                      env=child_env, stdin_str=stdin_str)


class RecordingProblemAccumulator(problems_module.ProblemAccumulatorInterface):
  """Save all problems for later inspection.

  Args:
    test_case: a unittest.TestCase object on which to report problems
    ignore_types: sequence of string type names that will be ignored by the
    ProblemAccumulator"""
  def __init__(self, test_case, ignore_types=None):
    self.exceptions = []
    self._test_case = test_case
    self._ignore_types = ignore_types or set()

  def _Report(self, e):
    # Ensure that these don't crash
    e.FormatProblem()
    e.FormatContext()
    if e.__class__.__name__ in self._ignore_types:
      return
    traceback_list = traceback.format_list(traceback.extract_stack()[-7:-1])
    self.exceptions.append((e, ''.join(traceback_list)))

  def PopException(self, type_name):
    """Return the first exception, which must be a type_name."""
    self._test_case.assertTrue(self.exceptions,
                               'expected %s, no problem left' % type_name)
    e = self.exceptions.pop(0)
    e_name = e[0].__class__.__name__
    self._test_case.assertEqual(e_name, type_name,
                                '%s != %s\n%s' %
                                (e_name, type_name, self.FormatException(*e)))
    return e[0]

  def PopAll(self, type_name):
    """Pop every leading exception of type_name; returns them."""
    popped = []
    while self.exceptions and \
        self.exceptions[0][0].__class__.__name__ == type_name:
      popped.append(self.exceptions.pop(0)[0])
    return popped

  def FormatException(self, exce, tb):
    return ('%s\nwith context %s\nand traceback\n%s' %
            (exce.FormatProblem(), exce.FormatContext(), tb))

  def AssertNoMoreExceptions(self):
    exceptions_as_text = []
    for e, tb in self.exceptions:
      exceptions_as_text.append(self.FormatException(e, tb))
    self.exceptions = []
    self._test_case.assertFalse(exceptions_as_text,
                                '\n'.join(exceptions_as_text))

  def PopInvalidValue(self, column_name):
    e = self.PopException('InvalidValue')
    self._test_case.assertEqual(column_name, e.column_name)
    return e


class TestFailureProblemAccumulator(
    problems_module.ProblemAccumulatorInterface):
  """Causes a test failure immediately on any problem."""
  def __init__(self, test_case, ignore_types=()):
    self.test_case = test_case
    self._ignore_types = ignore_types or set()

  def _Report(self, e):
    formatted_problem = e.FormatProblem()
    formatted_context = e.FormatContext()
    exception_class = e.__class__.__name__
    if exception_class in self._ignore_types:
      return
    self.test_case.fail(
        '%s: %s\n%s' % (exception_class, formatted_problem, formatted_context))


def GetTestFailureProblemReporter(test_case, ignore_types=()):
  accumulator = TestFailureProblemAccumulator(test_case, ignore_types)
  return problems_module.ProblemReporter(accumulator)


# Fixtures

def Midnight(day_offset=0, start_date=START_DATE, offset=TIMEZONE_OFFSET):
  return util.LocalMidnight(start_date + datetime.timedelta(days=day_offset),
                            offset)


def MakeFiveMinSeries(participant_id='p1', days=60, value=60.0,
                      values=None, missing=None):
  """A FiveMinSeries starting at local midnight of START_DATE.

  values overrides the constant value; missing is an index array of bins
  left empty.
  """
  bins = days * heartrate.BINS_PER_DAY
  if values is None:
    values = np.full(bins, value, dtype=np.float64)
  values = np.array(values, dtype=np.float64)
  counts = np.ones(bins, dtype=np.int64)
  if missing is not None:
    values[missing] = np.nan
    counts[missing] = 0
  return heartrate.FiveMinSeries(participant_id, Midnight(), values, counts,
                                 TIMEZONE_OFFSET)


def MakeSegment(participant_id='p1', label=segmenter.ASYMPTOMATIC,
                value=60.0, values=None, start_index=0, shift_days=0):
  if values is None:
    values = np.full(segmenter.SEGMENT_BINS, value)
  return segmenter.Segment(
      participant_id, START_DATE + datetime.timedelta(days=start_index),
      values, label, shift_days, start_index=start_index)


def MakeSegmentSet(n_sym=2, n_asym=4, seed=0, sym_offset=10.0,
                   participant_ids=('p1', 'p2')):
  """Noisy constant segments; symptomatic ones sit sym_offset bpm higher."""
  rng = np.random.default_rng(seed)
  sym, asym = [], []
  for i in range(n_sym):
    values = 70.0 + sym_offset + rng.normal(0, 1, segmenter.SEGMENT_BINS)
    sym.append(MakeSegment(participant_ids[i % len(participant_ids)],
                           segmenter.SYMPTOMATIC, values=values,
                           start_index=i))
  for i in range(n_asym):
    values = 70.0 + rng.normal(0, 1, segmenter.SEGMENT_BINS)
    asym.append(MakeSegment(participant_ids[i % len(participant_ids)],
                            segmenter.ASYMPTOMATIC, values=values,
                            start_index=i))
  return segmenter.SegmentSet(sym, asym, 'pretrain')


def MakeEntry(participant_id, group, onset_date=None, matched_with=None,
              site='site_a', gender='female', age_band='30-39'):
  return manifest_module.ManifestEntry(
      participant_id=participant_id, site=site, gender=gender,
      age_band=age_band, timezone_offset_minutes=TIMEZONE_OFFSET,
      group=group, onset_date=onset_date, matched_with=matched_with)


def TinyGeneratorConfig(**kwargs):
  """A six participant cohort over 56 days with five-minute samples."""
  values = dict(n_pretrain=2, n_positive=2, n_control=2, days=56,
                onset_day=28, sample_interval_seconds=300,
                missingness_rate=0.0, seed=7)
  values.update(kwargs)
  return synth.GeneratorConfig(**values)


def SmallModelConfig(family=nets.FAMILY_CONTRASTIVE_CAE, **kwargs):
  """A two layer, two channel model that trains in well under a second."""
  values = dict(family=family, num_layers=2, channels=[2, 2], latent_dim=8,
                classifier_hidden=4)
  if family == nets.FAMILY_MLP:
    values.update(channels=None)
  values.update(kwargs)
  return nets.ModelConfig(**values)


def QuickSchedule(**kwargs):
  values = dict(max_epochs=2, batch_size=4)
  values.update(kwargs)
  return trainer.TrainSchedule(**values)


def TinyRunConfigValues(**values):
  """Run configuration of the tiny cohort with the small model, as a dict."""
  synth_values = TinyGeneratorConfig().ToDict()
  seed = synth_values.pop('seed')
  base = {
      'paths': {'data_dir': 'cohort', 'cache_dir': 'cache',
                'output_dir': 'output'},
      'model': SmallModelConfig().ToDict(),
      'schedule': QuickSchedule().ToDict(),
      'finetune_schedule': QuickSchedule().ToDict(),
      'classifier_schedule': QuickSchedule().ToDict(),
      'synth': synth_values,
      'seed': seed,
  }
  return config_module.DeepMerge(base, values)


def TinyRunConfig(**values):
  return config_module.RunConfig(TinyRunConfigValues(**values)).Validate()
