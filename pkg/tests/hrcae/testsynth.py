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

# Unit tests for hrcae/synth.py

import datetime

import numpy as np

from hrcae import heartrate
from hrcae import manifest as manifest_module
from hrcae import problems as problems_module
from hrcae import synth
from hrcae import util
import tests.util as test_util
import unittest


def _FlatConfig(**kwargs):
  """A noiseless cohort where every sample is predictable."""
  values = dict(base_hr_sd=0.0, circadian_amplitude=0.0, noise_sd=0.0,
                ramp_days=0.0)
  values.update(kwargs)
  return test_util.TinyGeneratorConfig(**values)


class IllnessProfileTestCase(test_util.TestCase):
  def testRamps(self):
    t = [9.9, 10.0, 10.5, 11.0, 14.0, 16.5, 17.0]
    self.assertArrayAlmostEqual([0, 0, 0.5, 1, 1, 0.5, 0],
                                synth.IllnessProfile(t, 10, 7, 1.0))

  def testStep(self):
    t = [9.99, 10.0, 16.99, 17.0]
    self.assertArrayAlmostEqual([0, 1, 1, 0],
                                synth.IllnessProfile(t, 10, 7, 0.0))


class GeneratorConfigTestCase(test_util.TestCase):
  def testDefaults(self):
    config = synth.GeneratorConfig().Validate()
    self.assertEqual({'pretrain': 49, 'positive': 19, 'control': 19},
                     config.ExpectedCounts())
    self.assertEqual(90, config.days)

  def testDictRoundTrip(self):
    config = test_util.TinyGeneratorConfig()
    again = synth.GeneratorConfig.FromDict(config.ToDict())
    self.assertEqual(config.ToDict(), again.ToDict())

  def testUnknownKey(self):
    with self.assertRaises(problems_module.InvalidConfig) as cm:
      synth.GeneratorConfig.FromDict({'n_pretrain': 2, 'colour': 'red'})
    self.assertEqual(['colour'], cm.exception.value)

  def testInvalidValues(self):
    for kwargs, column_name in (
        (dict(n_control=1), 'n_control'),
        (dict(sample_interval_seconds=7), 'sample_interval_seconds'),
        (dict(onset_day=52), 'onset_day'),
        (dict(missingness_rate=1.0), 'missingness_rate'),
        (dict(missingness_mode='random'), 'missingness_mode'),
        (dict(start_date='2021-02-30'), 'start_date'),
        (dict(ramp_days=4.0), 'ramp_days')):
      with self.assertRaises(problems_module.InvalidConfig) as cm:
        test_util.TinyGeneratorConfig(**kwargs).Validate()
      self.assertEqual(column_name, cm.exception.column_name)


class GenerateParticipantTestCase(test_util.TestCase):
  def testFlatSignal(self):
    series, entry, truth = synth.GenerateParticipant(
        _FlatConfig(), manifest_module.GROUP_POSITIVE, 0)
    self.assertEqual('pos-001', series.participant_id)
    self.assertEqual(56 * heartrate.BINS_PER_DAY, len(series))
    self.assertEqual(test_util.Midnight(), series.collection_start)
    self.assertEqual(test_util.Midnight(56), series.collection_end)
    self.assertEqual(test_util.Midnight(), series.timestamps[0])
    per_day = heartrate.BINS_PER_DAY
    self.assertEqual(65.0, series.bpm[0])
    self.assertEqual(73.0, series.bpm[31 * per_day])
    self.assertEqual(65.0, series.bpm[35 * per_day])
    self.assertEqual('2021-02-01', entry.onset_date)
    self.assertEqual('2021-02-01', truth['onset_date'])
    self.assertEqual('2021-02-08', truth['illness_end'])
    self.assertEqual(0.0, truth['missing_fraction'])

  def testCircadianTrough(self):
    series, _, _ = synth.GenerateParticipant(
        _FlatConfig(circadian_amplitude=6.0),
        manifest_module.GROUP_CONTROL, 0)
    per_hour = heartrate.BINS_PER_DAY // 24
    self.assertAlmostEqual(59.0, series.bpm[4 * per_hour])
    self.assertAlmostEqual(71.0, series.bpm[16 * per_hour])
    self.assertEqual(59.0, series.bpm.min())

  def testControlHasNoOnset(self):
    series, entry, truth = synth.GenerateParticipant(
        _FlatConfig(), manifest_module.GROUP_CONTROL, 1)
    self.assertEqual('ctl-002', entry.participant_id)
    self.assertEqual(None, entry.onset_date)
    self.assertNotIn('onset_date', truth)
    self.assertEqual(65.0, series.bpm.max())

  def testCopiesAttributes(self):
    _, entry, _ = synth.GenerateParticipant(
        test_util.TinyGeneratorConfig(), manifest_module.GROUP_CONTROL, 0,
        ('site_c', 'male', '60-69'), 'pos-001')
    self.assertEqual(('site_c', 'male', '60-69'), entry.MatchingKey())
    self.assertEqual('pos-001', entry.matched_with)

  def testDeterministic(self):
    config = test_util.TinyGeneratorConfig()
    a, _, _ = synth.GenerateParticipant(config, 'pretrain', 1)
    b, _, _ = synth.GenerateParticipant(config, 'pretrain', 1)
    c, _, _ = synth.GenerateParticipant(config, 'pretrain', 0)
    np.testing.assert_array_equal(a.bpm, b.bpm)
    self.assertFalse(np.array_equal(a.bpm, c.bpm))

  def testUniformMissingness(self):
    series, _, truth = synth.GenerateParticipant(
        test_util.TinyGeneratorConfig(missingness_rate=0.2), 'pretrain', 0)
    bins = 56 * heartrate.BINS_PER_DAY
    self.assertAlmostEqual(0.2, truth['missing_fraction'], delta=0.02)
    self.assertAlmostEqual((1 - truth['missing_fraction']) * bins,
                           len(series), delta=0.1)

  def testBurstMissingness(self):
    series, _, truth = synth.GenerateParticipant(
        test_util.TinyGeneratorConfig(missingness_rate=0.1,
                                      missingness_mode='burst'),
        'pretrain', 0)
    self.assertGreater(truth['missing_fraction'], 0)
    gaps = np.diff(series.timestamps)
    self.assertGreaterEqual(gaps.max(), 25 * heartrate.BIN_SECONDS)

  def testOnsetJitter(self):
    config = test_util.TinyGeneratorConfig(onset_jitter_days=3)
    start = datetime.date(2021, 2, 1)
    for index in range(6):
      _, entry, _ = synth.GenerateParticipant(config, 'positive', index)
      self.assertLessEqual(abs((entry.OnsetDate() - start).days), 3)

  def testUnknownRole(self):
    with self.assertRaises(problems_module.InvalidConfig):
      synth.GenerateParticipant(test_util.TinyGeneratorConfig(), 'observer')


class GenerateCohortTestCase(test_util.TestCase):
  def testTinyCohort(self):
    series_list, manifest, truth = synth.GenerateCohort(
        test_util.TinyGeneratorConfig())
    self.assertEqual(['pre-001', 'pre-002', 'pos-001', 'pos-002', 'ctl-001',
                      'ctl-002'], [s.participant_id for s in series_list])
    self.assertEqual(list(truth), [e.participant_id for e in manifest])
    accumulator = test_util.RecordingProblemAccumulator(self)
    self.assertTrue(manifest.Validate(
        problems_module.ProblemReporter(accumulator),
        test_util.TinyGeneratorConfig().ExpectedCounts()))
    accumulator.AssertNoMoreExceptions()
    for i in (1, 2):
      positive = manifest.GetEntry('pos-%03d' % i)
      control = manifest.GetEntry('ctl-%03d' % i)
      self.assertEqual(control.participant_id, positive.matched_with)
      self.assertEqual(positive.participant_id, control.matched_with)
      self.assertEqual(positive.MatchingKey(), control.MatchingKey())

  def testExtraControl(self):
    _, manifest, _ = synth.GenerateCohort(
        test_util.TinyGeneratorConfig(n_control=3))
    self.assertEqual(3, len(manifest.GetGroup('control')))
    self.assertEqual(None, manifest.GetEntry('ctl-003').matched_with)

  def testElevationSeparatesWindows(self):
    series_list, manifest, _ = synth.GenerateCohort(
        test_util.TinyGeneratorConfig(noise_sd=1.0))
    by_id = dict((s.participant_id, s) for s in series_list)
    series = by_id['pos-001']
    day = ((series.timestamps - series.collection_start) //
           util.SECONDS_PER_DAY)
    onset_week = series.bpm[(day >= 28) & (day < 35)].mean()
    first_week = series.bpm[day < 7].mean()
    # One-day ramps at both ends of the seven elevated days.
    self.assertAlmostEqual(8.0 * 6 / 7, onset_week - first_week, delta=0.2)

  @test_util.slow
  def testParallelMatchesSerial(self):
    config = test_util.TinyGeneratorConfig()
    serial, _, _ = synth.GenerateCohort(config)
    parallel, _, _ = synth.GenerateCohort(config, jobs=2)
    for a, b in zip(serial, parallel):
      np.testing.assert_array_equal(a.bpm, b.bpm)


if __name__ == '__main__':
  unittest.main()
