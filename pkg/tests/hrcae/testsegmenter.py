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

# Unit tests for hrcae/segmenter.py

import datetime
import itertools

import numpy as np

from hrcae import problems as problems_module
from hrcae import segmenter
import tests.util as test_util
import unittest


def _Day(index):
  return test_util.START_DATE + datetime.timedelta(days=index)


def _Overlaps(a, b):
  return segmenter.WindowDistanceDays(a, b) < segmenter.MIN_DISTANCE_DAYS


class ExtractSymptomaticTestCase(test_util.TestCase):
  def setUp(self):
    values = np.arange(90 * 288, dtype=np.float64)
    self.series = test_util.MakeFiveMinSeries(days=90, values=values)

  def testCanonical(self):
    segment = segmenter.ExtractSymptomatic(self.series, _Day(45))
    self.assertEqual(_Day(38), segment.start_day)
    self.assertEqual(38, segment.start_index)
    self.assertEqual(_Day(52), segment.EndDay())
    self.assertEqual(segmenter.SYMPTOMATIC, segment.label)
    self.assertEqual(0, segment.shift_days)
    self.assertEqual(38 * 288, segment.values[0])
    self.assertEqual(52 * 288 - 1, segment.values[-1])
    self.assertEqual(1.0, segment.completeness)

  def testShifted(self):
    segment = segmenter.ExtractSymptomatic(self.series, _Day(45), -3)
    self.assertEqual(_Day(35), segment.start_day)
    self.assertEqual(-3, segment.shift_days)
    self.assertEqual(_Day(49), segment.EndDay())

  def testShiftLeavesOnset(self):
    self.assertRaises(problems_module.OnsetNotContained,
                      segmenter.ExtractSymptomatic, self.series, _Day(45), 8)
    self.assertRaises(problems_module.OnsetNotContained,
                      segmenter.ExtractSymptomatic, self.series, _Day(45), -7)
    segmenter.ExtractSymptomatic(self.series, _Day(45), 7)
    segmenter.ExtractSymptomatic(self.series, _Day(45), -6)

  def testValidShifts(self):
    self.assertEqual(list(range(-6, 8)), segmenter.ValidShifts())

  def testOutOfBounds(self):
    self.assertRaises(problems_module.InsufficientCoverage,
                      segmenter.ExtractSymptomatic, self.series, _Day(3))
    self.assertRaises(problems_module.InsufficientCoverage,
                      segmenter.ExtractSymptomatic, self.series, _Day(85))
    # The last window that fits ends on day 89.
    segmenter.ExtractSymptomatic(self.series, _Day(83))


class ExtractAsymptomaticTestCase(test_util.TestCase):
  def testOnsetDay45(self):
    series = test_util.MakeFiveMinSeries(days=90)
    segments = segmenter.ExtractAsymptomatic(series, _Day(45))
    self.assertEqual(36, len(segments))
    self.assertEqual(list(range(0, 18)) + list(range(59, 77)),
                     [s.start_index for s in segments])
    self.assertTrue(all(s.label == segmenter.ASYMPTOMATIC for s in segments))

  def testNoOnset(self):
    series = test_util.MakeFiveMinSeries(days=90)
    segments = segmenter.ExtractAsymptomatic(series)
    self.assertEqual(77, len(segments))
    self.assertEqual(_Day(76), segments[-1].start_day)

  def testShortSeries(self):
    series = test_util.MakeFiveMinSeries(days=20)
    self.assertEqual([], segmenter.ExtractAsymptomatic(series, _Day(10)))
    series = test_util.MakeFiveMinSeries(days=13)
    self.assertEqual([], segmenter.ExtractAsymptomatic(series))

  def testMatchesEnumeration(self):
    rng = np.random.default_rng(3)
    for _ in range(25):
      day_count = int(rng.integers(14, 120))
      onset = int(rng.integers(0, day_count))
      expected = 0
      for start in range(day_count - 13):
        end = start + 14
        if end <= onset - 14 or start >= onset + 14:
          expected += 1
      self.assertEqual(expected,
                       len(segmenter.AsymptomaticStarts(day_count, onset)))

  def testDistanceFromSymptomatic(self):
    series = test_util.MakeFiveMinSeries(days=90)
    symptomatic = [segmenter.ExtractSymptomatic(series, _Day(45), shift)
                   for shift in (0,)]
    asymptomatic = segmenter.ExtractAsymptomatic(series, _Day(45))
    for sym, asym in itertools.product(symptomatic, asymptomatic):
      self.assertFalse(_Overlaps(sym, asym), '%r too close to %r' %
                       (asym, sym))


class WindowDistanceTestCase(test_util.TestCase):
  def testDistance(self):
    a = test_util.MakeSegment(start_index=0)
    b = test_util.MakeSegment(start_index=21)
    c = test_util.MakeSegment(start_index=10)
    self.assertEqual(7, segmenter.WindowDistanceDays(a, b))
    self.assertEqual(7, segmenter.WindowDistanceDays(b, a))
    self.assertEqual(0, segmenter.WindowDistanceDays(a, c))


class CompletenessFilterTestCase(test_util.TestCase):
  def testDropsIncompleteSegments(self):
    # Days 0 to 6 are empty; windows starting before day 3 fall below 0.7.
    series = test_util.MakeFiveMinSeries(days=28,
                                         missing=np.arange(0, 2016))
    segments = segmenter.ExtractAsymptomatic(series)
    self.assertEqual(15, len(segments))
    self.assertEqual(0.5, segments[0].completeness)
    self.assertEqual(1.0, segments[-1].completeness)
    accumulator = test_util.RecordingProblemAccumulator(self)
    kept = segmenter.FilterByCompleteness(
        segments, 0.7, problems_module.ProblemReporter(accumulator))
    dropped = accumulator.PopAll('LowCompleteness')
    accumulator.AssertNoMoreExceptions()
    self.assertEqual(3, len(dropped))
    self.assertEqual(12, len(kept))
    self.assertTrue(all(s.completeness >= 0.7 for s in kept))
    self.assertEqual(segments[0].participant_id, dropped[0].participant_id)

  def testThresholdIsInclusive(self):
    segment = test_util.MakeSegment()
    segment.completeness = 0.7
    accumulator = test_util.RecordingProblemAccumulator(self)
    kept = segmenter.FilterByCompleteness(
        [segment], 0.7, problems_module.ProblemReporter(accumulator))
    self.assertEqual([segment], kept)
    accumulator.AssertNoMoreExceptions()


class ImputeMedianTestCase(test_util.TestCase):
  def testUnchanged(self):
    segment = test_util.MakeSegment(value=61.0)
    self.assertIs(segment, segmenter.ImputeMedian(segment))

  def testSingleGap(self):
    values = np.full(segmenter.SEGMENT_BINS, 60.0)
    values[100] = np.nan
    imputed = segmenter.ImputeMedian(test_util.MakeSegment(values=values))
    self.assertEqual(60.0, imputed.values[100])
    self.assertTrue(imputed.IsImputed())

  def testEvenCountMedian(self):
    values = np.full(segmenter.SEGMENT_BINS, np.nan)
    values[:4] = [80.0, 50.0, 70.0, 60.0]
    segment = test_util.MakeSegment(values=values)
    imputed = segmenter.ImputeMedian(segment)
    self.assertEqual(65.0, imputed.values[4])
    self.assertEqual(65.0, imputed.values[-1])
    self.assertEqual(80.0, imputed.values[0])
    # Completeness keeps describing the raw window.
    self.assertEqual(segment.completeness, imputed.completeness)
    self.assertTrue(np.isnan(segment.values[4]))

  def testEmptySegment(self):
    segment = test_util.MakeSegment(
        values=np.full(segmenter.SEGMENT_BINS, np.nan))
    self.assertRaises(problems_module.EmptySegment, segmenter.ImputeMedian,
                      segment)


class FeatureMapTestCase(test_util.TestCase):
  def testLayout(self):
    values = np.arange(segmenter.SEGMENT_BINS, dtype=np.float64)
    feature_map = segmenter.ToFeatureMap(test_util.MakeSegment(values=values))
    self.assertEqual((24, 168), feature_map.pixels.shape)
    self.assertEqual(0, feature_map.pixels[0, 0])
    self.assertEqual(24, feature_map.pixels[0, 1])
    self.assertEqual(1, feature_map.pixels[1, 0])
    self.assertEqual(4031, feature_map.pixels[23, 167])

  def testFlattenRoundTrip(self):
    values = np.random.default_rng(1).normal(70, 10, segmenter.SEGMENT_BINS)
    segment = test_util.MakeSegment(values=values)
    feature_map = segmenter.ToFeatureMap(segment)
    np.testing.assert_array_equal(segment.values, feature_map.Flatten())
    self.assertIs(segment, feature_map.source)

  def testUnimputed(self):
    values = np.full(segmenter.SEGMENT_BINS, 60.0)
    values[[3, 9]] = np.nan
    self.assertRaises(problems_module.UnimputedSegment,
                      segmenter.ToFeatureMap,
                      test_util.MakeSegment(values=values))

  def testBatches(self):
    segments = [test_util.MakeSegment(value=40.0),
                test_util.MakeSegment(value=120.0)]
    batch = segmenter.FeatureMapBatch(segments)
    self.assertEqual((2, 1, 24, 168), batch.shape)
    self.assertEqual(np.float32, batch.dtype)
    self.assertEqual(0.0, batch[0].max())
    self.assertEqual(1.0, batch[1].min())
    series = segmenter.SeriesBatch(segments)
    self.assertEqual((2, 4032), series.shape)
    self.assertEqual(1.0, series[1, 17])

  def testNormalization(self):
    self.assertEqual(0.25, segmenter.NormalizeBpm(60.0))
    self.assertEqual(60.0, segmenter.DenormalizeBpm(0.25))


class BalanceTestCase(test_util.TestCase):
  def _Set(self, n_sym, n_asym):
    sym = [test_util.MakeSegment('s%d' % i, segmenter.SYMPTOMATIC)
           for i in range(n_sym)]
    asym = [test_util.MakeSegment('a%d' % i) for i in range(n_asym)]
    return segmenter.SegmentSet(sym, asym, 'pretrain')

  def testCyclicOrder(self):
    balanced = segmenter.BalanceByReplication(self._Set(3, 7))
    self.assertEqual(['s0', 's1', 's2', 's0', 's1', 's2', 's0'],
                     [s.participant_id for s in balanced.symptomatic])
    self.assertEqual(7, len(balanced.asymptomatic))
    self.assertTrue(balanced.IsBalanced())
    self.assertEqual(('pretrain',), balanced.provenance)

  def testAlreadyBalanced(self):
    original = self._Set(5, 5)
    balanced = segmenter.BalanceByReplication(original)
    self.assertEqual(original.symptomatic, balanced.symptomatic)
    self.assertEqual(original.asymptomatic, balanced.asymptomatic)

  def testStudySizes(self):
    balanced = segmenter.BalanceByReplication(self._Set(49, 1470))
    self.assertEqual(1470, len(balanced.symptomatic))
    first = balanced.symptomatic[0]
    self.assertEqual(30, sum(1 for s in balanced.symptomatic if s is first))

  def testEmptyClass(self):
    self.assertRaises(problems_module.CannotBalance,
                      segmenter.BalanceByReplication, self._Set(0, 4))
    self.assertRaises(problems_module.CannotBalance,
                      segmenter.BalanceByReplication, self._Set(2, 0))

  def testMergeAndOwners(self):
    merged = self._Set(1, 2).Merge(segmenter.SegmentSet(
        [], [test_util.MakeSegment('c1')], ('cv_control',)))
    self.assertEqual(('cv_control', 'pretrain'), merged.provenance)
    self.assertEqual(set(['s0', 'a0', 'a1', 'c1']), merged.Owners())
    self.assertEqual(4, len(merged))
    self.assertFalse(merged.IsEmpty())


if __name__ == '__main__':
  unittest.main()
