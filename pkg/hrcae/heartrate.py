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

"""Raw heart-rate streams and their five-minute mean series."""

import datetime

import numpy as np

from . import problems as problems_module
from . import util

BIN_SECONDS = 300
BINS_PER_DAY = util.SECONDS_PER_DAY // BIN_SECONDS
# Samples at or beyond these limits are sensor artifacts and count as missing.
MIN_BPM = 20.0
MAX_BPM = 250.0


class HeartRateSample(object):
  """One instantaneous heart-rate reading."""

  __slots__ = ('timestamp', 'bpm')

  def __init__(self, timestamp, bpm):
    self.timestamp = int(timestamp)
    self.bpm = float(bpm)

  def IsPlausible(self):
    return MIN_BPM < self.bpm < MAX_BPM

  def __eq__(self, other):
    return (isinstance(other, HeartRateSample) and
            (self.timestamp, self.bpm) == (other.timestamp, other.bpm))

  def __ne__(self, other):
    return not self.__eq__(other)

  def __repr__(self):
    return 'HeartRateSample(%d, %r)' % (self.timestamp, self.bpm)


class HeartRateSeries(object):
  """All samples of one participant over its collection window.

  Samples are stored column-wise: timestamps as int64 epoch seconds (UTC) and
  bpm as float64. collection_start and collection_end are local midnights of
  the participant's site, given by timezone_offset_minutes.
  """

  def __init__(self, participant_id, timestamps, bpm, collection_start,
               collection_end, timezone_offset_minutes=0):
    self.participant_id = participant_id
    self.timestamps = np.asarray(timestamps, dtype=np.int64).reshape(-1)
    self.bpm = np.asarray(bpm, dtype=np.float64).reshape(-1)
    if self.timestamps.shape != self.bpm.shape:
      raise problems_module.ShapeMismatch(
          op='HeartRateSeries', dimension='samples',
          expected=self.timestamps.shape, found=self.bpm.shape)
    self.collection_start = int(collection_start)
    self.collection_end = int(collection_end)
    self.timezone_offset_minutes = timezone_offset_minutes

  @classmethod
  def FromSamples(cls, participant_id, samples, collection_start,
                  collection_end, timezone_offset_minutes=0):
    samples = list(samples)
    return cls(participant_id,
               [s.timestamp for s in samples], [s.bpm for s in samples],
               collection_start, collection_end, timezone_offset_minutes)

  def Samples(self):
    for timestamp, bpm in zip(self.timestamps, self.bpm):
      yield HeartRateSample(timestamp, bpm)

  def __len__(self):
    return len(self.timestamps)

  def DayCount(self):
    return (self.collection_end - self.collection_start) // util.SECONDS_PER_DAY

  def StartDate(self):
    return util.LocalDate(self.collection_start, self.timezone_offset_minutes)

  def Validate(self, problems=problems_module.default_problem_reporter):
    """Report ordering, range and window problems. Returns True if clean."""
    clean = True
    if len(self.timestamps) > 1:
      steps = np.diff(self.timestamps)
      bad = np.flatnonzero(steps <= 0)
      if len(bad):
        i = int(bad[0])
        problems.NonIncreasingTimestamp(self.participant_id,
                                        int(self.timestamps[i + 1]),
                                        int(self.timestamps[i]))
        clean = False
    outside = np.count_nonzero((self.timestamps < self.collection_start) |
                               (self.timestamps >= self.collection_end))
    if outside:
      problems.SampleOutsideCollection(self.participant_id, int(outside))
      clean = False
    implausible = np.count_nonzero(~_PlausibleMask(self.bpm))
    if implausible:
      problems.InvalidBpm(self.participant_id, int(implausible))
      clean = False
    return clean


class FiveMinSeries(object):
  """Mean heart rate per 300 second bin.

  values holds the bin means with NaN as the empty-bin sentinel; counts holds
  the number of raw samples that went into each bin.
  """

  def __init__(self, participant_id, start, values, counts=None,
               timezone_offset_minutes=0):
    self.participant_id = participant_id
    self.start = int(start)
    self.values = np.asarray(values, dtype=np.float64).reshape(-1)
    if counts is None:
      counts = np.where(np.isnan(self.values), 0, 1)
    self.counts = np.asarray(counts, dtype=np.int64).reshape(-1)
    self.timezone_offset_minutes = timezone_offset_minutes

  @property
  def imputed(self):
    """True for bins that had no raw samples."""
    return self.counts == 0

  def BinCount(self):
    return len(self.values)

  def DayCount(self):
    return self.BinCount() // BINS_PER_DAY

  def End(self):
    return self.start + self.BinCount() * BIN_SECONDS

  def StartDate(self):
    return util.LocalDate(self.start, self.timezone_offset_minutes)

  def DayIndex(self, date):
    """Day offset of a local date from the first recorded day."""
    return (date - self.StartDate()).days

  def DayDate(self, day_index):
    return self.StartDate() + datetime.timedelta(days=day_index)

  def BinIndex(self, timestamp):
    """Index of the bin starting at timestamp; timestamp must be on a bin edge."""
    offset = int(timestamp) - self.start
    if offset % BIN_SECONDS:
      raise problems_module.MisalignedCollectionWindow(
          participant_id=self.participant_id,
          description='%d is not on a %d second bin edge' %
          (timestamp, BIN_SECONDS))
    return offset // BIN_SECONDS

  def __iter__(self):
    """Yields (value, imputed) pairs."""
    for value, count in zip(self.values, self.counts):
      yield float(value), bool(count == 0)


def _PlausibleMask(bpm):
  return np.isfinite(bpm) & (bpm > MIN_BPM) & (bpm < MAX_BPM)


def Resample5Min(series, problems=problems_module.default_problem_reporter):
  """Reduce a HeartRateSeries to one mean per five-minute bin.

  Bins with no plausible sample keep the NaN sentinel and count as imputed.
  Implausible readings and samples outside the collection window are
  reported as warnings and skipped.

  Args:
    series: a HeartRateSeries
    problems: a ProblemReporter for the warnings

  Returns:
    A FiveMinSeries covering [collection_start, collection_end).

  Raises:
    NoSamples: the series has no samples at all
    MisalignedCollectionWindow: a bound is not on a local midnight
  """
  pid = series.participant_id
  if not len(series):
    raise problems_module.NoSamples(participant_id=pid)
  offset = series.timezone_offset_minutes
  for name, bound in (('collection_start', series.collection_start),
                      ('collection_end', series.collection_end)):
    if not util.IsMidnightAligned(bound, offset):
      raise problems_module.MisalignedCollectionWindow(
          participant_id=pid,
          description='%s %d is not a local midnight' % (name, bound))
  if series.collection_end <= series.collection_start:
    raise problems_module.MisalignedCollectionWindow(
        participant_id=pid, description='collection window is empty')

  bin_count = (series.collection_end - series.collection_start) // BIN_SECONDS
  inside = ((series.timestamps >= series.collection_start) &
            (series.timestamps < series.collection_end))
  if not inside.all():
    problems.SampleOutsideCollection(pid, int(np.count_nonzero(~inside)))
  plausible = _PlausibleMask(series.bpm)
  if not plausible.all():
    problems.InvalidBpm(pid, int(np.count_nonzero(~plausible)))
  keep = inside & plausible

  index = (series.timestamps[keep] - series.collection_start) // BIN_SECONDS
  counts = np.bincount(index, minlength=bin_count)
  sums = np.bincount(index, weights=series.bpm[keep], minlength=bin_count)
  values = np.full(bin_count, np.nan)
  filled = counts > 0
  values[filled] = sums[filled] / counts[filled]
  return FiveMinSeries(pid, series.collection_start, values, counts, offset)


def Completeness(series, window_start, window_end):
  """Fraction of non-imputed bins in [window_start, window_end).

  Args:
    series: a FiveMinSeries
    window_start, window_end: epoch seconds on bin edges

  Raises:
    WindowOutOfBounds: the window is empty or leaves the series
  """
  if (window_end <= window_start or window_start < series.start or
      window_end > series.End()):
    raise problems_module.WindowOutOfBounds(
        participant_id=series.participant_id, start=window_start,
        end=window_end, series_start=series.start, series_end=series.End())
  first = series.BinIndex(window_start)
  last = series.BinIndex(window_end)
  return BinCompleteness(series.counts[first:last])


def BinCompleteness(counts):
  """Fraction of bins with at least one sample."""
  counts = np.asarray(counts)
  return float(np.count_nonzero(counts)) / len(counts)
