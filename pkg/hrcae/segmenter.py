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

"""14-day segments, their feature-map rendering and class balancing."""

import datetime

import numpy as np

from . import heartrate
from . import problems as problems_module

SYMPTOMATIC = 'symptomatic'
ASYMPTOMATIC = 'asymptomatic'
LABELS = (SYMPTOMATIC, ASYMPTOMATIC)

SEGMENT_DAYS = 14
# Days before onset covered by the canonical symptomatic window.
DAYS_BEFORE_ONSET = 7
# Asymptomatic windows keep this many days between themselves and the
# symptomatic window.
MIN_DISTANCE_DAYS = 7
SEGMENT_BINS = SEGMENT_DAYS * heartrate.BINS_PER_DAY
FEATURE_ROWS = 24
FEATURE_COLUMNS = SEGMENT_BINS // FEATURE_ROWS

DEFAULT_COMPLETENESS_THRESHOLD = 0.70

# Network inputs are (bpm - BPM_OFFSET) / BPM_SCALE.
BPM_OFFSET = 40.0
BPM_SCALE = 80.0


class Segment(object):
  """A labeled 14-day window of five-minute means.

  Attributes:
    participant_id: owner of the window
    start_day: datetime.date of the first local midnight in the window
    start_index: day offset of start_day from the start of the series
    values: float64 array of SEGMENT_BINS means, NaN for missing bins
    label: SYMPTOMATIC or ASYMPTOMATIC
    shift_days: offset of a symptomatic window from the canonical position
    completeness: fraction of bins that had raw samples
  """

  def __init__(self, participant_id, start_day, values, label, shift_days=0,
               completeness=None, start_index=None):
    self.participant_id = participant_id
    self.start_day = start_day
    self.values = np.asarray(values, dtype=np.float64).reshape(-1)
    if len(self.values) != SEGMENT_BINS:
      raise problems_module.ShapeMismatch(
          op='Segment', dimension='values', expected=SEGMENT_BINS,
          found=len(self.values))
    self.label = label
    self.shift_days = shift_days
    if completeness is None:
      completeness = heartrate.BinCompleteness(~np.isnan(self.values))
    self.completeness = completeness
    self.start_index = start_index

  def IsImputed(self):
    return not np.isnan(self.values).any()

  def EndDay(self):
    """First day after the window."""
    return self.start_day + datetime.timedelta(days=SEGMENT_DAYS)

  def IsSymptomatic(self):
    return self.label == SYMPTOMATIC

  def Key(self):
    return (self.participant_id, self.start_day, self.label, self.shift_days)

  def __repr__(self):
    return 'Segment(%s, %s, %s, shift=%d)' % (
        self.participant_id, self.start_day.isoformat(), self.label,
        self.shift_days)


class FeatureMap(object):
  """24 x 168 image of a segment; each column covers two hours."""

  def __init__(self, pixels, source):
    self.pixels = pixels
    self.source = source

  def Flatten(self):
    return self.pixels.T.reshape(-1)


class SegmentSet(object):
  """Symptomatic and asymptomatic segments used together for training.

  provenance is a tuple of the subsets the segments came from, any of
  'pretrain', 'cv_positive' and 'cv_control'.
  """

  def __init__(self, symptomatic=(), asymptomatic=(), provenance=()):
    self.symptomatic = list(symptomatic)
    self.asymptomatic = list(asymptomatic)
    if isinstance(provenance, str):
      provenance = (provenance,)
    self.provenance = tuple(sorted(set(provenance)))

  def __len__(self):
    return len(self.symptomatic) + len(self.asymptomatic)

  def IsEmpty(self):
    return not len(self)

  def IsBalanced(self):
    return len(self.symptomatic) == len(self.asymptomatic)

  def Owners(self):
    """Participant ids owning at least one segment."""
    return set(s.participant_id for s in self.symptomatic + self.asymptomatic)

  def Merge(self, other):
    return SegmentSet(self.symptomatic + other.symptomatic,
                      self.asymptomatic + other.asymptomatic,
                      self.provenance + other.provenance)

  def __repr__(self):
    return 'SegmentSet(%d symptomatic, %d asymptomatic, %s)' % (
        len(self.symptomatic), len(self.asymptomatic),
        ','.join(self.provenance))


def NormalizeBpm(values):
  return (np.asarray(values, dtype=np.float64) - BPM_OFFSET) / BPM_SCALE

def DenormalizeBpm(values):
  return np.asarray(values, dtype=np.float64) * BPM_SCALE + BPM_OFFSET


def IsShiftValid(shift_days):
  """True if a shifted symptomatic window still covers the onset day."""
  start = -DAYS_BEFORE_ONSET + shift_days
  return start <= 0 < start + SEGMENT_DAYS

def ValidShifts():
  return [s for s in range(-SEGMENT_DAYS, SEGMENT_DAYS + 1) if IsShiftValid(s)]


def ExtractWindow(series, start_index, label, shift_days=0):
  """Cut the SEGMENT_DAYS window starting start_index days into series.

  Raises:
    InsufficientCoverage: the window leaves the recorded days
  """
  day_count = series.DayCount()
  if start_index < 0 or start_index + SEGMENT_DAYS > day_count:
    raise problems_module.InsufficientCoverage(
        participant_id=series.participant_id, first_day=start_index,
        last_day=start_index + SEGMENT_DAYS - 1, day_count=day_count)
  first = start_index * heartrate.BINS_PER_DAY
  last = first + SEGMENT_BINS
  return Segment(series.participant_id, series.DayDate(start_index),
                 series.values[first:last].copy(), label, shift_days,
                 heartrate.BinCompleteness(series.counts[first:last]),
                 start_index)


def ExtractSymptomatic(series, onset, shift_days=0):
  """The 14-day window starting at midnight of onset - 7 + shift_days days.

  Args:
    series: a FiveMinSeries
    onset: datetime.date of reported symptom onset
    shift_days: int, 0 for the canonical window

  Raises:
    OnsetNotContained: the shift moves the window off the onset day
    InsufficientCoverage: the window leaves the recorded days
  """
  if not IsShiftValid(shift_days):
    raise problems_module.OnsetNotContained(
        participant_id=series.participant_id, shift_days=shift_days)
  onset_index = series.DayIndex(onset)
  return ExtractWindow(series, onset_index - DAYS_BEFORE_ONSET + shift_days,
                       SYMPTOMATIC, shift_days)


def AsymptomaticStarts(day_count, onset_index=None):
  """Start days of the asymptomatic windows of a day_count-day recording.

  With an onset, a window qualifies when it ends at least MIN_DISTANCE_DAYS
  before the symptomatic window or starts at least MIN_DISTANCE_DAYS after
  it.
  """
  starts = range(0, day_count - SEGMENT_DAYS + 1)
  if onset_index is None:
    return list(starts)
  sym_start = onset_index - DAYS_BEFORE_ONSET
  sym_end = sym_start + SEGMENT_DAYS
  return [s for s in starts
          if s + SEGMENT_DAYS <= sym_start - MIN_DISTANCE_DAYS or
          s >= sym_end + MIN_DISTANCE_DAYS]


def ExtractAsymptomatic(series, onset=None):
  """Every qualifying 14-day window at a one day stride.

  Args:
    series: a FiveMinSeries
    onset: datetime.date or None for participants without symptoms

  Returns:
    A list of asymptomatic Segments ordered by start day; empty when the
    series spans fewer than 14 days.
  """
  onset_index = None if onset is None else series.DayIndex(onset)
  return [ExtractWindow(series, start, ASYMPTOMATIC)
          for start in AsymptomaticStarts(series.DayCount(), onset_index)]


def WindowDistanceDays(a, b):
  """Days between two windows given as segments; 0 when they overlap."""
  a_start, b_start = a.start_day, b.start_day
  a_end, b_end = a.EndDay(), b.EndDay()
  if a_end <= b_start:
    return (b_start - a_end).days
  if b_end <= a_start:
    return (a_start - b_end).days
  return 0


def FilterByCompleteness(segments, threshold=DEFAULT_COMPLETENESS_THRESHOLD,
                         problems=problems_module.default_problem_reporter):
  """Drop segments whose completeness is below threshold, reporting each."""
  kept = []
  for segment in segments:
    if segment.completeness < threshold:
      problems.LowCompleteness(segment.participant_id,
                               segment.start_day.isoformat(),
                               segment.completeness, threshold)
      continue
    kept.append(segment)
  return kept


def ImputeMedian(segment):
  """Fill missing bins with the median of the segment's observed bins.

  Raises:
    EmptySegment: no bin of the segment was observed
  """
  missing = np.isnan(segment.values)
  if not missing.any():
    return segment
  if missing.all():
    raise problems_module.EmptySegment(participant_id=segment.participant_id)
  values = segment.values.copy()
  values[missing] = np.median(values[~missing])
  return Segment(segment.participant_id, segment.start_day, values,
                 segment.label, segment.shift_days, segment.completeness,
                 segment.start_index)


def ToFeatureMap(segment):
  """Render an imputed segment; pixel (r, c) is values[c * 24 + r].

  Raises:
    UnimputedSegment: the segment still has missing bins
  """
  missing = int(np.count_nonzero(np.isnan(segment.values)))
  if missing:
    raise problems_module.UnimputedSegment(
        participant_id=segment.participant_id, count=missing)
  pixels = segment.values.reshape(FEATURE_COLUMNS, FEATURE_ROWS).T.copy()
  return FeatureMap(pixels, segment)


def BalanceByReplication(segment_set):
  """Repeat the symptomatic segments cyclically up to the asymptomatic count.

  Raises:
    CannotBalance: one of the classes is empty
  """
  n_sym = len(segment_set.symptomatic)
  n_asym = len(segment_set.asymptomatic)
  if not n_sym or not n_asym:
    raise problems_module.CannotBalance(symptomatic=n_sym,
                                        asymptomatic=n_asym)
  replicas = [segment_set.symptomatic[i % n_sym] for i in range(n_asym)]
  return SegmentSet(replicas, segment_set.asymptomatic,
                    segment_set.provenance)


def FeatureMapBatch(segments):
  """Normalized float32 network input of shape (N, 1, 24, 168)."""
  batch = np.empty((len(segments), 1, FEATURE_ROWS, FEATURE_COLUMNS),
                   dtype=np.float32)
  for i, segment in enumerate(segments):
    batch[i, 0] = NormalizeBpm(ToFeatureMap(segment).pixels)
  return batch


def SeriesBatch(segments):
  """Normalized float32 raw-series input of shape (N, 4032)."""
  batch = np.empty((len(segments), SEGMENT_BINS), dtype=np.float32)
  for i, segment in enumerate(segments):
    batch[i] = NormalizeBpm(ToFeatureMap(segment).Flatten())
  return batch
