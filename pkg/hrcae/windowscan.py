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

"""Sliding the symptomatic window around the onset, and scoring every
window of a recording."""

import collections

from . import evaluation
from . import problems as problems_module
from . import segmentcache
from . import segmenter
from . import util

DEFAULT_SCAN_SHIFTS = tuple(range(-3, 6))

ScanEntry = collections.namedtuple(
    'ScanEntry', ['shift', 'decision', 'recon_error', 'warning'])

ContinuousEntry = collections.namedtuple(
    'ContinuousEntry', ['start_day', 'start_date', 'recon_error', 'decision',
                        'completeness', 'covers_onset'])


def _ScoreSegment(model, threshold, segment):
  error = float(evaluation.ReconstructionErrors(model, [segment])[0])
  return error, bool(threshold.Decide([error])[0])


def _ExtractShifted(series, onset, shift, completeness_threshold):
  """(segment, None), or (None, reason) when preprocess would drop it."""
  try:
    window = segmenter.ExtractSymptomatic(series, onset, shift)
    if window.completeness < completeness_threshold:
      return None, 'completeness %.3f below %.2f' % (window.completeness,
                                                     completeness_threshold)
    return segmentcache.AtRecordPrecision(segmenter.ImputeMedian(window)), None
  except (problems_module.InsufficientCoverage,
          problems_module.EmptySegment) as e:
    return None, e.FormatProblem()


def WindowScan(series, onset, model, threshold, shifts=DEFAULT_SCAN_SHIFTS,
               problems=problems_module.default_problem_reporter,
               completeness_threshold=(
                   segmenter.DEFAULT_COMPLETENESS_THRESHOLD),
               cached=None):
  """Score the symptomatic window at each shift.

  Shifts that lose the onset day, leave the recording or fall below
  completeness_threshold produce an entry with a warning and no score; the
  warning also goes to problems. Windows built from series are rounded to
  cache precision, so they score like the segments preprocess writes.

  Args:
    series: FiveMinSeries of one participant
    onset: datetime.date of symptom onset
    model: a ConvAutoEncoder
    threshold: evaluation.ThresholdModel
    cached: optional function of a shift returning the participant's cached
      Segment or None; a cached segment is scored as it is, so the decision
      at shift 0 is the one made for the held-out fold

  Returns:
    A list of ScanEntry, one per shift, in the order given.
  """
  entries = []
  for shift in shifts:
    segment = None
    if not segmenter.IsShiftValid(shift):
      reason = 'onset not contained'
    else:
      reason = None
      if cached is not None:
        segment = cached(shift)
      if segment is None:
        segment, reason = _ExtractShifted(series, onset, shift,
                                          completeness_threshold)
    if reason:
      problems.InvalidShift(series.participant_id, shift, reason)
      entries.append(ScanEntry(shift, None, None, reason))
      continue
    error, decision = _ScoreSegment(model, threshold, segment)
    entries.append(ScanEntry(shift, decision, error, None))
  return entries


def ContinuousScan(series, onset, model, threshold, stride_days=1):
  """Score every in-bounds 14-day window at stride_days.

  Windows without a single observed bin are skipped.
  """
  onset_index = None if onset is None else series.DayIndex(onset)
  segments = []
  for start in range(0, series.DayCount() - segmenter.SEGMENT_DAYS + 1,
                     stride_days):
    covers = onset_index is not None and \
        start <= onset_index < start + segmenter.SEGMENT_DAYS
    label = segmenter.SYMPTOMATIC if covers else segmenter.ASYMPTOMATIC
    segment = segmenter.ExtractWindow(series, start, label)
    try:
      segments.append((segmentcache.AtRecordPrecision(
          segmenter.ImputeMedian(segment)), covers))
    except problems_module.EmptySegment:
      continue
  errors = evaluation.ReconstructionErrors(model, [s for s, _ in segments])
  decisions = threshold.Decide(errors)
  return [ContinuousEntry(s.start_index, s.start_day, float(error),
                          bool(decision), s.completeness, covers)
          for (s, covers), error, decision in zip(segments, errors,
                                                   decisions)]


def WriteScanTrace(path, participant_id, entries):
  with open(path, 'w') as f:
    writer = util.CsvUnicodeWriter(f)
    writer.writerow(['participant', 'shift', 'recon_error', 'decision',
                     'warning'])
    for entry in entries:
      decision = None if entry.decision is None else int(entry.decision)
      writer.writerow([participant_id, entry.shift, entry.recon_error,
                       decision, entry.warning])


def WriteContinuousTrace(path, participant_id, entries):
  with open(path, 'w') as f:
    writer = util.CsvUnicodeWriter(f)
    writer.writerow(['participant', 'start_day', 'start_date', 'recon_error',
                     'decision', 'completeness', 'covers_onset'])
    for entry in entries:
      writer.writerow([participant_id, entry.start_day,
                       entry.start_date.isoformat(), entry.recon_error,
                       int(entry.decision), entry.completeness,
                       int(entry.covers_onset)])
