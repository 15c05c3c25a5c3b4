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

import json
import os

import numpy as np
import pandas as pd

from . import heartrate
from . import manifest as manifest_module
from . import problems as problems_module
from . import util

MANIFEST_FILE = 'manifest.json'
GROUND_TRUTH_FILE = 'ground_truth.json'
HEART_RATE_DIR = 'heart_rate'
HEART_RATE_COLUMNS = ('timestamp', 'bpm')


class Loader:
  def __init__(self,
               cohort_path,
               problems=problems_module.default_problem_reporter,
               expected_counts=None):
    """Initialize a new Loader object.

    Args:
      cohort_path: directory holding manifest.json and heart_rate/<id>.csv
      problems: a ProblemReporter object, the default reporter raises an
        exception for each problem
      expected_counts: optional dict of group name to participant count
    """
    self._path = cohort_path
    self._problems = problems
    self._expected_counts = expected_counts
    self._manifest = None

  def _DetermineFormat(self):
    if not os.path.isdir(self._path):
      self._problems.MissingFile(self._path)
      return False
    if not os.path.exists(os.path.join(self._path, MANIFEST_FILE)):
      self._problems.MissingFile(MANIFEST_FILE)
      return False
    return True

  def LoadManifest(self):
    """Returns the validated Manifest, or None if it could not be read."""
    if self._manifest is not None:
      return self._manifest
    if not self._DetermineFormat():
      return None
    path = os.path.join(self._path, MANIFEST_FILE)
    with open(path) as f:
      try:
        contents = json.load(f)
      except ValueError as e:
        self._problems.OtherProblem('%s is not valid JSON: %s' %
                                    (MANIFEST_FILE, e))
        return None
    rows = contents.get('participants') if isinstance(contents, dict) \
        else contents
    if not rows:
      self._problems.EmptyFile(MANIFEST_FILE)
      return None
    manifest = manifest_module.Manifest()
    for row_num, row in enumerate(rows):
      self._problems.SetFileContext(MANIFEST_FILE, row_num, row, None)
      manifest.AddEntry(manifest_module.ManifestEntry(field_dict=row),
                        self._problems)
    self._problems.ClearContext()
    if not manifest.Validate(self._problems, self._expected_counts):
      return None
    self._manifest = manifest
    return manifest

  def LoadSeries(self, participant_id):
    """Read, window and validate one participant's heart-rate CSV.

    Returns:
      A HeartRateSeries, or None if the file is missing or malformed.
    """
    manifest = self.LoadManifest()
    if manifest is None:
      return None
    entry = manifest.GetEntry(participant_id)
    file_name = os.path.join(HEART_RATE_DIR, '%s.csv' % participant_id)
    path = os.path.join(self._path, file_name)
    if not os.path.exists(path):
      self._problems.MissingFile(file_name)
      return None
    try:
      frame = pd.read_csv(path)
    except pd.errors.EmptyDataError:
      self._problems.EmptyFile(file_name)
      return None
    except ValueError as e:
      self._problems.OtherProblem('%s: %s' % (file_name, e))
      return None
    for column_name in HEART_RATE_COLUMNS:
      if column_name not in frame.columns:
        self._problems.MissingColumn(file_name, column_name)
        return None
    if frame.empty:
      self._problems.EmptyFile(file_name)
      return None
    try:
      timestamps = frame['timestamp'].to_numpy(dtype=np.int64)
      bpm = frame['bpm'].to_numpy(dtype=np.float64)
    except (TypeError, ValueError) as e:
      self._problems.OtherProblem('%s: %s' % (file_name, e))
      return None
    start, end = self._CollectionWindow(entry, timestamps)
    series = heartrate.HeartRateSeries(
        participant_id, timestamps, bpm, start, end,
        entry.timezone_offset_minutes)
    self._problems.SetFileContext(file_name, None, None, None)
    series.Validate(self._problems)
    self._problems.ClearContext()
    return series

  @staticmethod
  def _CollectionWindow(entry, timestamps):
    offset = entry.timezone_offset_minutes
    if entry.collection_start_date:
      start = util.LocalMidnight(entry.CollectionStartDate(), offset)
    else:
      start = util.FloorToLocalMidnight(int(timestamps.min()), offset)
    if entry.collection_days:
      end = start + entry.collection_days * util.SECONDS_PER_DAY
    else:
      end = util.CeilToLocalMidnight(int(timestamps.max()) + 1, offset)
    return start, end

  def Load(self):
    """Load the manifest and every participant's series.

    Returns:
      (manifest, {participant_id: HeartRateSeries}); the manifest is None
      when it could not be read. Participants whose file failed to load are
      left out of the dict.
    """
    manifest = self.LoadManifest()
    if manifest is None:
      return None, {}
    series = {}
    for entry in manifest:
      s = self.LoadSeries(entry.participant_id)
      if s is not None:
        series[entry.participant_id] = s
    return manifest, series


def WriteCohort(cohort_path, manifest, series_list, ground_truth=None):
  """Write a cohort in the layout Loader reads.

  Args:
    cohort_path: output directory, created if needed
    manifest: a Manifest
    series_list: iterable of HeartRateSeries
    ground_truth: optional JSON-serializable dict written next to the manifest
  """
  hr_dir = os.path.join(cohort_path, HEART_RATE_DIR)
  if not os.path.isdir(hr_dir):
    os.makedirs(hr_dir)
  with open(os.path.join(cohort_path, MANIFEST_FILE), 'w') as f:
    json.dump({'participants': manifest.ToList()}, f, indent=2,
              sort_keys=False)
    f.write('\n')
  for series in series_list:
    frame = pd.DataFrame({'timestamp': series.timestamps, 'bpm': series.bpm},
                         columns=list(HEART_RATE_COLUMNS))
    frame.to_csv(os.path.join(hr_dir, '%s.csv' % series.participant_id),
                 index=False, float_format='%.1f', lineterminator='\n')
  if ground_truth is not None:
    with open(os.path.join(cohort_path, GROUND_TRUTH_FILE), 'w') as f:
      json.dump(ground_truth, f, indent=2, sort_keys=True)
      f.write('\n')
