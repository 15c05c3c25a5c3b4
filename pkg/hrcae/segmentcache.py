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

"""Per-participant binary segment cache.

Each file starts with a little-endian uint32 giving the length of a UTF-8
JSON index, followed by the index and then one record of SEGMENT_BINS
little-endian float32 values per index entry, in index order.
"""

import json
import os
import struct

import numpy as np

from . import problems as problems_module
from . import segmenter
from . import util

CACHE_SUFFIX = '.seg'
_LENGTH = struct.Struct('<I')
_RECORD_DTYPE = np.dtype('<f4')


def CachePath(cache_dir, participant_id):
  return os.path.join(cache_dir, participant_id + CACHE_SUFFIX)


def AtRecordPrecision(segment):
  """segment with its values as they read back from a cache file."""
  values = np.asarray(segment.values, dtype=_RECORD_DTYPE)
  return segmenter.Segment(segment.participant_id, segment.start_day,
                           values.astype(np.float64), segment.label,
                           segment.shift_days, segment.completeness,
                           segment.start_index)


def WriteSegments(path, participant_id, group, segments):
  """Write segments of one participant; the output depends only on inputs."""
  records = []
  for segment in segments:
    records.append({
        'start_day': segment.start_day.isoformat(),
        'start_index': segment.start_index,
        'label': segment.label,
        'shift_days': segment.shift_days,
        'completeness': round(float(segment.completeness), 6),
    })
  index = json.dumps({'participant_id': participant_id, 'group': group,
                      'bins': segmenter.SEGMENT_BINS, 'records': records},
                     sort_keys=True, separators=(',', ':')).encode('utf-8')
  with open(path, 'wb') as f:
    f.write(_LENGTH.pack(len(index)))
    f.write(index)
    for segment in segments:
      f.write(np.asarray(segment.values, dtype=_RECORD_DTYPE).tobytes())


def ReadSegments(path):
  """Returns (participant_id, group, [Segment]) from a cache file.

  Raises:
    BadCheckpoint: the file is truncated or its index is unreadable
  """
  with open(path, 'rb') as f:
    data = f.read()
  try:
    (length,) = _LENGTH.unpack_from(data, 0)
    index = json.loads(data[_LENGTH.size:_LENGTH.size + length]
                       .decode('utf-8'))
  except (struct.error, ValueError) as e:
    raise problems_module.BadCheckpoint(file_name=path, description=str(e))
  bins = index['bins']
  offset = _LENGTH.size + length
  expected = offset + len(index['records']) * bins * _RECORD_DTYPE.itemsize
  if len(data) != expected:
    raise problems_module.BadCheckpoint(
        file_name=path,
        description='expected %d bytes, found %d' % (expected, len(data)))
  values = np.frombuffer(data, dtype=_RECORD_DTYPE, offset=offset)
  values = values.reshape(len(index['records']), bins)
  segments = []
  for record, row in zip(index['records'], values):
    segments.append(segmenter.Segment(
        index['participant_id'],
        util.DateStringToDateObject(record['start_day']),
        row.astype(np.float64), record['label'], record['shift_days'],
        record['completeness'], record['start_index']))
  return index['participant_id'], index['group'], segments


class SegmentCache(object):
  """Directory of per-participant cache files plus index.json."""

  INDEX_FILE = 'index.json'

  def __init__(self, cache_dir):
    self.cache_dir = cache_dir
    self._loaded = {}

  def Write(self, participant_id, group, segments):
    if not os.path.isdir(self.cache_dir):
      os.makedirs(self.cache_dir)
    WriteSegments(CachePath(self.cache_dir, participant_id), participant_id,
                  group, segments)

  def WriteIndex(self, groups, summary=None):
    """groups maps participant_id to its manifest group."""
    with open(os.path.join(self.cache_dir, self.INDEX_FILE), 'w') as f:
      json.dump({'participants': groups, 'summary': summary or {}}, f,
                indent=2, sort_keys=True)
      f.write('\n')

  def ReadIndex(self):
    path = os.path.join(self.cache_dir, self.INDEX_FILE)
    if not os.path.exists(path):
      raise problems_module.MissingFile(file_name=path)
    with open(path) as f:
      return json.load(f)

  def Participants(self, group=None):
    groups = self.ReadIndex()['participants']
    return sorted(pid for pid, g in groups.items()
                  if group is None or g == group)

  def Segments(self, participant_id):
    if participant_id not in self._loaded:
      _, _, segments = ReadSegments(CachePath(self.cache_dir, participant_id))
      self._loaded[participant_id] = segments
    return self._loaded[participant_id]

  def Canonical(self, participant_id):
    """(symptomatic, asymptomatic) segments with shift 0."""
    segments = self.Segments(participant_id)
    sym = [s for s in segments
           if s.label == segmenter.SYMPTOMATIC and s.shift_days == 0]
    asym = [s for s in segments if s.label == segmenter.ASYMPTOMATIC]
    return sym, asym

  def Shifted(self, participant_id, shift_days):
    """The symptomatic segment at shift_days, or None if not cached."""
    for s in self.Segments(participant_id):
      if s.label == segmenter.SYMPTOMATIC and s.shift_days == shift_days:
        return s
    return None

  def BuildSet(self, participant_ids, provenance):
    """SegmentSet of the canonical segments of participant_ids."""
    sym, asym = [], []
    for pid in participant_ids:
      s, a = self.Canonical(pid)
      sym.extend(s)
      asym.extend(a)
    return segmenter.SegmentSet(sym, asym, provenance)
