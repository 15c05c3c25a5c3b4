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

import collections

from . import problems as problems_module
from . import util

GROUP_PRETRAIN = 'pretrain'
GROUP_POSITIVE = 'positive'
GROUP_CONTROL = 'control'
GROUPS = (GROUP_PRETRAIN, GROUP_POSITIVE, GROUP_CONTROL)

AGE_BANDS = ('<=30', '30-39', '40-49', '50-59', '60-69', '>=70')


class ManifestEntry(object):
  """Represents one participant row of a cohort manifest.

  Callers may assign arbitrary values to instance attributes. __init__ makes no
  attempt at validating the attributes. Call Validate() to check that
  attributes are valid and consistent with the participant's group.

  Attributes:
    participant_id, site, gender, age_band, group: strings
    timezone_offset_minutes: int, minutes east of UTC
    onset_date: ISO-8601 date string or None
    matched_with: optional participant_id of the matched partner
    collection_start_date: optional ISO-8601 date of the first recorded day
    collection_days: optional int, length of the collection window
  """
  _REQUIRED_FIELD_NAMES = ['participant_id', 'site', 'gender', 'age_band',
                           'timezone_offset_minutes', 'group']
  _OPTIONAL_FIELD_NAMES = ['onset_date', 'matched_with',
                           'collection_start_date', 'collection_days']
  _FIELD_NAMES = _REQUIRED_FIELD_NAMES + _OPTIONAL_FIELD_NAMES

  def __init__(self, field_dict=None, **kwargs):
    for name in self._OPTIONAL_FIELD_NAMES:
      setattr(self, name, None)
    if not field_dict:
      field_dict = kwargs
    self.__dict__.update(field_dict)

  def OnsetDate(self):
    return util.DateStringToDateObject(self.onset_date)

  def CollectionStartDate(self):
    return util.DateStringToDateObject(self.collection_start_date)

  def MatchingKey(self):
    return (self.site, self.gender, self.age_band)

  def ToDict(self):
    d = collections.OrderedDict()
    for name in self._FIELD_NAMES:
      value = getattr(self, name, None)
      if value is not None or name in self._REQUIRED_FIELD_NAMES or \
          name == 'onset_date':
        d[name] = value
    return d

  def Validate(self, problems=problems_module.default_problem_reporter):
    found_problem = False
    for name in self._REQUIRED_FIELD_NAMES:
      if util.IsEmpty(getattr(self, name, None)):
        problems.MissingValue(name)
        found_problem = True
    if found_problem:
      return False
    if self.group not in GROUPS:
      problems.InvalidValue('group', self.group,
                            'expected one of %s' % ', '.join(GROUPS))
      found_problem = True
    if self.age_band not in AGE_BANDS:
      problems.InvalidValue('age_band', self.age_band,
                            'expected one of %s' % ', '.join(AGE_BANDS))
      found_problem = True
    if not util.ValidateTimezoneOffset(self.timezone_offset_minutes,
                                       'timezone_offset_minutes', problems):
      found_problem = True
    if self.onset_date is None:
      if self.group in (GROUP_PRETRAIN, GROUP_POSITIVE):
        problems.MissingValue('onset_date',
                              '%s participants need an onset' % self.group)
        found_problem = True
    elif not util.ValidateDate(self.onset_date, 'onset_date', problems):
      found_problem = True
    elif self.group == GROUP_CONTROL:
      problems.InvalidValue('onset_date', self.onset_date,
                            'control participants have no onset')
      found_problem = True
    if not util.ValidateDate(self.collection_start_date,
                             'collection_start_date', problems):
      found_problem = True
    if self.collection_days is not None and (
        not isinstance(self.collection_days, int) or self.collection_days < 1):
      problems.InvalidValue('collection_days', self.collection_days)
      found_problem = True
    return not found_problem

  def __repr__(self):
    return 'ManifestEntry(%s, %s)' % (self.participant_id, self.group)


class Manifest(object):
  """The ordered list of participants of a cohort."""

  def __init__(self, entries=()):
    self._entries = []
    self._by_id = {}
    for entry in entries:
      self.AddEntry(entry)

  def AddEntry(self, entry, problems=problems_module.default_problem_reporter):
    if entry.participant_id in self._by_id:
      problems.DuplicateID('participant_id', entry.participant_id)
      return
    self._entries.append(entry)
    self._by_id[entry.participant_id] = entry

  def GetEntry(self, participant_id):
    return self._by_id[participant_id]

  def __contains__(self, participant_id):
    return participant_id in self._by_id

  def __iter__(self):
    return iter(self._entries)

  def __len__(self):
    return len(self._entries)

  def GetGroup(self, group):
    """Entries of one group sorted by participant_id."""
    return sorted((e for e in self._entries if e.group == group),
                  key=lambda e: e.participant_id)

  def Validate(self, problems=problems_module.default_problem_reporter,
               expected_counts=None):
    """Validate all entries, explicit pairings and optionally group sizes.

    Args:
      problems: a ProblemReporter
      expected_counts: optional dict mapping group name to participant count
    """
    valid = True
    for entry in self._entries:
      if not entry.Validate(problems):
        valid = False
    for entry in self._entries:
      partner_id = entry.matched_with
      if partner_id is None:
        continue
      if partner_id not in self._by_id:
        problems.InvalidValue('matched_with', partner_id,
                              'no participant with that id')
        valid = False
        continue
      partner = self._by_id[partner_id]
      for column_name, a, b in zip(('site', 'gender', 'age_band'),
                                   entry.MatchingKey(), partner.MatchingKey()):
        if a != b:
          problems.ManifestAttributeMismatch(entry.participant_id,
                                             partner_id, column_name)
          valid = False
    for group, expected in sorted((expected_counts or {}).items()):
      found = len(self.GetGroup(group))
      if found != expected:
        problems.CountMismatch(group, expected, found)
        valid = False
    return valid

  def ToList(self):
    return [e.ToDict() for e in self._entries]


def Summarize(manifest):
  """Participant counts per group broken down by gender, age band and site.

  Returns:
    {group: {'total': n, 'gender': {...}, 'age_band': {...}, 'site': {...}}}
  """
  summary = collections.OrderedDict()
  for group in GROUPS:
    entries = manifest.GetGroup(group)
    group_summary = collections.OrderedDict()
    group_summary['total'] = len(entries)
    for column_name in ('gender', 'age_band', 'site'):
      counts = collections.Counter(getattr(e, column_name) for e in entries)
      group_summary[column_name] = collections.OrderedDict(
          sorted(counts.items()))
    summary[group] = group_summary
  return summary
