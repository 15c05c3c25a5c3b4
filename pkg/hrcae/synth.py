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

"""Synthetic heart-rate cohorts with known illness windows.

Each participant gets a resting rate, a 24 hour rhythm with its trough at
04:00 local time, bounded noise and, for pretrain and positive participants,
a resting-rate elevation around the onset day. Missing data is simulated by
dropping whole five-minute bins.
"""

import collections
import concurrent.futures
import datetime

import numpy as np

from . import heartrate
from . import manifest as manifest_module
from . import problems as problems_module
from . import segmenter
from . import util
from .problems import log

MISSINGNESS_UNIFORM = 'uniform'
MISSINGNESS_BURST = 'burst'
GENDERS = ('female', 'male')
CIRCADIAN_TROUGH_HOUR = 4.0
_ROLE_KEYS = {manifest_module.GROUP_PRETRAIN: 0,
              manifest_module.GROUP_POSITIVE: 1,
              manifest_module.GROUP_CONTROL: 2}
_ID_PREFIXES = {manifest_module.GROUP_PRETRAIN: 'pre',
                manifest_module.GROUP_POSITIVE: 'pos',
                manifest_module.GROUP_CONTROL: 'ctl'}


class GeneratorConfig(object):
  """Cohort shape and signal parameters; seed fixes every draw."""

  FIELDS = ('n_pretrain', 'n_positive', 'n_control', 'days', 'start_date',
            'timezone_offset_minutes', 'sites', 'sample_interval_seconds',
            'base_hr_mean', 'base_hr_sd', 'circadian_amplitude', 'noise_sd',
            'delta_bpm', 'onset_day', 'onset_jitter_days', 'duration_days',
            'ramp_days', 'missingness_rate', 'missingness_mode',
            'burst_bins', 'seed')

  def __init__(self, n_pretrain=49, n_positive=19, n_control=19, days=90,
               start_date='2021-01-04', timezone_offset_minutes=60,
               sites=('site_a', 'site_b', 'site_c'),
               sample_interval_seconds=60, base_hr_mean=65.0, base_hr_sd=8.0,
               circadian_amplitude=6.0, noise_sd=2.5, delta_bpm=8.0,
               onset_day=45, onset_jitter_days=0, duration_days=7,
               ramp_days=1.0, missingness_rate=0.05,
               missingness_mode=MISSINGNESS_UNIFORM, burst_bins=24, seed=0):
    self.n_pretrain = n_pretrain
    self.n_positive = n_positive
    self.n_control = n_control
    self.days = days
    self.start_date = start_date
    self.timezone_offset_minutes = timezone_offset_minutes
    self.sites = list(sites)
    self.sample_interval_seconds = sample_interval_seconds
    self.base_hr_mean = base_hr_mean
    self.base_hr_sd = base_hr_sd
    self.circadian_amplitude = circadian_amplitude
    self.noise_sd = noise_sd
    self.delta_bpm = delta_bpm
    self.onset_day = onset_day
    self.onset_jitter_days = onset_jitter_days
    self.duration_days = duration_days
    self.ramp_days = ramp_days
    self.missingness_rate = missingness_rate
    self.missingness_mode = missingness_mode
    self.burst_bins = burst_bins
    self.seed = seed

  def Validate(self):
    def _Check(name, ok, reason=None):
      if not ok:
        raise problems_module.InvalidConfig(column_name=name,
                                            value=getattr(self, name),
                                            reason=reason)
    for name in ('n_pretrain', 'n_positive', 'n_control', 'onset_jitter_days'):
      _Check(name, isinstance(getattr(self, name), int) and
             getattr(self, name) >= 0)
    _Check('n_control', self.n_control >= self.n_positive,
           'every positive participant needs a matched control')
    _Check('days', isinstance(self.days, int) and self.days >= 1)
    _Check('start_date', util.IsValidDate(self.start_date))
    _Check('timezone_offset_minutes',
           util.IsValidTimezoneOffset(self.timezone_offset_minutes))
    _Check('sites', len(self.sites) > 0)
    _Check('sample_interval_seconds',
           isinstance(self.sample_interval_seconds, int) and
           0 < self.sample_interval_seconds <= heartrate.BIN_SECONDS and
           heartrate.BIN_SECONDS % self.sample_interval_seconds == 0,
           'must divide %d' % heartrate.BIN_SECONDS)
    for name in ('base_hr_sd', 'circadian_amplitude', 'noise_sd',
                 'delta_bpm', 'ramp_days'):
      _Check(name, getattr(self, name) >= 0)
    _Check('missingness_rate', 0 <= self.missingness_rate < 1)
    _Check('missingness_mode', self.missingness_mode in
           (MISSINGNESS_UNIFORM, MISSINGNESS_BURST))
    _Check('burst_bins', isinstance(self.burst_bins, int) and
           self.burst_bins >= 1)
    _Check('duration_days', self.duration_days >= 0)
    _Check('ramp_days', 2 * self.ramp_days <= self.duration_days or
           self.duration_days == 0, 'ramps longer than the illness')
    _Check('onset_day', self.onset_day - self.onset_jitter_days >= 0 and
           self.onset_day + self.onset_jitter_days + self.duration_days <=
           self.days, 'illness must fit in the collection window')
    return self

  def ToDict(self):
    d = collections.OrderedDict()
    for name in self.FIELDS:
      d[name] = getattr(self, name)
    return d

  @classmethod
  def FromDict(cls, d):
    unknown = set(d) - set(cls.FIELDS)
    if unknown:
      raise problems_module.InvalidConfig(column_name='synth',
                                          value=sorted(unknown))
    return cls(**d)

  def ExpectedCounts(self):
    return {manifest_module.GROUP_PRETRAIN: self.n_pretrain,
            manifest_module.GROUP_POSITIVE: self.n_positive,
            manifest_module.GROUP_CONTROL: self.n_control}


def ParticipantId(role, index):
  return '%s-%03d' % (_ID_PREFIXES[role], index + 1)


def IllnessProfile(day_offsets, onset_day, duration_days, ramp_days):
  """Elevation factor in [0, 1] at fractional days since the start.

  Zero outside [onset_day, onset_day + duration_days), linear ramps of
  ramp_days at both ends.
  """
  t = np.asarray(day_offsets, dtype=np.float64)
  end = onset_day + duration_days
  inside = (t >= onset_day) & (t < end)
  if ramp_days <= 0:
    return inside.astype(np.float64)
  rise = (t - onset_day) / ramp_days
  fall = (end - t) / ramp_days
  return np.where(inside, np.clip(np.minimum(rise, fall), 0.0, 1.0), 0.0)


def _DroppedBins(rng, config, bin_count):
  if config.missingness_rate <= 0:
    return np.zeros(bin_count, dtype=bool)
  if config.missingness_mode == MISSINGNESS_UNIFORM:
    return rng.random(bin_count) < config.missingness_rate
  dropped = np.zeros(bin_count, dtype=bool)
  bursts = rng.poisson(config.missingness_rate * bin_count /
                       config.burst_bins)
  for start in rng.integers(0, bin_count, size=bursts):
    dropped[start:start + config.burst_bins] = True
  return dropped


def _CheckSeparation(participant_id, series, onset_index, config):
  """Symptomatic window mean must exceed every asymptomatic window mean."""
  day = (series.timestamps - series.collection_start) // util.SECONDS_PER_DAY
  sums = np.bincount(day, weights=series.bpm, minlength=config.days)
  counts = np.bincount(day, minlength=config.days)

  def _WindowMean(start):
    stop = start + segmenter.SEGMENT_DAYS
    n = counts[start:stop].sum()
    return sums[start:stop].sum() / n if n else np.nan

  sym_start = onset_index - segmenter.DAYS_BEFORE_ONSET
  if sym_start < 0 or sym_start + segmenter.SEGMENT_DAYS > config.days:
    return
  sym_mean = _WindowMean(sym_start)
  asym_means = [_WindowMean(s) for s in
                segmenter.AsymptomaticStarts(config.days, onset_index)]
  asym_means = [m for m in asym_means if not np.isnan(m)]
  if asym_means and not sym_mean > max(asym_means):
    raise problems_module.OtherProblem(
        participant_id=participant_id,
        description='symptomatic mean %.2f does not exceed asymptomatic '
        'mean %.2f' % (sym_mean, max(asym_means)))
  log.debug('%s: symptomatic mean %.2f, asymptomatic max %.2f',
            participant_id, sym_mean, max(asym_means or [np.nan]))


def GenerateParticipant(config, role, index=0, attributes=None,
                        matched_with=None):
  """One synthetic participant.

  Args:
    config: GeneratorConfig
    role: manifest group of the participant
    index: position within the role; with config.seed it fixes every draw
    attributes: optional (site, gender, age_band) to copy, for controls
    matched_with: participant id of the matched partner

  Returns:
    (HeartRateSeries, ManifestEntry, ground truth dict)
  """
  config.Validate()
  if role not in _ROLE_KEYS:
    raise problems_module.InvalidConfig(column_name='role', value=role)
  rng = np.random.default_rng(
      util.DeriveSeed(config.seed, _ROLE_KEYS[role], index))
  participant_id = ParticipantId(role, index)
  offset = config.timezone_offset_minutes
  start_date = util.DateStringToDateObject(config.start_date)
  start = util.LocalMidnight(start_date, offset)

  if attributes is None:
    attributes = (config.sites[index % len(config.sites)],
                  GENDERS[rng.integers(len(GENDERS))],
                  manifest_module.AGE_BANDS[
                      rng.integers(len(manifest_module.AGE_BANDS))])
  site, gender, age_band = attributes

  interval = config.sample_interval_seconds
  n = config.days * util.SECONDS_PER_DAY // interval
  elapsed = np.arange(n, dtype=np.int64) * interval
  hours = (elapsed % util.SECONDS_PER_DAY) / 3600.0
  base_hr = rng.normal(config.base_hr_mean, config.base_hr_sd)
  bpm = base_hr - config.circadian_amplitude * np.cos(
      2 * np.pi * (hours - CIRCADIAN_TROUGH_HOUR) / 24.0)
  if config.noise_sd > 0:
    bpm += np.clip(rng.normal(0.0, config.noise_sd, n),
                   -3 * config.noise_sd, 3 * config.noise_sd)

  truth = collections.OrderedDict([('group', role), ('base_hr',
                                                     round(base_hr, 3))])
  onset_date = None
  onset_index = None
  if role != manifest_module.GROUP_CONTROL:
    jitter = config.onset_jitter_days
    onset_index = config.onset_day + (
        int(rng.integers(-jitter, jitter + 1)) if jitter else 0)
    onset_date = start_date + datetime.timedelta(days=onset_index)
    bpm += config.delta_bpm * IllnessProfile(
        elapsed / float(util.SECONDS_PER_DAY), onset_index,
        config.duration_days, config.ramp_days)
    truth['onset_date'] = onset_date.isoformat()
    truth['illness_start'] = onset_date.isoformat()
    truth['illness_end'] = (onset_date + datetime.timedelta(
        days=config.duration_days)).isoformat()
    truth['delta_bpm'] = config.delta_bpm

  bins = elapsed // heartrate.BIN_SECONDS
  dropped = _DroppedBins(rng, config, int(bins[-1]) + 1 if n else 0)
  keep = ~dropped[bins]
  series = heartrate.HeartRateSeries(
      participant_id, start + elapsed[keep], np.round(bpm[keep], 1), start,
      start + config.days * util.SECONDS_PER_DAY, offset)
  truth['missing_fraction'] = round(float(dropped.mean()) if n else 0.0, 6)

  entry = manifest_module.ManifestEntry(
      participant_id=participant_id, site=site, gender=gender,
      age_band=age_band, timezone_offset_minutes=offset, group=role,
      onset_date=onset_date.isoformat() if onset_date else None,
      matched_with=matched_with, collection_start_date=config.start_date,
      collection_days=config.days)

  if onset_index is not None and config.noise_sd > 0 and \
      config.delta_bpm > 3 * config.noise_sd:
    _CheckSeparation(participant_id, series, onset_index, config)
  return series, entry, truth


def _GenerateTask(args):
  return GenerateParticipant(*args)


def GenerateCohort(config, jobs=1):
  """A cohort of pretrain, positive and matched control participants.

  Controls copy the site, gender and age band of the positive participant
  with the same index; extra controls draw their own.

  Returns:
    (list of HeartRateSeries, Manifest, ground truth dict keyed by id)
  """
  config.Validate()
  tasks = [(config, manifest_module.GROUP_PRETRAIN, i, None, None)
           for i in range(config.n_pretrain)]
  tasks += [(config, manifest_module.GROUP_POSITIVE, i, None,
             ParticipantId(manifest_module.GROUP_CONTROL, i))
            for i in range(config.n_positive)]
  results = _Run(tasks, jobs)
  positives = results[config.n_pretrain:]
  control_tasks = []
  for i in range(config.n_control):
    if i < len(positives):
      entry = positives[i][1]
      control_tasks.append((config, manifest_module.GROUP_CONTROL, i,
                            entry.MatchingKey(), entry.participant_id))
    else:
      control_tasks.append((config, manifest_module.GROUP_CONTROL, i, None,
                            None))
  results += _Run(control_tasks, jobs)

  manifest = manifest_module.Manifest()
  ground_truth = collections.OrderedDict()
  series_list = []
  for series, entry, truth in results:
    manifest.AddEntry(entry)
    series_list.append(series)
    ground_truth[entry.participant_id] = truth
  log.info('generated %d participants', len(manifest))
  return series_list, manifest, ground_truth


def _Run(tasks, jobs):
  if jobs and jobs > 1 and len(tasks) > 1:
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
      return list(pool.map(_GenerateTask, tasks))
  return [_GenerateTask(task) for task in tasks]
