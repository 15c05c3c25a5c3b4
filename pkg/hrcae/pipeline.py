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

"""Bodies of the hrcaetool.py subcommands.

Each Cmd function takes a validated RunConfig, writes its artifacts under
the configured paths, prints a short summary and returns the exit code.
Problems that end a run are raised as ExceptionWithContext subclasses and
mapped to exit codes by the caller.
"""

import collections
import concurrent.futures
import functools
import glob
import json
import os
import sys

import numpy as np
import pandas as pd

from . import checkpoint as checkpoint_module
from . import config as config_module
from . import errors
from . import evaluation
from . import gradcheck
from . import heartrate
from . import loader as loader_module
from . import manifest as manifest_module
from . import nets
from . import problems as problems_module
from . import segmentcache
from . import segmenter
from . import synth
from . import trainer
from . import util
from . import windowscan
from .problems import log

CHECKPOINT_FILE = 'model.ckpt'
TRAINING_LOG_FILE = 'training_log.csv'
RESULTS_FILE = 'results.csv'
SCORES_FILE = 'scores.csv'
SUMMARY_FILE = 'summary.json'
FOLDS_DIR = 'folds'
PRETRAIN_CHECKPOINT_FILE = 'pretrain.ckpt'

RESULT_COLUMNS = ['experiment', 'fold', 'mode', 'shift', 'positive',
                  'control', 'tp', 'fp', 'tn', 'fn'] + \
    list(evaluation.METRIC_NAMES)
SCORE_COLUMNS = ['experiment', 'fold', 'shift', 'participant', 'start_day',
                 'label', 'score', 'decision']

# Keys mixed into derived seeds.
_PRETRAIN_KEY = 0
_FINETUNE_KEY = 1
_CLASSIFIER_KEY = 2


def _Out(out):
  return sys.stdout if out is None else out


def _MakeDirs(path):
  if path and not os.path.isdir(path):
    os.makedirs(path)


def _WriteJson(path, value):
  with open(path, 'w') as f:
    json.dump(value, f, indent=2, sort_keys=True)
    f.write('\n')


def _CountingReporter():
  accumulator = problems_module.CountingProblemAccumulator()
  return problems_module.ProblemReporter(accumulator), accumulator


def _ProblemCountText(accumulator):
  """Totals by problem type, then by problem class name."""
  text = '%d error(s), %d warning(s)' % (accumulator.ErrorCount(),
                                         accumulator.WarningCount())
  counts = accumulator.CountsByName()
  if counts:
    text += ': ' + ', '.join('%s %d' % item for item in sorted(counts.items()))
  return text


def _LoadManifest(config, problems=None):
  """(Loader, Manifest) of the configured cohort; raises when the manifest
  is unusable."""
  if problems is None:
    problems = _CountingReporter()[0]
  data_dir = config.paths['data_dir']
  cohort = loader_module.Loader(data_dir, problems)
  manifest = cohort.LoadManifest()
  if manifest is None:
    raise problems_module.MissingFile(
        file_name=os.path.join(data_dir, loader_module.MANIFEST_FILE))
  return cohort, manifest


def _FormatMetric(value):
  return '   n/a' if value is None else '%6.3f' % value


# synth

def CmdSynth(config, out=None):
  """Generate a synthetic cohort into paths.data_dir."""
  out = _Out(out)
  generator = config.GeneratorConfig().Validate()
  series_list, manifest, ground_truth = synth.GenerateCohort(generator,
                                                             config.jobs)
  data_dir = config.paths['data_dir']
  loader_module.WriteCohort(data_dir, manifest, series_list, ground_truth)
  print('wrote %d participants to %s' % (len(manifest), data_dir), file=out)
  for group, summary in manifest_module.Summarize(manifest).items():
    print('  %-9s %3d' % (group, summary['total']), file=out)
    for column_name in ('gender', 'age_band', 'site'):
      counts = ', '.join('%s %d' % item
                         for item in summary[column_name].items())
      print('    %-9s %s' % (column_name, counts), file=out)
  return errors.EXIT_OK


# preprocess

def _ParticipantSegments(entry, series, threshold, problems):
  """Imputed segments of one participant that pass the completeness filter.

  Participants with an onset also keep every valid shift of their
  symptomatic window so that shift evaluation and scans can reuse them.
  """
  five_min = heartrate.Resample5Min(series, problems)
  onset = entry.OnsetDate() if entry.onset_date else None
  candidates = []
  if onset is not None:
    for shift in segmenter.ValidShifts():
      try:
        candidates.append(segmenter.ExtractSymptomatic(five_min, onset,
                                                       shift))
      except problems_module.InsufficientCoverage:
        if shift == 0:
          problems.MissingSymptomaticSegment(entry.participant_id)
  candidates.extend(segmenter.ExtractAsymptomatic(five_min, onset))
  kept = []
  for segment in segmenter.FilterByCompleteness(candidates, threshold,
                                                problems):
    try:
      kept.append(segmenter.ImputeMedian(segment))
    except problems_module.EmptySegment:
      continue
  if onset is not None and not any(s.IsSymptomatic() and s.shift_days == 0
                                   for s in kept):
    problems.MissingSymptomaticSegment(entry.participant_id)
  return kept


def _CompletenessSummary(segments_by_group):
  """Per group and class: segment count and completeness mean and std."""
  summary = collections.OrderedDict()
  for group in manifest_module.GROUPS:
    segments = [s for s in segments_by_group.get(group, ())
                if s.shift_days == 0]
    group_summary = collections.OrderedDict()
    for label in segmenter.LABELS:
      values = [s.completeness for s in segments if s.label == label]
      group_summary[label] = collections.OrderedDict([
          ('count', len(values)),
          ('completeness_mean', float(np.mean(values)) if values else None),
          ('completeness_std', float(np.std(values)) if values else None),
      ])
    summary[group] = group_summary
  return summary


def CmdPreprocess(config, out=None):
  """Resample, segment, filter and impute the cohort into the segment cache."""
  out = _Out(out)
  problems, accumulator = _CountingReporter()
  cohort, manifest = _LoadManifest(config, problems)
  cache = segmentcache.SegmentCache(config.paths['cache_dir'])
  threshold = config.evaluation['completeness_threshold']
  groups = collections.OrderedDict()
  segments_by_group = collections.defaultdict(list)
  for entry in manifest:
    pid = entry.participant_id
    series = cohort.LoadSeries(pid)
    if series is None:
      continue
    segments = _ParticipantSegments(entry, series, threshold, problems)
    cache.Write(pid, entry.group, segments)
    groups[pid] = entry.group
    segments_by_group[entry.group].extend(segments)
    log.info('%s: %d segments cached', pid, len(segments))
  if not groups:
    raise problems_module.OtherProblem(
        description='no participant of %s could be loaded' %
        config.paths['data_dir'])
  summary = _CompletenessSummary(segments_by_group)
  cache.WriteIndex(groups, summary)
  _WriteJson(os.path.join(cache.cache_dir, SUMMARY_FILE), summary)

  print('cached %d participants in %s (%s)' % (
      len(groups), cache.cache_dir, _ProblemCountText(accumulator)),
      file=out)
  print('  %-9s %-13s %6s  %s' % ('group', 'class', 'count', 'completeness'),
        file=out)
  for group, group_summary in summary.items():
    for label, row in group_summary.items():
      if row['count']:
        text = '%.3f +- %.3f' % (row['completeness_mean'],
                                 row['completeness_std'])
      else:
        text = 'n/a'
      print('  %-9s %-13s %6d  %s' % (group, label, row['count'], text),
            file=out)
  return errors.EXIT_OK


# train

def _Sets(cache):
  pretrain_ids = cache.Participants(manifest_module.GROUP_PRETRAIN)
  cv_ids = cache.Participants(manifest_module.GROUP_POSITIVE) + \
      cache.Participants(manifest_module.GROUP_CONTROL)
  return (cache.BuildSet(pretrain_ids, 'pretrain'),
          cache.BuildSet(cv_ids, ('cv_positive', 'cv_control')))


def CmdTrain(config, out=None):
  """Pretrain on the pretrain subset, then fine-tune on the CV subset."""
  out = _Out(out)
  cache = segmentcache.SegmentCache(config.paths['cache_dir'])
  pretrain, finetune = _Sets(cache)
  if config.finetune_schedule.max_epochs == 0:
    finetune = segmenter.SegmentSet()
  model_config = config.model_config
  model = nets.BuildModel(model_config,
                          util.DeriveSeed(config.seed, _PRETRAIN_KEY))
  ckpt = trainer.PretrainThenFinetune(
      model, pretrain, finetune, config.schedule,
      trainer.LossKindForFamily(model_config.family), config.seed,
      config.finetune_schedule, model_config.margin,
      model_config.per_sample_rmse)
  output_dir = config.paths['output_dir']
  _MakeDirs(output_dir)
  path = os.path.join(output_dir, CHECKPOINT_FILE)
  checkpoint_module.Save(ckpt, path)
  trainer.WriteTrainingLog(os.path.join(output_dir, TRAINING_LOG_FILE), ckpt)
  final_loss = ckpt.loss_trace[-1] if ckpt.loss_trace else None
  print('wrote %s after %d epochs, final loss %s' % (
      path, len(ckpt.loss_trace),
      'n/a' if final_loss is None else '%.6f' % final_loss), file=out)
  print('sha256 %s' % ckpt.Checksum(), file=out)
  return errors.EXIT_OK


# loso

def FoldsDir(output_dir, experiment_name):
  if experiment_name == config_module.DEFAULT_EXPERIMENT:
    return os.path.join(output_dir, FOLDS_DIR)
  return os.path.join(output_dir, FOLDS_DIR, experiment_name)


def FoldCheckpointPath(output_dir, experiment_name, fold_index):
  return os.path.join(FoldsDir(output_dir, experiment_name),
                      'fold_%02d.ckpt' % fold_index)


def _TestSegments(cache, fold, shift, problems):
  """The held-out positive's window at shift plus the pair's asymptomatic
  segments; None when the shifted window is not cached."""
  positive, control = fold.held_out_pair
  symptomatic = cache.Shifted(positive, shift)
  if symptomatic is None:
    problems.InvalidShift(positive, shift, 'no cached window at this shift')
    return None
  asymptomatic = cache.Canonical(positive)[1] + cache.Canonical(control)[1]
  return [symptomatic] + asymptomatic


class _FoldTask(object):
  """Everything a worker needs to fine-tune and evaluate one fold."""

  def __init__(self, experiment, fold, pretrained, config):
    self.experiment = experiment
    self.fold = fold
    self.pretrained = pretrained
    self.cache_dir = config.paths['cache_dir']
    self.finetune_schedule = config.finetune_schedule
    self.classifier_schedule = config.classifier_schedule
    self.shifts = list(config.evaluation['shifts'])
    self.seed = config.seed


def _RunFold(task):
  """Fine-tune and evaluate one fold.

  Returns:
    (fold checkpoint, [(shift, FoldEvaluation)])
  """
  fold = task.fold
  experiment = task.experiment
  model_config = experiment.model_config
  cache = segmentcache.SegmentCache(task.cache_dir)
  problems = problems_module.ProblemReporter()
  pretrain = cache.BuildSet(fold.pretrain_ids, 'pretrain')
  train_set = cache.BuildSet(fold.TrainingIds(),
                             ('cv_positive', 'cv_control'))
  evaluation.CheckLeakage(fold, pretrain, train_set)
  finetune = train_set
  if task.finetune_schedule.max_epochs == 0:
    finetune = segmenter.SegmentSet()
  log.info('%s fold %d: held out %s', experiment.name, fold.index,
           ', '.join(fold.held_out_pair))
  tuned = trainer.Finetune(
      task.pretrained, finetune, task.finetune_schedule,
      trainer.LossKindForFamily(model_config.family),
      util.DeriveSeed(task.seed, _FINETUNE_KEY, fold.index),
      model_config.margin, model_config.per_sample_rmse)
  scorer = evaluation.FoldScorer(
      fold, tuned, experiment.mode, train_set, task.classifier_schedule,
      model_config.classifier_hidden,
      util.DeriveSeed(task.seed, _CLASSIFIER_KEY, fold.index))
  results = []
  for shift in task.shifts:
    segments = _TestSegments(cache, fold, shift, problems)
    if segments is not None:
      results.append((shift, scorer.Evaluate(segments)))
  extra = dict(tuned.extra)
  extra.update({'experiment': experiment.name, 'fold': fold.index,
                'held_out_pair': list(fold.held_out_pair),
                'mode': experiment.mode})
  if scorer.threshold is not None:
    extra['threshold'] = scorer.threshold.ToDict()
  fold_ckpt = checkpoint_module.Checkpoint(
      tuned.model_config, tuned.seed, tuned.arrays, tuned.optimizer_step,
      tuned.optimizer_arrays, tuned.loss_trace, extra)
  return fold_ckpt, results


def _MapFolds(tasks, jobs):
  if jobs > 1 and len(tasks) > 1:
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
      return list(pool.map(_RunFold, tasks))
  return [_RunFold(task) for task in tasks]


def _ResultRow(experiment, fold, shift, report):
  row = collections.OrderedDict()
  row['experiment'] = experiment.name
  row['fold'] = fold.index
  row['mode'] = experiment.mode
  row['shift'] = shift
  row['positive'], row['control'] = fold.held_out_pair
  row.update(report.ToDict())
  return row


def _ScoreRows(experiment, fold, shift, fold_evaluation):
  for score in fold_evaluation.scores:
    yield collections.OrderedDict([
        ('experiment', experiment.name),
        ('fold', fold.index),
        ('shift', shift),
        ('participant', score.participant_id),
        ('start_day', score.start_day.isoformat()),
        ('label', score.label),
        ('score', score.score),
        ('decision', int(score.decision)),
    ])


def _Pretrain(experiment, pretrain_set, config):
  model_config = experiment.model_config
  model = nets.BuildModel(model_config,
                          util.DeriveSeed(config.seed, _PRETRAIN_KEY))
  return trainer.Train(
      model, pretrain_set, config.schedule,
      trainer.LossKindForFamily(model_config.family),
      util.DeriveSeed(config.seed, _PRETRAIN_KEY), model_config.margin,
      model_config.per_sample_rmse)


def CmdLoso(config, out=None):
  """Leave-one-subject-out run of every configured experiment.

  The pretrain model of an experiment is trained once and shared by its
  folds, which fine-tune and evaluate in a worker pool. Results are
  written by this process in fold order.
  """
  out = _Out(out)
  manifest = _LoadManifest(config)[1]
  folds = evaluation.BuildFolds(manifest)
  if not folds:
    raise problems_module.OtherProblem(description='no positive participants')
  cache = segmentcache.SegmentCache(config.paths['cache_dir'])
  cached = set(cache.Participants())
  missing = sorted(set(e.participant_id for e in manifest) - cached)
  if missing:
    raise problems_module.MissingFile(
        file_name=segmentcache.CachePath(cache.cache_dir, missing[0]))
  pretrain_set = cache.BuildSet(folds[0].pretrain_ids, 'pretrain')
  output_dir = config.paths['output_dir']
  macro = config.evaluation['macro']

  result_rows = []
  score_rows = []
  summary = collections.OrderedDict()
  for experiment in config.Experiments():
    log.info('experiment %s: %s, mode %s', experiment.name,
             experiment.model_config.family, experiment.mode)
    pretrained = _Pretrain(experiment, pretrain_set, config)
    folds_dir = FoldsDir(output_dir, experiment.name)
    _MakeDirs(folds_dir)
    checkpoint_module.Save(pretrained,
                           os.path.join(folds_dir, PRETRAIN_CHECKPOINT_FILE))
    tasks = [_FoldTask(experiment, fold, pretrained, config)
             for fold in folds]
    reports = collections.defaultdict(list)
    for fold, (fold_ckpt, results) in zip(folds,
                                          _MapFolds(tasks, config.jobs)):
      checkpoint_module.Save(
          fold_ckpt, FoldCheckpointPath(output_dir, experiment.name,
                                        fold.index))
      for shift, fold_evaluation in results:
        reports[shift].append(fold_evaluation.report)
        result_rows.append(_ResultRow(experiment, fold, shift,
                                      fold_evaluation.report))
        score_rows.extend(_ScoreRows(experiment, fold, shift,
                                     fold_evaluation))
    summary[experiment.name] = collections.OrderedDict(
        (str(shift), evaluation.Aggregate(reports[shift], macro).ToDict())
        for shift in sorted(reports))

  _MakeDirs(output_dir)
  pd.DataFrame(result_rows, columns=RESULT_COLUMNS).to_csv(
      os.path.join(output_dir, RESULTS_FILE), index=False,
      lineterminator='\n')
  pd.DataFrame(score_rows, columns=SCORE_COLUMNS).to_csv(
      os.path.join(output_dir, SCORES_FILE), index=False,
      lineterminator='\n')
  _WriteJson(os.path.join(output_dir, SUMMARY_FILE),
             {'aggregation': 'macro' if macro else 'micro',
              'folds': len(folds), 'experiments': summary})

  print('%d folds, %s aggregation' % (len(folds),
                                      'macro' if macro else 'micro'),
        file=out)
  print('  %-16s %5s %6s %6s %6s %6s %6s' % (
      'experiment', 'shift', 'uar', 'sens', 'spec', 'prec', 'f1'), file=out)
  for name, by_shift in summary.items():
    for shift, metrics in by_shift.items():
      print('  %-16s %5s %s %s %s %s %s' % (
          name, shift, _FormatMetric(metrics['uar']),
          _FormatMetric(metrics['sensitivity']),
          _FormatMetric(metrics['specificity']),
          _FormatMetric(metrics['precision']),
          _FormatMetric(metrics['f1'])), file=out)
  return errors.EXIT_OK


# scan

def FindFoldCheckpoint(output_dir, experiment_name, participant_id):
  """(path, Checkpoint) of the fold that held out participant_id."""
  pattern = os.path.join(FoldsDir(output_dir, experiment_name),
                         'fold_*.ckpt')
  paths = sorted(glob.glob(pattern))
  if not paths:
    raise problems_module.MissingFile(file_name=pattern)
  for path in paths:
    ckpt = checkpoint_module.Load(path)
    if participant_id in ckpt.extra.get('held_out_pair', ()):
      return path, ckpt
  raise problems_module.OtherProblem(
      description='no fold checkpoint in %s holds out %s' %
      (os.path.dirname(pattern), participant_id),
      participant_id=participant_id)


def CmdScan(config, participant_id, shifts=None, all_windows=None,
            experiment_name=None, out=None):
  """Score one participant's shifted symptomatic windows with the fold
  model that held them out.

  Writes scan_<id>.csv and, with all_windows, scan_<id>_windows.csv.
  """
  out = _Out(out)
  if shifts is None:
    shifts = config.evaluation['scan_shifts']
  if all_windows is None:
    all_windows = config.evaluation['scan_all_windows']
  experiment_name = experiment_name or config.Experiments()[0].name
  problems = _CountingReporter()[0]
  cohort, manifest = _LoadManifest(config, problems)
  if participant_id not in manifest:
    raise problems_module.InvalidConfig(column_name='participant',
                                        value=participant_id,
                                        reason='not in the manifest')
  entry = manifest.GetEntry(participant_id)
  onset = entry.OnsetDate() if entry.onset_date else None
  if onset is None and not all_windows:
    raise problems_module.InvalidConfig(
        column_name='participant', value=participant_id,
        reason='no onset date; only --all-windows applies')

  output_dir = config.paths['output_dir']
  path, ckpt = FindFoldCheckpoint(output_dir, experiment_name,
                                  participant_id)
  if 'threshold' not in ckpt.extra:
    raise problems_module.ModeMismatch(mode=evaluation.MODE_RECON_ERROR,
                                       family=ckpt.model_config.family)
  threshold = evaluation.ThresholdModel.FromDict(ckpt.extra['threshold'])
  model = ckpt.BuildModel().Eval()
  log.info('scanning %s with %s (%r)', participant_id, path, threshold)

  series = cohort.LoadSeries(participant_id)
  if series is None:
    raise problems_module.MissingFile(
        file_name=os.path.join(loader_module.HEART_RATE_DIR,
                               '%s.csv' % participant_id))
  five_min = heartrate.Resample5Min(series, problems)
  _MakeDirs(output_dir)

  cache = segmentcache.SegmentCache(config.paths['cache_dir'])
  cached = None
  if os.path.exists(segmentcache.CachePath(cache.cache_dir, participant_id)):
    cached = functools.partial(cache.Shifted, participant_id)
  else:
    log.info('no cached segments for %s; scanning the recording',
             participant_id)

  if onset is not None:
    entries = windowscan.WindowScan(
        five_min, onset, model, threshold, shifts, problems,
        completeness_threshold=config.evaluation['completeness_threshold'],
        cached=cached)
    trace_path = os.path.join(output_dir, 'scan_%s.csv' % participant_id)
    windowscan.WriteScanTrace(trace_path, participant_id, entries)
    print('%s: threshold %.6g, %d shifts -> %s' % (
        participant_id, threshold.Threshold(), len(entries), trace_path),
        file=out)
    for e in entries:
      if e.warning:
        print('  shift %+d  skipped: %s' % (e.shift, e.warning), file=out)
      else:
        print('  shift %+d  error %.6f  %s' % (
            e.shift, e.recon_error,
            'symptomatic' if e.decision else 'asymptomatic'), file=out)
  if all_windows:
    windows = windowscan.ContinuousScan(five_min, onset, model, threshold)
    windows_path = os.path.join(output_dir,
                                'scan_%s_windows.csv' % participant_id)
    windowscan.WriteContinuousTrace(windows_path, participant_id, windows)
    print('%s: %d windows, %d flagged -> %s' % (
        participant_id, len(windows), sum(w.decision for w in windows),
        windows_path), file=out)
  return errors.EXIT_OK


# gradcheck

def CmdGradcheck(config, probes=gradcheck.DEFAULT_PROBES, ops=None,
                 out=None):
  """Finite-difference check of every operator and loss.

  Raises:
    GradientCheckFailure: naming the ops whose relative error exceeded the
      tolerance
  """
  out = _Out(out)
  unknown = sorted(set(ops or ()) - set(gradcheck.OpNames()))
  if unknown:
    raise problems_module.InvalidConfig(column_name='ops', value=unknown,
                                        reason='unknown operator')
  results = gradcheck.RunGradientChecks(seed=config.seed, probes=probes,
                                        ops=ops)
  print(gradcheck.FormatReport(results), file=out)
  failed = [r.op for r in results if not r.passed]
  if failed:
    raise problems_module.GradientCheckFailure(ops=', '.join(failed))
  return errors.EXIT_OK
