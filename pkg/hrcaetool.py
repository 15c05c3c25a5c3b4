#!/usr/bin/env python3

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


"""Runs the heart-rate auto-encoder pipeline.

  hrcaetool.py synth        generate a synthetic cohort
  hrcaetool.py preprocess   resample, segment and cache the cohort
  hrcaetool.py train        pretrain and fine-tune one model
  hrcaetool.py loso         leave-one-subject-out cross-validation
  hrcaetool.py scan         shifted-window scan of one participant
  hrcaetool.py gradcheck    finite-difference check of the autodiff engine

For usage information run hrcaetool.py --help
"""

import argparse
import logging
import sys

import hrcae
from hrcae import config as config_module
from hrcae import errors
from hrcae import gradcheck
from hrcae import pipeline
from hrcae import problems
from hrcae import util


def _ShiftRange(text):
  try:
    return util.ParseShiftRange(text)
  except errors.Error as e:
    raise argparse.ArgumentTypeError(str(e))


def ParseCommandLineArguments(argv=None):
  parser = util.ArgumentParserLongError(
      description=__doc__.split('\n\n')[0],
      formatter_class=argparse.RawDescriptionHelpFormatter)
  parser.add_argument('--version', action='version',
                      version='%(prog)s ' + hrcae.__version__)
  parser.add_argument('-c', '--config', dest='config', metavar='FILE',
                      help='JSON run configuration merged over the defaults')
  parser.add_argument('--seed', dest='seed', type=int,
                      help='seed for data generation, initialization and '
                      'shuffling')
  parser.add_argument('-j', '--jobs', dest='jobs', type=int,
                      help='worker processes for participants and folds')
  parser.add_argument('-o', '--output', dest='output', metavar='DIR',
                      help='directory for checkpoints, results and traces')
  parser.add_argument('--data-dir', dest='data_dir', metavar='DIR',
                      help='cohort directory holding manifest.json')
  parser.add_argument('--cache-dir', dest='cache_dir', metavar='DIR',
                      help='segment cache directory; HRCAE_CACHE_DIR also '
                      'sets it')
  parser.add_argument('-v', '--verbose', dest='verbose', action='store_true',
                      help='log progress per epoch, fold and participant')
  parser.add_argument('-q', '--quiet', dest='quiet', action='store_true',
                      help='log errors only')

  subparsers = parser.add_subparsers(dest='command', metavar='COMMAND')
  subparsers.required = True
  subparsers.add_parser('synth', help='generate a synthetic cohort')
  subparsers.add_parser('preprocess',
                        help='build the segment cache from the cohort')
  subparsers.add_parser('train', help='pretrain and fine-tune one model')
  subparsers.add_parser('loso', help='leave-one-subject-out evaluation')
  scan = subparsers.add_parser(
      'scan', help='score shifted symptomatic windows of one participant')
  scan.add_argument('-p', '--participant', dest='participant', required=True,
                    help='participant id as in the manifest')
  scan.add_argument('--shifts', dest='shifts', type=_ShiftRange,
                    help='shift range such as -3..5 or a list such as -1,0,2')
  scan.add_argument('--all-windows', dest='all_windows', action='store_true',
                    default=None,
                    help='also score every 14-day window of the recording')
  scan.add_argument('--experiment', dest='experiment',
                    help='experiment whose fold checkpoints to use')
  check = subparsers.add_parser(
      'gradcheck', help='finite-difference check of every operator')
  check.add_argument('--probes', dest='probes', type=int,
                     default=gradcheck.DEFAULT_PROBES,
                     help='random probes per case')
  check.add_argument('--ops', dest='ops',
                     help='comma-separated subset of %s' %
                     ', '.join(gradcheck.OpNames()))
  options = parser.parse_args(argv)
  if options.verbose and options.quiet:
    parser.error('--verbose and --quiet exclude each other')
  return options


def _Overrides(options):
  """Config values set explicitly on the command line."""
  overrides = {}
  paths = {}
  for name, key in (('output', 'output_dir'), ('data_dir', 'data_dir'),
                    ('cache_dir', 'cache_dir')):
    value = getattr(options, name)
    if value:
      paths[key] = value
  if paths:
    overrides['paths'] = paths
  if options.seed is not None:
    overrides['seed'] = options.seed
  if options.jobs is not None:
    overrides['jobs'] = options.jobs
  return overrides


def _SetLogLevel(options):
  if options.verbose:
    level = logging.INFO
  elif options.quiet:
    level = logging.ERROR
  else:
    level = logging.WARNING
  problems.log.setLevel(level)
  problems.console.setLevel(level)


def RunCommand(options):
  config = config_module.LoadRunConfig(options.config, _Overrides(options))
  if options.command == 'synth':
    return pipeline.CmdSynth(config)
  if options.command == 'preprocess':
    return pipeline.CmdPreprocess(config)
  if options.command == 'train':
    return pipeline.CmdTrain(config)
  if options.command == 'loso':
    return pipeline.CmdLoso(config)
  if options.command == 'scan':
    return pipeline.CmdScan(config, options.participant, options.shifts,
                            options.all_windows, options.experiment)
  ops = options.ops.split(',') if options.ops else None
  return pipeline.CmdGradcheck(config, options.probes, ops)


def main(argv=None):
  options = ParseCommandLineArguments(argv)
  _SetLogLevel(options)
  try:
    return RunCommand(options)
  except problems.ExceptionWithContext as e:
    context = e.FormatContext()
    text = e.FormatProblem()
    print('ERROR: %s%s' % ('%s: ' % context if context else '', text),
          file=sys.stderr)
    return e.EXIT_CODE
  except errors.Error as e:
    print('ERROR: %s' % e, file=sys.stderr)
    return errors.EXIT_VALIDATION


if __name__ == '__main__':
  util.RunWithCrashHandler(main)
