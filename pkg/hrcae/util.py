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

import argparse
import calendar
import csv
import datetime
import re
import sys

import numpy
import pytz

from . import errors
from .version import __version__

SECONDS_PER_DAY = 86400
# Offsets beyond +-14h do not exist in any civil timezone.
MAX_TIMEZONE_OFFSET_MINUTES = 14 * 60


class ArgumentParserLongError(argparse.ArgumentParser):
  """ArgumentParser subclass that includes the full help above error message."""
  def error(self, message):
    print(self.format_help(), file=sys.stderr)
    print('\n\n%s: error: %s\n\n' % (self.prog, message), file=sys.stderr)
    sys.exit(errors.EXIT_VALIDATION)


def RunWithCrashHandler(f):
  try:
    exit_code = f()
    sys.exit(exit_code)
  except (SystemExit, KeyboardInterrupt):
    raise
  except:
    import inspect
    import traceback

    # Save trace and exception now. These calls look at the most recently
    # raised exception. The code that makes the report might trigger other
    # exceptions.
    original_trace = inspect.trace(3)[1:]
    formatted_exception = traceback.format_exception_only(*(sys.exc_info()[:2]))

    apology = """The program threw an unexpected exception.

A report has been saved to hrcaecrash.txt. Please attach it when filing
an issue together with the configuration file used for the run.

"""
    dashes = '%s\n' % ('-' * 60)
    dump = []
    dump.append(apology)
    dump.append(dashes)
    dump.append("hrcae version %s\n\n" % __version__)

    for (frame_obj, filename, line_num, fun_name, context_lines,
         context_index) in original_trace:
      dump.append('File "%s", line %d, in %s\n' % (filename, line_num,
                                                   fun_name))
      if context_lines:
        for (i, line) in enumerate(context_lines):
          if i == context_index:
            dump.append(' --> %s' % line)
          else:
            dump.append('     %s' % line)
      for local_name, local_val in list(frame_obj.f_locals.items()):
        try:
          truncated_val = str(local_val)[0:500]
        except Exception as e:
          dump.append('    Exception in str(%s): %s' % (local_name, e))
        else:
          if len(truncated_val) >= 500:
            truncated_val = '%s...' % truncated_val[0:499]
          dump.append('    %s = %s\n' % (local_name, truncated_val))
      dump.append('\n')

    dump.append(''.join(formatted_exception))

    with open('hrcaecrash.txt', 'w') as crash_file:
      crash_file.write(''.join(dump))

    print(''.join(dump), file=sys.stderr)
    print(dashes, file=sys.stderr)
    print(apology, file=sys.stderr)
    sys.exit(127)


def IsEmpty(value):
  return value is None or (isinstance(value, str) and not value.strip())

def DateStringToDateObject(date_string):
  """Return a date object for an ISO-8601 string "YYYY-MM-DD"."""
  if not isinstance(date_string, str):
    return None
  if re.match(r'^\d{4}-\d{2}-\d{2}$', date_string) is None:
    return None
  try:
    return datetime.date(int(date_string[0:4]), int(date_string[5:7]),
                         int(date_string[8:10]))
  except ValueError:
    return None

def IsValidDate(date):
  return DateStringToDateObject(date) is not None

def ValidateDate(date, column_name=None, problems=None):
  """
  Validates a non-required date string value using IsValidDate():
    - if invalid adds InvalidValue error (if problems accumulator is provided)
    - an empty date string is regarded as valid
  """
  if IsEmpty(date) or IsValidDate(date):
    return True
  else:
    if problems:
      problems.InvalidValue(column_name, date)
    return False

def IsValidTimezoneOffset(offset_minutes):
  return (isinstance(offset_minutes, int) and
          not isinstance(offset_minutes, bool) and
          abs(offset_minutes) <= MAX_TIMEZONE_OFFSET_MINUTES)

def ValidateTimezoneOffset(offset_minutes, column_name=None, problems=None):
  if IsValidTimezoneOffset(offset_minutes):
    return True
  if problems:
    problems.InvalidValue(
        column_name, offset_minutes,
        'expected whole minutes within +-%d' % MAX_TIMEZONE_OFFSET_MINUTES)
  return False

def ParticipantTimezone(offset_minutes):
  """Return the pytz timezone for a fixed site offset in minutes east of UTC."""
  return pytz.FixedOffset(offset_minutes)

def LocalDateTime(timestamp, offset_minutes):
  return datetime.datetime.fromtimestamp(
      timestamp, ParticipantTimezone(offset_minutes))

def IsMidnightAligned(timestamp, offset_minutes):
  """True if timestamp falls on 00:00:00 local time for the given offset."""
  local = LocalDateTime(timestamp, offset_minutes)
  return (local.hour, local.minute, local.second, local.microsecond) == \
      (0, 0, 0, 0)

def LocalMidnight(date, offset_minutes):
  """Epoch seconds of 00:00 local time on date."""
  local = ParticipantTimezone(offset_minutes).localize(
      datetime.datetime(date.year, date.month, date.day))
  return calendar.timegm(local.utctimetuple())

def LocalDate(timestamp, offset_minutes):
  return LocalDateTime(timestamp, offset_minutes).date()

def FloorToLocalMidnight(timestamp, offset_minutes):
  return LocalMidnight(LocalDate(timestamp, offset_minutes), offset_minutes)

def CeilToLocalMidnight(timestamp, offset_minutes):
  floor = FloorToLocalMidnight(timestamp, offset_minutes)
  if floor == timestamp:
    return floor
  return floor + SECONDS_PER_DAY

def ParseShiftRange(text):
  """Parse "-3..5" or "-3,0,2" into a list of ints."""
  text = text.strip()
  m = re.match(r'^([+-]?\d+)\.\.([+-]?\d+)$', text)
  if m:
    low, high = int(m.group(1)), int(m.group(2))
    if low > high:
      raise errors.Error('Empty shift range "%s"' % text)
    return list(range(low, high + 1))
  try:
    return [int(part) for part in text.split(',') if part.strip()]
  except ValueError:
    raise errors.Error('Bad shift list "%s"' % text)


def DeriveSeed(seed, *keys):
  """A 32-bit seed derived from seed and integer keys (fold, participant)."""
  sequence = numpy.random.SeedSequence([int(seed)] + [int(k) for k in keys])
  return int(sequence.generate_state(1)[0])


class CsvUnicodeWriter:
  """
  Create a wrapper around a csv writer object. Floats are written with repr
  precision so that reruns produce byte-identical files. Passes all
  arguments to csv.writer.
  """
  def __init__(self, *args, **kwargs):
    kwargs.setdefault('lineterminator', '\n')
    self.writer = csv.writer(*args, **kwargs)

  def writerow(self, row):
    encoded_row = []
    for s in row:
      if s is None:
        encoded_row.append('')
      elif isinstance(s, (float, numpy.floating)):
        encoded_row.append(repr(float(s)))
      elif isinstance(s, numpy.integer):
        encoded_row.append(int(s))
      else:
        encoded_row.append(s)
    self.writer.writerow(encoded_row)

  def writerows(self, rows):
    for row in rows:
      self.writerow(row)

  def __getattr__(self, name):
    return getattr(self.writer, name)
