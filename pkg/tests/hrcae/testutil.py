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

# Unit tests for hrcae/util.py

import datetime
import io
import sys

from hrcae import errors
from hrcae import util
import tests.util as test_util
import unittest


class ParseShiftRangeTestCase(test_util.TestCase):
  def testRange(self):
    self.assertEqual(list(range(-3, 6)), util.ParseShiftRange('-3..5'))

  def testSingleValueRange(self):
    self.assertEqual([2], util.ParseShiftRange('2..2'))

  def testList(self):
    self.assertEqual([-1, 0, 2], util.ParseShiftRange('-1,0,2'))
    self.assertEqual([4], util.ParseShiftRange(' +4 '))

  def testEmptyRange(self):
    self.assertRaises(errors.Error, util.ParseShiftRange, '5..-3')

  def testGarbage(self):
    self.assertRaises(errors.Error, util.ParseShiftRange, 'a,b')


class MidnightTestCase(test_util.TestCase):
  def testLocalMidnightWithOffset(self):
    # 2021-01-04 00:00 at UTC+01:00 is 2021-01-03 23:00 UTC.
    self.assertEqual(1609714800,
                     util.LocalMidnight(datetime.date(2021, 1, 4), 60))

  def testIsMidnightAligned(self):
    midnight = util.LocalMidnight(datetime.date(2021, 1, 4), 60)
    self.assertTrue(util.IsMidnightAligned(midnight, 60))
    self.assertFalse(util.IsMidnightAligned(midnight, 0))
    self.assertFalse(util.IsMidnightAligned(midnight + 300, 60))

  def testFloorAndCeil(self):
    midnight = util.LocalMidnight(datetime.date(2021, 1, 4), -300)
    self.assertEqual(midnight, util.FloorToLocalMidnight(midnight + 7, -300))
    self.assertEqual(midnight + util.SECONDS_PER_DAY,
                     util.CeilToLocalMidnight(midnight + 7, -300))
    self.assertEqual(midnight, util.CeilToLocalMidnight(midnight, -300))

  def testLocalDate(self):
    midnight = util.LocalMidnight(datetime.date(2021, 3, 1), 120)
    self.assertEqual(datetime.date(2021, 3, 1),
                     util.LocalDate(midnight, 120))
    self.assertEqual(datetime.date(2021, 2, 28),
                     util.LocalDate(midnight - 1, 120))


class ValidateTimezoneOffsetTestCase(test_util.TestCase):
  def testValid(self):
    for offset in (0, 60, -300, 14 * 60, -14 * 60):
      self.assertTrue(util.IsValidTimezoneOffset(offset))

  def testInvalid(self):
    for offset in (15 * 60, '60', 1.5, True):
      self.assertFalse(util.IsValidTimezoneOffset(offset))


class DateStringTestCase(test_util.TestCase):
  def testDates(self):
    self.assertEqual(datetime.date(2021, 2, 3),
                     util.DateStringToDateObject('2021-02-03'))
    self.assertEqual(None, util.DateStringToDateObject('2021-02-30'))
    self.assertEqual(None, util.DateStringToDateObject('20210203'))
    self.assertEqual(None, util.DateStringToDateObject(None))


class DeriveSeedTestCase(test_util.TestCase):
  def testDeterministicAndKeyed(self):
    self.assertEqual(util.DeriveSeed(3, 1, 2), util.DeriveSeed(3, 1, 2))
    self.assertNotEqual(util.DeriveSeed(3, 1, 2), util.DeriveSeed(3, 2, 1))
    self.assertNotEqual(util.DeriveSeed(3), util.DeriveSeed(4))
    self.assertTrue(0 <= util.DeriveSeed(0, 5) < 2 ** 32)


class CsvUnicodeWriterTestCase(test_util.TestCase):
  def testRepresentation(self):
    f = io.StringIO()
    writer = util.CsvUnicodeWriter(f)
    writer.writerow(['a', None, 0.1, 2])
    writer.writerows([[1.0 / 3, 'x']])
    self.assertEqual('a,,0.1,2\n0.3333333333333333,x\n', f.getvalue())


class ArgumentParserLongErrorTestCase(test_util.TestCase):
  def setUp(self):
    self.saved_stderr = sys.stderr
    sys.stderr = io.StringIO()

  def tearDown(self):
    sys.stderr = self.saved_stderr

  def testUsageErrorIsValidationFailure(self):
    parser = util.ArgumentParserLongError(prog='hrcaetool.py')
    parser.add_argument('--probes', type=int)
    with self.assertRaises(SystemExit) as cm:
      parser.parse_args(['--probes=many'])
    self.assertEqual(errors.EXIT_VALIDATION, cm.exception.code)
    self.assertMatchesRegex('usage: hrcaetool.py', sys.stderr.getvalue())
    self.assertMatchesRegex('--probes', sys.stderr.getvalue())


if __name__ == '__main__':
  unittest.main()
