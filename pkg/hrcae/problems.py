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


from functools import reduce
import logging

from .errors import TYPE_ERROR, TYPE_WARNING, ALL_TYPES
from .errors import EXIT_VALIDATION, EXIT_NUMERICAL


class ProblemReporter(object):
    """Base class for problem reporters. Tracks the current context and creates
       an exception object for each problem. Exception objects are sent to a
       Problem Accumulator, which is responsible for handling them."""

    def __init__(self, accumulator=None):
        self.ClearContext()
        if accumulator is None:
            self.accumulator = SimpleProblemAccumulator()
        else:
            self.accumulator = accumulator

    def ClearContext(self):
        """Clear any previous context."""
        self._context = None

    def SetFileContext(self, file_name, row_num, row, headers):
        """Save the current context to be output with any errors.

        Args:
          file_name: string
          row_num: int
          row: list of strings
          headers: list of column headers, its order corresponding to row's
        """
        self._context = (file_name, row_num, row, headers)

    def AddToAccumulator(self, e):
        """Report an exception to the Problem Accumulator"""
        self.accumulator._Report(e)

    def MissingFile(self, file_name, context=None, type=TYPE_ERROR):
        e = MissingFile(file_name=file_name, context=context,
                        context2=self._context, type=type)
        self.AddToAccumulator(e)

    def EmptyFile(self, file_name, context=None, type=TYPE_ERROR):
        e = EmptyFile(file_name=file_name, context=context,
                      context2=self._context, type=type)
        self.AddToAccumulator(e)

    def MissingColumn(self, file_name, column_name, context=None,
                      type=TYPE_ERROR):
        e = MissingColumn(file_name=file_name, column_name=column_name,
                          context=context, context2=self._context,
                          type=type)
        self.AddToAccumulator(e)

    def MissingValue(self, column_name, reason=None, context=None,
                     type=TYPE_ERROR):
        e = MissingValue(column_name=column_name, reason=reason,
                         context=context, context2=self._context, type=type)
        self.AddToAccumulator(e)

    def InvalidValue(self, column_name, value, reason=None, context=None,
                     type=TYPE_ERROR):
        e = InvalidValue(column_name=column_name, value=value, reason=reason,
                         context=context, context2=self._context, type=type)
        self.AddToAccumulator(e)

    def DuplicateID(self, column_name, value, context=None, type=TYPE_ERROR):
        e = DuplicateID(column_name=column_name, value=value,
                        context=context, context2=self._context, type=type)
        self.AddToAccumulator(e)

    def InvalidBpm(self, participant_id, count, context=None,
                   type=TYPE_WARNING):
        e = InvalidBpm(participant_id=participant_id, count=count,
                       context=context, context2=self._context, type=type)
        self.AddToAccumulator(e)

    def NonIncreasingTimestamp(self, participant_id, timestamp,
                               previous_timestamp, context=None,
                               type=TYPE_ERROR):
        e = NonIncreasingTimestamp(participant_id=participant_id,
                                   timestamp=timestamp,
                                   previous_timestamp=previous_timestamp,
                                   context=context, context2=self._context,
                                   type=type)
        self.AddToAccumulator(e)

    def SampleOutsideCollection(self, participant_id, count, context=None,
                                type=TYPE_WARNING):
        e = SampleOutsideCollection(participant_id=participant_id, count=count,
                                    context=context, context2=self._context,
                                    type=type)
        self.AddToAccumulator(e)

    def LowCompleteness(self, participant_id, start_day, completeness,
                        threshold, context=None, type=TYPE_WARNING):
        e = LowCompleteness(participant_id=participant_id,
                            start_day=start_day, completeness=completeness,
                            threshold=threshold, context=context,
                            context2=self._context, type=type)
        self.AddToAccumulator(e)

    def InvalidShift(self, participant_id, shift_days, reason, context=None,
                     type=TYPE_WARNING):
        e = InvalidShift(participant_id=participant_id, shift_days=shift_days,
                         reason=reason, context=context,
                         context2=self._context, type=type)
        self.AddToAccumulator(e)

    def MissingSymptomaticSegment(self, participant_id, context=None,
                                  type=TYPE_WARNING):
        e = MissingSymptomaticSegment(participant_id=participant_id,
                                      context=context, context2=self._context,
                                      type=type)
        self.AddToAccumulator(e)

    def CountMismatch(self, group, expected, found, context=None,
                      type=TYPE_ERROR):
        e = CountMismatch(group=group, expected=expected, found=found,
                          context=context, context2=self._context, type=type)
        self.AddToAccumulator(e)

    def ManifestAttributeMismatch(self, participant_id, other_id, column_name,
                                  context=None, type=TYPE_ERROR):
        e = ManifestAttributeMismatch(participant_id=participant_id,
                                      other_id=other_id,
                                      column_name=column_name,
                                      context=context, context2=self._context,
                                      type=type)
        self.AddToAccumulator(e)

    def OtherProblem(self, description, context=None, type=TYPE_ERROR):
        e = OtherProblem(description=description,
                         context=context, context2=self._context, type=type)
        self.AddToAccumulator(e)


class ProblemAccumulatorInterface(object):
    """The base class for Problem Accumulators, which defines their interface."""

    def _Report(self, e):
        raise NotImplementedError("Please use a concrete Problem Accumulator that "
                                  "implements error and warning handling.")


class SimpleProblemAccumulator(ProblemAccumulatorInterface):
    """This is a basic problem accumulator that just logs to the console."""
    def _Report(self, e):
        context = e.FormatContext()
        text = self._LineWrap(e.FormatProblem(), 78)
        if context:
            text = '%s: %s' % (context, text)
        if e.IsError():
            log.error(text)
        elif e.IsWarning():
            log.warning(text)
        else:
            log.info(text)

    @staticmethod
    def _LineWrap(text, width):
        """
        A word-wrap function that preserves existing line breaks
        and most spaces in the text. Expects that existing line
        breaks are posix newlines (\\n).
        """
        return reduce(lambda line, word, width=width: '%s%s%s' %
                                                      (line,
                                                       ' \n'[(len(line) - line.rfind('\n') - 1 +
                                                              len(word.split('\n', 1)[0]) >= width)],
                                                       word),
                      text.split(' ')
                      )


class CountingProblemAccumulator(SimpleProblemAccumulator):
    """Logs every problem and keeps a count per type and per class name."""
    def __init__(self, ignore_types=None):
        self._error_count = 0
        self._warning_count = 0
        self._counts_by_name = {}
        self._ignore_types = ignore_types or set()

    def _Report(self, e):
        if e.__class__.__name__ in self._ignore_types:
            return
        if e.IsError():
            self._error_count += 1
        elif e.IsWarning():
            self._warning_count += 1
        name = e.__class__.__name__
        self._counts_by_name[name] = self._counts_by_name.get(name, 0) + 1
        SimpleProblemAccumulator._Report(self, e)

    def ErrorCount(self):
        return self._error_count

    def WarningCount(self):
        return self._warning_count

    def CountsByName(self):
        return dict(self._counts_by_name)


class ExceptionWithContext(Exception):
    # Exit code used by hrcaetool.py when this problem ends a run.
    EXIT_CODE = EXIT_VALIDATION

    def __init__(self, context=None, context2=None, **kwargs):
        """Initialize an exception object, saving all keyword arguments in self.
        context and context2, if present, must be a tuple of (file_name, row_num,
        row, headers). context2 comes from ProblemReporter.SetFileContext. context
        was passed in with the keyword arguments. context2 is ignored if context
        is present."""
        Exception.__init__(self)

        if context:
            self.__dict__.update(self.ContextTupleToDict(context))
        elif context2:
            self.__dict__.update(self.ContextTupleToDict(context2))
        self.__dict__.update(kwargs)

        if ('type' in kwargs) and (kwargs['type'] in ALL_TYPES):
            self._type = kwargs['type']
        else:
            self._type = TYPE_ERROR

    def IsError(self):
        return self._type == TYPE_ERROR

    def IsWarning(self):
        return self._type == TYPE_WARNING

    CONTEXT_PARTS = ['file_name', 'row_num', 'row', 'headers']
    @staticmethod
    def ContextTupleToDict(context):
        """Convert a tuple representing a context into a dict of (key, value) pairs
        """
        d = {}
        if not context:
            return d
        for k, v in zip(ExceptionWithContext.CONTEXT_PARTS, context):
            if v != '' and v is not None:  # Don't ignore int(0), a valid row_num
                d[k] = v
        return d

    def __str__(self):
        return self.FormatProblem()

    def __reduce__(self):
        # Problems cross process boundaries when folds run in a worker pool.
        return (_RebuildProblem, (self.__class__, dict(self.__dict__)))

    def GetDictToFormat(self):
        """Return a copy of self as a dict, suitable for passing to FormatProblem"""
        return dict(self.__dict__)

    def FormatProblem(self, d=None):
        """Return a text string describing the problem.

        Args:
          d: map returned by GetDictToFormat with  with formatting added
        """
        if not d:
            d = self.GetDictToFormat()

        output_error_text = self.__class__.ERROR_TEXT % d
        if ('reason' in d) and d['reason']:
            return '%s\n%s' % (output_error_text, d['reason'])
        else:
            return output_error_text

    def FormatContext(self):
        """Return a text string describing the context"""
        text = ''
        if hasattr(self, 'participant_id') and self.participant_id:
            text += "participant '%s'" % self.participant_id
        if hasattr(self, 'file_name'):
            if text:
                text += ' in '
            text += self.file_name
        if hasattr(self, 'row_num'):
            text += ":%i" % self.row_num
        if hasattr(self, 'column_name'):
            text += " column %s" % self.column_name
        return text

    def GetOrderKey(self):
        """Return a tuple that can be used to sort problems into a consistent order.

        Returns:
          A list of values.
        """
        context_attributes = ['_type']
        context_attributes.extend(ExceptionWithContext.CONTEXT_PARTS)
        context_attributes.extend(self._GetExtraOrderAttributes())

        tokens = []
        for context_attribute in context_attributes:
            tokens.append(getattr(self, context_attribute, None))
        return tokens

    def _GetExtraOrderAttributes(self):
        """Return a list of extra attributes that should be used by GetOrderKey().

        Returns:
          A list of class attribute names.
        """
        return []


def _RebuildProblem(cls, state):
    e = cls.__new__(cls)
    Exception.__init__(e)
    e.__dict__.update(state)
    return e


# Problems reported while loading a cohort.

class MissingFile(ExceptionWithContext):
    ERROR_TEXT = "File %(file_name)s is not found"

class EmptyFile(ExceptionWithContext):
    ERROR_TEXT = "File %(file_name)s is empty"

class MissingColumn(ExceptionWithContext):
    ERROR_TEXT = 'Missing column %(column_name)s in file %(file_name)s'

class MissingValue(ExceptionWithContext):
    ERROR_TEXT = 'Missing value for %(column_name)s'

class InvalidValue(ExceptionWithContext):
    ERROR_TEXT = 'Invalid value %(value)r in field %(column_name)s'

class DuplicateID(ExceptionWithContext):
    ERROR_TEXT = 'Duplicate ID %(value)s in column %(column_name)s'

class InvalidBpm(ExceptionWithContext):
    ERROR_TEXT = '%(count)d samples outside the plausible heart rate range ' \
                 'were treated as missing'

class NonIncreasingTimestamp(ExceptionWithContext):
    ERROR_TEXT = 'Timestamp %(timestamp)d does not follow %(previous_timestamp)d'

class SampleOutsideCollection(ExceptionWithContext):
    ERROR_TEXT = '%(count)d samples fall outside the collection window and ' \
                 'were dropped'

class LowCompleteness(ExceptionWithContext):
    ERROR_TEXT = 'Segment starting %(start_day)s is %(completeness).3f ' \
                 'complete, below %(threshold).2f; discarded'

class InvalidShift(ExceptionWithContext):
    ERROR_TEXT = 'Shift of %(shift_days)+d days skipped'

class MissingSymptomaticSegment(ExceptionWithContext):
    ERROR_TEXT = 'No usable symptomatic segment'

class CountMismatch(ExceptionWithContext):
    ERROR_TEXT = 'Expected %(expected)d %(group)s participants, found %(found)d'

class ManifestAttributeMismatch(ExceptionWithContext):
    ERROR_TEXT = 'Matched participants %(participant_id)s and %(other_id)s ' \
                 'differ in %(column_name)s'

class OtherProblem(ExceptionWithContext):
    ERROR_TEXT = '%(description)s'


# Problems raised directly by the pipeline operations.

class NoSamples(ExceptionWithContext):
    ERROR_TEXT = 'no samples'

class MisalignedCollectionWindow(ExceptionWithContext):
    ERROR_TEXT = 'misaligned collection window: %(description)s'

class WindowOutOfBounds(ExceptionWithContext):
    ERROR_TEXT = 'window [%(start)d, %(end)d) outside series ' \
                 '[%(series_start)d, %(series_end)d)'

class InsufficientCoverage(ExceptionWithContext):
    ERROR_TEXT = 'insufficient coverage: days %(first_day)d..%(last_day)d ' \
                 'not within %(day_count)d recorded days'

class OnsetNotContained(ExceptionWithContext):
    ERROR_TEXT = 'onset not contained: shift %(shift_days)+d moves the ' \
                 'window off the onset day'

class EmptySegment(ExceptionWithContext):
    ERROR_TEXT = 'empty segment'

class UnimputedSegment(ExceptionWithContext):
    ERROR_TEXT = 'segment still holds %(count)d missing bins'

class CannotBalance(ExceptionWithContext):
    ERROR_TEXT = 'cannot balance: %(symptomatic)d symptomatic and ' \
                 '%(asymptomatic)d asymptomatic segments'

class ShapeMismatch(ExceptionWithContext):
    ERROR_TEXT = '%(op)s: shape mismatch in %(dimension)s ' \
                 '(expected %(expected)s, got %(found)s)'

class UninitializedStatistics(ExceptionWithContext):
    ERROR_TEXT = 'batch norm evaluated before running statistics exist'

class NonScalarLoss(ExceptionWithContext):
    ERROR_TEXT = 'backward needs a scalar loss, got shape %(shape)s'

class MissingClass(ExceptionWithContext):
    ERROR_TEXT = 'both classes required per step'

class OneClassInput(ExceptionWithContext):
    ERROR_TEXT = 'threshold fit needs both labels, got only %(label)s'

class ModeMismatch(ExceptionWithContext):
    ERROR_TEXT = 'evaluation mode %(mode)s does not apply to %(family)s models'

class MissingMatchedControl(ExceptionWithContext):
    ERROR_TEXT = 'missing matched control'

class LeakageDetected(ExceptionWithContext):
    ERROR_TEXT = 'fold %(fold)d trains on held-out participants %(ids)s'

class InvalidConfig(ExceptionWithContext):
    ERROR_TEXT = 'invalid configuration value for %(column_name)s: %(value)r'

class BadCheckpoint(ExceptionWithContext):
    ERROR_TEXT = 'cannot read checkpoint %(file_name)s: %(description)s'

class NumericalDivergence(ExceptionWithContext):
    EXIT_CODE = EXIT_NUMERICAL
    ERROR_TEXT = 'loss became %(loss)s at epoch %(epoch)d'

class GradientCheckFailure(ExceptionWithContext):
    EXIT_CODE = EXIT_NUMERICAL
    ERROR_TEXT = 'gradient check failed for %(ops)s'


class ExceptionProblemAccumulator(ProblemAccumulatorInterface):
    """A problem accumulator that handles errors and optionally warnings by
       raising exceptions."""
    def __init__(self, raise_warnings=False):
        """Initialise.

        Args:
          raise_warnings: If this is True then warnings are also raised as
                          exceptions.
                          If it is false, warnings are logged using
                          SimpleProblemAccumulator.
        """
        self.raise_warnings = raise_warnings
        self.accumulator = SimpleProblemAccumulator()

    def _Report(self, e):
        if self.raise_warnings or e.IsError():
            raise e
        else:
            self.accumulator._Report(e)


default_accumulator = ExceptionProblemAccumulator()
default_problem_reporter = ProblemReporter(default_accumulator)

# Add a default handler to send log messages to console
console = logging.StreamHandler()
console.setLevel(logging.WARNING)
log = logging.getLogger("hrcae")
log.addHandler(console)
