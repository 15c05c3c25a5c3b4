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

# Unit tests for hrcae/gradcheck.py

import numpy as np

from hrcae import functional
from hrcae import gradcheck
from hrcae import tensor
from hrcae.tensor import Tensor
import tests.util as test_util
import unittest


def _SquareWithBackward(x, factor):
  """x ** 2 whose backward claims d/dx = factor * x."""
  return Tensor.FromOp(x.data ** 2, (x,),
                       lambda grad: (grad * factor * x.data,), 'square')


class CheckGradientTestCase(test_util.TestCase):
  def _Check(self, factor):
    rng = np.random.default_rng(0)
    with tensor.Precision(np.float64):
      x = Tensor(rng.uniform(0.5, 1.5, (3, 4)), requires_grad=True)
      return gradcheck.CheckGradient(
          [('x', x)], lambda: _SquareWithBackward(x, factor), rng, probes=10)

  def testExactBackward(self):
    self.assertLess(self._Check(2.0), 1e-6)

  def testWrongBackward(self):
    self.assertAlmostEqual(0.5, self._Check(1.0), places=4)

  def testLeavesUnchanged(self):
    rng = np.random.default_rng(3)
    with tensor.Precision(np.float64):
      x = Tensor(rng.standard_normal(5), requires_grad=True)
      before = x.data.copy()
      gradcheck.CheckGradient([('x', x)], lambda: x * x, rng, probes=20)
    np.testing.assert_array_equal(before, x.data)


class RunGradientChecksTestCase(test_util.TestCase):
  def testOpNames(self):
    names = gradcheck.OpNames()
    self.assertEqual(sorted(names), names)
    for name in ('conv2d', 'conv_transpose2d', 'max_pool2d',
                 'upsample_unpool', 'batch_norm', 'prelu', 'fully_connected',
                 'global_avg_pool', 'rmse_loss', 'contrastive_loss',
                 'cross_entropy_loss', 'cnn', 'contrastive_cae'):
      self.assertIn(name, names)

  def testSubsetPasses(self):
    results = gradcheck.RunGradientChecks(
        probes=20, ops=['conv2d', 'batch_norm', 'rmse_loss', 'prelu'])
    self.assertEqual(['batch_norm', 'conv2d', 'prelu', 'rmse_loss'],
                     [r.op for r in results])
    by_op = dict((r.op, r) for r in results)
    self.assertEqual(60, by_op['batch_norm'].probes)
    self.assertEqual(40, by_op['conv2d'].probes)
    for result in results:
      self.assertTrue(result.passed, gradcheck.FormatReport(results))

  def testDeterministic(self):
    a = gradcheck.RunGradientChecks(seed=4, probes=10, ops=['max_pool2d'])
    b = gradcheck.RunGradientChecks(seed=4, probes=10, ops=['max_pool2d'])
    self.assertEqual(a, b)

  def testRestoresPrecision(self):
    before = tensor.DefaultDtype()
    gradcheck.RunGradientChecks(probes=5, ops=['global_avg_pool'])
    self.assertEqual(before, tensor.DefaultDtype())

  @test_util.slow
  def testFullSuitePasses(self):
    results = gradcheck.RunGradientChecks()
    self.assertEqual(gradcheck.OpNames(), [r.op for r in results])
    self.assertTrue(all(r.passed for r in results),
                    gradcheck.FormatReport(results))


class FaultyConvolutionTestCase(test_util.TestCase):
  def setUp(self):
    self._original = functional._Conv2dBackward

    def _DoubledWeightGradient(*args):
      d_input, d_weight, d_bias = self._original(*args)
      return d_input, 2 * d_weight, d_bias
    functional._Conv2dBackward = _DoubledWeightGradient

  def tearDown(self):
    functional._Conv2dBackward = self._original

  def testDetected(self):
    results = gradcheck.RunGradientChecks(probes=30, ops=['conv2d', 'prelu'])
    by_op = dict((r.op, r) for r in results)
    self.assertFalse(by_op['conv2d'].passed)
    self.assertGreater(by_op['conv2d'].max_rel_error, 0.1)
    self.assertTrue(by_op['prelu'].passed)
    report = gradcheck.FormatReport(results)
    self.assertMatchesRegex(r'conv2d\s.*FAILED', report)
    self.assertMatchesRegex(r'prelu\s.*ok', report)


if __name__ == '__main__':
  unittest.main()
