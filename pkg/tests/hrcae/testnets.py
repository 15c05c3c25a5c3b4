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

# Unit tests for hrcae/nets.py

import numpy as np

from hrcae import nets
from hrcae import optim
from hrcae import problems as problems_module
from hrcae.tensor import Precision
from hrcae.tensor import Tensor
import tests.util as test_util
import unittest


def _Batch(n, seed=0):
  rng = np.random.default_rng(seed)
  return Tensor(rng.normal(0.3, 0.1, size=(n, 1, 24, 168)))


def _Cae(num_layers, latent_dim=8, channels=None, seed=0):
  config = nets.CaeConfig(num_layers, latent_dim,
                          channels or [2] * num_layers)
  return nets.ConvAutoEncoder(config, np.random.default_rng(seed))


class ShapeArithmeticTestCase(test_util.TestCase):
  def testFourLayerStack(self):
    specs = nets.CnnConfig(4).Layers()
    self.assertEqual([(24, 168), (12, 84), (6, 42), (3, 21), (1, 7)],
                     nets.StackShapes(specs))

  def testDeepLayersKeepSize(self):
    shapes = nets.StackShapes(nets.CnnConfig(6).Layers())
    self.assertEqual([(1, 7), (1, 7), (1, 7)], shapes[4:])

  def testLayerRows(self):
    specs = nets.CnnConfig(6).Layers()
    self.assertEqual([32, 64, 128, 256, 512, 1024],
                     [s.channels for s in specs])
    self.assertEqual((3, 3), specs[3].pool)
    self.assertEqual(((3, 3), (1, 1)), (specs[5].kernel, specs[5].padding))

  def testDepthOutOfRange(self):
    for depth in (0, 7):
      self.assertRaises(problems_module.InvalidConfig,
                        nets.CnnConfig(depth).Layers)
    self.assertRaises(problems_module.InvalidConfig,
                      nets.CnnConfig(3, channels=[4, 4]).Layers)


class CnnTestCase(test_util.TestCase):
  def testLogitsShape(self):
    model = nets.CnnClassifier(nets.CnnConfig(3, [4, 4, 4]),
                               np.random.default_rng(0))
    self.assertEqual((5, 2), model(_Batch(5)).shape)

  @test_util.slow
  def testStudyBatch(self):
    model = nets.CnnClassifier(nets.CnnConfig(3), np.random.default_rng(0))
    self.assertEqual((32, 2), model(_Batch(32)).shape)

  def testSingleExampleInEvalMode(self):
    model = nets.CnnClassifier(nets.CnnConfig(2, [3, 3]),
                               np.random.default_rng(0))
    model(_Batch(4))
    logits = model.Eval()(_Batch(1, seed=1))
    self.assertEqual((1, 2), logits.shape)
    self.assertTrue(np.isfinite(logits.data).all())

  def testWrongInput(self):
    model = nets.CnnClassifier(nets.CnnConfig(1, [2]),
                               np.random.default_rng(0))
    self.assertRaises(problems_module.ShapeMismatch, model,
                      Tensor(np.zeros((1, 1, 24, 100))))


class ConvAutoEncoderTestCase(test_util.TestCase):
  def testLatentShape(self):
    model = _Cae(4, latent_dim=100)
    self.assertEqual((3, 100), model.Encode(_Batch(3)).shape)

  def testFlattenLengthWithoutBottleneck(self):
    model = nets.ConvAutoEncoder(nets.CaeConfig(4, None),
                                 np.random.default_rng(0))
    self.assertEqual((256, 1, 7), model.encoded_shape)
    self.assertEqual(1792, model.flat_length)
    self.assertEqual(1792, model.latent_dim)
    self.assertEqual(None, model.to_latent)

  def testMirrorForEveryDepth(self):
    for depth in range(1, 7):
      model = _Cae(depth)
      self.assertEqual(list(reversed(model.shapes[:-1])),
                       model.DecoderShapes(), 'depth %d' % depth)
      reconstruction, latent = model(_Batch(2))
      self.assertEqual((2, 1, 24, 168), reconstruction.shape)
      self.assertEqual((2, 8), latent.shape)

  def testDeterministicLatent(self):
    model = _Cae(2)
    batch = _Batch(2)
    np.testing.assert_array_equal(model.Encode(batch).data,
                                  model.Encode(batch).data)

  def testZeroWeightsGiveConstantOutput(self):
    model = _Cae(3)
    for p in model.Parameters():
      p.data[...] = 0.0
    model.decoder._modules['deconv1']._modules['deconv'].bias.data[...] = 0.5
    reconstruction, _ = model(_Batch(2))
    np.testing.assert_array_equal(
        np.full((2, 1, 24, 168), 0.5, dtype=np.float32), reconstruction.data)

  def testLatentLengthMismatch(self):
    model = _Cae(2)
    self.assertRaises(problems_module.ShapeMismatch, model.Decode,
                      Tensor(np.zeros((1, 9))))

  def testInvalidLatent(self):
    self.assertRaises(problems_module.InvalidConfig, nets.CaeConfig, 4, 0)

  @test_util.slow
  def testOverfitsSingleExample(self):
    model = _Cae(2, latent_dim=16, channels=[4, 4], seed=3)
    rows = np.arange(24)[:, None]
    columns = np.arange(168)[None, :]
    target = 0.3 + 0.1 * np.sin(2 * np.pi * (rows / 24.0 + columns / 12.0))
    x = Tensor(target[None, None])
    adam = optim.Adam(model.NamedParameters())
    for _ in range(200):
      adam.ZeroGrad()
      reconstruction, _ = model(x)
      diff = reconstruction - x
      (diff * diff).Mean().Backward()
      adam.Step(0.01)
    reconstruction, _ = model(x)
    rmse = np.sqrt(np.mean((reconstruction.data - target) ** 2))
    self.assertLess(rmse, 0.05)


class MlpTestCase(test_util.TestCase):
  def testDefaultWidths(self):
    model = nets.MlpClassifier(nets.MlpConfig(), np.random.default_rng(0))
    widths = (4032, 1000, 250, 50, 20, 2)
    self.assertEqual(widths, nets.MlpConfig().Widths())
    expected = sum(a * b + b for a, b in zip(widths, widths[1:]))
    self.assertEqual(expected, model.ParameterCount())

  def testZeroInput(self):
    model = nets.MlpClassifier(nets.MlpConfig(hidden=(8, 4), input_dim=4032),
                               np.random.default_rng(0))
    logits = model(Tensor(np.zeros((3, 4032))))
    np.testing.assert_array_equal(np.zeros((3, 2)), logits.data)

  def testWrongInput(self):
    model = nets.MlpClassifier(nets.MlpConfig(hidden=(4,)),
                               np.random.default_rng(0))
    self.assertRaises(problems_module.ShapeMismatch, model,
                      Tensor(np.zeros((1, 100))))


class AttributeClassifierTestCase(test_util.TestCase):
  def testShape(self):
    model = nets.AttributeClassifier(100, np.random.default_rng(0))
    self.assertEqual((6, 2), model(Tensor(np.ones((6, 100)))).shape)

  def testHandSetWeights(self):
    model = nets.AttributeClassifier(2, np.random.default_rng(0), hidden=2)
    model.fc1.weight.data[...] = np.eye(2)
    model.fc2.weight.data[...] = np.array([[1.0, 0.0], [0.0, 2.0]])
    model.fc2.bias.data[...] = [0.0, 1.0]
    logits = model(Tensor([[1.0, -4.0]])).data
    # PReLU scales the negative input by 0.25.
    self.assertArrayAlmostEqual([[1.0, -1.0]], logits)

  def testGradients(self):
    with Precision(np.float64):
      model = nets.AttributeClassifier(3, np.random.default_rng(1), hidden=4)
      x = Tensor(np.random.default_rng(2).normal(size=(5, 3)))
      def _Loss():
        return float((model(x).data ** 2).sum())
      out = model(x)
      (out * out).Sum().Backward()
      for name, p in model.NamedParameters():
        for i in np.ndindex(*p.shape):
          saved = p.data[i]
          p.data[i] = saved + 1e-6
          plus = _Loss()
          p.data[i] = saved - 1e-6
          minus = _Loss()
          p.data[i] = saved
          numeric = (plus - minus) / 2e-6
          self.assertAlmostEqual(numeric, p.grad[i], delta=1e-5 + 1e-3 *
                                 abs(numeric), msg=name)


class ModelConfigTestCase(test_util.TestCase):
  def testValidate(self):
    nets.ModelConfig().Validate()
    for kwargs in ({'family': 'rnn'}, {'margin': 0}, {'num_layers': 7},
                   {'classifier_hidden': 0}):
      self.assertRaises(problems_module.InvalidConfig,
                        nets.ModelConfig(**kwargs).Validate)

  def testFromDict(self):
    config = nets.ModelConfig(family=nets.FAMILY_CNN, num_layers=3)
    self.assertEqual(config, nets.ModelConfig.FromDict(config.ToDict()))
    self.assertRaises(problems_module.InvalidConfig,
                      nets.ModelConfig.FromDict, {'depth': 3})

  def testBuildModel(self):
    for family, cls in ((nets.FAMILY_CNN, nets.CnnClassifier),
                        (nets.FAMILY_CAE, nets.ConvAutoEncoder),
                        (nets.FAMILY_CONTRASTIVE_CAE, nets.ConvAutoEncoder)):
      config = test_util.SmallModelConfig(family)
      model = nets.BuildModel(config, 5)
      self.assertTrue(isinstance(model, cls))
      self.assertIs(config, model.model_config)
    a = nets.BuildModel(test_util.SmallModelConfig(), 5)
    b = nets.BuildModel(test_util.SmallModelConfig(), 5)
    for (_, x), (_, y) in zip(a.StateArrays(), b.StateArrays()):
      np.testing.assert_array_equal(x, y)
    self.assertEqual(nets.FAMILY_CONTRASTIVE_CAE, a.family)

  def testModelInput(self):
    segments = [test_util.MakeSegment(value=60.0)]
    cae = nets.BuildModel(test_util.SmallModelConfig(), 0)
    self.assertEqual((1, 1, 24, 168), nets.ModelInput(cae, segments).shape)
    mlp = nets.MlpClassifier(nets.MlpConfig(hidden=(4,)),
                             np.random.default_rng(0))
    self.assertEqual((1, 4032), nets.ModelInput(mlp, segments).shape)


if __name__ == '__main__':
  unittest.main()
