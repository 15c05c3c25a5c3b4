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

"""Parameterised building blocks shared by the model families."""

import collections
import math

import numpy as np

from . import functional as F
from . import tensor

PRELU_INIT_SLOPE = 0.25


def KaimingUniform(rng, shape, fan_in):
  """Uniform(-b, b) with b = sqrt(6 / fan_in), in the default dtype."""
  bound = math.sqrt(6.0 / fan_in)
  return tensor.Tensor(rng.uniform(-bound, bound, size=shape),
                       requires_grad=True)


def Zeros(shape):
  return tensor.Tensor(np.zeros(shape), requires_grad=True)


def Ones(shape):
  return tensor.Tensor(np.ones(shape), requires_grad=True)


class Module(object):
  """Base class of layers and models.

  Subclasses register parameters, batch norm statistics and sub-modules in
  order; that order defines parameter names and checkpoint layout.
  """

  def __init__(self):
    self.training = True
    self._parameters = collections.OrderedDict()
    self._statistics = collections.OrderedDict()
    self._modules = collections.OrderedDict()

  def AddParameter(self, name, value):
    self._parameters[name] = value
    return value

  def AddStatistics(self, name, value):
    self._statistics[name] = value
    return value

  def AddModule(self, name, module):
    self._modules[name] = module
    return module

  def NamedParameters(self, prefix=''):
    named = [(prefix + name, p) for name, p in self._parameters.items()]
    for name, module in self._modules.items():
      named.extend(module.NamedParameters(prefix + name + '.'))
    return named

  def Parameters(self):
    return [p for _, p in self.NamedParameters()]

  def NamedStatistics(self, prefix=''):
    named = [(prefix + name, s) for name, s in self._statistics.items()]
    for name, module in self._modules.items():
      named.extend(module.NamedStatistics(prefix + name + '.'))
    return named

  def ParameterCount(self):
    return sum(p.size for p in self.Parameters())

  def SetTraining(self, training):
    self.training = training
    for module in self._modules.values():
      module.SetTraining(training)
    return self

  def Train(self):
    return self.SetTraining(True)

  def Eval(self):
    return self.SetTraining(False)

  def ZeroGrad(self):
    for p in self.Parameters():
      p.ZeroGrad()

  def StateArrays(self):
    """Ordered (name, array) pairs of parameters and running statistics."""
    arrays = [(name, p.data) for name, p in self.NamedParameters()]
    for name, stats in self.NamedStatistics():
      arrays.append((name + '.running_mean', stats.mean))
      arrays.append((name + '.running_var', stats.var))
      arrays.append((name + '.initialized',
                     np.array([float(stats.initialized)], dtype=np.float32)))
    return arrays

  def LoadStateArrays(self, arrays):
    """Copy named arrays into this module; names must match exactly."""
    for name, p in self.NamedParameters():
      value = arrays[name]
      if value.shape != p.shape:
        raise ValueError('parameter %s has shape %s, checkpoint has %s' %
                         (name, p.shape, value.shape))
      p.data = np.array(value, dtype=p.dtype)
    for name, stats in self.NamedStatistics():
      stats.mean = np.array(arrays[name + '.running_mean'],
                            dtype=stats.mean.dtype)
      stats.var = np.array(arrays[name + '.running_var'],
                           dtype=stats.var.dtype)
      stats.initialized = bool(arrays[name + '.initialized'][0])

  def Forward(self, x):
    raise NotImplementedError

  def __call__(self, x):
    return self.Forward(x)


class Conv2dLayer(Module):
  def __init__(self, in_channels, out_channels, kernel, stride, padding, rng):
    Module.__init__(self)
    kh, kw = kernel
    self.stride = stride
    self.padding = padding
    self.weight = self.AddParameter('weight', KaimingUniform(
        rng, (out_channels, in_channels, kh, kw), in_channels * kh * kw))
    self.bias = self.AddParameter('bias', Zeros((out_channels,)))

  def Forward(self, x):
    return F.Conv2d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose2dLayer(Module):
  def __init__(self, in_channels, out_channels, kernel, stride, padding, rng):
    Module.__init__(self)
    kh, kw = kernel
    self.stride = stride
    self.padding = padding
    self.weight = self.AddParameter('weight', KaimingUniform(
        rng, (in_channels, out_channels, kh, kw), in_channels * kh * kw))
    self.bias = self.AddParameter('bias', Zeros((out_channels,)))

  def Forward(self, x):
    return F.ConvTranspose2d(x, self.weight, self.bias, self.stride,
                             self.padding)


class BatchNormLayer(Module):
  def __init__(self, num_features, momentum=F.BATCH_NORM_MOMENTUM,
               epsilon=F.BATCH_NORM_EPSILON):
    Module.__init__(self)
    self.momentum = momentum
    self.epsilon = epsilon
    self.gamma = self.AddParameter('gamma', Ones((num_features,)))
    self.beta = self.AddParameter('beta', Zeros((num_features,)))
    self.stats = self.AddStatistics('stats', F.RunningStats(
        num_features, dtype=tensor.DefaultDtype()))

  def Forward(self, x):
    return F.BatchNorm(x, self.gamma, self.beta, self.stats, self.training,
                       self.momentum, self.epsilon)


class PReluLayer(Module):
  def __init__(self, num_channels, init=PRELU_INIT_SLOPE):
    Module.__init__(self)
    self.slope = self.AddParameter(
        'slope', tensor.Tensor(np.full(num_channels, init),
                               requires_grad=True))

  def Forward(self, x):
    return F.PRelu(x, self.slope)


class LinearLayer(Module):
  def __init__(self, in_features, out_features, rng):
    Module.__init__(self)
    self.weight = self.AddParameter('weight', KaimingUniform(
        rng, (in_features, out_features), in_features))
    self.bias = self.AddParameter('bias', Zeros((out_features,)))

  def Forward(self, x):
    return F.FullyConnected(x, self.weight, self.bias)
