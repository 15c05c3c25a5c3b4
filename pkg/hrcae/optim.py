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

import numpy as np

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8


class AdamState(object):
  """First and second moment estimates plus the step count."""

  def __init__(self, params):
    self.step = 0
    self.first_moment = [np.zeros_like(p.data) for p in params]
    self.second_moment = [np.zeros_like(p.data) for p in params]


def AdamStep(params, grads, state, lr, beta1=ADAM_BETA1, beta2=ADAM_BETA2,
             eps=ADAM_EPSILON):
  """One bias-corrected Adam update of params in place.

  Args:
    params: list of Tensors
    grads: list of numpy arrays or None (treated as zero), aligned with params
    state: AdamState created for params
    lr: learning rate
  """
  state.step += 1
  correction1 = 1.0 - beta1 ** state.step
  correction2 = 1.0 - beta2 ** state.step
  for i, (param, grad) in enumerate(zip(params, grads)):
    if grad is None:
      grad = np.zeros_like(param.data)
    m = beta1 * state.first_moment[i] + (1.0 - beta1) * grad
    v = beta2 * state.second_moment[i] + (1.0 - beta2) * grad * grad
    state.first_moment[i] = m.astype(param.data.dtype)
    state.second_moment[i] = v.astype(param.data.dtype)
    update = lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
    param.data -= update.astype(param.data.dtype)


class Adam(object):
  """Adam over a fixed, named parameter list."""

  def __init__(self, named_params, beta1=ADAM_BETA1, beta2=ADAM_BETA2,
               eps=ADAM_EPSILON):
    self.names = [name for name, _ in named_params]
    self.params = [param for _, param in named_params]
    self.beta1 = beta1
    self.beta2 = beta2
    self.eps = eps
    self.state = AdamState(self.params)

  def ZeroGrad(self):
    for param in self.params:
      param.ZeroGrad()

  def Step(self, lr):
    AdamStep(self.params, [p.grad for p in self.params], self.state, lr,
             self.beta1, self.beta2, self.eps)

  def StateArrays(self):
    """Named moment arrays for checkpointing."""
    arrays = []
    for name, m, v in zip(self.names, self.state.first_moment,
                          self.state.second_moment):
      arrays.append(('adam.m.' + name, m))
      arrays.append(('adam.v.' + name, v))
    return arrays

  def LoadStateArrays(self, step, arrays):
    self.state.step = step
    for i, name in enumerate(self.names):
      self.state.first_moment[i] = arrays['adam.m.' + name].copy()
      self.state.second_moment[i] = arrays['adam.v.' + name].copy()
