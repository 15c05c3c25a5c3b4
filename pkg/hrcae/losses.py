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

"""Training objectives."""

import numpy as np

from . import functional as F
from . import problems as problems_module
from . import tensor

DEFAULT_MARGIN = 5.0

LOSS_RMSE = 'rmse'
LOSS_CONTRASTIVE = 'contrastive'
LOSS_CROSS_ENTROPY = 'cross_entropy'
LOSS_KINDS = (LOSS_RMSE, LOSS_CONTRASTIVE, LOSS_CROSS_ENTROPY)


def _CheckSameShape(op, x, x_hat):
  if tuple(x.shape) != tuple(x_hat.shape):
    raise problems_module.ShapeMismatch(op=op, dimension='target',
                                        expected=tuple(x.shape),
                                        found=tuple(x_hat.shape))


def RmseLoss(x, x_hat):
  """sqrt(mean((x - x_hat)^2)) over every element of the batch."""
  x = tensor.AsTensor(x)
  x_hat = tensor.AsTensor(x_hat, like=x)
  _CheckSameShape('rmse_loss', x, x_hat)
  return tensor.Sqrt(tensor.Mean(tensor.Square(x_hat - x)))


def PerSampleRmseLoss(x, x_hat):
  """Mean over the batch of each sample's own RMSE."""
  x = tensor.AsTensor(x)
  x_hat = tensor.AsTensor(x_hat, like=x)
  _CheckSameShape('rmse_loss', x, x_hat)
  axes = tuple(range(1, x.ndim))
  per_sample = tensor.Sqrt(tensor.Mean(tensor.Square(x_hat - x), axes))
  return tensor.Mean(per_sample)


def PerSampleRmse(x, x_hat):
  """Numpy per-sample RMSE, the reconstruction error score of a segment."""
  x = np.asarray(x, dtype=np.float64)
  x_hat = np.asarray(x_hat, dtype=np.float64)
  if x.shape != x_hat.shape:
    raise problems_module.ShapeMismatch(op='rmse', dimension='target',
                                        expected=x.shape, found=x_hat.shape)
  return np.sqrt(((x_hat - x) ** 2).reshape(len(x), -1).mean(axis=1))


def ContrastiveLoss(asym, asym_recon, sym, sym_recon, margin=DEFAULT_MARGIN,
                    per_sample=False):
  """rmse(asymptomatic) + max(0, margin - rmse(symptomatic)).

  Each RMSE is taken over its own half batch, or averaged over per-sample
  RMSEs when per_sample is set.

  Raises:
    MissingClass: either half batch is empty
  """
  if len(asym.shape) == 0 or len(sym.shape) == 0 or \
      asym.shape[0] == 0 or sym.shape[0] == 0:
    raise problems_module.MissingClass()
  rmse = PerSampleRmseLoss if per_sample else RmseLoss
  asym_term = rmse(asym, asym_recon)
  sym_term = rmse(sym, sym_recon)
  return asym_term + tensor.Relu(margin - sym_term)


def CrossEntropyLoss(logits, labels):
  """Softmax cross entropy of [N, 2] logits, averaged over the batch."""
  labels = np.asarray(labels, dtype=np.int64)
  if logits.ndim != 2 or logits.shape[0] != len(labels):
    raise problems_module.ShapeMismatch(op='cross_entropy_loss',
                                        dimension='batch',
                                        expected=len(labels),
                                        found=tuple(logits.shape))
  log_probs = F.LogSoftmax(logits)
  picked = log_probs[(np.arange(len(labels)), labels)]
  return -tensor.Mean(picked)
