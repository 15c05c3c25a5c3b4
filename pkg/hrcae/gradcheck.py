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

"""Central finite-difference checks of every differentiable operator, both
reconstruction losses and small instances of the networks.

Checks run in 64-bit mode. Each case returns named leaf tensors and a
closure producing an output; the output is reduced with a fixed random
projection so every output element contributes to the checked gradient.
"""

import collections

import numpy as np

from . import functional as F
from . import losses
from . import nets
from . import tensor

DEFAULT_PROBES = 50
DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-3
ABSOLUTE_FLOOR = 1e-6

OpResult = collections.namedtuple(
    'OpResult', ['op', 'max_rel_error', 'probes', 'passed'])


def _Leaf(array):
  return tensor.Tensor(np.asarray(array, dtype=np.float64), requires_grad=True)


def _AwayFromZero(rng, shape, gap=0.1):
  """Random values with |x| >= gap, so probes never cross a kink."""
  x = rng.uniform(gap, 1.0 + gap, size=shape)
  return x * rng.choice([-1.0, 1.0], size=shape)


def _Distinct(rng, shape, spacing=0.01):
  """Pairwise distinct values, so pooling maxima are unique."""
  size = int(np.prod(shape))
  return (rng.permutation(size) * spacing - size * spacing / 2).reshape(shape)


def _ConvCase(rng, stride, padding, shape=(2, 2, 6, 6), out_channels=3,
              kernel=(3, 3)):
  k = out_channels
  kh, kw = kernel
  x = _Leaf(rng.standard_normal(shape))
  w = _Leaf(rng.standard_normal((k, shape[1], kh, kw)))
  b = _Leaf(rng.standard_normal(k))
  return [('x', x), ('weight', w), ('bias', b)], \
      lambda: F.Conv2d(x, w, b, stride, padding)


def _ConvTransposeCase(rng, stride, padding):
  x = _Leaf(rng.standard_normal((2, 3, 4, 5)))
  w = _Leaf(rng.standard_normal((3, 2, 3, 3)))
  b = _Leaf(rng.standard_normal(2))
  return [('x', x), ('weight', w), ('bias', b)], \
      lambda: F.ConvTranspose2d(x, w, b, stride, padding)


def _MaxPoolCase(rng, kernel, shape):
  x = _Leaf(_Distinct(rng, shape))
  return [('x', x)], lambda: F.MaxPool2d(x, kernel)


def _UnpoolCase(rng):
  x = _Leaf(rng.standard_normal((2, 3, 3, 7)))
  return [('x', x)], lambda: F.UpsampleUnpool(x, (2, 2))


def _BatchNormCase(rng, shape, training):
  c = shape[1]
  x = _Leaf(rng.standard_normal(shape) * 2.0 + 0.5)
  gamma = _Leaf(rng.uniform(0.5, 1.5, c))
  beta = _Leaf(rng.standard_normal(c))
  stats = F.RunningStats(c, dtype=np.float64)
  if not training:
    stats.Set(rng.standard_normal(c), rng.uniform(0.5, 2.0, c))
  return [('x', x), ('gamma', gamma), ('beta', beta)], \
      lambda: F.BatchNorm(x, gamma, beta, stats, training)


def _PReluCase(rng):
  x = _Leaf(_AwayFromZero(rng, (2, 3, 4, 4)))
  slope = _Leaf(rng.uniform(0.05, 0.5, 3))
  return [('x', x), ('slope', slope)], lambda: F.PRelu(x, slope)


def _FullyConnectedCase(rng):
  x = _Leaf(rng.standard_normal((4, 6)))
  w = _Leaf(rng.standard_normal((6, 5)))
  b = _Leaf(rng.standard_normal(5))
  return [('x', x), ('weight', w), ('bias', b)], \
      lambda: F.FullyConnected(x, w, b)


def _GlobalAvgPoolCase(rng):
  x = _Leaf(rng.standard_normal((2, 3, 4, 5)))
  return [('x', x)], lambda: F.GlobalAvgPool(x)


def _RmseCase(rng):
  x = _Leaf(rng.standard_normal((3, 1, 4, 6)))
  x_hat = _Leaf(rng.standard_normal((3, 1, 4, 6)))
  return [('x', x), ('x_hat', x_hat)], lambda: losses.RmseLoss(x, x_hat)


def _ContrastiveCase(rng, per_sample=False):
  shape = (2, 1, 4, 6)
  asym = _Leaf(rng.standard_normal(shape))
  asym_recon = _Leaf(rng.standard_normal(shape))
  sym = _Leaf(rng.standard_normal(shape))
  sym_recon = _Leaf(rng.standard_normal(shape))
  return [('asym', asym), ('asym_recon', asym_recon), ('sym', sym),
          ('sym_recon', sym_recon)], \
      lambda: losses.ContrastiveLoss(asym, asym_recon, sym, sym_recon,
                                     losses.DEFAULT_MARGIN, per_sample)


def _CrossEntropyCase(rng):
  logits = _Leaf(rng.standard_normal((6, 2)))
  labels = rng.integers(0, 2, size=6)
  return [('logits', logits)], lambda: losses.CrossEntropyLoss(logits, labels)


def _FeatureMaps(rng, n):
  return tensor.Tensor(rng.uniform(0.1, 0.9, (n,) + nets.INPUT_SHAPE))


def _AttributeClassifierCase(rng):
  model = nets.AttributeClassifier(8, rng, hidden=6)
  latent = _Leaf(rng.standard_normal((4, 8)))
  labels = np.array([0, 1, 0, 1])
  return model.NamedParameters() + [('latent', latent)], \
      lambda: losses.CrossEntropyLoss(model(latent), labels)


def _CnnCase(rng):
  model = nets.CnnClassifier(nets.CnnConfig(2, channels=[2, 3]), rng)
  batch = _FeatureMaps(rng, 2)
  labels = np.array([0, 1])
  return model.NamedParameters(), \
      lambda: losses.CrossEntropyLoss(model(batch), labels)


def _ContrastiveCaeCase(rng):
  model = nets.ConvAutoEncoder(
      nets.CaeConfig(4, latent_dim=8, channels=[2, 2, 2, 2]), rng,
      nets.FAMILY_CONTRASTIVE_CAE)
  batch = _FeatureMaps(rng, 4)
  sym, asym = np.array([0, 1]), np.array([2, 3])

  def _Loss():
    recon, _ = model(batch)
    return losses.ContrastiveLoss(batch[asym], recon[asym], batch[sym],
                                  recon[sym])
  return model.NamedParameters(), _Loss


def _Cases():
  """(op name, case builder) pairs; an op may have several cases."""
  return [
      ('conv2d', lambda rng: _ConvCase(rng, 1, 1)),
      ('conv2d', lambda rng: _ConvCase(rng, 2, 0, shape=(1, 2, 7, 7))),
      ('conv_transpose2d', lambda rng: _ConvTransposeCase(rng, 1, 1)),
      ('conv_transpose2d', lambda rng: _ConvTransposeCase(rng, 2, 0)),
      ('max_pool2d', lambda rng: _MaxPoolCase(rng, (2, 2), (2, 2, 6, 6))),
      ('max_pool2d', lambda rng: _MaxPoolCase(rng, (3, 3), (1, 2, 6, 9))),
      ('upsample_unpool', _UnpoolCase),
      ('batch_norm', lambda rng: _BatchNormCase(rng, (2, 3, 4, 4), True)),
      ('batch_norm', lambda rng: _BatchNormCase(rng, (5, 4), True)),
      ('batch_norm', lambda rng: _BatchNormCase(rng, (2, 3, 4, 4), False)),
      ('prelu', _PReluCase),
      ('fully_connected', _FullyConnectedCase),
      ('global_avg_pool', _GlobalAvgPoolCase),
      ('rmse_loss', _RmseCase),
      ('contrastive_loss', _ContrastiveCase),
      ('contrastive_loss', lambda rng: _ContrastiveCase(rng, True)),
      ('cross_entropy_loss', _CrossEntropyCase),
      ('attr_classifier', _AttributeClassifierCase),
      ('cnn', _CnnCase),
      ('contrastive_cae', _ContrastiveCaeCase),
  ]


def OpNames():
  return sorted(set(name for name, _ in _Cases()))


def CheckGradient(leaves, forward, rng, probes=DEFAULT_PROBES,
                  step=DEFAULT_STEP):
  """Largest relative error between backward and central differences.

  Args:
    leaves: list of (name, Tensor) with requires_grad set
    forward: closure returning the output Tensor
    rng: numpy Generator choosing the projection and the probed elements
  """
  out = forward()
  projection = rng.standard_normal(out.shape)
  loss = tensor.Sum(out * projection)
  for _, leaf in leaves:
    leaf.ZeroGrad()
  loss.Backward()
  analytic = [leaf.grad if leaf.grad is not None
              else np.zeros_like(leaf.data) for _, leaf in leaves]

  def _Objective():
    with tensor.NoGrad():
      return float((forward().data * projection).sum())

  sizes = np.array([leaf.size for _, leaf in leaves], dtype=np.float64)
  choices = rng.choice(len(leaves), size=probes, p=sizes / sizes.sum())
  worst = 0.0
  for which in choices:
    leaf = leaves[which][1]
    flat = leaf.data.reshape(-1)
    i = int(rng.integers(leaf.size))
    original = flat[i]
    flat[i] = original + step
    plus = _Objective()
    flat[i] = original - step
    minus = _Objective()
    flat[i] = original
    numeric = (plus - minus) / (2 * step)
    exact = float(analytic[which].reshape(-1)[i])
    error = abs(exact - numeric) / max(abs(exact), abs(numeric),
                                       ABSOLUTE_FLOOR)
    worst = max(worst, error)
  return worst


def RunGradientChecks(seed=0, probes=DEFAULT_PROBES, step=DEFAULT_STEP,
                      tolerance=DEFAULT_TOLERANCE, ops=None):
  """Run the suite; returns one OpResult per op in name order.

  Each case of an op gets `probes` probes.
  """
  worst = collections.OrderedDict()
  counts = collections.defaultdict(int)
  with tensor.Precision(np.float64):
    for index, (op, build) in enumerate(_Cases()):
      if ops and op not in ops:
        continue
      rng = np.random.default_rng([seed, index])
      leaves, forward = build(rng)
      error = CheckGradient(leaves, forward, rng, probes, step)
      worst[op] = max(worst.get(op, 0.0), error)
      counts[op] += probes
  return [OpResult(op, worst[op], counts[op], worst[op] < tolerance)
          for op in sorted(worst)]


def FormatReport(results):
  lines = ['%-20s %12s %7s  %s' % ('op', 'max rel err', 'probes', 'status')]
  for result in results:
    lines.append('%-20s %12.3e %7d  %s' % (
        result.op, result.max_rel_error, result.probes,
        'ok' if result.passed else 'FAILED'))
  return '\n'.join(lines)
