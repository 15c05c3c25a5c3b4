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

"""Differentiable operators for the convolutional networks.

Every function takes and returns tensor.Tensor objects. Convolutions work on
NCHW arrays through an im2col view; gradient scatters loop over kernel
offsets so the summation order is fixed.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided

from . import problems as problems_module
from .tensor import Tensor

BATCH_NORM_MOMENTUM = 0.1
BATCH_NORM_EPSILON = 1e-5


def _Pair(value):
  if isinstance(value, (tuple, list)):
    return int(value[0]), int(value[1])
  return int(value), int(value)


def _CheckNdim(op, x, ndim):
  if x.ndim != ndim:
    raise problems_module.ShapeMismatch(op=op, dimension='rank',
                                        expected=ndim, found=x.ndim)


def _CheckEqual(op, dimension, expected, found):
  if expected != found:
    raise problems_module.ShapeMismatch(op=op, dimension=dimension,
                                        expected=expected, found=found)


def _Pad(x, ph, pw):
  if not ph and not pw:
    return x
  return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)), mode='constant')


def _Im2Col(xp, kh, kw, sh, sw, ho, wo):
  """(N, C*kh*kw, ho*wo) patches of a padded NCHW array."""
  n, c = xp.shape[:2]
  s_n, s_c, s_h, s_w = xp.strides
  patches = as_strided(xp, shape=(n, c, kh, kw, ho, wo),
                       strides=(s_n, s_c, s_h, s_w, s_h * sh, s_w * sw),
                       writeable=False)
  return patches.reshape(n, c * kh * kw, ho * wo)


def _Col2Im(cols, padded_shape, kh, kw, sh, sw, ho, wo):
  """Adjoint of _Im2Col: scatter-add patches back into a padded array."""
  n, c = padded_shape[:2]
  cols = cols.reshape(n, c, kh, kw, ho, wo)
  out = np.zeros(padded_shape, dtype=cols.dtype)
  for i in range(kh):
    for j in range(kw):
      out[:, :, i:i + sh * ho:sh, j:j + sw * wo:sw] += cols[:, :, i, j]
  return out


def _Conv2dBackward(grad, x_shape, cols, w, stride, padding):
  """Returns (d input, d weight, d bias) of Conv2d."""
  n, c, h, width = x_shape
  k, _, kh, kw = w.shape
  sh, sw = stride
  ph, pw = padding
  ho, wo = grad.shape[2:]
  g = grad.reshape(n, k, ho * wo)
  w2 = w.reshape(k, -1)
  d_bias = g.sum(axis=(0, 2))
  d_weight = np.tensordot(g, cols, axes=([0, 2], [0, 2])).reshape(w.shape)
  d_cols = np.matmul(w2.T, g)
  d_padded = _Col2Im(d_cols, (n, c, h + 2 * ph, width + 2 * pw), kh, kw,
                     sh, sw, ho, wo)
  d_input = d_padded[:, :, ph:ph + h, pw:pw + width]
  return d_input, d_weight, d_bias


def Conv2d(x, weight, bias=None, stride=1, padding=0):
  """2-D cross-correlation with zero padding.

  Args:
    x: Tensor [N, C, H, W]
    weight: Tensor [K, C, kh, kw]
    bias: Tensor [K] or None
    stride, padding: int or (h, w) pair

  Returns:
    Tensor [N, K, H', W'] with H' = (H + 2 ph - kh) // sh + 1.
  """
  _CheckNdim('conv2d', x, 4)
  _CheckNdim('conv2d', weight, 4)
  sh, sw = _Pair(stride)
  ph, pw = _Pair(padding)
  n, c, h, w = x.shape
  k, wc, kh, kw = weight.shape
  _CheckEqual('conv2d', 'input channels', wc, c)
  if bias is not None:
    _CheckEqual('conv2d', 'bias length', (k,), bias.shape)
  if kh > h + 2 * ph or kw > w + 2 * pw:
    raise problems_module.ShapeMismatch(
        op='conv2d', dimension='kernel size',
        expected='<= %dx%d' % (h + 2 * ph, w + 2 * pw), found=(kh, kw))
  ho = (h + 2 * ph - kh) // sh + 1
  wo = (w + 2 * pw - kw) // sw + 1
  cols = _Im2Col(_Pad(x.data, ph, pw), kh, kw, sh, sw, ho, wo)
  out = np.matmul(weight.data.reshape(k, -1), cols).reshape(n, k, ho, wo)
  if bias is not None:
    out = out + bias.data.reshape(1, k, 1, 1)

  def _Backward(grad):
    d_input, d_weight, d_bias = _Conv2dBackward(
        grad, x.shape, cols, weight.data, (sh, sw), (ph, pw))
    return d_input, d_weight, d_bias

  parents = (x, weight) if bias is None else (x, weight, bias)
  return Tensor.FromOp(out, parents, _Backward, 'conv2d')


def ConvTranspose2d(x, weight, bias=None, stride=1, padding=0):
  """Transposed convolution, the adjoint of Conv2d with the same weight.

  Args:
    x: Tensor [N, Cin, H, W]
    weight: Tensor [Cin, Cout, kh, kw]
    bias: Tensor [Cout] or None

  Returns:
    Tensor [N, Cout, H', W'] with H' = (H - 1) sh - 2 ph + kh.
  """
  _CheckNdim('conv_transpose2d', x, 4)
  _CheckNdim('conv_transpose2d', weight, 4)
  sh, sw = _Pair(stride)
  ph, pw = _Pair(padding)
  n, c_in, h, w = x.shape
  wc, c_out, kh, kw = weight.shape
  _CheckEqual('conv_transpose2d', 'input channels', wc, c_in)
  if bias is not None:
    _CheckEqual('conv_transpose2d', 'bias length', (c_out,), bias.shape)
  full_h = (h - 1) * sh + kh
  full_w = (w - 1) * sw + kw
  ho = full_h - 2 * ph
  wo = full_w - 2 * pw
  if ho < 1 or wo < 1:
    raise problems_module.ShapeMismatch(
        op='conv_transpose2d', dimension='output size', expected='>= 1x1',
        found=(ho, wo))
  w2 = weight.data.reshape(c_in, -1)
  x_flat = x.data.reshape(n, c_in, h * w)
  cols = np.matmul(w2.T, x_flat)
  full = _Col2Im(cols, (n, c_out, full_h, full_w), kh, kw, sh, sw, h, w)
  out = full[:, :, ph:ph + ho, pw:pw + wo]
  if bias is not None:
    out = out + bias.data.reshape(1, c_out, 1, 1)

  def _Backward(grad):
    g_full = np.zeros((n, c_out, full_h, full_w), dtype=grad.dtype)
    g_full[:, :, ph:ph + ho, pw:pw + wo] = grad
    d_cols = _Im2Col(g_full, kh, kw, sh, sw, h, w)
    d_input = np.matmul(w2, d_cols).reshape(x.shape)
    d_weight = np.tensordot(x_flat, d_cols,
                            axes=([0, 2], [0, 2])).reshape(weight.shape)
    return d_input, d_weight, grad.sum(axis=(0, 2, 3))

  parents = (x, weight) if bias is None else (x, weight, bias)
  return Tensor.FromOp(out, parents, _Backward, 'conv_transpose2d')


def MaxPool2d(x, kernel, stride=None):
  """Windowed maxima; ties go to the first element in row-major order."""
  _CheckNdim('max_pool2d', x, 4)
  kh, kw = _Pair(kernel)
  sh, sw = _Pair(stride if stride is not None else kernel)
  n, c, h, w = x.shape
  if kh > h or kw > w:
    raise problems_module.ShapeMismatch(
        op='max_pool2d', dimension='kernel size',
        expected='<= %dx%d' % (h, w), found=(kh, kw))
  ho = (h - kh) // sh + 1
  wo = (w - kw) // sw + 1
  s_n, s_c, s_h, s_w = x.data.strides
  patches = as_strided(x.data, shape=(n, c, ho, wo, kh, kw),
                       strides=(s_n, s_c, s_h * sh, s_w * sw, s_h, s_w),
                       writeable=False).reshape(n, c, ho, wo, kh * kw)
  argmax = patches.argmax(axis=-1)
  out = np.take_along_axis(patches, argmax[..., None], axis=-1)[..., 0]

  def _Backward(grad):
    d_input = np.zeros(x.shape, dtype=grad.dtype)
    for p in range(kh * kw):
      i, j = divmod(p, kw)
      d_input[:, :, i:i + sh * ho:sh, j:j + sw * wo:sw] += \
          grad * (argmax == p)
    return (d_input,)

  return Tensor.FromOp(out, (x,), _Backward, 'max_pool2d')


def UpsampleUnpool(x, kernel):
  """Replicate every value into a kh x kw block; gradient is the block sum."""
  _CheckNdim('upsample_unpool', x, 4)
  kh, kw = _Pair(kernel)
  n, c, h, w = x.shape
  out = x.data.repeat(kh, axis=2).repeat(kw, axis=3)

  def _Backward(grad):
    return (grad.reshape(n, c, h, kh, w, kw).sum(axis=(3, 5)),)

  return Tensor.FromOp(out, (x,), _Backward, 'upsample_unpool')


class RunningStats(object):
  """Per-channel running mean and variance of a batch norm layer."""

  def __init__(self, num_features, dtype=np.float32):
    self.mean = np.zeros(num_features, dtype=dtype)
    self.var = np.ones(num_features, dtype=dtype)
    self.initialized = False

  def Update(self, batch_mean, batch_var, momentum):
    self.mean = ((1.0 - momentum) * self.mean +
                 momentum * batch_mean).astype(self.mean.dtype)
    self.var = ((1.0 - momentum) * self.var +
                momentum * batch_var).astype(self.var.dtype)
    self.initialized = True

  def Set(self, mean, var):
    self.mean = np.asarray(mean, dtype=self.mean.dtype).copy()
    self.var = np.asarray(var, dtype=self.var.dtype).copy()
    self.initialized = True


def _ChannelAxes(x):
  """Reduction axes and broadcast shape for per-channel parameters."""
  if x.ndim == 4:
    return (0, 2, 3), (1, x.shape[1], 1, 1)
  if x.ndim == 2:
    return (0,), (1, x.shape[1])
  raise problems_module.ShapeMismatch(op='batch_norm', dimension='rank',
                                      expected='2 or 4', found=x.ndim)


def BatchNorm(x, gamma, beta, running_stats, training,
              momentum=BATCH_NORM_MOMENTUM, epsilon=BATCH_NORM_EPSILON):
  """Per-channel batch normalization followed by the gamma/beta affine map.

  In training mode the batch statistics normalize the input and update
  running_stats (variance with Bessel's correction). In eval mode the running
  statistics are used.

  Raises:
    UninitializedStatistics: eval mode before any training step
  """
  axes, shape = _ChannelAxes(x)
  c = x.shape[1]
  _CheckEqual('batch_norm', 'gamma length', (c,), gamma.shape)
  _CheckEqual('batch_norm', 'beta length', (c,), beta.shape)
  g = gamma.data.reshape(shape)
  count = x.size // c
  if training:
    mean = x.data.mean(axis=axes)
    var = x.data.var(axis=axes)
    unbiased = var * count / (count - 1) if count > 1 else var
    running_stats.Update(mean, unbiased, momentum)
  else:
    if not running_stats.initialized:
      raise problems_module.UninitializedStatistics()
    mean = running_stats.mean.astype(x.dtype)
    var = running_stats.var.astype(x.dtype)
  inv_std = 1.0 / np.sqrt(var.reshape(shape) + epsilon)
  x_hat = (x.data - mean.reshape(shape)) * inv_std
  out = g * x_hat + beta.data.reshape(shape)

  def _Backward(grad):
    d_gamma = (grad * x_hat).sum(axis=axes)
    d_beta = grad.sum(axis=axes)
    d_x_hat = grad * g
    if training:
      d_input = inv_std / count * (
          count * d_x_hat - d_x_hat.sum(axis=axes, keepdims=True) -
          x_hat * (d_x_hat * x_hat).sum(axis=axes, keepdims=True))
    else:
      d_input = d_x_hat * inv_std
    return d_input, d_gamma, d_beta

  return Tensor.FromOp(out, (x, gamma, beta), _Backward, 'batch_norm')


def PRelu(x, slope):
  """x where x > 0, slope * x elsewhere; one slope per channel (axis 1)."""
  if x.ndim < 2:
    raise problems_module.ShapeMismatch(op='prelu', dimension='rank',
                                        expected='>= 2', found=x.ndim)
  c = x.shape[1]
  _CheckEqual('prelu', 'slope length', (c,), slope.shape)
  shape = (1, c) + (1,) * (x.ndim - 2)
  s = slope.data.reshape(shape)
  positive = x.data > 0
  out = np.where(positive, x.data, s * x.data)
  axes = tuple(i for i in range(x.ndim) if i != 1)

  def _Backward(grad):
    d_input = grad * np.where(positive, 1.0, s).astype(grad.dtype)
    d_slope = (grad * np.where(positive, 0.0, x.data)).sum(axis=axes)
    return d_input, d_slope

  return Tensor.FromOp(out, (x, slope), _Backward, 'prelu')


def FullyConnected(x, weight, bias=None):
  """x [N, D] @ weight [D, M] + bias [M]."""
  _CheckNdim('fully_connected', x, 2)
  _CheckNdim('fully_connected', weight, 2)
  _CheckEqual('fully_connected', 'input features', weight.shape[0],
              x.shape[1])
  out = np.matmul(x.data, weight.data)
  if bias is not None:
    _CheckEqual('fully_connected', 'bias length', (weight.shape[1],),
                bias.shape)
    out = out + bias.data

  def _Backward(grad):
    return (np.matmul(grad, weight.data.T), np.matmul(x.data.T, grad),
            grad.sum(axis=0))

  parents = (x, weight) if bias is None else (x, weight, bias)
  return Tensor.FromOp(out, parents, _Backward, 'fully_connected')


def GlobalAvgPool(x):
  """Mean over the spatial axes: [N, C, H, W] -> [N, C]."""
  _CheckNdim('global_avg_pool', x, 4)
  n, c, h, w = x.shape

  def _Backward(grad):
    return (np.broadcast_to(grad[:, :, None, None] / (h * w),
                            x.shape).copy(),)

  return Tensor.FromOp(x.data.mean(axis=(2, 3)), (x,), _Backward,
                       'global_avg_pool')


def LogSoftmax(z):
  """Row-wise log softmax of [N, K] logits, stable via log-sum-exp."""
  _CheckNdim('log_softmax', z, 2)
  shifted = z.data - z.data.max(axis=1, keepdims=True)
  log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
  out = shifted - log_norm
  softmax = np.exp(out)

  def _Backward(grad):
    return (grad - softmax * grad.sum(axis=1, keepdims=True),)

  return Tensor.FromOp(out, (z,), _Backward, 'log_softmax')


def Flatten(x):
  return x.Flatten()
