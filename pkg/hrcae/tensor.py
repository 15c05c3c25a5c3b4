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

"""Dense arrays with reverse-mode automatic differentiation.

A Tensor wraps a numpy array. Operations on tensors that require gradients
record their parents and a backward function; Backward() walks the recorded
graph once in reverse topological order.

Storage is 32-bit by default. Precision(numpy.float64) switches newly created
tensors to 64-bit, which the gradient checks rely on.
"""

import numpy as np

from . import problems as problems_module

_state = {'dtype': np.float32, 'grad_enabled': True}


def DefaultDtype():
  return _state['dtype']


class Precision(object):
  """Context manager selecting the dtype of tensors created inside it."""

  def __init__(self, dtype):
    self._dtype = dtype
    self._saved = None

  def __enter__(self):
    self._saved = _state['dtype']
    _state['dtype'] = self._dtype
    return self

  def __exit__(self, *unused):
    _state['dtype'] = self._saved


class NoGrad(object):
  """Context manager that disables graph recording."""

  def __enter__(self):
    self._saved = _state['grad_enabled']
    _state['grad_enabled'] = False
    return self

  def __exit__(self, *unused):
    _state['grad_enabled'] = self._saved


def IsGradEnabled():
  return _state['grad_enabled']


class Tensor(object):
  """n-dimensional array with optional gradient tracking.

  Attributes:
    data: numpy array holding the values
    grad: numpy array of the same shape, or None before Backward()
    requires_grad: True for leaves that receive gradients and for results
      that depend on such leaves
  """

  __array_priority__ = 100

  def __init__(self, data, requires_grad=False, dtype=None):
    self.data = np.array(data, dtype=dtype or DefaultDtype())
    self.grad = None
    self.requires_grad = requires_grad
    self._parents = ()
    self._backward = None
    self.op = 'leaf'

  @classmethod
  def FromOp(cls, data, parents, backward, op):
    """Result of an operation; records the graph when a parent needs it."""
    out = cls.__new__(cls)
    dtype = np.result_type(*[p.data.dtype for p in parents])
    out.data = np.asarray(data, dtype=dtype)
    out.grad = None
    out.op = op
    out.requires_grad = IsGradEnabled() and any(p.requires_grad
                                                for p in parents)
    if out.requires_grad:
      out._parents = tuple(parents)
      out._backward = backward
    else:
      out._parents = ()
      out._backward = None
    return out

  @property
  def shape(self):
    return self.data.shape

  @property
  def ndim(self):
    return self.data.ndim

  @property
  def size(self):
    return self.data.size

  @property
  def dtype(self):
    return self.data.dtype

  def IsLeaf(self):
    return self._backward is None

  def Numpy(self):
    return self.data

  def Item(self):
    return float(self.data.reshape(-1)[0])

  def ZeroGrad(self):
    self.grad = None

  def Backward(self):
    Backward(self)

  def __repr__(self):
    return 'Tensor(shape=%s, op=%s, requires_grad=%s)' % (
        self.shape, self.op, self.requires_grad)

  # Arithmetic

  def __add__(self, other):
    return Add(self, other)

  def __radd__(self, other):
    return Add(AsTensor(other, like=self), self)

  def __sub__(self, other):
    return Add(self, Neg(AsTensor(other, like=self)))

  def __rsub__(self, other):
    return Add(AsTensor(other, like=self), Neg(self))

  def __mul__(self, other):
    return Mul(self, other)

  def __rmul__(self, other):
    return Mul(AsTensor(other, like=self), self)

  def __neg__(self):
    return Neg(self)

  def __truediv__(self, other):
    if isinstance(other, Tensor):
      return Mul(self, Reciprocal(other))
    return Mul(self, 1.0 / other)

  def __getitem__(self, index):
    return Slice(self, index)

  def Reshape(self, *shape):
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
      shape = tuple(shape[0])
    return Reshape(self, shape)

  def Flatten(self):
    """Keep the batch axis, flatten the rest."""
    return Reshape(self, (self.shape[0], -1))

  def Sum(self, axis=None):
    return Sum(self, axis)

  def Mean(self, axis=None):
    return Mean(self, axis)


def AsTensor(value, like=None):
  if isinstance(value, Tensor):
    return value
  dtype = like.dtype if like is not None else None
  return Tensor(value, dtype=dtype)


def _Unbroadcast(grad, shape):
  """Sum grad over the axes that broadcasting added or stretched."""
  while grad.ndim > len(shape):
    grad = grad.sum(axis=0)
  for axis, size in enumerate(shape):
    if size == 1 and grad.shape[axis] != 1:
      grad = grad.sum(axis=axis, keepdims=True)
  return grad


def Add(a, b):
  a = AsTensor(a)
  b = AsTensor(b, like=a)
  def _Backward(grad):
    return _Unbroadcast(grad, a.shape), _Unbroadcast(grad, b.shape)
  return Tensor.FromOp(a.data + b.data, (a, b), _Backward, 'add')


def Mul(a, b):
  a = AsTensor(a)
  b = AsTensor(b, like=a)
  def _Backward(grad):
    return (_Unbroadcast(grad * b.data, a.shape),
            _Unbroadcast(grad * a.data, b.shape))
  return Tensor.FromOp(a.data * b.data, (a, b), _Backward, 'mul')


def Neg(a):
  return Tensor.FromOp(-a.data, (a,), lambda grad: (-grad,), 'neg')


def Reciprocal(a):
  out = 1.0 / a.data
  return Tensor.FromOp(out, (a,), lambda grad: (-grad * out * out,),
                       'reciprocal')


def Square(a):
  return Tensor.FromOp(a.data * a.data, (a,),
                       lambda grad: (2.0 * grad * a.data,), 'square')


def Sqrt(a):
  """Square root; the gradient at 0 is taken as 0."""
  out = np.sqrt(a.data)
  def _Backward(grad):
    safe = np.where(out > 0, out, 1.0)
    return (np.where(out > 0, 0.5 * grad / safe, 0.0),)
  return Tensor.FromOp(out, (a,), _Backward, 'sqrt')


def Relu(a):
  mask = a.data > 0
  return Tensor.FromOp(np.where(mask, a.data, 0), (a,),
                       lambda grad: (grad * mask,), 'relu')


def Sum(a, axis=None):
  out = a.data.sum(axis=axis)
  def _Backward(grad):
    if axis is not None:
      grad = np.expand_dims(grad, axis)
    return (np.broadcast_to(grad, a.shape).copy(),)
  return Tensor.FromOp(out, (a,), _Backward, 'sum')


def Mean(a, axis=None):
  count = a.size if axis is None else np.prod([a.shape[i] for i in
                                               np.atleast_1d(axis)])
  return Mul(Sum(a, axis), 1.0 / count)


def Reshape(a, shape):
  return Tensor.FromOp(a.data.reshape(shape), (a,),
                       lambda grad: (grad.reshape(a.shape),), 'reshape')


def Slice(a, index):
  def _Backward(grad):
    full = np.zeros_like(a.data)
    np.add.at(full, index, grad)
    return (full,)
  return Tensor.FromOp(a.data[index], (a,), _Backward, 'slice')


def Concat(tensors, axis=0):
  tensors = list(tensors)
  edges = np.cumsum([t.shape[axis] for t in tensors])[:-1]
  def _Backward(grad):
    return tuple(np.split(grad, edges, axis=axis))
  return Tensor.FromOp(np.concatenate([t.data for t in tensors], axis=axis),
                       tensors, _Backward, 'concat')


def _TopologicalOrder(root):
  """Nodes reachable from root, every node after all of its parents."""
  order = []
  visited = set()
  stack = [(root, False)]
  while stack:
    node, expanded = stack.pop()
    if expanded:
      order.append(node)
      continue
    if id(node) in visited:
      continue
    visited.add(id(node))
    stack.append((node, True))
    for parent in reversed(node._parents):
      if id(parent) not in visited:
        stack.append((parent, False))
  return order


def Backward(loss):
  """Accumulate d(loss)/d(leaf) into .grad of every leaf requiring grad.

  Raises:
    NonScalarLoss: loss holds more than one element
  """
  if loss.size != 1:
    raise problems_module.NonScalarLoss(shape=loss.shape)
  if not loss.requires_grad:
    return
  grads = {id(loss): np.ones_like(loss.data)}
  for node in reversed(_TopologicalOrder(loss)):
    grad = grads.pop(id(node), None)
    if grad is None:
      continue
    if node._backward is None:
      if node.requires_grad:
        grad = np.asarray(grad, dtype=node.data.dtype).reshape(node.shape)
        node.grad = grad if node.grad is None else node.grad + grad
      continue
    for parent, parent_grad in zip(node._parents, node._backward(grad)):
      if parent_grad is None or not parent.requires_grad:
        continue
      if id(parent) in grads:
        grads[id(parent)] = grads[id(parent)] + parent_grad
      else:
        grads[id(parent)] = parent_grad
