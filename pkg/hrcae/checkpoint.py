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

"""Model checkpoints in the FBCAE1 format.

Layout: the magic bytes "FBCAE1", an unsigned 64-bit little-endian header
length, a UTF-8 JSON header and then the little-endian float32 blobs the
header's manifest points at. Offsets are relative to the first blob byte.
"""

import collections
import hashlib
import json
import struct

import numpy as np

from . import nets
from . import problems as problems_module

MAGIC = b'FBCAE1'
FORMAT_VERSION = 1
_BLOB_DTYPE = np.dtype('<f4')
_LENGTH = struct.Struct('<Q')


def _BadCheckpoint(file_name, description):
  return problems_module.BadCheckpoint(file_name=file_name,
                                       description=description)


class Checkpoint(object):
  """Architecture, seed, named arrays and optional optimizer state.

  Attributes:
    model_config: nets.ModelConfig
    seed: the seed the model was built and trained with
    arrays: OrderedDict name -> numpy array (parameters and running stats)
    optimizer_step: Adam step count, or None when no optimizer state is kept
    optimizer_arrays: OrderedDict of Adam moment arrays
    loss_trace: per-epoch training loss
    extra: JSON-compatible dict (threshold, held-out pair, fold number)
  """

  def __init__(self, model_config, seed, arrays, optimizer_step=None,
               optimizer_arrays=None, loss_trace=None, extra=None):
    self.model_config = model_config
    self.seed = seed
    self.arrays = collections.OrderedDict(arrays)
    self.optimizer_step = optimizer_step
    self.optimizer_arrays = collections.OrderedDict(optimizer_arrays or ())
    self.loss_trace = [float(v) for v in (loss_trace or ())]
    self.extra = dict(extra or {})

  @classmethod
  def FromModel(cls, model, model_config, seed, optimizer=None,
                loss_trace=None, extra=None):
    arrays = [(name, np.array(value, copy=True))
              for name, value in model.StateArrays()]
    step = None
    optimizer_arrays = None
    if optimizer is not None:
      step = optimizer.state.step
      optimizer_arrays = [(name, np.array(value, copy=True))
                          for name, value in optimizer.StateArrays()]
    return cls(model_config, seed, arrays, step, optimizer_arrays,
               loss_trace, extra)

  def Restore(self, model, file_name='<memory>'):
    """Load parameters and statistics into an already built model."""
    try:
      model.LoadStateArrays(self.arrays)
    except KeyError as e:
      raise _BadCheckpoint(file_name, 'missing array %s' % e)
    except ValueError as e:
      raise _BadCheckpoint(file_name, str(e))
    return model

  def BuildModel(self):
    return self.Restore(nets.BuildModel(self.model_config, self.seed))

  def Checksum(self):
    """SHA-256 over the float32 rendering of every model array."""
    digest = hashlib.sha256()
    for name, value in self.arrays.items():
      digest.update(name.encode('utf-8'))
      digest.update(np.ascontiguousarray(value, dtype=_BLOB_DTYPE).tobytes())
    return digest.hexdigest()

  def ToBytes(self):
    blobs = []
    offset = [0]

    def _Manifest(arrays):
      manifest = []
      for name, value in arrays.items():
        blob = np.ascontiguousarray(value, dtype=_BLOB_DTYPE).tobytes()
        manifest.append({'name': name, 'shape': list(np.shape(value)),
                         'offset': offset[0], 'length': len(blob)})
        blobs.append(blob)
        offset[0] += len(blob)
      return manifest

    header = collections.OrderedDict()
    header['format'] = FORMAT_VERSION
    header['config'] = self.model_config.ToDict()
    header['seed'] = self.seed
    header['parameters'] = _Manifest(self.arrays)
    if self.optimizer_step is not None:
      header['adam'] = {'step': self.optimizer_step,
                        'parameters': _Manifest(self.optimizer_arrays)}
    header['loss_trace'] = self.loss_trace
    header['extra'] = self.extra
    encoded = json.dumps(header, sort_keys=True).encode('utf-8')
    return MAGIC + _LENGTH.pack(len(encoded)) + encoded + b''.join(blobs)

  @classmethod
  def FromBytes(cls, data, file_name='<memory>'):
    if not data.startswith(MAGIC):
      raise _BadCheckpoint(file_name, 'bad magic bytes')
    start = len(MAGIC) + _LENGTH.size
    if len(data) < start:
      raise _BadCheckpoint(file_name, 'truncated header')
    (header_length,) = _LENGTH.unpack_from(data, len(MAGIC))
    try:
      header = json.loads(data[start:start + header_length].decode('utf-8'))
    except ValueError as e:
      raise _BadCheckpoint(file_name, 'unreadable header: %s' % e)
    if header.get('format') != FORMAT_VERSION:
      raise _BadCheckpoint(file_name,
                           'unsupported format %r' % header.get('format'))
    blob_start = start + header_length

    def _Arrays(manifest):
      arrays = []
      for entry in manifest:
        begin = blob_start + entry['offset']
        end = begin + entry['length']
        if end > len(data):
          raise _BadCheckpoint(file_name, 'truncated blob %s' % entry['name'])
        value = np.frombuffer(data[begin:end], dtype=_BLOB_DTYPE)
        arrays.append((entry['name'],
                       value.reshape(entry['shape']).astype(np.float32)))
      return arrays

    try:
      model_config = nets.ModelConfig.FromDict(header['config'])
      arrays = _Arrays(header['parameters'])
    except (KeyError, TypeError) as e:
      raise _BadCheckpoint(file_name, 'incomplete header: %s' % e)
    adam = header.get('adam')
    step = optimizer_arrays = None
    if adam:
      step = adam['step']
      optimizer_arrays = _Arrays(adam['parameters'])
    return cls(model_config, header.get('seed'), arrays, step,
               optimizer_arrays, header.get('loss_trace'),
               header.get('extra'))


def Save(checkpoint, path):
  with open(path, 'wb') as f:
    f.write(checkpoint.ToBytes())


def Load(path):
  try:
    with open(path, 'rb') as f:
      data = f.read()
  except IOError as e:
    raise _BadCheckpoint(path, e.strerror or str(e))
  return Checkpoint.FromBytes(data, file_name=path)
