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

"""The model families: CNN classifier, convolutional auto-encoders, MLP
baseline and the latent-attribute classifier.

Every convolutional layer is conv - batch norm - PReLU - optional max pool
with the kernel, stride, padding and width of one row of CONV_LAYERS. The
auto-encoder decoder mirrors the encoder block by block: unpool, transposed
convolution back to the previous width, batch norm and PReLU, with the last
block left linear.
"""

import collections

import numpy as np

from . import functional as F
from . import layers
from . import problems as problems_module
from . import segmenter
from . import tensor

FAMILY_CNN = 'cnn'
FAMILY_CAE = 'cae'
FAMILY_CONTRASTIVE_CAE = 'contrastive_cae'
FAMILY_MLP = 'mlp'
FAMILIES = (FAMILY_CNN, FAMILY_CAE, FAMILY_CONTRASTIVE_CAE, FAMILY_MLP)
CAE_FAMILIES = (FAMILY_CAE, FAMILY_CONTRASTIVE_CAE)

INPUT_SHAPE = (1, segmenter.FEATURE_ROWS, segmenter.FEATURE_COLUMNS)
NUM_CLASSES = 2
MAX_CONV_LAYERS = 6

LayerSpec = collections.namedtuple(
    'LayerSpec', ['kernel', 'stride', 'padding', 'channels', 'pool'])

CONV_LAYERS = (
    LayerSpec((5, 5), (1, 1), (2, 2), 32, (2, 2)),
    LayerSpec((5, 5), (1, 1), (2, 2), 64, (2, 2)),
    LayerSpec((5, 5), (1, 1), (2, 2), 128, (2, 2)),
    LayerSpec((5, 5), (1, 1), (2, 2), 256, (3, 3)),
    LayerSpec((3, 3), (1, 1), (1, 1), 512, None),
    LayerSpec((3, 3), (1, 1), (1, 1), 1024, None),
)

DEFAULT_CNN_FC_WIDTH = 100
DEFAULT_LATENT_DIM = 100
LATENT_DIM_GRID = (50, 100, 300, 500, 1000, None)
DEFAULT_MLP_HIDDEN = (1000, 250, 50, 20)
DEFAULT_CLASSIFIER_HIDDEN = 32


def _InvalidConfig(column_name, value, reason=None):
  return problems_module.InvalidConfig(column_name=column_name, value=value,
                                       reason=reason)


def _ConvLayerSpecs(num_layers, channels):
  if not isinstance(num_layers, int) or not 1 <= num_layers <= MAX_CONV_LAYERS:
    raise _InvalidConfig('num_layers', num_layers,
                         'expected 1..%d' % MAX_CONV_LAYERS)
  specs = list(CONV_LAYERS[:num_layers])
  if channels:
    if len(channels) < num_layers:
      raise _InvalidConfig('channels', channels,
                           'need one width per layer')
    specs = [spec._replace(channels=int(c))
             for spec, c in zip(specs, channels)]
  return specs


def ConvOutputSize(size, kernel, stride, padding):
  return (size + 2 * padding - kernel) // stride + 1


def StackShapes(specs, input_hw=INPUT_SHAPE[1:]):
  """Spatial size entering each layer, plus the size after the last one."""
  shapes = [tuple(input_hw)]
  h, w = input_hw
  for spec in specs:
    h = ConvOutputSize(h, spec.kernel[0], spec.stride[0], spec.padding[0])
    w = ConvOutputSize(w, spec.kernel[1], spec.stride[1], spec.padding[1])
    if spec.pool:
      h = (h - spec.pool[0]) // spec.pool[0] + 1
      w = (w - spec.pool[1]) // spec.pool[1] + 1
    shapes.append((h, w))
  return shapes


class CnnConfig(object):
  """Depth and widths of the CNN classifier."""

  def __init__(self, num_layers=3, channels=None,
               fc_widths=(DEFAULT_CNN_FC_WIDTH, NUM_CLASSES)):
    self.num_layers = num_layers
    self.channels = list(channels) if channels else None
    self.fc_widths = tuple(fc_widths)

  def Layers(self):
    return _ConvLayerSpecs(self.num_layers, self.channels)


class CaeConfig(object):
  """Encoder depth and bottleneck size; latent_dim None removes the bottleneck."""

  def __init__(self, num_layers=4, latent_dim=DEFAULT_LATENT_DIM,
               channels=None):
    if latent_dim is not None and (not isinstance(latent_dim, int) or
                                   latent_dim < 1):
      raise _InvalidConfig('latent_dim', latent_dim)
    self.num_layers = num_layers
    self.latent_dim = latent_dim
    self.channels = list(channels) if channels else None

  def Layers(self):
    specs = _ConvLayerSpecs(self.num_layers, self.channels)
    shapes = StackShapes(specs)
    for spec, before, after in zip(specs, shapes, shapes[1:]):
      if spec.pool and (after[0] * spec.pool[0] != before[0] or
                        after[1] * spec.pool[1] != before[1]):
        raise _InvalidConfig('num_layers', self.num_layers,
                             'pooling %s does not divide %s' %
                             (spec.pool, before))
    return specs


class MlpConfig(object):
  def __init__(self, hidden=DEFAULT_MLP_HIDDEN,
               input_dim=segmenter.SEGMENT_BINS):
    self.hidden = tuple(hidden)
    self.input_dim = input_dim

  def Widths(self):
    return (self.input_dim,) + self.hidden + (NUM_CLASSES,)


def _CheckInput(op, x, expected):
  if tuple(x.shape[1:]) != tuple(expected):
    raise problems_module.ShapeMismatch(op=op, dimension='input',
                                        expected=expected,
                                        found=tuple(x.shape[1:]))


class ConvStack(layers.Module):
  """conv - batch norm - PReLU - pool blocks."""

  def __init__(self, specs, rng, in_channels=INPUT_SHAPE[0]):
    layers.Module.__init__(self)
    self.specs = specs
    channels = in_channels
    self.blocks = []
    for i, spec in enumerate(specs):
      block = self.AddModule('conv%d' % (i + 1), layers.Module())
      block.AddModule('conv', layers.Conv2dLayer(
          channels, spec.channels, spec.kernel, spec.stride, spec.padding,
          rng))
      block.AddModule('bn', layers.BatchNormLayer(spec.channels))
      block.AddModule('prelu', layers.PReluLayer(spec.channels))
      self.blocks.append(block)
      channels = spec.channels
    self.out_channels = channels

  def Forward(self, x):
    for spec, block in zip(self.specs, self.blocks):
      for name in ('conv', 'bn', 'prelu'):
        x = block._modules[name](x)
      if spec.pool:
        x = F.MaxPool2d(x, spec.pool, spec.pool)
    return x


class CnnClassifier(layers.Module):
  """Conv stack, global average pool, fc - PReLU - fc logits."""

  family = FAMILY_CNN

  def __init__(self, config, rng):
    layers.Module.__init__(self)
    self.config = config
    self.stack = self.AddModule('encoder', ConvStack(config.Layers(), rng))
    width = config.fc_widths[0]
    self.fc1 = self.AddModule('fc1', layers.LinearLayer(
        self.stack.out_channels, width, rng))
    self.prelu = self.AddModule('fc1_prelu', layers.PReluLayer(width))
    self.fc2 = self.AddModule('fc2', layers.LinearLayer(
        width, config.fc_widths[1], rng))

  def Forward(self, batch):
    """[N, 1, 24, 168] normalized feature maps -> [N, 2] logits."""
    _CheckInput('cnn_forward', batch, INPUT_SHAPE)
    h = F.GlobalAvgPool(self.stack(batch))
    return self.fc2(self.prelu(self.fc1(h)))


class ConvAutoEncoder(layers.Module):
  """Convolutional auto-encoder; the contrastive variant differs only in
  the loss it is trained with."""

  def __init__(self, config, rng, family=FAMILY_CAE):
    layers.Module.__init__(self)
    self.config = config
    self.family = family
    specs = config.Layers()
    self.shapes = StackShapes(specs)
    self.encoder = self.AddModule('encoder', ConvStack(specs, rng))
    out_h, out_w = self.shapes[-1]
    self.encoded_shape = (self.encoder.out_channels, out_h, out_w)
    self.flat_length = int(np.prod(self.encoded_shape))
    self.latent_dim = config.latent_dim or self.flat_length
    if config.latent_dim:
      self.to_latent = self.AddModule('latent', layers.LinearLayer(
          self.flat_length, config.latent_dim, rng))
      self.from_latent = self.AddModule('unlatent', layers.LinearLayer(
          config.latent_dim, self.flat_length, rng))
    else:
      self.to_latent = self.from_latent = None
    widths = [INPUT_SHAPE[0]] + [spec.channels for spec in specs]
    self.decoder_specs = []
    self.decoder = self.AddModule('decoder', layers.Module())
    for k in reversed(range(len(specs))):
      spec = specs[k]
      block = self.decoder.AddModule('deconv%d' % (k + 1), layers.Module())
      block.AddModule('deconv', layers.ConvTranspose2dLayer(
          widths[k + 1], widths[k], spec.kernel, spec.stride, spec.padding,
          rng))
      if k > 0:
        block.AddModule('bn', layers.BatchNormLayer(widths[k]))
        block.AddModule('prelu', layers.PReluLayer(widths[k]))
      self.decoder_specs.append((spec, block))

  def Encode(self, batch):
    """[N, 1, 24, 168] -> [N, latent_dim] latent attributes."""
    _CheckInput('cae_encode', batch, INPUT_SHAPE)
    h = self.encoder(batch).Flatten()
    if self.to_latent is not None:
      h = self.to_latent(h)
    return h

  def Decode(self, latent):
    """[N, latent_dim] -> [N, 1, 24, 168] reconstruction."""
    _CheckInput('cae_decode', latent, (self.latent_dim,))
    h = latent
    if self.from_latent is not None:
      h = self.from_latent(h)
    x = h.Reshape((latent.shape[0],) + self.encoded_shape)
    for spec, block in self.decoder_specs:
      if spec.pool:
        x = F.UpsampleUnpool(x, spec.pool)
      for name in ('deconv', 'bn', 'prelu'):
        if name in block._modules:
          x = block._modules[name](x)
    return x

  def DecoderShapes(self):
    """Spatial output size of each decoder block, first block first."""
    shapes = []
    h, w = self.shapes[-1]
    for spec, _ in self.decoder_specs:
      if spec.pool:
        h, w = h * spec.pool[0], w * spec.pool[1]
      h = (h - 1) * spec.stride[0] - 2 * spec.padding[0] + spec.kernel[0]
      w = (w - 1) * spec.stride[1] - 2 * spec.padding[1] + spec.kernel[1]
      shapes.append((h, w))
    return shapes

  def Forward(self, batch):
    """Returns (reconstruction, latent)."""
    latent = self.Encode(batch)
    return self.Decode(latent), latent


class MlpClassifier(layers.Module):
  """Fully connected baseline on the raw 4032-value series, ReLU between
  hidden layers."""

  family = FAMILY_MLP

  def __init__(self, config, rng):
    layers.Module.__init__(self)
    self.config = config
    widths = config.Widths()
    self.fcs = [self.AddModule('fc%d' % (i + 1),
                               layers.LinearLayer(a, b, rng))
                for i, (a, b) in enumerate(zip(widths, widths[1:]))]

  def Forward(self, batch):
    """[N, 4032] normalized series -> [N, 2] logits."""
    _CheckInput('mlp_forward', batch, (self.config.input_dim,))
    h = batch
    for fc in self.fcs[:-1]:
      h = tensor.Relu(fc(h))
    return self.fcs[-1](h)


class AttributeClassifier(layers.Module):
  """Two-layer classifier on latent attributes: fc - PReLU - fc."""

  def __init__(self, input_dim, rng, hidden=DEFAULT_CLASSIFIER_HIDDEN):
    layers.Module.__init__(self)
    self.input_dim = input_dim
    self.fc1 = self.AddModule('fc1', layers.LinearLayer(input_dim, hidden,
                                                        rng))
    self.prelu = self.AddModule('prelu', layers.PReluLayer(hidden))
    self.fc2 = self.AddModule('fc2', layers.LinearLayer(hidden, NUM_CLASSES,
                                                        rng))

  def Forward(self, latent):
    _CheckInput('attr_classifier_forward', latent, (self.input_dim,))
    return self.fc2(self.prelu(self.fc1(latent)))


class ModelConfig(object):
  """Architecture description stored in configs and checkpoints."""

  FIELDS = ('family', 'num_layers', 'latent_dim', 'classifier_hidden',
            'margin', 'channels', 'per_sample_rmse')

  def __init__(self, family=FAMILY_CONTRASTIVE_CAE, num_layers=4,
               latent_dim=DEFAULT_LATENT_DIM,
               classifier_hidden=DEFAULT_CLASSIFIER_HIDDEN, margin=5.0,
               channels=None, per_sample_rmse=False):
    self.family = family
    self.num_layers = num_layers
    self.latent_dim = latent_dim
    self.classifier_hidden = classifier_hidden
    self.margin = margin
    self.channels = list(channels) if channels else None
    self.per_sample_rmse = per_sample_rmse

  def Validate(self):
    if self.family not in FAMILIES:
      raise _InvalidConfig('family', self.family,
                           'expected one of %s' % ', '.join(FAMILIES))
    if not self.margin > 0:
      raise _InvalidConfig('margin', self.margin, 'margin must be positive')
    if not isinstance(self.classifier_hidden, int) or \
        self.classifier_hidden < 1:
      raise _InvalidConfig('classifier_hidden', self.classifier_hidden)
    if self.family == FAMILY_CNN:
      CnnConfig(self.num_layers, self.channels).Layers()
    elif self.family in CAE_FAMILIES:
      CaeConfig(self.num_layers, self.latent_dim, self.channels).Layers()
    return self

  def ToDict(self):
    d = collections.OrderedDict()
    for name in self.FIELDS:
      d[name] = getattr(self, name)
    return d

  @classmethod
  def FromDict(cls, d):
    unknown = set(d) - set(cls.FIELDS)
    if unknown:
      raise _InvalidConfig('model', sorted(unknown), 'unknown fields')
    return cls(**d)

  def __eq__(self, other):
    return isinstance(other, ModelConfig) and self.ToDict() == other.ToDict()

  def __ne__(self, other):
    return not self.__eq__(other)


def BuildModel(model_config, seed):
  """Instantiate the model described by model_config with seeded weights."""
  model_config.Validate()
  rng = np.random.default_rng(seed)
  family = model_config.family
  if family == FAMILY_CNN:
    model = CnnClassifier(CnnConfig(model_config.num_layers,
                                    model_config.channels), rng)
  elif family == FAMILY_MLP:
    model = MlpClassifier(MlpConfig(), rng)
  else:
    model = ConvAutoEncoder(CaeConfig(model_config.num_layers,
                                      model_config.latent_dim,
                                      model_config.channels), rng, family)
  model.model_config = model_config
  return model


def ModelInput(model, segments):
  """Network input for segments: feature maps, or raw series for the MLP."""
  if getattr(model, 'family', None) == FAMILY_MLP:
    return segmenter.SeriesBatch(segments)
  return segmenter.FeatureMapBatch(segments)
