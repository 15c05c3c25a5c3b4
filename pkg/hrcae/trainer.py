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

"""Adam training loop with step-decay schedule, pre-training and
fine-tuning."""

import collections
import math

import numpy as np

from . import checkpoint as checkpoint_module
from . import losses
from . import nets
from . import optim
from . import problems as problems_module
from . import segmenter
from . import tensor
from . import util
from .problems import log

SYMPTOMATIC_LABEL = 1
ASYMPTOMATIC_LABEL = 0


class TrainSchedule(object):
  """Learning rate schedule, batch size and stopping policy.

  lr(epoch) = max(lr_floor, lr_init * decay_factor ** (epoch // decay_every))
  """

  FIELDS = ('lr_init', 'decay_factor', 'decay_every', 'lr_floor',
            'batch_size', 'max_epochs', 'validation_fraction', 'patience')

  def __init__(self, lr_init=0.03, decay_factor=0.33, decay_every=50,
               lr_floor=1e-4, batch_size=32, max_epochs=300,
               validation_fraction=0.0, patience=None):
    self.lr_init = lr_init
    self.decay_factor = decay_factor
    self.decay_every = decay_every
    self.lr_floor = lr_floor
    self.batch_size = batch_size
    self.max_epochs = max_epochs
    self.validation_fraction = validation_fraction
    self.patience = patience

  def LearningRate(self, epoch):
    return max(self.lr_floor,
               self.lr_init * self.decay_factor ** (epoch // self.decay_every))

  def Validate(self):
    def _Check(name, ok):
      if not ok:
        raise problems_module.InvalidConfig(column_name=name,
                                            value=getattr(self, name))
    _Check('lr_init', self.lr_init > 0)
    _Check('decay_factor', 0 < self.decay_factor <= 1)
    _Check('decay_every', isinstance(self.decay_every, int) and
           self.decay_every > 0)
    _Check('lr_floor', self.lr_floor >= 0)
    _Check('batch_size', isinstance(self.batch_size, int) and
           self.batch_size >= 2)
    _Check('max_epochs', isinstance(self.max_epochs, int) and
           self.max_epochs >= 0)
    _Check('validation_fraction', 0 <= self.validation_fraction < 1)
    _Check('patience', self.patience is None or
           (isinstance(self.patience, int) and self.patience > 0))
    return self

  def ToDict(self):
    return collections.OrderedDict((name, getattr(self, name))
                                   for name in self.FIELDS)

  @classmethod
  def FromDict(cls, d):
    unknown = set(d) - set(cls.FIELDS)
    if unknown:
      raise problems_module.InvalidConfig(column_name='schedule',
                                          value=sorted(unknown))
    return cls(**d)


class TrainResult(object):
  """What a training run leaves behind besides the mutated model."""

  def __init__(self, optimizer):
    self.optimizer = optimizer
    self.loss_trace = []
    self.validation_trace = []
    self.learning_rates = []
    self.best_epoch = None


def LossKindForFamily(family):
  if family in (nets.FAMILY_CNN, nets.FAMILY_MLP):
    return losses.LOSS_CROSS_ENTROPY
  if family == nets.FAMILY_CAE:
    return losses.LOSS_RMSE
  return losses.LOSS_CONTRASTIVE


def SegmentLabels(segments):
  return np.array([SYMPTOMATIC_LABEL if s.IsSymptomatic()
                   else ASYMPTOMATIC_LABEL for s in segments], dtype=np.int64)


def _SplitValidation(rng, labels, fraction):
  """Per class, the tail of a seeded permutation becomes validation."""
  train, validation = [], []
  for label in (SYMPTOMATIC_LABEL, ASYMPTOMATIC_LABEL):
    members = np.flatnonzero(labels == label)
    members = members[rng.permutation(len(members))]
    cut = len(members) - int(round(fraction * len(members)))
    train.append(members[:cut])
    validation.append(members[cut:])
  return np.sort(np.concatenate(train)), np.sort(np.concatenate(validation))


def EpochBatches(rng, labels, batch_size, loss_kind):
  """Index arrays of one epoch.

  Contrastive batches hold batch_size // 2 symptomatic followed by the same
  number of asymptomatic items; the shorter class cycles.
  """
  if loss_kind != losses.LOSS_CONTRASTIVE:
    order = rng.permutation(len(labels))
    return [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
  sym = np.flatnonzero(labels == SYMPTOMATIC_LABEL)
  asym = np.flatnonzero(labels == ASYMPTOMATIC_LABEL)
  if not len(sym) or not len(asym):
    raise problems_module.MissingClass()
  sym = sym[rng.permutation(len(sym))]
  asym = asym[rng.permutation(len(asym))]
  half = batch_size // 2
  steps = int(math.ceil(max(len(sym), len(asym)) / float(half)))
  batches = []
  for step in range(steps):
    positions = np.arange(step * half, (step + 1) * half)
    longest = max(len(sym), len(asym))
    positions = positions[positions < longest]
    batches.append(np.concatenate([sym[positions % len(sym)],
                                   asym[positions % len(asym)]]))
  return batches


def BatchLoss(model, inputs, labels, loss_kind, margin=losses.DEFAULT_MARGIN,
              per_sample=False):
  """Loss of model on one batch of inputs."""
  x = tensor.Tensor(inputs)
  if loss_kind == losses.LOSS_CROSS_ENTROPY:
    return losses.CrossEntropyLoss(model(x), labels)
  recon, _ = model(x)
  if loss_kind == losses.LOSS_RMSE:
    return losses.RmseLoss(x, recon)
  sym = np.flatnonzero(labels == SYMPTOMATIC_LABEL)
  asym = np.flatnonzero(labels == ASYMPTOMATIC_LABEL)
  if not len(sym) or not len(asym):
    raise problems_module.MissingClass()
  return losses.ContrastiveLoss(tensor.Tensor(inputs[asym]), recon[asym],
                                tensor.Tensor(inputs[sym]), recon[sym],
                                margin, per_sample)


def EvaluateLoss(model, inputs, labels, loss_kind, batch_size,
                 margin=losses.DEFAULT_MARGIN, per_sample=False):
  """Eval-mode loss over inputs in fixed batches, without recording a graph.

  Batches are drawn with a fixed seed so repeated calls agree.
  """
  was_training = model.training
  model.Eval()
  values = []
  with tensor.NoGrad():
    rng = np.random.default_rng(0)
    for idx in EpochBatches(rng, labels, batch_size, loss_kind):
      values.append(BatchLoss(model, inputs[idx], labels[idx], loss_kind,
                              margin, per_sample).Item())
  model.SetTraining(was_training)
  return float(np.mean(values))


def TrainOnArrays(model, inputs, labels, schedule, loss_kind, seed,
                  margin=losses.DEFAULT_MARGIN, per_sample=False):
  """Optimize model in place on prepared inputs with Adam.

  Args:
    model: a layers.Module
    inputs: numpy array, first axis indexes items
    labels: int array, 1 for symptomatic and 0 for asymptomatic
    schedule: TrainSchedule
    loss_kind: one of losses.LOSS_KINDS
    seed: fixes shuffling and the validation split

  Returns:
    TrainResult

  Raises:
    NumericalDivergence: a step produced a non-finite loss
    MissingClass: contrastive training without both classes
  """
  if loss_kind not in losses.LOSS_KINDS:
    raise problems_module.InvalidConfig(column_name='loss_kind',
                                        value=loss_kind)
  schedule.Validate()
  rng = np.random.default_rng(seed)
  labels = np.asarray(labels, dtype=np.int64)
  validation = None
  if schedule.validation_fraction > 0:
    train_idx, val_idx = _SplitValidation(rng, labels,
                                          schedule.validation_fraction)
    val_labels = labels[val_idx]
    if loss_kind == losses.LOSS_CONTRASTIVE and \
        len(np.unique(val_labels)) < 2:
      log.warning('validation slice lacks a class; early stopping disabled')
      train_idx = np.arange(len(labels))
    elif len(val_idx):
      validation = (inputs[val_idx], val_labels)
    inputs, labels = inputs[train_idx], labels[train_idx]

  optimizer = optim.Adam(model.NamedParameters())
  result = TrainResult(optimizer)
  best_loss = None
  best_state = None
  stale = 0
  model.Train()
  for epoch in range(schedule.max_epochs):
    lr = schedule.LearningRate(epoch)
    step_losses = []
    for idx in EpochBatches(rng, labels, schedule.batch_size, loss_kind):
      optimizer.ZeroGrad()
      loss = BatchLoss(model, inputs[idx], labels[idx], loss_kind, margin,
                       per_sample)
      value = loss.Item()
      if not np.isfinite(value):
        raise problems_module.NumericalDivergence(loss=value, epoch=epoch)
      loss.Backward()
      optimizer.Step(lr)
      step_losses.append(value)
    epoch_loss = float(np.mean(step_losses)) if step_losses else float('nan')
    result.loss_trace.append(epoch_loss)
    result.learning_rates.append(lr)
    if validation is None:
      log.info('epoch %d lr %.6g loss %.6f', epoch, lr, epoch_loss)
      continue
    val_loss = EvaluateLoss(model, validation[0], validation[1], loss_kind,
                            schedule.batch_size, margin, per_sample)
    result.validation_trace.append(val_loss)
    log.info('epoch %d lr %.6g loss %.6f validation %.6f', epoch, lr,
             epoch_loss, val_loss)
    if best_loss is None or val_loss < best_loss:
      best_loss = val_loss
      best_state = dict((name, np.array(value, copy=True))
                        for name, value in model.StateArrays())
      result.best_epoch = epoch
      stale = 0
    else:
      stale += 1
      if schedule.patience and stale >= schedule.patience:
        log.info('early stop after epoch %d, best epoch %d', epoch,
                 result.best_epoch)
        break
  if best_state is not None:
    model.LoadStateArrays(best_state)
  model.Eval()
  return result


def _TrainingInputs(model, data, loss_kind):
  if loss_kind != losses.LOSS_RMSE and not data.IsBalanced():
    data = segmenter.BalanceByReplication(data)
  segments = data.symptomatic + data.asymptomatic
  return nets.ModelInput(model, segments), SegmentLabels(segments)


def Train(model, data, schedule, loss_kind, seed,
          margin=losses.DEFAULT_MARGIN, per_sample=False, extra=None):
  """Train model on a SegmentSet and return its checkpoint.

  The checkpoint carries the per-epoch loss trace and the Adam state.
  """
  if data.IsEmpty():
    raise problems_module.EmptySegment()
  inputs, labels = _TrainingInputs(model, data, loss_kind)
  log.info('training %s on %d segments (%s loss)',
           getattr(model, 'family', type(model).__name__), len(labels),
           loss_kind)
  result = TrainOnArrays(model, inputs, labels, schedule, loss_kind, seed,
                         margin, per_sample)
  extra = dict(extra or {})
  extra['learning_rates'] = result.learning_rates
  if result.validation_trace:
    extra['validation_trace'] = result.validation_trace
    extra['best_epoch'] = result.best_epoch
  return checkpoint_module.Checkpoint.FromModel(
      model, model.model_config, seed, result.optimizer, result.loss_trace,
      extra)


def Finetune(pretrained, data, schedule, loss_kind, seed,
             margin=losses.DEFAULT_MARGIN, per_sample=False, extra=None):
  """Continue from a checkpoint with a fresh optimizer and schedule.

  An empty data set returns the pretrained checkpoint unchanged.
  """
  if data.IsEmpty():
    return pretrained
  model = pretrained.BuildModel()
  extra = dict(extra or {})
  extra['pretrain_loss_trace'] = pretrained.loss_trace
  return Train(model, data, schedule, loss_kind, seed, margin, per_sample,
               extra)


def PretrainThenFinetune(model, pretrain, finetune, schedule, loss_kind, seed,
                         finetune_schedule=None,
                         margin=losses.DEFAULT_MARGIN, per_sample=False):
  """Train on pretrain, then on finetune with fresh optimizer state."""
  pretrained = Train(model, pretrain, schedule, loss_kind,
                     util.DeriveSeed(seed, 0), margin, per_sample)
  return Finetune(pretrained, finetune, finetune_schedule or schedule,
                  loss_kind, util.DeriveSeed(seed, 1), margin, per_sample)


def WriteTrainingLog(path, checkpoint):
  """epoch, lr, loss and validation loss per epoch as CSV."""
  rates = checkpoint.extra.get('learning_rates', [])
  validation = checkpoint.extra.get('validation_trace', [])
  with open(path, 'w') as f:
    writer = util.CsvUnicodeWriter(f)
    writer.writerow(['epoch', 'lr', 'loss', 'val_loss'])
    for epoch, loss in enumerate(checkpoint.loss_trace):
      writer.writerow([epoch, rates[epoch] if epoch < len(rates) else None,
                       loss,
                       validation[epoch] if epoch < len(validation) else None])
