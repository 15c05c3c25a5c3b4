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

"""Leave-one-subject-out folds, the metric suite, the reconstruction error
threshold model and per-fold evaluation."""

import collections

import numpy as np

from . import losses
from . import manifest as manifest_module
from . import nets
from . import problems as problems_module
from . import segmenter
from . import tensor
from . import trainer
from .problems import log

MODE_RECON_ERROR = 'recon_error'
MODE_LATENT_MLP = 'latent_mlp'
MODE_CNN_LOGITS = 'cnn_logits'
MODES = (MODE_RECON_ERROR, MODE_LATENT_MLP, MODE_CNN_LOGITS)

_MODE_FAMILIES = {
    MODE_RECON_ERROR: nets.CAE_FAMILIES,
    MODE_LATENT_MLP: nets.CAE_FAMILIES,
    MODE_CNN_LOGITS: (nets.FAMILY_CNN, nets.FAMILY_MLP),
}

NEWTON_TOLERANCE = 1e-8
NEWTON_MAX_ITERATIONS = 100
DEGENERATE_WEIGHT = 1e-6
SCORE_BATCH_SIZE = 32

METRIC_NAMES = ('uar', 'precision', 'f1', 'sensitivity', 'specificity')


def DefaultModeForFamily(family):
  if family in nets.CAE_FAMILIES:
    return MODE_RECON_ERROR
  return MODE_CNN_LOGITS


class Fold(object):
  """One LOSO round: a held-out positive and its matched control."""

  def __init__(self, index, held_out_pair, train_positives, train_controls,
               pretrain_ids):
    self.index = index
    self.held_out_pair = tuple(held_out_pair)
    self.train_positives = list(train_positives)
    self.train_controls = list(train_controls)
    self.pretrain_ids = list(pretrain_ids)

  def HeldOut(self):
    return set(self.held_out_pair)

  def TrainingIds(self):
    return self.train_positives + self.train_controls

  def ToDict(self):
    return {'fold': self.index, 'held_out_pair': list(self.held_out_pair)}

  def __repr__(self):
    return 'Fold(%d, %s)' % (self.index, self.held_out_pair)


def _PairControls(manifest):
  """Map positive id to control id; explicit matched_with wins, then the
  first unused control with the same (site, gender, age band)."""
  positives = manifest.GetGroup(manifest_module.GROUP_POSITIVE)
  controls = manifest.GetGroup(manifest_module.GROUP_CONTROL)
  control_ids = set(c.participant_id for c in controls)
  pairs = {}
  used = set()
  for positive in positives:
    partner = positive.matched_with
    if partner is None:
      partner = next((c.participant_id for c in controls
                      if c.matched_with == positive.participant_id), None)
    if partner in control_ids and partner not in used:
      pairs[positive.participant_id] = partner
      used.add(partner)
  for positive in positives:
    if positive.participant_id in pairs:
      continue
    for control in controls:
      if control.participant_id in used or control.matched_with:
        continue
      if control.MatchingKey() == positive.MatchingKey():
        pairs[positive.participant_id] = control.participant_id
        used.add(control.participant_id)
        break
    else:
      raise problems_module.MissingMatchedControl(
          participant_id=positive.participant_id)
  return pairs


def BuildFolds(manifest):
  """One fold per positive participant, ordered by participant id.

  Raises:
    MissingMatchedControl: a positive participant has no matched control
  """
  pairs = _PairControls(manifest)
  positives = [e.participant_id for e in
               manifest.GetGroup(manifest_module.GROUP_POSITIVE)]
  controls = [e.participant_id for e in
              manifest.GetGroup(manifest_module.GROUP_CONTROL)]
  pretrain = [e.participant_id for e in
              manifest.GetGroup(manifest_module.GROUP_PRETRAIN)]
  folds = []
  for index, positive in enumerate(positives):
    control = pairs[positive]
    folds.append(Fold(index, (positive, control),
                      [p for p in positives if p != positive],
                      [c for c in controls if c != control],
                      pretrain))
  return folds


def CheckLeakage(fold, *segment_sets):
  """Raise LeakageDetected if any training segment belongs to the held-out
  pair."""
  owners = set()
  for segment_set in segment_sets:
    owners |= segment_set.Owners()
  leaked = owners & fold.HeldOut()
  if leaked:
    raise problems_module.LeakageDetected(fold=fold.index, ids=sorted(leaked))


def _Ratio(numerator, denominator):
  if not denominator:
    return None
  return float(numerator) / denominator


class MetricReport(object):
  """Confusion counts with symptomatic as the positive class.

  Metrics whose denominator is zero are None. A macro report carries the
  fold-averaged metrics in averaged and summed counts.
  """

  def __init__(self, tp=0, fp=0, tn=0, fn=0, averaged=None):
    self.tp = int(tp)
    self.fp = int(fp)
    self.tn = int(tn)
    self.fn = int(fn)
    self.averaged = averaged

  @classmethod
  def FromDecisions(cls, labels, decisions):
    labels = np.asarray(labels, dtype=bool)
    decisions = np.asarray(decisions, dtype=bool)
    return cls(tp=np.count_nonzero(labels & decisions),
               fp=np.count_nonzero(~labels & decisions),
               tn=np.count_nonzero(~labels & ~decisions),
               fn=np.count_nonzero(labels & ~decisions))

  @property
  def confusion(self):
    return (self.tp, self.fp, self.tn, self.fn)

  def _Metric(self, name, value):
    if self.averaged is not None:
      return self.averaged.get(name)
    return value

  @property
  def sensitivity(self):
    return self._Metric('sensitivity', _Ratio(self.tp, self.tp + self.fn))

  @property
  def specificity(self):
    return self._Metric('specificity', _Ratio(self.tn, self.tn + self.fp))

  @property
  def precision(self):
    return self._Metric('precision', _Ratio(self.tp, self.tp + self.fp))

  @property
  def uar(self):
    if self.averaged is not None:
      return self.averaged.get('uar')
    sensitivity, specificity = self.sensitivity, self.specificity
    if sensitivity is None or specificity is None:
      return None
    return (sensitivity + specificity) / 2.0

  @property
  def f1(self):
    if self.averaged is not None:
      return self.averaged.get('f1')
    precision, sensitivity = self.precision, self.sensitivity
    if precision is None or sensitivity is None or \
        precision + sensitivity == 0:
      return None
    return 2.0 * precision * sensitivity / (precision + sensitivity)

  def ToDict(self):
    d = collections.OrderedDict()
    for name in ('tp', 'fp', 'tn', 'fn') + METRIC_NAMES:
      d[name] = getattr(self, name)
    return d

  def __eq__(self, other):
    return isinstance(other, MetricReport) and self.ToDict() == other.ToDict()

  def __ne__(self, other):
    return not self.__eq__(other)

  def __repr__(self):
    return 'MetricReport(tp=%d, fp=%d, tn=%d, fn=%d)' % self.confusion


def Aggregate(reports, macro=False):
  """Pool confusion counts (micro), or average per-fold metrics (macro)."""
  reports = list(reports)
  counts = [sum(r.confusion[i] for r in reports) for i in range(4)]
  if not macro:
    return MetricReport(*counts)
  averaged = {}
  for name in METRIC_NAMES:
    values = [getattr(r, name) for r in reports]
    values = [v for v in values if v is not None]
    averaged[name] = float(np.mean(values)) if values else None
  return MetricReport(*counts, averaged=averaged)


def _Sigmoid(s):
  return 0.5 * (1.0 + np.tanh(0.5 * s))


def _NegLogLikelihood(theta, z, y):
  s = theta[0] * z + theta[1]
  return float(np.mean(np.logaddexp(0.0, s) - y * s))


class ThresholdModel(object):
  """Logistic regression on one feature; symptomatic when
  weight * error + bias > 0.

  fallback is None for a regular maximum-likelihood fit, 'separated' when
  the classes were perfectly separable and 'degenerate' when the fitted
  slope vanished.
  """

  def __init__(self, weight, bias, fallback=None, iterations=0):
    self.weight = float(weight)
    self.bias = float(bias)
    self.fallback = fallback
    self.iterations = iterations

  def Threshold(self):
    return -self.bias / self.weight

  def Decide(self, errors):
    return self.weight * np.asarray(errors, dtype=np.float64) + self.bias > 0

  def Probability(self, errors):
    return _Sigmoid(self.weight * np.asarray(errors, dtype=np.float64) +
                    self.bias)

  def ToDict(self):
    return {'weight': self.weight, 'bias': self.bias,
            'threshold': self.Threshold(), 'fallback': self.fallback,
            'iterations': self.iterations}

  @classmethod
  def FromDict(cls, d):
    return cls(d['weight'], d['bias'], d.get('fallback'),
               d.get('iterations', 0))

  def __repr__(self):
    return 'ThresholdModel(threshold=%.6g, fallback=%s)' % (
        self.Threshold(), self.fallback)


def _LabelIsSymptomatic(label):
  if isinstance(label, str):
    return label == segmenter.SYMPTOMATIC
  return int(label) == trainer.SYMPTOMATIC_LABEL


def _Midpoint(threshold, sign):
  return ThresholdModel(sign, -sign * threshold)


def FitThreshold(errors):
  """Fit a ThresholdModel to (recon_error, label) pairs.

  The fit runs damped Newton iterations on the standardized error until the
  gradient norm falls below NEWTON_TOLERANCE. Perfectly separable classes
  get the midpoint between the class extremes instead.

  Raises:
    OneClassInput: only one label is present
  """
  e = np.array([float(error) for error, _ in errors], dtype=np.float64)
  y = np.array([1.0 if _LabelIsSymptomatic(label) else 0.0
                for _, label in errors])
  if not len(e) or y.min() == y.max():
    raise problems_module.OneClassInput(
        label='none' if not len(e) else
        (segmenter.SYMPTOMATIC if y[0] else segmenter.ASYMPTOMATIC))
  sym, asym = e[y == 1], e[y == 0]
  if asym.max() < sym.min():
    model = _Midpoint((asym.max() + sym.min()) / 2.0, 1.0)
    model.fallback = 'separated'
    return model
  if sym.max() < asym.min():
    model = _Midpoint((sym.max() + asym.min()) / 2.0, -1.0)
    model.fallback = 'separated'
    return model

  mean = e.mean()
  scale = e.std() or 1.0
  z = (e - mean) / scale
  design = np.stack([z, np.ones_like(z)], axis=1)
  theta = np.zeros(2)
  iterations = 0
  for iterations in range(1, NEWTON_MAX_ITERATIONS + 1):
    p = _Sigmoid(design.dot(theta))
    gradient = design.T.dot(p - y) / len(y)
    if np.linalg.norm(gradient) < NEWTON_TOLERANCE:
      break
    hessian = (design * (p * (1 - p))[:, None]).T.dot(design) / len(y)
    try:
      step = np.linalg.solve(hessian, gradient)
    except np.linalg.LinAlgError:
      step = np.linalg.lstsq(hessian, gradient, rcond=None)[0]
    current = _NegLogLikelihood(theta, z, y)
    damping = 1.0
    while damping > 1e-10:
      candidate = theta - damping * step
      if _NegLogLikelihood(candidate, z, y) <= current:
        break
      damping *= 0.5
    theta = candidate
  w, b = theta
  if abs(w) < DEGENERATE_WEIGHT:
    sign = 1.0 if sym.mean() >= asym.mean() else -1.0
    model = _Midpoint((sym.mean() + asym.mean()) / 2.0, sign)
    model.fallback = 'degenerate'
    model.iterations = iterations
    return model
  return ThresholdModel(w / scale, b - w * mean / scale,
                        iterations=iterations)


def _Batches(inputs, batch_size=SCORE_BATCH_SIZE):
  for start in range(0, len(inputs), batch_size):
    yield inputs[start:start + batch_size]


def ReconstructionErrors(model, segments):
  """Per-segment RMSE between the feature map and its reconstruction."""
  if not segments:
    return np.zeros(0)
  model.Eval()
  inputs = segmenter.FeatureMapBatch(segments)
  errors = []
  with tensor.NoGrad():
    for batch in _Batches(inputs):
      recon, _ = model(tensor.Tensor(batch))
      errors.append(losses.PerSampleRmse(batch, recon.Numpy()))
  return np.concatenate(errors)


def Latents(model, segments):
  model.Eval()
  inputs = segmenter.FeatureMapBatch(segments)
  with tensor.NoGrad():
    return np.concatenate([model.Encode(tensor.Tensor(batch)).Numpy()
                           for batch in _Batches(inputs)])


def LogitMargins(model, inputs):
  """logit(symptomatic) - logit(asymptomatic) for classifier inputs."""
  model.Eval()
  with tensor.NoGrad():
    logits = np.concatenate([model(tensor.Tensor(batch)).Numpy()
                             for batch in _Batches(inputs)])
  return (logits[:, trainer.SYMPTOMATIC_LABEL] -
          logits[:, trainer.ASYMPTOMATIC_LABEL]).astype(np.float64)


SegmentScore = collections.namedtuple(
    'SegmentScore', ['participant_id', 'start_day', 'label', 'shift_days',
                     'score', 'decision'])


class FoldEvaluation(object):
  def __init__(self, report, scores, threshold=None):
    self.report = report
    self.scores = scores
    self.threshold = threshold


class FoldScorer(object):
  """Decision rule of one fold, fit on the fold's training segments only.

  recon_error fits a ThresholdModel on training reconstruction errors,
  latent_mlp trains an AttributeClassifier on training latents and
  cnn_logits uses the classifier's own logits.
  """

  def __init__(self, fold, checkpoint, mode, train_set,
               classifier_schedule=None, classifier_hidden=None, seed=0):
    if mode not in MODES:
      raise problems_module.InvalidConfig(column_name='mode', value=mode)
    family = checkpoint.model_config.family
    if family not in _MODE_FAMILIES[mode]:
      raise problems_module.ModeMismatch(mode=mode, family=family)
    CheckLeakage(fold, train_set)
    self.fold = fold
    self.mode = mode
    self.model = checkpoint.BuildModel().Eval()
    self.threshold = None
    self.classifier = None
    if mode == MODE_RECON_ERROR:
      segments = train_set.symptomatic + train_set.asymptomatic
      errors = ReconstructionErrors(self.model, segments)
      self.threshold = FitThreshold(
          list(zip(errors, [s.label for s in segments])))
      log.info('fold %d threshold %r', fold.index, self.threshold)
    elif mode == MODE_LATENT_MLP:
      self._FitClassifier(train_set, classifier_schedule, classifier_hidden,
                          seed)

  def _FitClassifier(self, train_set, schedule, hidden, seed):
    balanced = segmenter.BalanceByReplication(train_set)
    segments = balanced.symptomatic + balanced.asymptomatic
    latents = Latents(self.model, segments).astype(np.float32)
    labels = trainer.SegmentLabels(segments)
    rng = np.random.default_rng(seed)
    self.classifier = nets.AttributeClassifier(
        latents.shape[1], rng, hidden or nets.DEFAULT_CLASSIFIER_HIDDEN)
    trainer.TrainOnArrays(self.classifier, latents, labels,
                          schedule or trainer.TrainSchedule(max_epochs=50),
                          losses.LOSS_CROSS_ENTROPY, seed)

  def Scores(self, segments):
    """(scores, decisions) of segments under this fold's rule."""
    if not segments:
      return np.zeros(0), np.zeros(0, dtype=bool)
    if self.mode == MODE_RECON_ERROR:
      scores = ReconstructionErrors(self.model, segments)
      return scores, self.threshold.Decide(scores)
    if self.mode == MODE_LATENT_MLP:
      latents = Latents(self.model, segments).astype(np.float32)
      scores = LogitMargins(self.classifier, latents)
    else:
      scores = LogitMargins(self.model, nets.ModelInput(self.model, segments))
    return scores, scores > 0

  def Evaluate(self, segments):
    """MetricReport and per-segment scores of held-out segments."""
    foreign = set(s.participant_id for s in segments) - self.fold.HeldOut()
    if foreign:
      raise problems_module.LeakageDetected(fold=self.fold.index,
                                            ids=sorted(foreign))
    scores, decisions = self.Scores(segments)
    labels = [s.IsSymptomatic() for s in segments]
    per_segment = [SegmentScore(s.participant_id, s.start_day, s.label,
                                s.shift_days, float(score), bool(decision))
                   for s, score, decision in zip(segments, scores, decisions)]
    return FoldEvaluation(MetricReport.FromDecisions(labels, decisions),
                          per_segment, self.threshold)


def EvaluateFold(fold, checkpoint, mode, train_set, test_segments,
                 classifier_schedule=None, classifier_hidden=None, seed=0):
  """Fit the fold's decision rule on train_set and score test_segments."""
  scorer = FoldScorer(fold, checkpoint, mode, train_set, classifier_schedule,
                      classifier_hidden, seed)
  return scorer.Evaluate(test_segments)
