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

"""Heart-rate based detection of symptomatic periods with contrastive
convolutional auto-encoders.

The package reads a cohort of wearable heart-rate recordings, cuts them into
14-day segments and trains small convolutional networks on them with its own
reverse-mode autodiff engine. Fitted models are evaluated with
leave-one-subject-out cross-validation over matched participant pairs.

  Loader: reads manifest.json and the per-participant heart-rate CSV files
  HeartRateSeries, FiveMinSeries: raw samples and five-minute means
  Segment, SegmentSet: labeled 14-day windows and training sets
  SegmentCache: on-disk store of preprocessed segments
  Tensor: the autodiff array type; see also functional and optim
  ConvAutoEncoder, CnnClassifier, MlpClassifier: the model families
  Checkpoint: model parameters with config, seed and training state
  TrainSchedule, Train(), PretrainThenFinetune(): the training loop
  BuildFolds(), FitThreshold(), EvaluateFold(), Aggregate(): evaluation
  WindowScan(): scores shifted symptomatic windows of one participant
  GenerateCohort(): synthetic cohorts with known ground truth
  RunConfig: configuration shared by the hrcaetool.py subcommands
"""

from .util import *
from .problems import *
from .heartrate import *
from .manifest import *
from .loader import *
from .segmenter import *
from .segmentcache import SegmentCache
from .tensor import Tensor, Precision, NoGrad
from .nets import *
from .checkpoint import Checkpoint
from .losses import *
from .trainer import *
from .evaluation import *
from .windowscan import *
from .synth import *
from .config import RunConfig, LoadRunConfig

from . import checkpoint
from . import config
from . import functional
from . import gradcheck
from . import layers
from . import optim
from . import pipeline
from . import tensor

from .version import __version__
