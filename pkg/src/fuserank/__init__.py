"""fuserank: a user-aware multi-modal ranking engine.

Feature extraction from convolutional feature maps (Gram-matrix style
vectors, mean-pooled semantics), a trainable fusion network with
user-conditioned modality gates, expert mixing and cross layers, plus a
synthetic-data harness and evaluation tooling.
"""

from .data import (
    DataSchema,
    Dataset,
    Interaction,
    ItemRecord,
    UserRecord,
    Vocab,
    load_dataset,
    save_dataset,
    temporal_split,
)
from .errors import DataError, FuserankError, NumericalError
from .features import (
    FeatureMapStack,
    LayerMap,
    StyleConfig,
    gram_matrix,
    pool_gram,
    semantic_pool,
    style_vector,
)
from .metrics import EvalReport, auc, evaluate, similarity_report
from .model import (
    Model,
    ModelConfig,
    attention_fuse,
    backward_batch,
    batch_objective,
    bce_loss,
    cross_layer,
    forward_batch,
    forward_one,
    moe_mix,
    predict_scores,
    senet_fuse,
    user_vector,
)
from .modelio import load_model, save_model
from .synth import SynthSpec, generate
from .train import AdamState, TrainLog, adam_step, grad_check, train

__version__ = "0.1.0"
