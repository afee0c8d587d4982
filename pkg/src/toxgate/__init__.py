"""Multi-task molecular property prediction with task-gated sparse attention.

A SMILES string is tokenized at atom level, encoded by a small trainable
transformer, and gated per task: each task head learns a per-token gate in
(0, 1), pools the gated features, and predicts from the pooled vector. An
L1 penalty on the gates drives them sparse, so surviving tokens read as
the substructures each task relies on.
"""

from .autodiff import GradientTape, Tensor, grad_check
from .config import RunConfig, parse_config
from .data import DatasetTable, EncodedDataset, encode_dataset, load_dataset
from .encoder import EncoderConfig
from .explain import AttributionRecord, attribute, render_report, task_contrast
from .metrics import TaskMetrics, macro_auc, roc_auc
from .model import Model
from .objective import LossReport, bce_masked, l1_penalty, task_loss, total_loss
from .optim import AdamWConfig, AdamWState, adamw_step
from .splitting import SplitPlan, iterative_stratified_split, kfold
from .tokenizer import Vocabulary, build_vocab, encode, tokenize, validate
from .training import build_model, evaluate, lambda_sweep, train

__version__ = "0.1.0"
