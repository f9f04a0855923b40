"""Contrastive-adversarial domain adaptation on a small numpy autodiff engine."""

from .data import (
    LabeledDataset,
    PairedBatch,
    UnlabeledDataset,
    batches,
    colorize_shift,
    gen_blobs,
    gen_two_moons,
    load_idx,
)
from .nn import CdaModel, init_model, load_checkpoint, save_checkpoint
from .schedule import ScheduleConfig, Stage, StepWeights, beta_at, lambda_at, stage_of, total_loss
from .trainer import DivergenceError, EpochRecord, ModelConfig, TrainConfig, evaluate, train

__version__ = "0.1.0"
