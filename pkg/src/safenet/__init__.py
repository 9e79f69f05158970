"""Pretrain-then-fine-tune accident prediction on tabular safety-climate data."""

from .harness import (
    ExperimentConfig,
    SweepResult,
    SweepSchedule,
    run_experiment,
    run_matrix,
)
from .metrics import PairedAccuracy, TransferScore, accuracy, transfer_score
from .model import ModelParams, init_params, load_params, predict, save_params
from .optim import OptimizerConfig, adamw_step, scheduled_lr
from .pipeline import (
    Dataset,
    RawRecord,
    clean,
    load_records,
    sample_training_subset,
    smote_balance,
    split_company,
    standardize,
)
from .synthetic import CompanySpec, GeneratorSpec, generate
from .training import TrainRunConfig, finetune, pretrain, train_from_scratch

__version__ = "0.1.0"
