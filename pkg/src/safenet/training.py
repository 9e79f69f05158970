"""Training procedures: pretraining, fine-tuning, and from-scratch runs.

Pretraining splits its input 70/30 (stratified), fits standardization on
the 70% part, trains with the scheduled learning rate, and keeps whichever
epoch snapshot scored best on the held-out 30%. Fine-tuning and
from-scratch training share one loop and differ only in initialization;
both return the final-epoch parameters (selecting by test accuracy during
fine-tuning would leak the test set into model choice).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .metrics import accuracy
from .model import ModelParams, backward, cross_entropy, forward, init_params, predict
from .optim import OptimizerConfig, OptimizerState, adamw_step, scheduled_lr
from .pipeline import DataError, Dataset, StandardizationStats, fit_standardization
from .seeding import derive_rng, derive_seed

PRETRAIN_TRAIN_FRACTION = 0.7


@dataclass
class TrainRunConfig:
    epochs: int
    batch_size: int
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    use_lr_schedule: bool = False
    init_scheme: str = "paper"
    eval_every: int = 1

    def validate(self) -> None:
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        self.optimizer.validate()


def pretrain_config(**overrides) -> TrainRunConfig:
    cfg = TrainRunConfig(
        epochs=100,
        batch_size=32,
        optimizer=OptimizerConfig(base_lr=3e-4),
        use_lr_schedule=True,
    )
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg


def finetune_config(**overrides) -> TrainRunConfig:
    cfg = TrainRunConfig(
        epochs=20,
        batch_size=4,
        optimizer=OptimizerConfig(base_lr=1e-3),
        use_lr_schedule=False,
    )
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    accuracy: float  # percent, on the evaluation set


@dataclass
class TrainedModel:
    params: ModelParams
    history: list[EpochRecord]
    selected_epoch: int | None
    stats: StandardizationStats | None = None  # input scaling the model expects

    def best_accuracy(self) -> float:
        if not self.history:
            raise ValueError("no evaluation history")
        return max(r.accuracy for r in self.history)


def write_history(history: list[EpochRecord], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "accuracy"])
        for rec in history:
            writer.writerow([rec.epoch, repr(rec.loss), repr(rec.accuracy)])


def _stratified_order(labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Shuffle within each class, then interleave proportionally.

    Keeps small batches close to the overall class mix, which protects the
    batch-norm statistics from single-class batches.
    """
    idx0 = rng.permutation(np.flatnonzero(labels == 0))
    idx1 = rng.permutation(np.flatnonzero(labels == 1))
    n0, n1 = len(idx0), len(idx1)
    n = n0 + n1
    if n0 == 0 or n1 == 0:
        return idx0 if n1 == 0 else idx1

    order = np.empty(n, dtype=np.int64)
    frac = n1 / n
    acc = 0.0
    i0 = i1 = 0
    for i in range(n):
        acc += frac
        take1 = (acc >= 1.0 and i1 < n1) or i0 >= n0
        if take1:
            order[i] = idx1[i1]
            i1 += 1
            acc -= 1.0
        else:
            order[i] = idx0[i0]
            i0 += 1
    return order


def _train_loop(
    start_params: ModelParams,
    train: Dataset,
    evaluation: Dataset,
    cfg: TrainRunConfig,
    seed: int,
    select_best: bool,
) -> TrainedModel:
    cfg.validate()
    params = start_params.copy()
    state = OptimizerState.fresh(params)
    history: list[EpochRecord] = []
    best_params = params
    best_acc = -1.0
    best_epoch: int | None = None

    for epoch in range(cfg.epochs):
        lr = (
            scheduled_lr(epoch, cfg.optimizer)
            if cfg.use_lr_schedule
            else cfg.optimizer.base_lr
        )
        order = _stratified_order(train.labels, derive_rng(seed, "order", epoch))
        loss_sum = 0.0
        n_seen = 0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            if len(batch) < 2:  # batch norm needs 2+ rows
                continue
            logits, cache = forward(params, train.features[batch], mode="train")
            loss, d_logits = cross_entropy(logits, train.labels[batch])
            grads = backward(cache, d_logits)
            params, state = adamw_step(params, grads, state, lr, cfg.optimizer)
            loss_sum += loss * len(batch)
            n_seen += len(batch)

        if (epoch + 1) % cfg.eval_every == 0 or epoch == cfg.epochs - 1:
            acc = accuracy(predict(params, evaluation.features), evaluation.labels)
            history.append(EpochRecord(epoch, loss_sum / max(n_seen, 1), acc))
            if select_best and acc > best_acc:
                best_acc = acc
                best_params = params.copy()
                best_epoch = epoch

    if select_best:
        return TrainedModel(params=best_params, history=history, selected_epoch=best_epoch)
    final_epoch = cfg.epochs - 1 if cfg.epochs > 0 else None
    return TrainedModel(params=params, history=history, selected_epoch=final_epoch)


def stratified_split(
    data: Dataset, train_fraction: float, seed: int
) -> tuple[Dataset, Dataset]:
    """Random per-class split; both classes must land on both sides."""
    rng = derive_rng(seed, "stratified-split")
    train_idx = []
    eval_idx = []
    for label in (0, 1):
        idx = rng.permutation(np.flatnonzero(data.labels == label))
        if len(idx) < 2:
            raise DataError(f"class {label} has fewer than 2 rows; split degenerate")
        n_train = int(round(train_fraction * len(idx)))
        n_train = min(max(n_train, 1), len(idx) - 1)
        train_idx.append(idx[:n_train])
        eval_idx.append(idx[n_train:])
    return (
        data.subset(np.sort(np.concatenate(train_idx))),
        data.subset(np.sort(np.concatenate(eval_idx))),
    )


def pretrain(
    source: Dataset,
    cfg: TrainRunConfig | None = None,
    seed: int = 0,
    standardize_inputs: bool = True,
) -> TrainedModel:
    """Train from fresh init on 70% of source, select best epoch on the 30%.

    Standardization is fitted on the 70% training part and carried on the
    returned model so downstream consumers apply the same input scaling.
    """
    cfg = cfg or pretrain_config()
    if len(source) < 10:
        raise DataError("pretraining needs at least 10 rows")
    train, evaluation = stratified_split(source, PRETRAIN_TRAIN_FRACTION, seed)

    stats = None
    if standardize_inputs:
        stats = fit_standardization(train)
        train = stats.apply(train)
        evaluation = stats.apply(evaluation)

    start = init_params(derive_seed(seed, "init"), cfg.init_scheme, source.feature_dim)
    model = _train_loop(start, train, evaluation, cfg, seed, select_best=True)
    model.stats = stats
    return model


def finetune(
    pretrained: ModelParams,
    target_train: Dataset,
    target_test: Dataset,
    cfg: TrainRunConfig | None = None,
    seed: int = 0,
) -> TrainedModel:
    """Continue training from pretrained parameters; returns final epoch."""
    cfg = cfg or finetune_config()
    if pretrained.feature_dim != target_train.feature_dim:
        raise DataError(
            f"pretrained model expects {pretrained.feature_dim} features, "
            f"data has {target_train.feature_dim}"
        )
    return _train_loop(pretrained, target_train, target_test, cfg, seed, select_best=False)


def train_from_scratch(
    target_train: Dataset,
    target_test: Dataset,
    cfg: TrainRunConfig | None = None,
    seed: int = 0,
    init_override: ModelParams | None = None,
) -> TrainedModel:
    """Same procedure as finetune but starting from fresh random init.

    init_override substitutes the starting parameters (test hook used to
    verify both procedures run the identical update sequence).
    """
    cfg = cfg or finetune_config()
    start = (
        init_override
        if init_override is not None
        else init_params(derive_seed(seed, "init"), cfg.init_scheme, target_train.feature_dim)
    )
    return _train_loop(start, target_train, target_test, cfg, seed, select_best=False)
