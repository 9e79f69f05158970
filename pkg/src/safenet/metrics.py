"""Paired-run evaluation: accuracy and the transfer-benefit scores.

A "pair" is one fine-tuned model and one from-scratch model trained on the
identical data and evaluated on the identical test set; the scores below
summarize a list of such pairs across training sizes and repeats.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PairedAccuracy:
    per_class_n: int
    a_pt: float  # accuracy percent, pretrained-then-fine-tuned model
    a_st: float  # accuracy percent, from-scratch model
    repeat_index: int = 0


@dataclass
class TransferScore:
    ep: float  # fraction of pairs where the fine-tuned model wins
    me: float  # mean accuracy gap, percent points
    nme: float  # mean relative gap, percent


def accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    """Percent of matching entries."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ValueError("predictions and labels must have equal length")
    if predictions.size == 0:
        raise ValueError("empty input")
    return 100.0 * float(np.mean(predictions == labels))


def difference_accuracy(a_pt: float, a_st: float) -> float:
    return a_pt - a_st


def transfer_score(pairs: list[PairedAccuracy]) -> TransferScore:
    """EP, ME and NME over a list of paired accuracies.

    EP counts strict wins (ties are not wins), ME averages the raw gaps,
    NME averages the gaps relative to the from-scratch accuracy, in percent.
    NME requires every a_st > 0.
    """
    if not pairs:
        raise ValueError("transfer_score needs at least one pair")
    a_pt = np.array([p.a_pt for p in pairs])
    a_st = np.array([p.a_st for p in pairs])
    if np.any(a_st <= 0):
        raise ValueError("NME undefined: a from-scratch accuracy is 0")
    s = len(pairs)
    ep = float(np.count_nonzero(a_pt > a_st)) / s
    me = float(np.sum(a_pt - a_st)) / s
    nme = 100.0 * float(np.sum((a_pt - a_st) / a_st)) / s
    return TransferScore(ep=ep, me=me, nme=nme)
