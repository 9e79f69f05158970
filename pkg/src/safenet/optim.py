"""AdamW with decoupled weight decay, plus the step-decay learning rate.

Update rule per tensor, with step count t (1-based):

    m_t = b1 * m_{t-1} + (1 - b1) * g
    v_t = b2 * v_{t-1} + (1 - b2) * g^2
    mhat = m_t / (1 - b1^t),  vhat = v_t / (1 - b2^t)
    theta = theta - lr * mhat / (sqrt(vhat) + eps) - lr * wd * theta

The decay term is applied directly to the parameters (decoupled), and only
to linear weights/biases; batch-norm scale/shift and running statistics are
exempt.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import DECAYED_KEYS, PARAM_KEYS, ModelParams, zeros_like_params


@dataclass
class OptimizerConfig:
    base_lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    step_size: int = 30  # epochs between learning-rate drops
    gamma: float = 0.1

    def validate(self) -> None:
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.step_size < 1:
            raise ValueError("step_size must be at least 1")


@dataclass
class OptimizerState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step_count: int = 0

    @classmethod
    def fresh(cls, params: ModelParams) -> "OptimizerState":
        return cls(m=zeros_like_params(params), v=zeros_like_params(params), step_count=0)


def adamw_step(
    params: ModelParams,
    grads: dict,
    state: OptimizerState,
    lr: float,
    cfg: OptimizerConfig,
) -> tuple[ModelParams, OptimizerState]:
    """One AdamW update; returns new params and state, inputs untouched.

    Raises on non-finite gradients without applying the step.
    """
    for key in PARAM_KEYS:
        if not np.all(np.isfinite(grads[key])):
            raise FloatingPointError(f"non-finite gradient in {key}")

    t = state.step_count + 1
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t

    new_params = {}
    new_m = {}
    new_v = {}
    for key in PARAM_KEYS:
        g = grads[key]
        m = cfg.beta1 * state.m[key] + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * state.v[key] + (1.0 - cfg.beta2) * np.square(g)
        theta = getattr(params, key) - lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
        if key in DECAYED_KEYS and cfg.weight_decay > 0:
            theta = theta - lr * cfg.weight_decay * getattr(params, key)
        new_params[key] = theta
        new_m[key] = m
        new_v[key] = v
    return ModelParams(**new_params), OptimizerState(m=new_m, v=new_v, step_count=t)


def scheduled_lr(epoch: int, cfg: OptimizerConfig) -> float:
    """Step decay: base_lr * gamma^floor(epoch / step_size)."""
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    return cfg.base_lr * cfg.gamma ** (epoch // cfg.step_size)
