"""Adam updates and exponential-moving-average teacher tracking on flat
parameter vectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, TrainingDivergenceError


@dataclass
class OptState:
    """Adam first/second moments plus step count and a learning-rate cap."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr_cap: float = 0.001

    @classmethod
    def zeros(cls, n_params: int, lr_cap: float = 0.001) -> "OptState":
        return cls(m=np.zeros(n_params), v=np.zeros(n_params), lr_cap=lr_cap)


def adam_step(params, grads, opt: OptState, lr=None, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns (new_params, new_state)."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != opt.m.shape:
        raise InvalidInputError("params, grads, and optimizer moments must share a shape")
    if not np.all(np.isfinite(grads)):
        raise TrainingDivergenceError(
            "non-finite gradient in Adam step", snapshot={"step": opt.step}
        )
    if lr is None:
        lr = opt.lr_cap
    if lr > opt.lr_cap:
        raise InvalidInputError(f"learning rate {lr} exceeds the cap {opt.lr_cap}")

    step = opt.step + 1
    m = beta1 * opt.m + (1.0 - beta1) * grads
    v = beta2 * opt.v + (1.0 - beta2) * grads**2
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new_params, OptState(m=m, v=v, step=step, lr_cap=opt.lr_cap)


def ema_update(teacher, student, decay):
    """teacher' = decay*teacher + (1-decay)*student, coordinate-wise."""
    teacher = np.asarray(teacher, dtype=np.float64)
    student = np.asarray(student, dtype=np.float64)
    if teacher.shape != student.shape:
        raise InvalidInputError("teacher and student parameter layouts differ")
    if not 0.0 <= decay < 1.0:
        raise InvalidInputError(f"EMA decay must be in [0, 1), got {decay}")
    return decay * teacher + (1.0 - decay) * student


__all__ = ["OptState", "adam_step", "ema_update"]
