"""Reliability weighting for the expectation loss.

The weight on pseudo-label terms combines a ramp-up schedule (small early
in training, peaking at the end) with one minus the Jensen-Shannon
divergence between pseudo labels and true labels on the labeled batch
portion.  JSD uses base-2 logs so it is bounded in [0, 1], making
``1 - JSD`` a clean agreement score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .validation import as_float_array, check_finite, check_unit_interval


@dataclass(frozen=True)
class RampSchedule:
    """peak * exp(-5 * (1 - t/T)**2), monotone in t over [0, T]."""

    total_steps: int
    peak: float = 3.0

    def __post_init__(self):
        if self.total_steps < 1:
            raise InvalidInputError("total_steps must be at least 1")
        if self.peak < 0:
            raise InvalidInputError("peak must be non-negative")


def ramp_weight(t: int, sched: RampSchedule) -> float:
    if t < 0:
        raise InvalidInputError("step index must be non-negative")
    t = min(t, sched.total_steps)
    frac = t / sched.total_steps
    return sched.peak * float(np.exp(-5.0 * (1.0 - frac) ** 2))


def _bernoulli_kld_bits(x, m):
    # 0*log(0) := 0; where m hits 0 or 1, x equals it too, contributing 0.
    out = np.zeros_like(x)
    pos = (x > 0) & (m > 0)
    out[pos] += x[pos] * np.log2(x[pos] / m[pos])
    neg = (x < 1) & (m < 1)
    out[neg] += (1.0 - x[neg]) * np.log2((1.0 - x[neg]) / (1.0 - m[neg]))
    return out


def jsd(p, q) -> float:
    """Mean per-component Bernoulli Jensen-Shannon divergence, in bits.

    Symmetric, zero iff p == q, and bounded in [0, 1].  Components are
    treated as independent Bernoulli parameters and averaged uniformly
    over every entry of the (equal-shape) inputs.
    """
    p = as_float_array(p, "p")
    q = as_float_array(q, "q")
    if p.shape != q.shape:
        raise InvalidInputError(f"jsd needs equal shapes, got {p.shape} vs {q.shape}")
    check_finite(p, "p")
    check_finite(q, "q")
    check_unit_interval(p, "p")
    check_unit_interval(q, "q")
    m = 0.5 * (p + q)
    per_component = 0.5 * (_bernoulli_kld_bits(p, m) + _bernoulli_kld_bits(q, m))
    return float(per_component.mean())


def _agreement(pseudo_list, truth_list, omega: float) -> float:
    if len(pseudo_list) != len(truth_list):
        raise InvalidInputError("pseudo and truth lists must pair up")
    if not pseudo_list:
        return 0.0
    scores = [1.0 - jsd(_raw(ps), _raw(tr)) for ps, tr in zip(pseudo_list, truth_list)]
    return omega * float(np.mean(scores))


def _raw(x):
    return x.data if hasattr(x, "data") and isinstance(x.data, np.ndarray) else x


def reliability_strong(pseudo_grids, truth_grids, omega: float) -> float:
    """omega * mean over strong clips of (1 - JSD(pseudo, strong label)).

    Empty strong portion falls back to 0 (no evidence, no weight).
    """
    return _agreement(pseudo_grids, truth_grids, omega)


def reliability_weak(pseudo_clip_vectors, weak_labels, omega: float) -> float:
    """omega * mean over weak clips of (1 - JSD(pooled pseudo, weak label))."""
    return _agreement(pseudo_clip_vectors, weak_labels, omega)


__all__ = ["RampSchedule", "ramp_weight", "jsd", "reliability_strong", "reliability_weak"]
