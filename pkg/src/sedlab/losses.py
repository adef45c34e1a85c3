"""Training objectives.

Every loss returns ``(LossBreakdown, dpred)`` where ``dpred`` is the exact
gradient of the scalar with respect to the student's posterior batch, so
the trainer can route it straight through the model's backward pass.

Batches are laid out ``[strong | weak | unlabeled]`` along the first axis;
:class:`BatchLayout` names the slices.  Strong labels arrive already
downsampled to the model's output frame rate; weak terms pool the
posterior over frames before the cross entropy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .validation import as_float_array

BCE_EPS = 1.0e-14
SELF_TRAIN_WEIGHT_CAP = 5.0


@dataclass(frozen=True)
class BatchLayout:
    """Counts of strong/weak/unlabeled clips in a stacked batch."""

    n_strong: int
    n_weak: int
    n_unlabeled: int

    @property
    def total(self) -> int:
        return self.n_strong + self.n_weak + self.n_unlabeled

    @property
    def strong(self) -> slice:
        return slice(0, self.n_strong)

    @property
    def weak(self) -> slice:
        return slice(self.n_strong, self.n_strong + self.n_weak)

    @property
    def unlabeled(self) -> slice:
        return slice(self.n_strong + self.n_weak, self.total)

    @property
    def weak_and_unlabeled(self) -> slice:
        return slice(self.n_strong, self.total)


@dataclass
class LossBreakdown:
    """Scalar parts of one objective evaluation.

    ``expectation`` holds the already-weighted consistency or pseudo-label
    term, so ``total == strong_bce + weak_bce + expectation`` exactly.
    """

    total: float
    strong_bce: float
    weak_bce: float
    expectation: float
    weights: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "strong_bce": self.strong_bce,
            "weak_bce": self.weak_bce,
            "expectation": self.expectation,
            "weights": dict(self.weights),
        }


def bce(pred, target) -> float:
    """Mean binary cross entropy (natural log) over all elements."""
    pred, target = _pair(pred, target)
    p = np.clip(pred, BCE_EPS, 1.0 - BCE_EPS)
    return float(-np.mean(target * np.log(p) + (1.0 - target) * np.log(1.0 - p)))


def bce_grad(pred, target) -> np.ndarray:
    pred, target = _pair(pred, target)
    p = np.clip(pred, BCE_EPS, 1.0 - BCE_EPS)
    return (p - target) / (p * (1.0 - p)) / pred.size


def mse(pred, target) -> float:
    """Mean squared difference over all elements."""
    pred, target = _pair(pred, target)
    return float(np.mean((pred - target) ** 2))


def mse_grad(pred, target) -> np.ndarray:
    pred, target = _pair(pred, target)
    return 2.0 * (pred - target) / pred.size


def _pair(pred, target):
    pred = as_float_array(pred, "pred")
    target = as_float_array(target, "target")
    if pred.shape != target.shape:
        raise InvalidInputError(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    if pred.size == 0:
        raise InvalidInputError("empty prediction")
    return pred, target


def _pooled_weak_terms(pred_weak, y_weak):
    """Clip-pooled BCE value and its gradient back at frame resolution."""
    pooled = pred_weak.mean(axis=1)
    value = bce(pooled, y_weak)
    dpooled = bce_grad(pooled, y_weak)
    dpred = np.broadcast_to(dpooled[:, None, :] / pred_weak.shape[1], pred_weak.shape)
    return value, dpred


def loss_supervised(pred, y_strong, y_weak, layout: BatchLayout):
    """BCE on strong frame grids plus BCE on clip-pooled weak outputs."""
    if (y_strong is None or layout.n_strong == 0) and (y_weak is None or layout.n_weak == 0):
        raise InvalidInputError("supervised loss needs strong or weak labels")
    return _classification(pred, y_strong, y_weak, layout)


def loss_mt(pred, teacher_pred, y_strong, y_weak, layout: BatchLayout, delta: float):
    """Classification terms plus delta * MSE(student, teacher) over all subsets."""
    base, dpred = _classification(pred, y_strong, y_weak, layout)
    consistency = mse(pred, teacher_pred)
    dpred = dpred + delta * mse_grad(pred, teacher_pred)
    bd = LossBreakdown(
        total=base.strong_bce + base.weak_bce + delta * consistency,
        strong_bce=base.strong_bce,
        weak_bce=base.weak_bce,
        expectation=delta * consistency,
        weights={"delta": delta},
    )
    return bd, dpred


def loss_ict(pred, teacher_a, teacher_b, lam, y_strong, y_weak, layout: BatchLayout, delta: float):
    """Interpolation consistency: the unlabeled slice of ``pred`` holds the
    student's output on mixed inputs, compared against the same mix of the
    teacher's outputs on the two originals."""
    if not 0.0 <= lam <= 1.0:
        raise InvalidInputError(f"mixing weight must be in [0, 1], got {lam}")
    base, dpred = _classification(pred, y_strong, y_weak, layout)
    mixed_target = lam * teacher_a + (1.0 - lam) * teacher_b
    consistency = mse(pred[layout.unlabeled], mixed_target)
    dpred[layout.unlabeled] += delta * mse_grad(pred[layout.unlabeled], mixed_target)
    bd = LossBreakdown(
        total=base.strong_bce + base.weak_bce + delta * consistency,
        strong_bce=base.strong_bce,
        weak_bce=base.weak_bce,
        expectation=delta * consistency,
        weights={"delta": delta, "lam": lam},
    )
    return bd, dpred


def loss_srst(pred, pseudo, y_strong, y_weak, layout: BatchLayout, omega: float):
    """Self-referenced training: expectation term against the model's own
    pseudo labels, weighted by min(omega / BCE(pseudo_strong, y_strong), cap).

    A perfect pseudo label (zero BCE) takes the cap; an empty strong
    portion gives no reliability evidence, so the weight falls back to 0.
    """
    base, dpred = _classification(pred, y_strong, y_weak, layout)
    if y_strong is not None and layout.n_strong:
        denom = bce(pseudo[layout.strong], y_strong)
        gamma = SELF_TRAIN_WEIGHT_CAP if denom == 0.0 else min(omega / denom, SELF_TRAIN_WEIGHT_CAP)
    else:
        gamma = 0.0
    sl = layout.weak_and_unlabeled
    expectation = 0.0
    if sl.stop > sl.start:
        expectation = gamma * mse(pred[sl], pseudo[sl])
        dpred[sl] += gamma * mse_grad(pred[sl], pseudo[sl])
    bd = LossBreakdown(
        total=base.strong_bce + base.weak_bce + expectation,
        strong_bce=base.strong_bce,
        weak_bce=base.weak_bce,
        expectation=expectation,
        weights={"gamma": gamma, "omega": omega},
    )
    return bd, dpred


def loss_crst(pred, pseudo_from_other, y_strong, y_weak, layout: BatchLayout,
              gamma_s: float, gamma_w: float, side: str = "I"):
    """Cross-referenced training objective for one of the two models.

    Classification terms on its own view, plus pseudo-label MSE terms
    whose targets and reliabilities come from the other model's teacher:
    the strong-derived reliability weights the unlabeled term and the
    weak-derived reliability weights the weak term.
    """
    if pseudo_from_other is None:
        raise InvalidInputError("cross-referenced loss needs the other model's pseudo labels")
    pseudo = as_float_array(pseudo_from_other, "pseudo labels")
    if pseudo.shape != pred.shape:
        raise InvalidInputError(
            f"pseudo labels {pseudo.shape} do not match predictions {pred.shape}"
        )
    base, dpred = _classification(pred, y_strong, y_weak, layout)
    expectation = 0.0
    if layout.n_unlabeled:
        sl = layout.unlabeled
        expectation += gamma_s * mse(pred[sl], pseudo[sl])
        dpred[sl] += gamma_s * mse_grad(pred[sl], pseudo[sl])
    if layout.n_weak:
        sl = layout.weak
        expectation += gamma_w * mse(pred[sl], pseudo[sl])
        dpred[sl] += gamma_w * mse_grad(pred[sl], pseudo[sl])
    bd = LossBreakdown(
        total=base.strong_bce + base.weak_bce + expectation,
        strong_bce=base.strong_bce,
        weak_bce=base.weak_bce,
        expectation=expectation,
        weights={"gamma_s": gamma_s, "gamma_w": gamma_w, "side": side},
    )
    return bd, dpred


def _classification(pred, y_strong, y_weak, layout: BatchLayout):
    pred = as_float_array(pred, "pred", ndim=3)
    dpred = np.zeros_like(pred)
    strong_term = 0.0
    weak_term = 0.0
    if y_strong is not None and layout.n_strong:
        strong_term = bce(pred[layout.strong], y_strong)
        dpred[layout.strong] = bce_grad(pred[layout.strong], y_strong)
    if y_weak is not None and layout.n_weak:
        weak_term, dweak = _pooled_weak_terms(pred[layout.weak], y_weak)
        dpred[layout.weak] = dweak
    return LossBreakdown(strong_term + weak_term, strong_term, weak_term, 0.0), dpred


__all__ = [
    "BCE_EPS",
    "SELF_TRAIN_WEIGHT_CAP",
    "BatchLayout",
    "LossBreakdown",
    "bce",
    "bce_grad",
    "mse",
    "mse_grad",
    "loss_supervised",
    "loss_mt",
    "loss_ict",
    "loss_srst",
    "loss_crst",
]
