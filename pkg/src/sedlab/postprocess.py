"""Posterior grids -> event intervals.

Global route: one fixed threshold (0.5) and one fixed median filter
(445 ms) for every class.  Classwise route: per-class thresholds estimated
from the tail of the class's logit distribution on weakly labeled clips
(:mod:`sedlab.evt`), and per-class median filter lengths set to a
percentage of the class's average detected duration.

Thresholding is strict (``>``), and filter lengths round to the nearest
odd frame count with ties resolved downward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, NumericError
from .events import EventInterval, extract_intervals
from .evt import evt_threshold_detail
from .network import PosteriorGrid
from .validation import as_float_array, check_binary, check_odd

GLOBAL_THRESHOLD = 0.5
GLOBAL_FILTER_SECONDS = 0.445
ALPHA_RANGE = (0.0002, 0.1)
ALPHA_STEPS = 10
BETA_RANGE = (5.0, 100.0)
BETA_STEPS = 20


def alpha_grid(low: float = ALPHA_RANGE[0], high: float = ALPHA_RANGE[1],
               steps: int = ALPHA_STEPS) -> np.ndarray:
    """Log-spaced false-negative-rate candidates."""
    return np.logspace(math.log10(low), math.log10(high), steps)


def beta_grid(low: float = BETA_RANGE[0], high: float = BETA_RANGE[1],
              steps: int = BETA_STEPS) -> np.ndarray:
    """Linear duration-percentage candidates."""
    return np.linspace(low, high, steps)


def logit(p):
    p = np.clip(np.asarray(p, dtype=np.float64), 1e-12, 1.0 - 1e-12)
    return np.log(p) - np.log1p(-p)


def round_to_odd(value: float) -> int:
    """Nearest odd integer >= 1, ties resolved downward."""
    m = math.ceil((value - 1.0) / 2.0 - 0.5)
    return max(1, 2 * m + 1)


def global_filter_len(fps: float) -> int:
    return round_to_odd(GLOBAL_FILTER_SECONDS * fps)


def median_smooth(sequence, length: int) -> np.ndarray:
    """Sliding binary median (majority vote) with edge replication."""
    length = check_odd(length, "filter length")
    seq = as_float_array(sequence, "sequence", ndim=1)
    check_binary(seq, "sequence")
    if length == 1 or seq.size == 0:
        return seq.copy()
    half = length // 2
    padded = np.concatenate([np.full(half, seq[0]), seq, np.full(half, seq[-1])])
    sums = np.convolve(padded, np.ones(length), mode="valid")
    return (sums > half).astype(np.float64)


def binarize(posteriors, thresholds) -> np.ndarray:
    """Strict per-class thresholding of a (T, C) probability grid."""
    data = posteriors.data if isinstance(posteriors, PosteriorGrid) else np.asarray(posteriors)
    thresholds = np.broadcast_to(np.asarray(thresholds, dtype=np.float64), (data.shape[1],))
    return (data > thresholds[None, :]).astype(np.float64)


@dataclass
class ClasswisePostprocParams:
    """Per-class threshold and odd median-filter length, plus fit notes."""

    thresholds: np.ndarray
    filter_lens: np.ndarray
    diagnostics: list = field(default_factory=list)

    def __post_init__(self):
        self.thresholds = np.asarray(self.thresholds, dtype=np.float64)
        self.filter_lens = np.asarray(self.filter_lens, dtype=np.int64)
        if self.thresholds.shape != self.filter_lens.shape or self.thresholds.ndim != 1:
            raise InvalidInputError("thresholds and filter lengths must be matched vectors")
        if np.any(self.thresholds <= 0) or np.any(self.thresholds >= 1):
            raise InvalidInputError("thresholds must lie strictly inside (0, 1)")
        for n in self.filter_lens:
            check_odd(int(n), "filter length")

    @property
    def n_classes(self) -> int:
        return self.thresholds.shape[0]

    def to_dict(self) -> dict:
        return {
            "thresholds": [float(t) for t in self.thresholds],
            "filter_lens": [int(n) for n in self.filter_lens],
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClasswisePostprocParams":
        return cls(
            thresholds=np.asarray(d["thresholds"], dtype=np.float64),
            filter_lens=np.asarray(d["filter_lens"], dtype=np.int64),
            diagnostics=list(d.get("diagnostics", [])),
        )


def global_params(n_classes: int, fps: float) -> ClasswisePostprocParams:
    return ClasswisePostprocParams(
        thresholds=np.full(n_classes, GLOBAL_THRESHOLD),
        filter_lens=np.full(n_classes, global_filter_len(fps), dtype=np.int64),
        diagnostics=[{"mode": "global"}] * n_classes,
    )


def classwise_postproc(posteriors, params: ClasswisePostprocParams, fps: float) -> list[EventInterval]:
    """Per-class threshold, per-class median filter, then interval extraction."""
    data = posteriors.data if isinstance(posteriors, PosteriorGrid) else np.asarray(posteriors)
    if data.ndim != 2 or data.shape[1] != params.n_classes:
        raise InvalidInputError(
            f"posterior grid has {data.shape[-1]} classes but params cover {params.n_classes}"
        )
    binary = binarize(data, params.thresholds)
    for c in range(params.n_classes):
        binary[:, c] = median_smooth(binary[:, c], int(params.filter_lens[c]))
    return extract_intervals(binary, fps)


def global_postproc(posteriors, fps: float) -> list[EventInterval]:
    """Fixed 0.5 threshold and 445 ms median filter for every class."""
    data = posteriors.data if isinstance(posteriors, PosteriorGrid) else np.asarray(posteriors)
    return classwise_postproc(data, global_params(data.shape[1], fps), fps)


# ----------------------------------------------------------------------
# classwise parameter estimation on the weak split


def collect_logit_samples(posterior_grids, weak_labels, class_id: int) -> np.ndarray:
    """Frame logits of one class over weak clips that contain that class."""
    chunks = []
    for post, weak in zip(posterior_grids, weak_labels):
        weak_vec = weak.data if hasattr(weak, "data") else np.asarray(weak)
        if weak_vec[class_id] <= 0:
            continue
        data = post.data if isinstance(post, PosteriorGrid) else np.asarray(post)
        chunks.append(logit(data[:, class_id]))
    if not chunks:
        raise NumericError(f"no weakly labeled clips contain class {class_id}")
    return np.concatenate(chunks)


def mean_run_length(binary_grids, class_id: int) -> float:
    """Mean length (frames) of the class's active runs across grids."""
    lengths = []
    for grid in binary_grids:
        col = np.asarray(grid)[:, class_id]
        padded = np.concatenate([[0.0], col, [0.0]])
        delta = np.diff(padded)
        starts = np.flatnonzero(delta == 1)
        stops = np.flatnonzero(delta == -1)
        lengths.extend((stops - starts).tolist())
    if not lengths:
        raise NumericError(f"no detected runs for class {class_id}; cannot size the filter")
    return float(np.mean(lengths))


def estimate_filter_len(binary_grids, class_id: int, beta_pct: float, fps: float) -> int:
    """beta% of the class's mean thresholded run length, as an odd count."""
    if beta_pct <= 0:
        raise InvalidInputError("beta must be positive")
    return round_to_odd(mean_run_length(binary_grids, class_id) * beta_pct / 100.0)


@dataclass
class TailModels:
    """Per-class tail fits on the weak split, reusable across alpha values.

    The expensive parts (cluster split, quantile, likelihood fit) do not
    depend on alpha, so a parameter sweep fits once and re-evaluates the
    closed-form threshold per alpha.
    """

    fits: list          # per class: EvtFit or None
    notes: list         # per class: dict diagnostics
    n_classes: int

    def threshold(self, class_id: int, alpha: float) -> float:
        from .evt import tail_threshold, _sigmoid

        fit = self.fits[class_id]
        if fit is None:
            return GLOBAL_THRESHOLD
        t = tail_threshold(fit.u, fit.a, fit.c, fit.n_total, fit.n, alpha)
        return _sigmoid(-t)

    def thresholds(self, alpha: float) -> np.ndarray:
        return np.array([self.threshold(c, alpha) for c in range(self.n_classes)])


def fit_tail_models(weak_posteriors, weak_labels, n_classes: int) -> TailModels:
    """Fit each class's tail model; classes without a usable tail fall back."""
    fits, notes = [], []
    for c in range(n_classes):
        try:
            samples = collect_logit_samples(weak_posteriors, weak_labels, c)
            _, fit = evt_threshold_detail(samples, alpha=ALPHA_RANGE[0])
            fits.append(fit)
            notes.append({"class": c, **fit.to_dict()})
        except (InvalidInputError, NumericError) as exc:
            fits.append(None)
            notes.append({"class": c, "fallback": str(exc)})
    return TailModels(fits=fits, notes=notes, n_classes=n_classes)


def fit_classwise_params(weak_posteriors, weak_labels, n_classes: int,
                         alpha: float, beta_pct: float, fps: float,
                         tail_models: TailModels | None = None) -> ClasswisePostprocParams:
    """Estimate per-class thresholds and filter lengths on the weak split."""
    models = tail_models if tail_models is not None else fit_tail_models(
        weak_posteriors, weak_labels, n_classes
    )
    thresholds = models.thresholds(alpha)
    fallback_len = None
    filter_lens = np.zeros(n_classes, dtype=np.int64)
    diagnostics = []
    binary_grids = [
        binarize(post, thresholds) for post in weak_posteriors
    ]
    for c in range(n_classes):
        note = dict(models.notes[c])
        note["alpha"] = float(alpha)
        note["beta_pct"] = float(beta_pct)
        try:
            filter_lens[c] = estimate_filter_len(binary_grids, c, beta_pct, fps)
        except NumericError as exc:
            if fallback_len is None:
                fallback_len = global_filter_len(fps)
            filter_lens[c] = fallback_len
            note["filter_fallback"] = str(exc)
        diagnostics.append(note)
    return ClasswisePostprocParams(thresholds, filter_lens, diagnostics)


@dataclass
class SweepResult:
    """Macro f-scores over the full alpha x beta grid, plus the best cell."""

    alphas: np.ndarray
    betas: np.ndarray
    macro_f: np.ndarray  # (len(alphas), len(betas))
    best_alpha: float
    best_beta: float
    best_macro_f: float


def sweep_grid(weak_posteriors, weak_labels, eval_posteriors: dict, eval_refs: dict,
               n_classes: int, fps: float, alphas=None, betas=None,
               tail_models: TailModels | None = None) -> SweepResult:
    """Score classwise post-processing over an alpha x beta grid.

    Tail models are fitted once on the weak split; per cell only the
    closed-form threshold and the filter lengths change.  ``eval_refs``
    maps clip ids to reference interval lists on the split being scored.
    """
    from .evaluation import macro_f_score

    alphas = alpha_grid() if alphas is None else np.asarray(alphas, dtype=np.float64)
    betas = beta_grid() if betas is None else np.asarray(betas, dtype=np.float64)
    models = tail_models if tail_models is not None else fit_tail_models(
        weak_posteriors, weak_labels, n_classes
    )
    fallback_len = global_filter_len(fps)
    scores = np.zeros((alphas.size, betas.size))
    for ai, alpha in enumerate(alphas):
        thresholds = models.thresholds(alpha)
        weak_binary = [binarize(p, thresholds) for p in weak_posteriors]
        mean_lens = []
        for c in range(n_classes):
            try:
                mean_lens.append(mean_run_length(weak_binary, c))
            except NumericError:
                mean_lens.append(None)
        eval_binary = {cid: binarize(p, thresholds) for cid, p in eval_posteriors.items()}
        for bi, beta in enumerate(betas):
            lens = [
                round_to_odd(m * beta / 100.0) if m is not None else fallback_len
                for m in mean_lens
            ]
            detected = {}
            for cid, binary in eval_binary.items():
                smoothed = np.column_stack([
                    median_smooth(binary[:, c], lens[c]) for c in range(n_classes)
                ])
                detected[cid] = extract_intervals(smoothed, fps)
            scores[ai, bi] = macro_f_score(detected, eval_refs, n_classes)
    best_flat = int(np.argmax(scores))
    best_ai, best_bi = np.unravel_index(best_flat, scores.shape)
    return SweepResult(
        alphas=alphas,
        betas=betas,
        macro_f=scores,
        best_alpha=float(alphas[best_ai]),
        best_beta=float(betas[best_bi]),
        best_macro_f=float(scores[best_ai, best_bi]),
    )


__all__ = [
    "GLOBAL_THRESHOLD",
    "GLOBAL_FILTER_SECONDS",
    "alpha_grid",
    "beta_grid",
    "logit",
    "round_to_odd",
    "global_filter_len",
    "median_smooth",
    "binarize",
    "ClasswisePostprocParams",
    "global_params",
    "global_postproc",
    "classwise_postproc",
    "collect_logit_samples",
    "mean_run_length",
    "estimate_filter_len",
    "TailModels",
    "fit_tail_models",
    "fit_classwise_params",
    "SweepResult",
    "sweep_grid",
]
