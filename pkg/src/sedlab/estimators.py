"""Estimator-style wrappers so the lab composes with the scikit-learn
ecosystem (``get_params``/``set_params``/``clone``, pipelines, grid
search).

:class:`SoundEventDetector` is the end-to-end piece: fit on a mixed bag
of strong/weak/unlabeled clips, predict event intervals.
:class:`ClasswiseEventPostProcessor` is the transform-shaped tail: fit
per-class thresholds and filter lengths on weakly labeled posteriors,
then turn any posterior grid into intervals.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .datasets import Dataset
from .errors import InvalidInputError
from .events import EventInterval
from .features import FeatureGrid
from .network import ConvRecurrentNet, ModelConfig, PosteriorGrid
from .postprocess import (
    ClasswisePostprocParams,
    classwise_postproc,
    fit_classwise_params,
    global_postproc,
)
from .scenes import StrongLabelGrid, WeakLabel, events_from_label_grid
from .training import TrainConfig, predict_posterior_batch, train


def _as_grids(X, fps):
    if isinstance(X, np.ndarray):
        if X.ndim != 3:
            raise InvalidInputError("array input must be (n_clips, frames, channels)")
        if fps is None:
            raise InvalidInputError("array input needs an explicit fps")
        return [FeatureGrid(x, fps) for x in X]
    out = []
    for item in X:
        if not isinstance(item, FeatureGrid):
            raise InvalidInputError("X must hold FeatureGrid items or be a 3-D array")
        out.append(item)
    return out


def _split_labeled(grids, labels, n_classes):
    """Sort (grid, label) pairs into strong/weak/unlabeled buckets."""
    strong, weak, unlabeled = [], [], []
    for i, (grid, label) in enumerate(zip(grids, labels)):
        if label is None:
            unlabeled.append((f"clip-{i:05d}", grid))
        elif isinstance(label, StrongLabelGrid) or (
            isinstance(label, np.ndarray) and label.ndim == 2
        ):
            y = label if isinstance(label, StrongLabelGrid) else StrongLabelGrid(label)
            if y.n_classes != n_classes:
                raise InvalidInputError("strong label class count mismatch")
            strong.append((f"clip-{i:05d}", grid, y))
        else:
            w = label if isinstance(label, WeakLabel) else WeakLabel(np.asarray(label))
            if w.n_classes != n_classes:
                raise InvalidInputError("weak label class count mismatch")
            weak.append((f"clip-{i:05d}", grid, w))
    return strong, weak, unlabeled


class SoundEventDetector(BaseEstimator):
    """Semi-supervised multi-label event detector.

    ``fit(X, y)`` takes one clip list with mixed supervision: a 2-D label
    marks a strong clip, a 1-D label a weak clip, ``None`` an unlabeled
    one.  ``predict`` returns per-clip lists of
    :class:`~sedlab.events.EventInterval`.
    """

    def __init__(self, variant="crst", n_classes=3, epochs=10, steps_per_epoch=None,
                 batch_strong=6, batch_weak=6, batch_unlabeled=12, lr=0.001,
                 ema_decay=0.99, ramp_peak=3.0, consistency_peak=2.0,
                 perturbation="noise30db", snr_db=30.0, conv_channels=(16, 32, 64),
                 pool_time=(1, 2, 2), pool_freq=(4, 2, 2), rnn_hidden=32, rnn_layers=1,
                 dropout_rate=0.5, post="global", alpha=0.01, beta=25.0,
                 validation_fraction=0.2, fps=None, seed=0):
        self.variant = variant
        self.n_classes = n_classes
        self.epochs = epochs
        self.steps_per_epoch = steps_per_epoch
        self.batch_strong = batch_strong
        self.batch_weak = batch_weak
        self.batch_unlabeled = batch_unlabeled
        self.lr = lr
        self.ema_decay = ema_decay
        self.ramp_peak = ramp_peak
        self.consistency_peak = consistency_peak
        self.perturbation = perturbation
        self.snr_db = snr_db
        self.conv_channels = conv_channels
        self.pool_time = pool_time
        self.pool_freq = pool_freq
        self.rnn_hidden = rnn_hidden
        self.rnn_layers = rnn_layers
        self.dropout_rate = dropout_rate
        self.post = post
        self.alpha = alpha
        self.beta = beta
        self.validation_fraction = validation_fraction
        self.fps = fps
        self.seed = seed

    def fit(self, X, y=None, validation=None):
        grids = _as_grids(X, self.fps)
        if y is None:
            y = [None] * len(grids)
        if len(y) != len(grids):
            raise InvalidInputError("X and y must have the same length")
        strong, weak, unlabeled = _split_labeled(grids, y, self.n_classes)
        if not strong:
            raise InvalidInputError("fit needs at least one strong-labeled clip")

        if validation is not None:
            val_grids = _as_grids(validation[0], self.fps)
            val = [
                (f"val-{i:05d}", g, yy if isinstance(yy, StrongLabelGrid) else StrongLabelGrid(yy))
                for i, (g, yy) in enumerate(zip(val_grids, validation[1]))
            ]
        else:
            n_val = max(1, int(round(self.validation_fraction * len(strong))))
            val = [(cid.replace("clip", "val"), g, yy) for cid, g, yy in strong[-n_val:]]
            strong = strong[:-n_val] or strong

        ds = Dataset(n_classes=self.n_classes, strong=strong, weak=weak,
                     unlabeled=unlabeled, validation=val)
        model_cfg = ModelConfig(
            n_mel_in=grids[0].n_channels,
            conv_channels=tuple(self.conv_channels),
            pool_time=tuple(self.pool_time),
            pool_freq=tuple(self.pool_freq),
            rnn_hidden=self.rnn_hidden,
            rnn_layers=self.rnn_layers,
            n_classes=self.n_classes,
            dropout_rate=self.dropout_rate,
        )
        # Clamp batch parts to what the data offers; a variant that truly
        # requires a missing split still fails loudly inside train().
        batch_weak = min(self.batch_weak, len(weak)) if weak else self.batch_weak
        batch_unlabeled = min(self.batch_unlabeled, len(unlabeled)) if unlabeled else self.batch_unlabeled
        train_cfg = TrainConfig(
            variant=self.variant,
            epochs=self.epochs,
            steps_per_epoch=self.steps_per_epoch,
            batch_strong=self.batch_strong,
            batch_weak=batch_weak,
            batch_unlabeled=batch_unlabeled,
            lr=self.lr,
            ema_decay=self.ema_decay,
            ramp_peak=self.ramp_peak,
            consistency_peak=self.consistency_peak,
            perturbation=self.perturbation,
            snr_db=self.snr_db,
            seed=self.seed,
        )
        state, history = train(ds, model_cfg, train_cfg)
        self.model_cfg_ = state.model_cfg
        self.net_ = ConvRecurrentNet(state.model_cfg)
        snapshot = state.best_snapshot
        self.params_ = snapshot["student"] if snapshot else state.models[0].student
        self.history_ = history
        self.fps_ = grids[0].fps
        self.fps_out_ = grids[0].fps / state.model_cfg.time_pool_factor

        self.postproc_params_ = None
        if self.post == "classwise" and weak:
            weak_posts = [
                self._posterior(g) for _, g, _ in weak
            ]
            self.postproc_params_ = fit_classwise_params(
                weak_posts, [w for _, _, w in weak], self.n_classes,
                alpha=self.alpha, beta_pct=self.beta, fps=self.fps_out_,
            )
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("SoundEventDetector is not fitted yet")

    def _posterior(self, grid: FeatureGrid) -> np.ndarray:
        post = predict_posterior_batch(self.net_, self.params_, grid.data[None])
        return post[0]

    def predict_proba(self, X) -> list:
        """Per-clip posterior grids at the pooled frame rate."""
        self._check_fitted()
        grids = _as_grids(X, self.fps)
        return [PosteriorGrid(self._posterior(g), fps=self.fps_out_) for g in grids]

    def predict(self, X) -> list:
        """Per-clip event interval lists."""
        self._check_fitted()
        out = []
        for post in self.predict_proba(X):
            if self.postproc_params_ is not None:
                out.append(classwise_postproc(post, self.postproc_params_, post.fps))
            else:
                out.append(global_postproc(post, post.fps))
        return out

    def score(self, X, y) -> float:
        """Macro event f-score against strong reference labels."""
        from .evaluation import macro_f_score

        self._check_fitted()
        grids = _as_grids(X, self.fps)
        detected = {f"clip-{i:05d}": evs for i, evs in enumerate(self.predict(X))}
        refs = {}
        for i, (g, label) in enumerate(zip(grids, y)):
            yy = label if isinstance(label, StrongLabelGrid) else StrongLabelGrid(label)
            refs[f"clip-{i:05d}"] = [
                EventInterval(c, on, off) for c, on, off in events_from_label_grid(yy, g.fps)
            ]
        return macro_f_score(detected, refs, self.n_classes)


class ClasswiseEventPostProcessor(BaseEstimator):
    """Fit per-class thresholds/filters on weak data; map posteriors to events."""

    def __init__(self, alpha=0.01, beta=25.0, fps=None):
        self.alpha = alpha
        self.beta = beta
        self.fps = fps

    def _fps_of(self, post):
        if isinstance(post, PosteriorGrid):
            return post.fps
        if self.fps is None:
            raise InvalidInputError("raw posterior arrays need an explicit fps")
        return self.fps

    def fit(self, X, y):
        """X: posterior grids on weak clips; y: their weak labels."""
        if len(X) == 0:
            raise InvalidInputError("need at least one weak clip to fit")
        n_classes = (X[0].data if isinstance(X[0], PosteriorGrid) else np.asarray(X[0])).shape[1]
        self.params_ = fit_classwise_params(
            list(X), list(y), n_classes,
            alpha=self.alpha, beta_pct=self.beta, fps=self._fps_of(X[0]),
        )
        return self

    def transform(self, X) -> list:
        if not hasattr(self, "params_"):
            raise NotFittedError("ClasswiseEventPostProcessor is not fitted yet")
        return [classwise_postproc(p, self.params_, self._fps_of(p)) for p in X]

    predict = transform

    @property
    def fitted_params(self) -> ClasswisePostprocParams:
        if not hasattr(self, "params_"):
            raise NotFittedError("ClasswiseEventPostProcessor is not fitted yet")
        return self.params_


__all__ = ["SoundEventDetector", "ClasswiseEventPostProcessor"]
