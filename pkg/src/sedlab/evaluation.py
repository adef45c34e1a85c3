"""Event-based scoring with onset/offset collars.

A detected interval counts as a true positive when its class matches a
reference and both boundary errors are strictly inside the collar
(200 ms by default).  Matching is one-to-one and greedy: references in
onset order, each taking the earliest eligible unmatched detection.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import stats as _scipy_stats

from .errors import InvalidInputError
from .events import EventInterval

DEFAULT_COLLAR = 0.2


@dataclass
class MatchResult:
    """Per-class TP/FP/FN counts plus the matched pairs behind them."""

    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    pairs: list = field(default_factory=list)       # (detected_idx, reference_idx)
    missed: list = field(default_factory=list)      # per-reference flags

    @property
    def n_classes(self) -> int:
        return self.tp.shape[0]

    def __iadd__(self, other: "MatchResult"):
        self.tp = self.tp + other.tp
        self.fp = self.fp + other.fp
        self.fn = self.fn + other.fn
        return self


def _sort_key(ev: EventInterval):
    return (ev.onset, ev.offset, ev.class_id)


def _within_collar(det: EventInterval, ref: EventInterval, collar: float) -> bool:
    return abs(det.onset - ref.onset) < collar and abs(det.offset - ref.offset) < collar


def _class_count(detected, reference, n_classes):
    if n_classes is not None:
        return n_classes
    ids = [ev.class_id for ev in detected] + [ev.class_id for ev in reference]
    return max(ids, default=-1) + 1


def match_events(detected, reference, collar: float = DEFAULT_COLLAR,
                 n_classes: int | None = None) -> MatchResult:
    """One-to-one collar matching of one clip's detections to references."""
    n_classes = _class_count(detected, reference, n_classes)
    det_order = sorted(range(len(detected)), key=lambda i: _sort_key(detected[i]))
    ref_order = sorted(range(len(reference)), key=lambda i: _sort_key(reference[i]))

    tp = np.zeros(n_classes, dtype=np.int64)
    used = set()
    pairs = []
    missed = [True] * len(reference)
    for ri in ref_order:
        ref = reference[ri]
        for di in det_order:
            if di in used:
                continue
            det = detected[di]
            if det.class_id == ref.class_id and _within_collar(det, ref, collar):
                used.add(di)
                pairs.append((di, ri))
                missed[ri] = False
                tp[ref.class_id] += 1
                break

    fp = np.zeros(n_classes, dtype=np.int64)
    for di, det in enumerate(detected):
        if di not in used:
            fp[det.class_id] += 1
    fn = np.zeros(n_classes, dtype=np.int64)
    for ri, ref in enumerate(reference):
        if missed[ri]:
            fn[ref.class_id] += 1
    return MatchResult(tp=tp, fp=fp, fn=fn, pairs=pairs, missed=missed)


def match_events_run(detected_by_clip: dict, reference_by_clip: dict,
                     collar: float = DEFAULT_COLLAR, n_classes: int | None = None) -> MatchResult:
    """Aggregate counts over a clip collection keyed by clip id."""
    if n_classes is None:
        all_events = [ev for evs in detected_by_clip.values() for ev in evs]
        all_events += [ev for evs in reference_by_clip.values() for ev in evs]
        n_classes = max((ev.class_id for ev in all_events), default=-1) + 1
    total = MatchResult(
        tp=np.zeros(n_classes, dtype=np.int64),
        fp=np.zeros(n_classes, dtype=np.int64),
        fn=np.zeros(n_classes, dtype=np.int64),
    )
    for clip_id in sorted(set(detected_by_clip) | set(reference_by_clip)):
        total += match_events(
            detected_by_clip.get(clip_id, []),
            reference_by_clip.get(clip_id, []),
            collar=collar,
            n_classes=n_classes,
        )
    return total


@dataclass
class ScoreReport:
    """Per-class precision/recall/f-score and their unweighted mean f."""

    precision: np.ndarray
    recall: np.ndarray
    fscore: np.ndarray
    macro_f: float
    metadata: dict = field(default_factory=dict)


def _safe_ratio(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def score(match: MatchResult, metadata: dict | None = None) -> ScoreReport:
    """Precision, recall, F per class (0/0 := 0) and the macro average."""
    precision = _safe_ratio(match.tp, match.tp + match.fp)
    recall = _safe_ratio(match.tp, match.tp + match.fn)
    fscore = _safe_ratio(2.0 * precision * recall, precision + recall)
    macro = float(fscore.mean()) if fscore.size else 0.0
    return ScoreReport(precision, recall, fscore, macro, dict(metadata or {}))


def macro_f_score(detected_by_clip: dict, reference_by_clip: dict, n_classes: int,
                  collar: float = DEFAULT_COLLAR) -> float:
    return score(match_events_run(detected_by_clip, reference_by_clip, collar, n_classes)).macro_f


def confusion_matrix(detected, reference, collar: float = DEFAULT_COLLAR,
                     n_classes: int | None = None) -> np.ndarray:
    """classes x (classes+1) counts for one clip.

    Detections are matched to references on time boundaries only (class
    ignored, same greedy protocol); cell (r, d) counts reference class r
    detected as class d, and the last column counts references that no
    detection matched in time.
    """
    n_classes = _class_count(detected, reference, n_classes)
    det_order = sorted(range(len(detected)), key=lambda i: _sort_key(detected[i]))
    ref_order = sorted(range(len(reference)), key=lambda i: _sort_key(reference[i]))
    counts = np.zeros((n_classes, n_classes + 1), dtype=np.int64)
    used = set()
    for ri in ref_order:
        ref = reference[ri]
        hit = None
        for di in det_order:
            if di in used:
                continue
            if _within_collar(detected[di], ref, collar):
                hit = di
                break
        if hit is None:
            counts[ref.class_id, n_classes] += 1
        else:
            used.add(hit)
            counts[ref.class_id, detected[hit].class_id] += 1
    return counts


def confusion_matrix_run(detected_by_clip: dict, reference_by_clip: dict,
                         collar: float = DEFAULT_COLLAR, n_classes: int | None = None) -> np.ndarray:
    if n_classes is None:
        all_events = [ev for evs in detected_by_clip.values() for ev in evs]
        all_events += [ev for evs in reference_by_clip.values() for ev in evs]
        n_classes = max((ev.class_id for ev in all_events), default=-1) + 1
    total = np.zeros((n_classes, n_classes + 1), dtype=np.int64)
    for clip_id in sorted(set(detected_by_clip) | set(reference_by_clip)):
        total += confusion_matrix(
            detected_by_clip.get(clip_id, []),
            reference_by_clip.get(clip_id, []),
            collar=collar,
            n_classes=n_classes,
        )
    return total


@dataclass
class ConcurrencyStats:
    """Percentages of reference intervals by peak concurrency (1, 2, >2)."""

    per_class: np.ndarray   # (n_classes, 3)
    total: np.ndarray       # (3,)
    counts: np.ndarray      # (n_classes, 3) raw interval counts


def concurrency_stats(reference_by_clip: dict, n_classes: int) -> ConcurrencyStats:
    """Bucket every reference interval by the maximum number of distinct
    classes simultaneously active anywhere over its span."""
    counts = np.zeros((n_classes, 3), dtype=np.int64)
    for clip_id in sorted(reference_by_clip):
        intervals = list(reference_by_clip[clip_id])
        for ev in intervals:
            probes = {ev.onset}
            for other in intervals:
                for bound in (other.onset, other.offset):
                    if ev.onset < bound < ev.offset:
                        probes.add(bound)
            k_max = 0
            for p in sorted(probes):
                active = {o.class_id for o in intervals if o.onset <= p < o.offset}
                k_max = max(k_max, len(active))
            bucket = 0 if k_max <= 1 else (1 if k_max == 2 else 2)
            counts[ev.class_id, bucket] += 1
    row_sums = counts.sum(axis=1)
    per_class = np.zeros((n_classes, 3))
    np.divide(counts * 100.0, row_sums[:, None], out=per_class, where=row_sums[:, None] > 0)
    grand = counts.sum(axis=0)
    total = grand * 100.0 / grand.sum() if grand.sum() else np.zeros(3)
    return ConcurrencyStats(per_class=per_class, total=total, counts=counts)


class WelchResult(NamedTuple):
    statistic: float
    pvalue: float
    df: float
    degenerate: bool = False


def welch_t(sample_a, sample_b) -> WelchResult:
    """Two-sided Welch's t-test with Welch-Satterthwaite degrees of freedom."""
    a = np.asarray(sample_a, dtype=np.float64).reshape(-1)
    b = np.asarray(sample_b, dtype=np.float64).reshape(-1)
    if a.size < 2 or b.size < 2:
        raise InvalidInputError("each sample needs at least 2 observations")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    na, nb = a.size, b.size
    if va == 0.0 and vb == 0.0:
        if a.mean() == b.mean():
            return WelchResult(0.0, 1.0, float("nan"), degenerate=True)
        sign = 1.0 if a.mean() > b.mean() else -1.0
        return WelchResult(sign * float("inf"), 0.0, float("nan"), degenerate=True)
    se2 = va / na + vb / nb
    t = (a.mean() - b.mean()) / np.sqrt(se2)
    df = se2**2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    p = 2.0 * float(_scipy_stats.t.sf(abs(t), df))
    return WelchResult(float(t), min(p, 1.0), float(df))


__all__ = [
    "DEFAULT_COLLAR",
    "MatchResult",
    "match_events",
    "match_events_run",
    "ScoreReport",
    "score",
    "macro_f_score",
    "confusion_matrix",
    "confusion_matrix_run",
    "ConcurrencyStats",
    "concurrency_stats",
    "WelchResult",
    "welch_t",
]
