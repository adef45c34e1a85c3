"""Extreme-value threshold estimation.

Per-class detection thresholds come from the tail of the class's logit
distribution on weakly labeled clips: split the samples into target and
non-target clusters with a two-component Gaussian EM, flip the target
cluster (so its lower tail becomes an upper tail), model exceedances over
the empirical 0.9 quantile with a generalized Pareto distribution fit by
maximum likelihood (downhill simplex), and read off the threshold whose
theoretical false-negative rate is ``alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NumericError
from .nelder_mead import nelder_mead
from .validation import as_float_array, check_finite

SHAPE_EPS = 1.0e-6  # |c| below this switches to the exponential-tail limit
TAIL_QUANTILE = 0.9
MIN_CLUSTER_SAMPLES = 20
MIN_TAIL_SAMPLES = 10
EM_MAX_ITER = 200
EM_TOL = 1.0e-9
_PENALTY = 1.0e12


@dataclass
class GaussianComponent:
    weight: float
    mean: float
    var: float


@dataclass
class EvtFit:
    """Diagnostics of one tail fit (reversed logit domain)."""

    u: float      # tail cut: empirical 0.9 quantile
    a: float      # scale > 0
    c: float      # shape
    n: int        # exceedances over u
    n_total: int  # target-cluster size

    def __post_init__(self):
        if not self.a > 0:
            raise InvalidInputError("GPD scale must be positive")
        if not 0 < self.n <= self.n_total:
            raise InvalidInputError("exceedance count must be in (0, total]")
        if not (np.isfinite(self.u) and np.isfinite(self.c)):
            raise InvalidInputError("tail fit parameters must be finite")

    @property
    def support_bound(self) -> float:
        """Upper end of the excess support: u - a/c for c < 0, else +inf."""
        return self.u - self.a / self.c if self.c < 0 else math.inf

    def to_dict(self) -> dict:
        return {"u": self.u, "a": self.a, "c": self.c, "n": self.n, "n_total": self.n_total}


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def em_two_cluster(samples):
    """Two-component 1-D Gaussian mixture fit by EM.

    Initialized at the sample mean +/- one standard deviation; iterates to
    log-likelihood stationarity.  Returns (target_samples, components)
    where the target cluster is the higher-mean component and membership
    follows the larger responsibility.
    """
    x = as_float_array(samples, "samples").reshape(-1)
    check_finite(x, "samples")
    if x.size < MIN_CLUSTER_SAMPLES:
        raise InvalidInputError(
            f"need at least {MIN_CLUSTER_SAMPLES} samples to split, got {x.size}"
        )
    total_var = float(x.var())
    if total_var == 0.0:
        raise NumericError("samples have zero variance; cannot split into two clusters")

    std = math.sqrt(total_var)
    means = np.array([x.mean() - std, x.mean() + std])
    variances = np.array([total_var, total_var])
    weights = np.array([0.5, 0.5])
    var_floor = 1.0e-6 * total_var

    ll_prev = -np.inf
    for _ in range(EM_MAX_ITER):
        # E step: responsibilities under the current components.
        log_pdf = (
            -0.5 * np.log(2.0 * np.pi * variances[None, :])
            - 0.5 * (x[:, None] - means[None, :]) ** 2 / variances[None, :]
        )
        log_joint = np.log(weights[None, :]) + log_pdf
        peak = log_joint.max(axis=1, keepdims=True)
        log_norm = peak[:, 0] + np.log(np.exp(log_joint - peak).sum(axis=1))
        resp = np.exp(log_joint - log_norm[:, None])
        ll = float(log_norm.sum())

        # M step.
        mass = resp.sum(axis=0)
        mass = np.maximum(mass, 1e-12)
        weights = mass / x.size
        means = (resp * x[:, None]).sum(axis=0) / mass
        variances = (resp * (x[:, None] - means[None, :]) ** 2).sum(axis=0) / mass
        variances = np.maximum(variances, var_floor)

        if abs(ll - ll_prev) < EM_TOL:
            break
        ll_prev = ll

    target_idx = int(np.argmax(means))
    members = resp[:, target_idx] >= resp[:, 1 - target_idx]
    target = x[members]
    components = [
        GaussianComponent(float(weights[k]), float(means[k]), float(variances[k]))
        for k in range(2)
    ]
    if target.size == 0:
        raise NumericError("EM split produced an empty target cluster")
    return target, components


def gpd_neg_log_likelihood(z: np.ndarray, a: float, c: float) -> float:
    """Negative GPD log-likelihood; +penalty outside the feasible region."""
    if not np.isfinite(a) or not np.isfinite(c) or a <= 0:
        return _PENALTY * (1.0 + abs(a) + abs(c))
    if abs(c) < SHAPE_EPS:
        return z.size * math.log(a) + float(z.sum()) / a
    w = 1.0 + c * z / a
    if np.any(w <= 0):
        violation = float(np.maximum(0.0, -w).sum())
        return _PENALTY * (1.0 + violation)
    return z.size * math.log(a) + (1.0 + c) / c * float(np.log(w).sum())


def fit_gpd(excesses) -> tuple[float, float]:
    """Maximum-likelihood (scale, shape) of a generalized Pareto sample.

    Moment-based start, refined by the downhill simplex on the exact
    likelihood; the ``|c| -> 0`` limit falls back to the exponential
    density so the objective stays smooth through zero shape.
    """
    z = as_float_array(excesses, "excesses").reshape(-1)
    check_finite(z, "excesses")
    if z.size < MIN_TAIL_SAMPLES:
        raise InvalidInputError(
            f"need at least {MIN_TAIL_SAMPLES} excesses for a tail fit, got {z.size}"
        )
    if np.any(z < 0) or z.max() <= 0:
        raise InvalidInputError("excesses must be non-negative with a positive maximum")

    m = float(z.mean())
    s2 = float(z.var())
    if s2 > 0:
        c0 = 0.5 * (1.0 - m * m / s2)
        c0 = float(np.clip(c0, -0.45, 0.9))
        a0 = m * (1.0 - c0)
    else:
        c0, a0 = 0.1, m
    a0 = max(a0, 1e-8)

    result = nelder_mead(
        lambda p: gpd_neg_log_likelihood(z, p[0], p[1]),
        np.array([a0, c0]),
        tol=1e-10,
        max_iter=2000,
    )
    a, c = float(result.x[0]), float(result.x[1])
    if a <= 0 or not np.isfinite(result.fun):
        raise NumericError("tail fit did not reach a feasible optimum")
    return a, c


def tail_threshold(u: float, a: float, c: float, n_total: int, n_tail: int, alpha: float) -> float:
    """Threshold in the reversed domain whose theoretical exceedance
    probability is ``alpha``: u + (a/c) * ((N*alpha/n)**(-c) - 1)."""
    if not 0 < alpha:
        raise InvalidInputError("alpha must be positive")
    if n_tail <= 0 or n_total <= 0:
        raise InvalidInputError("sample counts must be positive")
    q = n_total * alpha / n_tail
    if abs(c) < SHAPE_EPS:
        return u - a * math.log(q)
    return u + (a / c) * (q ** (-c) - 1.0)


def evt_threshold(samples, alpha: float) -> float:
    """Probability-domain threshold for one class's logit samples."""
    threshold, _ = evt_threshold_detail(samples, alpha)
    return threshold


def evt_threshold_detail(samples, alpha: float) -> tuple[float, EvtFit]:
    """Full chain: EM split, reversal, 0.9-quantile cut, GPD tail fit,
    threshold formula, and the map back to probabilities via sigmoid(-t).

    Returns (threshold, fit diagnostics).  Raises
    :class:`~sedlab.errors.NumericError` when the tail is unusable (the
    caller is expected to fall back to the global threshold).
    """
    target, _ = em_two_cluster(samples)
    reversed_samples = -target
    u = float(np.quantile(reversed_samples, TAIL_QUANTILE))
    excesses = reversed_samples[reversed_samples > u] - u
    if excesses.size == 0:
        raise NumericError("no samples exceed the tail cut; tail fit impossible")
    a, c = fit_gpd(excesses)
    t_alpha = tail_threshold(u, a, c, reversed_samples.size, excesses.size, alpha)
    fit = EvtFit(u=u, a=a, c=c, n=int(excesses.size), n_total=int(reversed_samples.size))
    return _sigmoid(-t_alpha), fit


__all__ = [
    "SHAPE_EPS",
    "TAIL_QUANTILE",
    "GaussianComponent",
    "EvtFit",
    "em_two_cluster",
    "gpd_neg_log_likelihood",
    "fit_gpd",
    "tail_threshold",
    "evt_threshold",
    "evt_threshold_detail",
]
