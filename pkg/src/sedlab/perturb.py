"""Input perturbations: additive noise at a target SNR, circular frame
shifts, and convex mixing.  All are pure functions of (input, seed)."""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError
from .features import FeatureGrid


def add_noise_snr(x: FeatureGrid, snr_db: float, rng_seed: int) -> FeatureGrid:
    """Add white Gaussian noise scaled to the requested feature-domain SNR.

    Signal power is the mean square of the grid values, so
    ``10*log10(mean(x**2)/mean(n**2)) == snr_db`` in expectation.
    """
    power = float(np.mean(x.data**2))
    if power == 0.0:
        raise InvalidInputError("cannot scale noise to an all-zero grid (zero signal power)")
    rng = np.random.default_rng(rng_seed)
    sigma = np.sqrt(power / 10.0 ** (snr_db / 10.0))
    noisy = x.data + sigma * rng.standard_normal(x.data.shape)
    return FeatureGrid(noisy, x.fps)


def frame_shift(x: FeatureGrid, delay: int) -> FeatureGrid:
    """Circular shift along time: the tail wraps around to the front."""
    delay = int(delay)
    if abs(delay) >= x.n_frames:
        raise InvalidInputError(
            f"|delay| ({abs(delay)}) must be smaller than the frame count ({x.n_frames})"
        )
    return FeatureGrid(np.roll(x.data, delay, axis=0), x.fps)


def sample_frame_delay(rng: np.random.Generator, n_frames: int, sigma: float = 40.0) -> int:
    """Draw a shift from round(N(0, sigma)), clamped into the legal range."""
    delay = int(round(rng.normal(0.0, sigma)))
    limit = n_frames - 1
    return max(-limit, min(limit, delay))


def mixup(x1: FeatureGrid, x2: FeatureGrid, lam: float) -> FeatureGrid:
    """Element-wise convex combination ``lam*x1 + (1-lam)*x2``."""
    if x1.data.shape != x2.data.shape:
        raise InvalidInputError(
            f"mixup needs matching shapes, got {x1.data.shape} vs {x2.data.shape}"
        )
    if not 0.0 <= lam <= 1.0:
        raise InvalidInputError(f"mixing weight must be in [0, 1], got {lam}")
    return FeatureGrid(lam * x1.data + (1.0 - lam) * x2.data, x1.fps)


__all__ = ["add_noise_snr", "frame_shift", "sample_frame_delay", "mixup"]
