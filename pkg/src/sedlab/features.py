"""Waveform-to-feature front end.

A waveform is padded or cut to a fixed clip length, short-time Fourier
transformed, integrated through a triangular mel filterbank, squared and
floored, and log-compressed.  Silence therefore maps to ``2*log(floor_eps)``
rather than ``-inf``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .validation import as_float_array, check_finite

_LOG_FLOOR_EPS_DEFAULT = 1.0e-5


@dataclass(frozen=True)
class PreprocConfig:
    """Front-end settings.

    Defaults follow the usual 16 kHz domestic-audio setup: 2048-sample
    frames, 255-sample hop, 128 mel channels spanning 0-8 kHz, and a
    1.0e-5 magnitude floor before the log.
    """

    sample_rate: int = 16000
    fft_len: int = 2048
    hop: int = 255
    n_mel: int = 128
    mel_fmin: float = 0.0
    mel_fmax: float = 8000.0
    floor_eps: float = _LOG_FLOOR_EPS_DEFAULT
    clip_len: float = 10.0

    def __post_init__(self):
        if self.hop >= self.fft_len:
            raise InvalidInputError("hop must be smaller than fft_len")
        if self.floor_eps <= 0:
            raise InvalidInputError("floor_eps must be positive")
        if self.n_mel < 1:
            raise InvalidInputError("n_mel must be at least 1")
        if self.mel_fmax <= self.mel_fmin:
            raise InvalidInputError("mel_fmax must exceed mel_fmin")
        if self.clip_len <= 0 or self.sample_rate <= 0:
            raise InvalidInputError("clip_len and sample_rate must be positive")

    @property
    def fps(self) -> float:
        """Output frames per second."""
        return self.sample_rate / self.hop

    @property
    def n_samples(self) -> int:
        return int(round(self.clip_len * self.sample_rate))

    @property
    def n_frames(self) -> int:
        # Centered frames at multiples of the hop, one extra for sample 0.
        return 1 + self.n_samples // self.hop


@dataclass
class FeatureGrid:
    """frames x channels matrix of real-valued features with a frame rate."""

    data: np.ndarray
    fps: float

    def __post_init__(self):
        self.data = as_float_array(self.data, "FeatureGrid.data", ndim=2)
        check_finite(self.data, "FeatureGrid.data")
        if self.data.shape[0] < 1:
            raise InvalidInputError("FeatureGrid needs at least one frame")
        if not self.fps > 0:
            raise InvalidInputError("fps must be positive")

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    def copy(self) -> "FeatureGrid":
        return FeatureGrid(self.data.copy(), self.fps)


def hz_to_mel(f):
    """Standard mel scale."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: PreprocConfig) -> np.ndarray:
    """Triangular, area-normalized mel filters over the rfft bins.

    Returns an (n_mel, fft_len//2 + 1) weight matrix.
    """
    n_bins = cfg.fft_len // 2 + 1
    bin_freqs = np.arange(n_bins) * cfg.sample_rate / cfg.fft_len
    mel_pts = np.linspace(hz_to_mel(cfg.mel_fmin), hz_to_mel(cfg.mel_fmax), cfg.n_mel + 2)
    hz_pts = mel_to_hz(mel_pts)

    weights = np.zeros((cfg.n_mel, n_bins))
    for n in range(cfg.n_mel):
        lo, center, hi = hz_pts[n], hz_pts[n + 1], hz_pts[n + 2]
        up = (bin_freqs - lo) / max(center - lo, 1e-12)
        down = (hi - bin_freqs) / max(hi - center, 1e-12)
        tri = np.maximum(0.0, np.minimum(up, down))
        # Unit area in Hz so channel magnitudes are comparable across widths.
        weights[n] = tri * (2.0 / (hi - lo))
    return weights


def _frame_signal(wave: np.ndarray, cfg: PreprocConfig) -> np.ndarray:
    """Center-padded framing: frame m spans samples around m*hop."""
    half = cfg.fft_len // 2
    padded = np.concatenate([np.zeros(half), wave, np.zeros(half)])
    n_frames = cfg.n_frames
    idx = np.arange(cfg.fft_len)[None, :] + cfg.hop * np.arange(n_frames)[:, None]
    return padded[idx]


def log_mel(waveform, cfg: PreprocConfig) -> FeatureGrid:
    """Log-mel spectrogram of a mono waveform.

    The waveform is zero-padded or truncated to ``cfg.clip_len`` seconds.
    Each cell is ``log(max(P**2, floor_eps**2))`` where ``P`` is the
    mel-integrated STFT magnitude, so output is finite for any finite input.
    """
    wave = as_float_array(waveform, "waveform", ndim=1)
    if wave.size == 0:
        raise InvalidInputError("waveform is empty")
    check_finite(wave, "waveform")

    n = cfg.n_samples
    if wave.size < n:
        wave = np.concatenate([wave, np.zeros(n - wave.size)])
    elif wave.size > n:
        wave = wave[:n]

    frames = _frame_signal(wave, cfg)
    window = np.hanning(cfg.fft_len)
    spectrum = np.abs(np.fft.rfft(frames * window, axis=1))
    mel_mag = spectrum @ mel_filterbank(cfg).T
    floored = np.maximum(mel_mag**2, cfg.floor_eps**2)
    return FeatureGrid(np.log(floored), fps=cfg.fps)


# Single source of truth for the silence level log(eps**2).
def silence_level(cfg: PreprocConfig) -> float:
    return 2.0 * float(np.log(cfg.floor_eps))


__all__ = [
    "PreprocConfig",
    "FeatureGrid",
    "hz_to_mel",
    "mel_to_hz",
    "mel_filterbank",
    "log_mel",
    "silence_level",
]
