import numpy as np
import pytest

from sedlab.errors import InvalidInputError
from sedlab.features import (
    FeatureGrid,
    PreprocConfig,
    hz_to_mel,
    log_mel,
    mel_filterbank,
    mel_to_hz,
    silence_level,
)

# Small front end so the quadratic-cost DFT oracle stays fast.
SMALL = PreprocConfig(sample_rate=8000, fft_len=256, hop=64, n_mel=10,
                      mel_fmin=0.0, mel_fmax=4000.0, clip_len=0.2)


def naive_dft_magnitude(frame):
    """O(N^2) DFT magnitudes, independent of numpy's FFT."""
    n = frame.shape[0]
    k = np.arange(n // 2 + 1)
    t = np.arange(n)
    basis = np.exp(-2j * np.pi * np.outer(k, t) / n)
    return np.abs(basis @ frame)


class TestLogMel:
    def test_silence_hits_floor(self):
        cfg = PreprocConfig()
        grid = log_mel(np.zeros(1000), cfg)
        expected = 2.0 * np.log(1.0e-5)
        np.testing.assert_allclose(grid.data, expected, atol=1e-12)
        assert abs(expected - (-23.0259)) < 1e-3

    def test_floor_constant_default(self):
        assert PreprocConfig().floor_eps == 1.0e-5

    def test_output_geometry(self):
        cfg = PreprocConfig()
        grid = log_mel(np.zeros(10), cfg)
        assert grid.n_frames == cfg.n_frames
        assert grid.n_channels == cfg.n_mel
        assert grid.fps == pytest.approx(16000 / 255)

    def test_empty_waveform_rejected(self):
        with pytest.raises(InvalidInputError):
            log_mel(np.array([]), SMALL)

    def test_finite_for_finite_input(self, rng):
        wave = 50.0 * rng.standard_normal(SMALL.n_samples)
        grid = log_mel(wave, SMALL)
        assert np.all(np.isfinite(grid.data))

    def test_truncates_long_input(self, rng):
        wave = rng.standard_normal(3 * SMALL.n_samples)
        grid = log_mel(wave, SMALL)
        assert grid.n_frames == SMALL.n_frames

    def test_sinusoid_peaks_in_its_band_vs_dft_oracle(self):
        # Tone at the center frequency of mel band 4.
        mel_pts = np.linspace(hz_to_mel(SMALL.mel_fmin), hz_to_mel(SMALL.mel_fmax), SMALL.n_mel + 2)
        centers = mel_to_hz(mel_pts)[1:-1]
        tone_hz = centers[4]
        t = np.arange(SMALL.n_samples) / SMALL.sample_rate
        wave = np.sin(2 * np.pi * tone_hz * t)
        grid = log_mel(wave, SMALL)

        # Band 4 holds the per-frame maximum (skip edge frames with little signal).
        for m in range(2, SMALL.n_frames - 2):
            assert int(np.argmax(grid.data[m])) == 4

        # Cell values agree with a naive DFT recomputation of one frame.
        half = SMALL.fft_len // 2
        padded = np.concatenate([np.zeros(half), wave, np.zeros(half)])
        m = SMALL.n_frames // 2
        frame = padded[m * SMALL.hop:m * SMALL.hop + SMALL.fft_len] * np.hanning(SMALL.fft_len)
        mel_mag = mel_filterbank(SMALL) @ naive_dft_magnitude(frame)
        expected = np.log(np.maximum(mel_mag**2, SMALL.floor_eps**2))
        np.testing.assert_allclose(grid.data[m], expected, rtol=1e-9, atol=1e-9)


class TestConfigValidation:
    def test_hop_must_be_smaller_than_fft(self):
        with pytest.raises(InvalidInputError):
            PreprocConfig(fft_len=256, hop=256)

    def test_floor_eps_positive(self):
        with pytest.raises(InvalidInputError):
            PreprocConfig(floor_eps=0.0)

    def test_silence_level_helper(self):
        assert silence_level(SMALL) == pytest.approx(2 * np.log(SMALL.floor_eps))


class TestFeatureGrid:
    def test_rejects_nan(self):
        with pytest.raises(InvalidInputError):
            FeatureGrid(np.array([[np.nan, 0.0]]), fps=10.0)

    def test_rejects_empty(self):
        with pytest.raises(InvalidInputError):
            FeatureGrid(np.zeros((0, 4)), fps=10.0)
