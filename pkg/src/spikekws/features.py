"""Log mel-filterbank features: one 40-dim frame per network timestep.

Defaults target 16 kHz speech clips: 25 ms Hamming windows hopped every
10 ms through a 512-point FFT and 40 triangular mel filters, so a one
second clip yields 98 frames.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FbankConfig:
    """Feature-extraction hyperparameters."""

    sample_rate: int = 16000
    window_len: int = 400
    hop_len: int = 160
    n_filters: int = 40
    n_fft: int = 512
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = 1e-10
    normalize: bool = False

    def __post_init__(self):
        if self.window_len > self.n_fft:
            raise ValueError("window_len must not exceed n_fft")
        if self.window_len < 1 or self.hop_len < 1:
            raise ValueError("window_len and hop_len must be positive")
        if not (0 <= self.fmin < self.fmax <= self.sample_rate / 2):
            raise ValueError("need 0 <= fmin < fmax <= sample_rate/2")
        if self.n_filters < 1:
            raise ValueError("n_filters must be >= 1")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")

    def n_frames(self, n_samples):
        """Frame count for an audio length: 1 + floor((n - window) / hop)."""
        if n_samples < self.window_len:
            raise ValueError(
                f"audio has {n_samples} samples, shorter than one "
                f"{self.window_len}-sample window"
            )
        return 1 + (n_samples - self.window_len) // self.hop_len


def hz_to_mel(hz):
    """Convert Hz to mel (2595 * log10(1 + f/700))."""
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    """Convert mel back to Hz."""
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(config: FbankConfig) -> np.ndarray:
    """Build the triangular mel filter matrix, shape (n_filters, n_fft//2 + 1).

    Filter edges are spaced uniformly on the mel scale over [fmin, fmax] and
    each triangle is evaluated at the FFT bin centre frequencies, so no row
    collapses to zero as long as every filter spans at least one bin.
    """
    n_bins = config.n_fft // 2 + 1
    bin_freqs = np.arange(n_bins) * config.sample_rate / config.n_fft

    in_range = np.count_nonzero((bin_freqs >= config.fmin) & (bin_freqs <= config.fmax))
    if config.n_filters > in_range:
        raise ValueError(
            f"{config.n_filters} filters exceed the {in_range} FFT bins "
            f"available in [{config.fmin}, {config.fmax}] Hz"
        )

    edges = mel_to_hz(
        np.linspace(hz_to_mel(config.fmin), hz_to_mel(config.fmax), config.n_filters + 2)
    )
    left, center, right = edges[:-2], edges[1:-1], edges[2:]

    up = (bin_freqs[None, :] - left[:, None]) / (center - left)[:, None]
    down = (right[:, None] - bin_freqs[None, :]) / (right - center)[:, None]
    fbank = np.maximum(0.0, np.minimum(up, down))

    if np.any(fbank.sum(axis=1) <= 0.0):
        raise ValueError("a mel filter covers no FFT bin; reduce n_filters or widen the band")
    return fbank


def frame_signal(audio, config: FbankConfig) -> np.ndarray:
    """Slice audio into overlapping frames; frame t covers [t*hop, t*hop + window)."""
    audio = np.asarray(audio, dtype=np.float64)
    n_frames = config.n_frames(audio.shape[0])
    idx = np.arange(config.window_len)[None, :] + config.hop_len * np.arange(n_frames)[:, None]
    return audio[idx]


def compute_fbank(audio, config: FbankConfig = FbankConfig()) -> np.ndarray:
    """Compute log mel-filterbank features, shape (n_frames, n_filters).

    Pipeline: framing, Hamming window, magnitude-squared FFT, mel filtering,
    then log(max(x, log_floor)). With normalize=True the result is shifted
    and scaled to zero mean and unit variance per utterance.
    """
    audio = np.asarray(audio, dtype=np.float64)
    if audio.ndim != 1:
        raise ValueError("audio must be a 1-D sample array")
    if not np.all(np.isfinite(audio)):
        raise ValueError("audio contains non-finite samples")

    frames = frame_signal(audio, config) * np.hamming(config.window_len)
    power = np.abs(np.fft.rfft(frames, n=config.n_fft)) ** 2
    mel_energy = power @ mel_filterbank(config).T
    feats = np.log(np.maximum(mel_energy, config.log_floor))

    if config.normalize:
        feats = (feats - feats.mean()) / (feats.std() + 1e-12)
    return feats
