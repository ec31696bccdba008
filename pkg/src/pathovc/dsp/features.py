"""Mel-spectrogram and mel-cepstrum extraction, inversion, and synthesis."""

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .audio import Waveform, istft, stft
from .config import DspConfig

LOG_FLOOR = 1e-10


@dataclass
class MelSpectrogram:
    frames: np.ndarray
    frame_shift: float
    sample_rate: int

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            raise ValueError("mel frames must be a T x M matrix")
        if np.any(self.frames < 0):
            raise ValueError("mel energies must be non-negative")

    @property
    def n_mels(self):
        return self.frames.shape[1]


@dataclass
class MelCepstrogram:
    frames: np.ndarray
    frame_shift: float | None = None
    sample_rate: int | None = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            raise ValueError("cepstral frames must be a T x C matrix")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("cepstral frames must be finite")

    @property
    def order(self):
        return self.frames.shape[1] - 1


def hertz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hertz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: DspConfig, normalize: bool = False) -> np.ndarray:
    """Triangular filters on the mel scale, (n_mels, fft_size//2 + 1).

    Filter m rises from mel point m-1 to a peak of 1 at point m and falls
    to zero at point m+1; normalize=True rescales each row to unit area.
    """
    n_bins = cfg.fft_size // 2 + 1
    bin_mels = hertz_to_mel(np.arange(n_bins) * cfg.sample_rate / cfg.fft_size)
    points = np.linspace(hertz_to_mel(cfg.fmin), hertz_to_mel(cfg.fmax),
                         cfg.n_mels + 2)
    fb = np.zeros((cfg.n_mels, n_bins))
    for m in range(cfg.n_mels):
        lo, mid, hi = points[m], points[m + 1], points[m + 2]
        rising = (bin_mels - lo) / (mid - lo)
        falling = (hi - bin_mels) / (hi - mid)
        fb[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    if normalize:
        areas = fb.sum(axis=1, keepdims=True)
        fb = fb / np.maximum(areas, 1e-12)
    return fb


def filter_center_frequencies(cfg: DspConfig) -> np.ndarray:
    points = np.linspace(hertz_to_mel(cfg.fmin), hertz_to_mel(cfg.fmax),
                         cfg.n_mels + 2)
    return mel_to_hertz(points[1:-1])


def mel_spectrogram(w: Waveform, cfg: DspConfig) -> MelSpectrogram:
    """Mel-weighted STFT magnitudes, time-major."""
    if w.samples.size < cfg.window_size:
        raise ValueError(
            f"waveform of {w.samples.size} samples is too short for one "
            f"{cfg.window_size}-sample analysis frame")
    mag = np.abs(stft(w.samples, cfg.fft_size, cfg.hop_size, cfg.window_size))
    mel = mag @ mel_filterbank(cfg).T
    return MelSpectrogram(mel, cfg.hop_size / w.sample_rate, w.sample_rate)


def mel_cepstrum(ms: MelSpectrogram, order: int) -> MelCepstrogram:
    """Orthonormal DCT-II of floored log mel energies, kept to order+1."""
    if order + 1 > ms.n_mels:
        raise ValueError(f"order {order} needs more than {ms.n_mels} mel bands")
    logmel = np.log(np.maximum(ms.frames, LOG_FLOOR))
    coeffs = scipy.fft.dct(logmel, type=2, norm="ortho", axis=1)[:, :order + 1]
    return MelCepstrogram(coeffs, ms.frame_shift, ms.sample_rate)


def invert_mel_cepstrum(mc: MelCepstrogram, n_mels: int) -> MelSpectrogram:
    """Zero-pad to n_mels, inverse DCT, exponentiate. Exact at full order."""
    c = mc.frames.shape[1]
    if c > n_mels:
        raise ValueError(f"{c} cepstral coefficients exceed {n_mels} mel bands")
    padded = np.pad(mc.frames, ((0, 0), (0, n_mels - c)))
    logmel = scipy.fft.idct(padded, type=2, norm="ortho", axis=1)
    shift = mc.frame_shift if mc.frame_shift is not None else 0.0
    rate = mc.sample_rate if mc.sample_rate is not None else 0
    return MelSpectrogram(np.exp(logmel), shift, rate)


def mel_to_linear(ms: MelSpectrogram, cfg: DspConfig) -> np.ndarray:
    """Approximate linear magnitudes via the weight-normalized transpose."""
    fb = mel_filterbank(cfg)
    weights = fb / np.maximum(fb.sum(axis=0, keepdims=True), 1e-12)
    return np.clip(ms.frames @ weights, 0.0, None)


def spectral_convergence(mag: np.ndarray, target: np.ndarray) -> float:
    denom = np.linalg.norm(target)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(mag - target) / denom)


def griffin_lim(ms: MelSpectrogram, cfg: DspConfig, iterations: int,
                return_convergence: bool = False):
    """Iterative phase reconstruction from a mel spectrogram.

    Zero-phase start, then alternate least-squares inversion and magnitude
    replacement; the spectral-convergence error is non-increasing. Returns
    the waveform, or (waveform, per-iteration errors) when asked.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    target = mel_to_linear(ms, cfg)
    if not np.any(target):
        t = target.shape[0]
        length = (t - 1) * cfg.hop_size + cfg.window_size if t else 0
        silent = Waveform(np.zeros(length), cfg.sample_rate)
        return (silent, [0.0] * iterations) if return_convergence else silent

    length = (target.shape[0] - 1) * cfg.hop_size + cfg.window_size
    spec = target.astype(np.complex128)
    errors = []
    x = None
    for _ in range(iterations):
        x = istft(spec, cfg.fft_size, cfg.hop_size, cfg.window_size, length)
        estimate = stft(x, cfg.fft_size, cfg.hop_size, cfg.window_size)
        mag = np.abs(estimate)
        errors.append(spectral_convergence(mag, target))
        spec = target * estimate / np.maximum(mag, 1e-12)
    out = Waveform(x, cfg.sample_rate)
    return (out, errors) if return_convergence else out
