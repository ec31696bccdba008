from .audio import (
    AllSilentError,
    Waveform,
    istft,
    normalize,
    reduce_noise,
    resample,
    stft,
    trim_silence,
)
from .config import DspConfig
from .features import (
    MelCepstrogram,
    MelSpectrogram,
    filter_center_frequencies,
    griffin_lim,
    hertz_to_mel,
    invert_mel_cepstrum,
    mel_cepstrum,
    mel_filterbank,
    mel_spectrogram,
    mel_to_hertz,
    mel_to_linear,
    spectral_convergence,
)
from .fileio import (
    FeatureFormatError,
    read_mcep,
    read_wav,
    write_mcep,
    write_wav,
)

__all__ = [
    "AllSilentError",
    "DspConfig",
    "FeatureFormatError",
    "MelCepstrogram",
    "MelSpectrogram",
    "Waveform",
    "filter_center_frequencies",
    "griffin_lim",
    "hertz_to_mel",
    "invert_mel_cepstrum",
    "istft",
    "mel_cepstrum",
    "mel_filterbank",
    "mel_spectrogram",
    "mel_to_hertz",
    "mel_to_linear",
    "normalize",
    "read_mcep",
    "read_wav",
    "reduce_noise",
    "resample",
    "spectral_convergence",
    "stft",
    "trim_silence",
    "write_mcep",
    "write_wav",
]
