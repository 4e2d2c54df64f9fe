"""Spectral features: power spectrogram, mel spectrogram, spectral roll-off and chroma"""

import functools
import logging
import warnings
from pathlib import Path
from typing import Dict, Union

import librosa
import numpy as np
import scipy.fft
import scipy.signal
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import AudioError, ConfigError
from .models import (
    AudioClip,
    ChromaConfig,
    ChromaNorm,
    FeatureConfig,
    FeatureKind,
    FeatureMatrix,
    RolloffConfig,
    StftConfig,
    WindowType,
)
from .utils import atomic_path

logger = logging.getLogger(__name__)

PITCH_CLASSES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")
FEATURE_FORMAT_VERSION = 1
# Relative slack of the roll-off threshold
ROLLOFF_RTOL = 1e-12


def _window(cfg: StftConfig) -> np.ndarray:
    if cfg.window is WindowType.HANN:
        return scipy.signal.get_window("hann", cfg.window_size, fftbins=True)
    return np.ones(cfg.window_size)


def _require_kind(spec: FeatureMatrix, kind: FeatureKind):
    if spec.kind is not kind:
        raise ConfigError(f"Expected a {kind.value} matrix, got {spec.kind.value}")


def _bin_frequencies(spec: FeatureMatrix) -> np.ndarray:
    if spec.bin_labels is not None:
        return np.asarray(spec.bin_labels, dtype=np.float64)
    if not spec.sample_rate:
        raise ConfigError("Power spectrogram carries neither bin frequencies nor a sample rate")
    return librosa.fft_frequencies(sr=spec.sample_rate, n_fft=2 * (spec.bin_count - 1))


def stft_power(clip: AudioClip, channel: int = 0, cfg: StftConfig = None) -> FeatureMatrix:
    """One-sided energy spectrogram of one channel.

    Frame ``t`` covers samples ``[t * hop, t * hop + window)``; input shorter
    than one window gives a single zero-padded frame. Bin ``k`` holds
    ``c_k * |X_k|^2 / fft_size`` with ``c_k = 2`` except at DC and Nyquist,
    so the bins of a rectangular frame sum to the frame's energy.

    :raises ChannelError: if ``channel`` is out of range
    """
    cfg = cfg or StftConfig()
    x = clip.channel(channel)
    if x.size < cfg.window_size:
        x = np.pad(x, (0, cfg.window_size - x.size))
    frames = sliding_window_view(x, cfg.window_size)[:: cfg.hop_size]
    spectrum = scipy.fft.rfft(frames * _window(cfg), n=cfg.fft_size, axis=1)
    power = (spectrum.real**2 + spectrum.imag**2) / cfg.fft_size
    power[:, 1:-1] *= 2.0
    return FeatureMatrix(
        values=power,
        kind=FeatureKind.POWER_SPECTROGRAM,
        frame_rate=clip.sample_rate / cfg.hop_size,
        sample_rate=clip.sample_rate,
        bin_labels=librosa.fft_frequencies(sr=clip.sample_rate, n_fft=cfg.fft_size),
    )


@functools.lru_cache(maxsize=32)
def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int, fmin: float, fmax: float) -> np.ndarray:
    """Triangular (HTK scale) filterbank, ``n_mels x (n_fft/2 + 1)``, rows summing to one.

    Bands too narrow to cover any FFT bin stay all-zero.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        weights = librosa.filters.mel(
            sr=sample_rate, n_fft=n_fft, n_mels=n_mels, fmin=fmin, fmax=fmax, htk=True, norm=None
        ).astype(np.float64)
    sums = weights.sum(axis=1, keepdims=True)
    empty = int(np.count_nonzero(sums[:, 0] == 0))
    if empty:
        logger.warning("%d of %d mel bands cover no FFT bin; increase fft_size or reduce n_mels", empty, n_mels)
    weights = np.divide(weights, sums, out=np.zeros_like(weights), where=sums > 0)
    weights.setflags(write=False)
    return weights


def mel_spectrogram(spec: FeatureMatrix, n_mels: int = 64, fmin: float = 20.0, fmax: float = None) -> FeatureMatrix:
    """Map a power spectrogram through a mel filterbank.

    :param fmax: Upper band edge, ``None`` for Nyquist
    :raises ConfigError: unless ``0 <= fmin < fmax <= Nyquist``
    """
    _require_kind(spec, FeatureKind.POWER_SPECTROGRAM)
    if not spec.sample_rate:
        raise ConfigError("Mel spectrogram needs the sample rate of the power spectrogram")
    nyquist = spec.sample_rate / 2
    fmax = nyquist if fmax is None else float(fmax)
    if not 0 <= fmin < fmax <= nyquist:
        raise ConfigError(f"Invalid mel band edges: fmin={fmin} fmax={fmax} (Nyquist {nyquist})")
    weights = mel_filterbank(spec.sample_rate, 2 * (spec.bin_count - 1), int(n_mels), float(fmin), fmax)
    return FeatureMatrix(
        values=spec.values @ weights.T,
        kind=FeatureKind.MEL,
        frame_rate=spec.frame_rate,
        sample_rate=spec.sample_rate,
        bin_labels=librosa.mel_frequencies(n_mels=n_mels + 2, fmin=fmin, fmax=fmax, htk=True)[1:-1],
    )


def spectral_rolloff(spec: FeatureMatrix, cfg: RolloffConfig = None) -> FeatureMatrix:
    """Per frame, centre frequency of the first bin at which the cumulative
    energy reaches ``kappa`` of the frame total. Silent frames give 0 Hz.
    """
    cfg = cfg or RolloffConfig()
    _require_kind(spec, FeatureKind.POWER_SPECTROGRAM)
    freqs = _bin_frequencies(spec)
    cumulative = np.cumsum(spec.values, axis=1)
    # relative slack so a threshold that lands exactly on a bin is not lost to rounding
    total = cumulative[:, -1:]
    reached = cumulative >= cfg.kappa * total * (1 - ROLLOFF_RTOL)
    rolloff = freqs[np.argmax(reached, axis=1)]
    rolloff[total[:, 0] <= 0] = 0.0
    return FeatureMatrix(
        values=rolloff[:, np.newaxis],
        kind=FeatureKind.ROLLOFF,
        frame_rate=spec.frame_rate,
        sample_rate=spec.sample_rate,
        bin_labels=np.array(["rolloff_hz"]),
    )


def pitch_class_map(freqs: np.ndarray, cfg: ChromaConfig) -> np.ndarray:
    """``bins x 12`` one-hot matrix assigning each bin to its nearest pitch class.

    Bins below ``min_freq`` map nowhere.
    """
    freqs = np.asarray(freqs, dtype=np.float64)
    mapping = np.zeros((freqs.size, 12))
    active = np.flatnonzero(freqs >= cfg.min_freq)
    semitones = np.round(12.0 * np.log2(freqs[active] / cfg.reference_a4)).astype(int)
    mapping[active, (semitones + 9) % 12] = 1.0
    return mapping


def chroma(spec: FeatureMatrix, cfg: ChromaConfig = None) -> FeatureMatrix:
    """Fold spectral energy in to the 12 pitch classes (index 0 is C, 9 is A)"""
    cfg = cfg or ChromaConfig()
    _require_kind(spec, FeatureKind.POWER_SPECTROGRAM)
    values = spec.values @ pitch_class_map(_bin_frequencies(spec), cfg)
    if cfg.normalization is ChromaNorm.L2_PER_FRAME:
        norms = np.linalg.norm(values, axis=1, keepdims=True)
        values = np.divide(values, norms, out=np.zeros_like(values), where=norms > 0)
    return FeatureMatrix(
        values=values,
        kind=FeatureKind.CHROMA,
        frame_rate=spec.frame_rate,
        sample_rate=spec.sample_rate,
        bin_labels=np.array(PITCH_CLASSES),
    )


def extract_features(clip: AudioClip, cfg: FeatureConfig = None) -> Dict[FeatureKind, FeatureMatrix]:
    """Mel, roll-off and chroma matrices of the configured channel"""
    cfg = cfg or FeatureConfig()
    spec = stft_power(clip, cfg.channel, cfg.stft)
    return {
        FeatureKind.MEL: mel_spectrogram(spec, cfg.mel.n_mels, cfg.mel.fmin, cfg.mel.fmax),
        FeatureKind.ROLLOFF: spectral_rolloff(spec, cfg.rolloff),
        FeatureKind.CHROMA: chroma(spec, cfg.chroma),
    }


def summary_length(cfg: FeatureConfig) -> int:
    """Length of the vector :func:`feature_summary` returns for ``cfg``"""
    length = 2 * cfg.mel.n_mels
    if cfg.feature_set.uses_rolloff:
        length += 2
    if cfg.feature_set.uses_chroma:
        length += 24
    return length


def feature_summary(clip: AudioClip, cfg: FeatureConfig = None) -> np.ndarray:
    """Fixed-length clip descriptor.

    Mean and standard deviation over frames of the log-compressed mel
    spectrogram, followed by those of the roll-off and chroma features when
    the configured feature set includes them.

    :raises AudioError: for an empty clip
    """
    cfg = cfg or FeatureConfig()
    if clip.frame_count == 0:
        raise AudioError("Cannot summarise an empty clip")
    features = extract_features(clip, cfg)
    mel = np.log1p(features[FeatureKind.MEL].values)
    blocks = [mel.mean(axis=0), mel.std(axis=0)]
    if cfg.feature_set.uses_rolloff:
        rolloff = features[FeatureKind.ROLLOFF].values[:, 0]
        blocks.append(np.array([rolloff.mean(), rolloff.std()]))
    if cfg.feature_set.uses_chroma:
        pitch = features[FeatureKind.CHROMA].values
        blocks.extend([pitch.mean(axis=0), pitch.std(axis=0)])
    return np.concatenate(blocks)


def save_feature_matrix(matrix: FeatureMatrix, path: Union[str, Path]):
    """Write a feature matrix as a self-describing ``.npz`` archive.

    Arrays stored: ``values`` (frames x bins), ``kind``, ``frame_rate``,
    ``sample_rate`` (0 if unknown), ``bin_labels`` (empty if absent) and
    ``format_version``.
    """
    bin_labels = matrix.bin_labels if matrix.bin_labels is not None else np.array([])
    with atomic_path(path, suffix=".npz") as tmp:
        with open(tmp, "wb") as file:
            np.savez(
                file,
                values=matrix.values,
                kind=np.array(matrix.kind.value),
                frame_rate=np.array(matrix.frame_rate),
                sample_rate=np.array(matrix.sample_rate or 0),
                bin_labels=bin_labels,
                format_version=np.array(FEATURE_FORMAT_VERSION),
            )


def load_feature_matrix(path: Union[str, Path]) -> FeatureMatrix:
    """Read a matrix written by :func:`save_feature_matrix`"""
    with np.load(path, allow_pickle=False) as archive:
        version = int(archive["format_version"])
        if version != FEATURE_FORMAT_VERSION:
            raise ConfigError(f"{path}: unsupported feature format version {version}")
        bin_labels = archive["bin_labels"]
        return FeatureMatrix(
            values=archive["values"],
            kind=FeatureKind(str(archive["kind"])),
            frame_rate=float(archive["frame_rate"]),
            sample_rate=int(archive["sample_rate"]) or None,
            bin_labels=bin_labels if bin_labels.size else None,
        )
