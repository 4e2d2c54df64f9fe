import numpy as np
import pytest

from s5kit.exceptions import AudioError, ChannelError, ConfigError
from s5kit.features import (
    PITCH_CLASSES,
    chroma,
    extract_features,
    feature_summary,
    load_feature_matrix,
    mel_spectrogram,
    save_feature_matrix,
    spectral_rolloff,
    stft_power,
    summary_length,
)
from s5kit.models import (
    AudioClip,
    ChromaConfig,
    ChromaNorm,
    FeatureConfig,
    FeatureKind,
    FeatureMatrix,
    FeatureSet,
    RolloffConfig,
    StftConfig,
    WindowType,
)

from .conftest import sine

RECT_256 = StftConfig(fft_size=256, window_size=256, hop_size=256, window=WindowType.RECTANGULAR)


def power_matrix(values, sample_rate=32000):
    return FeatureMatrix(np.atleast_2d(values), FeatureKind.POWER_SPECTROGRAM, 100.0, sample_rate=sample_rate)


def brute_force_power(frame):
    n = frame.size
    k = np.arange(n // 2 + 1)[:, np.newaxis]
    spectrum = np.exp(-2j * np.pi * k * np.arange(n) / n) @ frame
    power = np.abs(spectrum) ** 2 / n
    power[1:-1] *= 2
    return power


def test_stft_matches_direct_dft():
    """Each frame matches a direct DFT of the same samples"""
    rng = np.random.default_rng(11)
    clip = AudioClip(rng.uniform(-1, 1, 100 * 256), 8000)
    spec = stft_power(clip, cfg=RECT_256)
    assert spec.kind is FeatureKind.POWER_SPECTROGRAM
    assert spec.values.shape == (100, 129)
    x = clip.channel(0)
    for t in range(100):
        expected = brute_force_power(x[t * 256 : (t + 1) * 256])
        np.testing.assert_allclose(spec.values[t], expected, rtol=1e-6, atol=1e-9)


def test_stft_parseval():
    """Bins of a rectangular frame sum to the frame energy"""
    rng = np.random.default_rng(12)
    clip = AudioClip(rng.standard_normal(2048) * 0.2, 8000)
    spec = stft_power(clip, cfg=RECT_256)
    frames = clip.channel(0).reshape(-1, 256)
    np.testing.assert_allclose(spec.values.sum(axis=1), (frames**2).sum(axis=1), rtol=1e-6)


def test_stft_energy_in_bin():
    """A sine exactly on bin k puts its energy in bin k"""
    clip = sine(10 * 8000 / 256, duration=256 / 8000, amp=1.0)
    spec = stft_power(clip, cfg=RECT_256)
    frame = spec.values[0]
    assert frame[10] >= 0.99 * frame.sum()


def test_stft_framing():
    """Short input gives one padded frame; longer input one frame per hop"""
    cfg = StftConfig(fft_size=512, window_size=400, hop_size=160)
    assert stft_power(AudioClip(np.ones(100), 16000), cfg=cfg).frame_count == 1
    spec = stft_power(AudioClip(np.ones(16000), 16000), cfg=cfg)
    assert spec.frame_count == 1 + (16000 - 400) // 160
    assert spec.bin_count == 257
    assert spec.frame_rate == pytest.approx(100.0)
    assert spec.bin_labels[-1] == pytest.approx(8000.0)


def test_stft_zero_clip():
    """Silence gives an all-zero spectrogram"""
    spec = stft_power(AudioClip(np.zeros(4096), 8000))
    assert not spec.values.any()


def test_stft_channel_selection():
    """Features are computed on the chosen channel"""
    clip = AudioClip(np.stack([np.zeros(2048), np.ones(2048)]), 8000)
    assert not stft_power(clip, channel=0).values.any()
    assert stft_power(clip, channel=1).values.any()
    with pytest.raises(ChannelError):
        stft_power(clip, channel=2)


def test_stft_config_validation():
    """fft_size must be a power of two covering the window"""
    with pytest.raises(ConfigError):
        StftConfig(fft_size=1000)
    with pytest.raises(ConfigError):
        StftConfig(fft_size=512, window_size=1024)
    with pytest.raises(ConfigError):
        StftConfig(hop_size=0)


def test_mel_flat_spectrum():
    """A flat unit spectrum gives 1 in every mel band"""
    mel = mel_spectrogram(power_matrix(np.ones((2, 513))), n_mels=16)
    assert mel.kind is FeatureKind.MEL
    assert mel.values.shape == (2, 16)
    np.testing.assert_allclose(mel.values, 1.0)


def test_mel_zero_spectrum():
    """A zero spectrum gives zero mel energies"""
    mel = mel_spectrogram(power_matrix(np.zeros((1, 513))))
    assert not mel.values.any()


def test_mel_single_peak():
    """A single spectral peak lights up at most two neighbouring bands"""
    values = np.zeros(513)
    values[64] = 1.0
    mel = mel_spectrogram(power_matrix(values), n_mels=32)
    active = np.flatnonzero(mel.values[0])
    assert 1 <= active.size <= 2
    assert active.size == 1 or active[1] == active[0] + 1
    centres = mel.bin_labels[active]
    assert np.all(np.abs(centres - 2000.0) < 600.0)


def test_mel_band_edges():
    """Band edges must satisfy 0 <= fmin < fmax <= Nyquist"""
    spec = power_matrix(np.ones(513))
    with pytest.raises(ConfigError):
        mel_spectrogram(spec, fmax=20000)
    with pytest.raises(ConfigError):
        mel_spectrogram(spec, fmin=4000, fmax=4000)


def test_mel_requires_power_spectrogram():
    """Mel needs a power spectrogram as input"""
    rolloff = FeatureMatrix(np.zeros((1, 1)), FeatureKind.ROLLOFF, 100.0, sample_rate=32000)
    with pytest.raises(ConfigError):
        mel_spectrogram(rolloff)


def test_rolloff_single_bin():
    """All energy in one bin puts the roll-off there for any kappa"""
    values = np.zeros(513)
    values[100] = 3.0
    spec = power_matrix(values)
    for kappa in (0.1, 0.5, 0.85, 1.0):
        rolloff = spectral_rolloff(spec, RolloffConfig(kappa))
        assert rolloff.values[0, 0] == pytest.approx(100 * 31.25)


@pytest.mark.parametrize("magnitude", [1.0, 0.37])
@pytest.mark.parametrize("bins", [7, 60, 80, 200, 513, 1199])
@pytest.mark.parametrize("percent", [50, 85, 90, 95])
def test_rolloff_flat_frame(bins, magnitude, percent):
    """A flat frame of K bins rolls off at bin ceil(kappa K) - 1"""
    spec = FeatureMatrix(
        np.full((1, bins), magnitude), FeatureKind.POWER_SPECTROGRAM, 100.0, bin_labels=np.arange(bins, dtype=float)
    )
    rolloff = spectral_rolloff(spec, RolloffConfig(kappa=percent / 100))
    assert rolloff.kind is FeatureKind.ROLLOFF
    assert rolloff.values[0, 0] == -(-percent * bins // 100) - 1


def test_rolloff_flat_frame_hz():
    """On a 1024-point spectrum at 32 kHz the default kappa lands on bin 436"""
    rolloff = spectral_rolloff(power_matrix(np.ones(513)))
    assert rolloff.values[0, 0] == pytest.approx(436 * 31.25)


def test_rolloff_silent_frame():
    """Silent frames roll off at 0 Hz"""
    rolloff = spectral_rolloff(power_matrix(np.zeros((3, 513))))
    assert not rolloff.values.any()


def test_rolloff_monotonic_in_kappa():
    """Raising kappa never lowers the roll-off, and it stays within Nyquist"""
    rng = np.random.default_rng(5)
    spec = power_matrix(rng.random((20, 513)) ** 4)
    previous = np.zeros(20)
    for kappa in (0.1, 0.3, 0.5, 0.7, 0.85, 0.95, 1.0):
        current = spectral_rolloff(spec, RolloffConfig(kappa)).values[:, 0]
        assert np.all(current >= previous)
        assert np.all(current <= 16000.0)
        previous = current


def test_rolloff_config_validation():
    """kappa must lie in (0, 1]"""
    with pytest.raises(ConfigError):
        RolloffConfig(0.0)
    with pytest.raises(ConfigError):
        RolloffConfig(1.5)


@pytest.mark.parametrize("freq", [440.0, 880.0, 220.0])
def test_chroma_a(freq):
    """Any A gives pitch class 9 in every frame"""
    spec = stft_power(sine(freq))
    pitch = chroma(spec)
    assert pitch.kind is FeatureKind.CHROMA
    assert list(pitch.bin_labels) == list(PITCH_CLASSES)
    assert np.all(np.argmax(pitch.values, axis=1) == 9)
    np.testing.assert_allclose(np.linalg.norm(pitch.values, axis=1), 1.0)


def test_chroma_silent_frame():
    """Silent frames give all-zero chroma vectors"""
    assert not chroma(power_matrix(np.zeros((2, 513)))).values.any()


def test_chroma_without_normalisation():
    """Raw chroma keeps the energy of bins above min_freq"""
    spec = stft_power(sine(440.0))
    raw = chroma(spec, ChromaConfig(normalization=ChromaNorm.NONE))
    above = spec.bin_labels >= 32.7
    np.testing.assert_allclose(raw.values.sum(axis=1), spec.values[:, above].sum(axis=1))


def test_extract_features():
    """Mel, roll-off and chroma come from one spectrogram"""
    features = extract_features(sine(1000.0))
    assert set(features) == {FeatureKind.MEL, FeatureKind.ROLLOFF, FeatureKind.CHROMA}
    frames = {matrix.frame_count for matrix in features.values()}
    assert len(frames) == 1


@pytest.mark.parametrize(
    "feature_set, length",
    [
        (FeatureSet.MEL, 128),
        (FeatureSet.MEL_ROLLOFF, 130),
        (FeatureSet.MEL_CHROMA, 152),
        (FeatureSet.MEL_ROLLOFF_CHROMA, 154),
    ],
)
def test_summary_length(feature_set, length):
    """Summary length follows the feature set"""
    cfg = FeatureConfig(feature_set=feature_set)
    assert summary_length(cfg) == length
    assert feature_summary(sine(500.0), cfg).shape == (length,)


def test_summary_deterministic():
    """Identical clips give identical summaries"""
    assert np.array_equal(feature_summary(sine(700.0)), feature_summary(sine(700.0)))


def test_summary_gain_invariant_chroma():
    """Chroma statistics do not change with a 6 dB gain"""
    clip = sine(440.0).with_samples(sine(440.0).samples + 0.2 * sine(1300.0).samples)
    louder = clip.with_samples(clip.samples * 10 ** (6 / 20))
    np.testing.assert_allclose(feature_summary(clip)[-24:], feature_summary(louder)[-24:], atol=1e-6)


def test_summary_zero_clip():
    """Silence summarises to zeros"""
    assert not feature_summary(AudioClip(np.zeros(8000), 8000)).any()


def test_summary_empty_clip():
    """Empty clips cannot be summarised"""
    with pytest.raises(AudioError):
        feature_summary(AudioClip(np.zeros((1, 0)), 8000))


def test_bright_tone_rolls_off_higher_than_low_tone():
    """A doorbell-like tone with partials above 4 kHz rolls off higher than a keyboard-like low tone"""
    sr = 16000
    bell = sum(sine(f, sr=sr, amp=0.2).samples for f in (900.0, 4500.0, 5600.0, 6800.0))
    keys = sum(sine(f, sr=sr, amp=0.2).samples for f in (262.0, 523.0, 1046.0))
    bell_rolloff = extract_features(AudioClip(bell, sr))[FeatureKind.ROLLOFF].values.mean()
    keys_rolloff = extract_features(AudioClip(keys, sr))[FeatureKind.ROLLOFF].values.mean()
    assert bell_rolloff > 4000.0 > 2000.0 > keys_rolloff


def test_feature_matrix_validation():
    """Feature matrices check shape and value ranges by kind"""
    with pytest.raises(ConfigError):
        FeatureMatrix(np.zeros((1, 2)), FeatureKind.ROLLOFF, 100.0)
    with pytest.raises(ConfigError):
        FeatureMatrix(np.full((1, 1), 9000.0), FeatureKind.ROLLOFF, 100.0, sample_rate=16000)
    with pytest.raises(ConfigError):
        FeatureMatrix(np.zeros((1, 11)), FeatureKind.CHROMA, 100.0)
    with pytest.raises(ConfigError):
        FeatureMatrix(np.zeros(5), FeatureKind.MEL, 100.0)


def test_save_and_load(tmp_path):
    """Saved matrices load back with kind, rates and bin labels"""
    pitch = chroma(stft_power(sine(440.0)))
    path = tmp_path / "clip.chroma.npz"
    save_feature_matrix(pitch, path)
    loaded = load_feature_matrix(path)
    assert loaded.kind is FeatureKind.CHROMA
    assert loaded.frame_rate == pitch.frame_rate
    assert loaded.sample_rate == 8000
    assert list(loaded.bin_labels) == list(PITCH_CLASSES)
    np.testing.assert_array_equal(loaded.values, pitch.values)
