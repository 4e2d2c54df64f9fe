"""Data model shared by all toolkit modules"""

import math
from dataclasses import dataclass, field
from enum import Enum, unique
from types import MappingProxyType
from typing import Any, Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .exceptions import AudioError, BackendValidationError, ChannelError, ConfigError, VocabularyError


class DocEnum(Enum):
    def __new__(cls, value, doc=None):
        self = object.__new__(cls)  # calling super().__new__(value) here would fail
        self._value_ = value
        if doc is not None:
            self.__doc__ = doc
        return self


def _as_enum(enum_cls, value):
    """Accept either an enum member or its string value (as found in YAML configs)"""
    if isinstance(value, enum_cls):
        return value
    try:
        return enum_cls(value)
    except ValueError:
        choices = ", ".join(m.value for m in enum_cls)
        raise ConfigError(f"Invalid {enum_cls.__name__} value: {value!r} (valid options: {choices})") from None


@unique
class WavFormat(DocEnum):
    """Sample formats used when writing WAV files"""

    PCM16 = "pcm16", "16-bit signed integer PCM"
    PCM24 = "pcm24", "24-bit signed integer PCM"
    FLOAT32 = "float32", "32-bit IEEE float"


@unique
class WindowType(DocEnum):
    """Analysis window applied to every STFT frame"""

    HANN = "hann", "Periodic Hann window"
    RECTANGULAR = "rectangular", "No tapering (boxcar)"


@unique
class FeatureKind(DocEnum):
    """What the bins of a :class:`FeatureMatrix` hold"""

    POWER_SPECTROGRAM = "power_spectrogram", "One-sided energy spectrum, fft_size/2 + 1 bins"
    MEL = "mel", "Triangular mel filterbank energies"
    ROLLOFF = "rolloff", "Spectral roll-off frequency in Hz, one bin"
    CHROMA = "chroma", "Energy per pitch class, 12 bins, C first"


@unique
class ChromaNorm(DocEnum):
    """Per-frame normalisation of chroma vectors"""

    L2_PER_FRAME = "l2_per_frame", "Unit L2 norm per frame, silent frames stay zero"
    NONE = "none", "Raw pitch-class energies"


@unique
class FeatureSet(DocEnum):
    """Feature blocks concatenated into a clip summary vector.

    The four values mirror the four tagging systems that are ensembled:
    mel-only baseline, and the mel block extended with roll-off, chroma, or both.
    """

    MEL = "mel", "Mel statistics only"
    MEL_ROLLOFF = "mel+rolloff", "Mel and spectral roll-off statistics"
    MEL_CHROMA = "mel+chroma", "Mel and chroma statistics"
    MEL_ROLLOFF_CHROMA = "mel+rolloff+chroma", "Mel, spectral roll-off and chroma statistics"

    @property
    def uses_rolloff(self) -> bool:
        return "rolloff" in self.value

    @property
    def uses_chroma(self) -> bool:
        return "chroma" in self.value


@unique
class RankBy(DocEnum):
    """Score used to re-rank verified labels"""

    RETAG_SCORE = "retag_score", "Score of the label on its own separated stem"
    ORIGINAL_SCORE = "original_score", "Score of the label on the mixture"


@unique
class EmptyFallback(DocEnum):
    """What to emit when no candidate survives verification"""

    ORIGINAL_TOP1 = "original_top1", "Single most confident mixture label"
    ORIGINAL_TOPK = "original_topk", "Top-k mixture labels, as if no correction ran"


@unique
class SeparatorFallback(DocEnum):
    """Oracle separator answer for a label that is not in the clip"""

    SILENCE = "silence", "All-zero stem"
    MIXTURE = "mixture", "The unprocessed mixture"


@unique
class SourceFlag(DocEnum):
    """Audit flags attached to a source record"""

    HETEROGENEOUS = "heterogeneous", "Judged perceptually out of class by a listener"
    ADDED_EXTERNAL = "added_external", "Supplementary sample from an external collection"


DEFAULT_LABELS = (
    "AlarmClock",
    "BicycleBell",
    "Blender",
    "Buzzer",
    "Clapping",
    "Cough",
    "CupboardOpenClose",
    "Dishes",
    "Doorbell",
    "FootSteps",
    "HairDryer",
    "MechanicalFans",
    "MusicalKeyboard",
    "Percussion",
    "Pour",
    "Speech",
    "Typing",
    "VacuumCleaner",
)


@dataclass(frozen=True)
class ClassVocabulary:
    """Ordered, duplicate-free list of class names.

    The position of a label is its index everywhere in the toolkit (score
    vectors, tie breaking, report ordering).

    :param labels: Class names, defaults to the 18 sound event classes
    :type labels: tuple
    """

    labels: Tuple[str, ...] = DEFAULT_LABELS
    _index: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        labels = tuple(self.labels)
        if not labels:
            raise ConfigError("Vocabulary must contain at least one label")
        if len(set(labels)) != len(labels):
            raise ConfigError("Vocabulary labels must be unique")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "_index", MappingProxyType({label: i for i, label in enumerate(labels)}))

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self) -> Iterator[str]:
        return iter(self.labels)

    def __contains__(self, label) -> bool:
        return label in self._index

    def index(self, label: str) -> int:
        """Position of ``label`` in the vocabulary

        :raises VocabularyError: if the label is unknown
        """
        try:
            return self._index[label]
        except KeyError:
            raise VocabularyError(f"Unknown class label: {label!r}") from None

    def validate(self, labels: Iterable[str]) -> FrozenSet[str]:
        """Return ``labels`` as a set, checking every one is in the vocabulary"""
        labels = frozenset(labels)
        for label in labels:
            self.index(label)
        return labels

    def ordered(self, labels: Iterable[str]) -> List[str]:
        """Sort labels in vocabulary order"""
        return sorted(set(labels), key=self.index)


DEFAULT_VOCABULARY = ClassVocabulary()


@dataclass(frozen=True)
class ClipOrigin:
    """Where a clip came from.

    Mixtures read from a corpus carry their clip ID with ``label=None``;
    separated stems carry the clip ID and the label they were separated for.
    Only oracle backends look at this.
    """

    clip_id: str
    label: Optional[str] = None


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Immutable multichannel sample buffer.

    :param samples: Array shaped ``(channels, frames)``; a 1-D array is taken as mono.
        Stored as read-only ``float32``.
    :type samples: numpy.ndarray
    :param sample_rate: Sampling rate in Hz
    :type sample_rate: int
    :param origin: Optional provenance tag
    :type origin: :class:`ClipOrigin`
    """

    samples: np.ndarray
    sample_rate: int
    origin: Optional[ClipOrigin] = None

    def __post_init__(self):
        data = np.array(self.samples, dtype=np.float32)
        if data.ndim == 1:
            data = data[np.newaxis, :]
        if data.ndim != 2 or data.shape[0] < 1:
            raise AudioError(f"Samples must be shaped (channels, frames), got {data.shape}")
        if int(self.sample_rate) <= 0:
            raise AudioError(f"Sample rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(data)):
            raise AudioError("Samples must be finite")
        data.setflags(write=False)
        object.__setattr__(self, "samples", data)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def channel_count(self) -> int:
        return self.samples.shape[0]

    @property
    def frame_count(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        """Length in seconds"""
        return self.frame_count / self.sample_rate

    def channel(self, index: int) -> np.ndarray:
        """Return one channel as a ``float64`` copy

        :raises ChannelError: if ``index`` is out of range
        """
        if not 0 <= index < self.channel_count:
            raise ChannelError(f"Channel {index} out of range for a {self.channel_count}-channel clip")
        return self.samples[index].astype(np.float64)

    def with_samples(self, samples: np.ndarray) -> "AudioClip":
        """New clip with the same rate and origin"""
        return AudioClip(samples, self.sample_rate, self.origin)

    def with_origin(self, origin: Optional[ClipOrigin]) -> "AudioClip":
        return AudioClip(self.samples, self.sample_rate, origin)

    @classmethod
    def silence(
        cls, frame_count: int, sample_rate: int, channel_count: int = 1, origin: ClipOrigin = None
    ) -> "AudioClip":
        return cls(np.zeros((channel_count, frame_count), dtype=np.float32), sample_rate, origin)


@dataclass(frozen=True)
class StftConfig:
    """Short-time Fourier transform settings

    Defaults give 10 ms hops at 32 kHz.
    """

    fft_size: int = 1024
    window_size: int = 1024
    hop_size: int = 320
    window: WindowType = WindowType.HANN

    def __post_init__(self):
        object.__setattr__(self, "window", _as_enum(WindowType, self.window))
        if self.fft_size <= 0 or self.fft_size & (self.fft_size - 1):
            raise ConfigError(f"fft_size must be a positive power of two, got {self.fft_size}")
        if not 0 < self.hop_size <= self.window_size <= self.fft_size:
            raise ConfigError(
                f"Expected 0 < hop_size <= window_size <= fft_size, "
                f"got hop={self.hop_size} window={self.window_size} fft={self.fft_size}"
            )


@dataclass(frozen=True)
class MelConfig:
    """Mel filterbank settings; ``fmax=None`` means Nyquist"""

    n_mels: int = 64
    fmin: float = 20.0
    fmax: Optional[float] = None

    def __post_init__(self):
        if self.n_mels < 1:
            raise ConfigError(f"n_mels must be positive, got {self.n_mels}")
        if self.fmin < 0 or (self.fmax is not None and self.fmax <= self.fmin):
            raise ConfigError(f"Invalid mel band edges: fmin={self.fmin} fmax={self.fmax}")


@dataclass(frozen=True)
class RolloffConfig:
    """Spectral roll-off settings.

    :param kappa: Fraction of the frame energy that must lie at or below the roll-off bin
    """

    kappa: float = 0.85

    def __post_init__(self):
        if not 0.0 < self.kappa <= 1.0:
            raise ConfigError(f"kappa must lie in (0, 1], got {self.kappa}")


@dataclass(frozen=True)
class ChromaConfig:
    """Chroma settings. Bins below ``min_freq`` (default close to C1) are ignored."""

    reference_a4: float = 440.0
    min_freq: float = 32.7
    normalization: ChromaNorm = ChromaNorm.L2_PER_FRAME

    def __post_init__(self):
        object.__setattr__(self, "normalization", _as_enum(ChromaNorm, self.normalization))
        if self.reference_a4 <= 0 or self.min_freq <= 0:
            raise ConfigError("reference_a4 and min_freq must be positive")


@dataclass(frozen=True)
class FeatureConfig:
    """Bundle of everything needed to turn a clip into features"""

    stft: StftConfig = field(default_factory=StftConfig)
    mel: MelConfig = field(default_factory=MelConfig)
    rolloff: RolloffConfig = field(default_factory=RolloffConfig)
    chroma: ChromaConfig = field(default_factory=ChromaConfig)
    channel: int = 0
    feature_set: FeatureSet = FeatureSet.MEL_ROLLOFF_CHROMA

    def __post_init__(self):
        object.__setattr__(self, "feature_set", _as_enum(FeatureSet, self.feature_set))
        if self.channel < 0:
            raise ConfigError(f"channel must be non-negative, got {self.channel}")


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Time-major feature matrix (``frames x bins``).

    :param values: Feature values
    :param kind: What the values are
    :param frame_rate: Frames per second
    :param sample_rate: Sample rate of the analysed audio, used for Nyquist checks
    :param bin_labels: Optional per-bin labels (Hz centres, mel band index, pitch class)
    """

    values: np.ndarray
    kind: FeatureKind
    frame_rate: float
    sample_rate: Optional[int] = None
    bin_labels: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        kind = _as_enum(FeatureKind, self.kind)
        if values.ndim != 2:
            raise ConfigError(f"Feature values must be 2-D (frames x bins), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ConfigError("Feature values must be finite")
        if kind is FeatureKind.ROLLOFF:
            if values.shape[1] != 1:
                raise ConfigError("Roll-off features have exactly one bin")
            upper = self.sample_rate / 2 if self.sample_rate else np.inf
            if np.any(values < 0) or np.any(values > upper):
                raise ConfigError("Roll-off frequencies must lie within [0, Nyquist]")
        if kind is FeatureKind.CHROMA:
            if values.shape[1] != 12:
                raise ConfigError("Chroma features have exactly 12 bins")
            if np.any(values < 0):
                raise ConfigError("Chroma energies must be non-negative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "kind", kind)
        if self.bin_labels is not None:
            object.__setattr__(self, "bin_labels", np.asarray(self.bin_labels))

    @property
    def frame_count(self) -> int:
        return self.values.shape[0]

    @property
    def bin_count(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class LabelScores:
    """Per-class scores in ``[0, 1]``, complete over the vocabulary.

    :raises BackendValidationError: when a class is missing, unknown, or out of range
    """

    scores: Mapping[str, float]
    vocabulary: ClassVocabulary = DEFAULT_VOCABULARY

    def __post_init__(self):
        missing = [label for label in self.vocabulary if label not in self.scores]
        if missing:
            raise BackendValidationError(f"Scores missing for class(es): {', '.join(missing)}")
        unknown = sorted(label for label in self.scores if label not in self.vocabulary)
        if unknown:
            raise BackendValidationError(f"Scores given for unknown class(es): {', '.join(unknown)}")
        checked = {}
        for label in self.vocabulary:
            try:
                value = float(self.scores[label])
            except (TypeError, ValueError):
                raise BackendValidationError(f"Score for '{label}' is not a number: {self.scores[label]!r}") from None
            if not 0.0 <= value <= 1.0:
                raise BackendValidationError(f"Score for '{label}' outside [0, 1]: {value}")
            checked[label] = value
        object.__setattr__(self, "scores", MappingProxyType(checked))

    def __getitem__(self, label: str) -> float:
        self.vocabulary.index(label)
        return self.scores[label]

    def ranked(self) -> List[Tuple[str, float]]:
        """All ``(label, score)`` pairs, highest score first, ties in vocabulary order"""
        return sorted(self.scores.items(), key=lambda item: (-item[1], self.vocabulary.index(item[0])))

    def top_k(self, k: int) -> List[Tuple[str, float]]:
        return self.ranked()[:k]

    def top_label(self) -> Optional[str]:
        """The argmax label, or ``None`` when every class has the same score"""
        values = list(self.scores.values())
        if max(values) == min(values):
            return None
        return self.ranked()[0][0]

    def as_array(self) -> np.ndarray:
        return np.array([self.scores[label] for label in self.vocabulary])

    @classmethod
    def from_array(cls, values: Sequence[float], vocabulary: ClassVocabulary = DEFAULT_VOCABULARY) -> "LabelScores":
        if len(values) != len(vocabulary):
            raise BackendValidationError(f"Expected {len(vocabulary)} scores, got {len(values)}")
        return cls(dict(zip(vocabulary, (float(v) for v in values))), vocabulary)

    @classmethod
    def uniform(cls, value: float = 0.0, vocabulary: ClassVocabulary = DEFAULT_VOCABULARY) -> "LabelScores":
        return cls({label: value for label in vocabulary}, vocabulary)

    def to_record(self) -> Dict[str, float]:
        return dict(self.scores)


@dataclass(frozen=True)
class EnsembleConfig:
    """Weighted score ensemble.

    Weights are normalised to sum to one when applied, so
    ``(0.35, 0.3, 0.2, 0.15)`` and ``(7, 6, 4, 3)`` behave identically.

    :param weights: One non-negative weight per member
    :param members: Optional taggers the weights apply to
    """

    weights: Tuple[float, ...]
    members: Tuple[Any, ...] = ()

    def __post_init__(self):
        weights = tuple(float(w) for w in self.weights)
        if not weights:
            raise ConfigError("Ensemble needs at least one weight")
        if any(w < 0 or not math.isfinite(w) for w in weights):
            raise ConfigError(f"Ensemble weights must be finite and non-negative, got {weights}")
        if sum(weights) <= 0:
            raise ConfigError("Ensemble weights must not sum to zero")
        if self.members and len(self.members) != len(weights):
            raise ConfigError(f"{len(self.members)} ensemble members but {len(weights)} weights")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "members", tuple(self.members))

    @property
    def normalized_weights(self) -> np.ndarray:
        weights = np.array(self.weights, dtype=np.float64)
        return weights / weights.sum()


@dataclass(frozen=True)
class EvalCounts:
    """True positive, false negative and false positive tallies of one clip"""

    tp: int
    fn: int
    fp: int

    def __post_init__(self):
        if min(self.tp, self.fn, self.fp) < 0:
            raise ConfigError(f"Counts must be non-negative: {self}")


@dataclass
class ClipEval:
    """Per-clip evaluation result.

    ``set_accuracy``, ``macro_accuracy`` and ``fp_penalized`` are reported as
    Acc1, Acc2 and Acc3. ``ca_sdri`` is ``None`` unless stems were evaluated.
    """

    clip_id: str
    set_accuracy: float
    macro_accuracy: float
    fp_penalized: float
    ca_sdri: Optional[float] = None
    per_class_sdri: Dict[str, float] = field(default_factory=dict)
    predicted: List[str] = field(default_factory=list)
    truth: List[str] = field(default_factory=list)


@dataclass
class CorpusSummary:
    """Per-clip metrics averaged over a corpus"""

    n_clips: int
    set_accuracy: float
    macro_accuracy: float
    fp_penalized: float
    ca_sdri: Optional[float] = None
    n_separation_clips: int = 0


@dataclass(frozen=True)
class AgentConfig:
    """Label correction settings.

    :param threshold: Extra candidates need a mixture score strictly above this
    :param top_k: Maximum number of labels emitted, and size of the base candidate set
    :param rank_by: Score used to re-rank verified labels
    :param empty_fallback: Answer when verification rejects every candidate
    :param reuse_stems: Emit verification stems instead of separating again
    """

    threshold: float = 0.5
    top_k: int = 3
    rank_by: RankBy = RankBy.RETAG_SCORE
    empty_fallback: EmptyFallback = EmptyFallback.ORIGINAL_TOP1
    reuse_stems: bool = False

    def __post_init__(self):
        object.__setattr__(self, "rank_by", _as_enum(RankBy, self.rank_by))
        object.__setattr__(self, "empty_fallback", _as_enum(EmptyFallback, self.empty_fallback))
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError(f"threshold must lie in [0, 1], got {self.threshold}")
        if self.top_k < 1:
            raise ConfigError(f"top_k must be at least 1, got {self.top_k}")


@dataclass(frozen=True, eq=False)
class Verification:
    """Outcome of re-tagging one candidate's separated stem"""

    label: str
    retag_label: Optional[str]
    retag_score: float
    kept: bool
    stem: Optional[AudioClip] = field(default=None, repr=False)


@dataclass(eq=False)
class AgentTrace:
    """Everything the label correction did for one clip"""

    original_scores: LabelScores
    candidates: List[Tuple[str, float]]
    verifications: List[Verification]
    final_labels: List[str]
    final_stems: Dict[str, AudioClip] = field(repr=False)
    fallback_used: bool = False
    clip_id: Optional[str] = None

    @property
    def removed(self) -> List[str]:
        """Candidates rejected by verification"""
        return [v.label for v in self.verifications if not v.kept]

    def to_record(self, stem_paths: Mapping[str, str] = None) -> Dict[str, Any]:
        return {
            "clip_id": self.clip_id,
            "original_scores": self.original_scores.to_record(),
            "candidates": [[label, score] for label, score in self.candidates],
            "verifications": [
                {
                    "label": v.label,
                    "retag_label": v.retag_label,
                    "retag_score": v.retag_score,
                    "kept": v.kept,
                }
                for v in self.verifications
            ],
            "final_labels": list(self.final_labels),
            "fallback_used": self.fallback_used,
            "stems": dict(stem_paths or {}),
        }


@dataclass(frozen=True)
class SourceRecord:
    """One isolated sound event recording in the source pool"""

    id: str
    label: str
    path: str
    duration: float
    flags: FrozenSet[SourceFlag] = frozenset()

    def __post_init__(self):
        if not self.duration > 0:
            raise ConfigError(f"Source '{self.id}' has non-positive duration {self.duration}")
        object.__setattr__(self, "flags", frozenset(_as_enum(SourceFlag, f) for f in self.flags))

    @property
    def is_heterogeneous(self) -> bool:
        return SourceFlag.HETEROGENEOUS in self.flags

    @property
    def is_added(self) -> bool:
        return SourceFlag.ADDED_EXTERNAL in self.flags

    def to_record(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "label": self.label,
            "path": self.path,
            "duration": self.duration,
            "flags": sorted(f.value for f in self.flags),
        }


@dataclass(frozen=True)
class ClassAudit:
    """Refinement tally of one class.

    ``final = original - short_removed - heterogeneous_removed + added``
    """

    label: str
    original: int = 0
    short_removed: int = 0
    heterogeneous_removed: int = 0
    added: int = 0
    final: int = 0

    def __post_init__(self):
        counts = (self.original, self.short_removed, self.heterogeneous_removed, self.added, self.final)
        if min(counts) < 0:
            raise ConfigError(f"Audit counts must be non-negative: {self}")
        if self.final != self.original - self.short_removed - self.heterogeneous_removed + self.added:
            raise ConfigError(f"Audit identity violated for '{self.label}'")


@dataclass(frozen=True)
class MixtureEvent:
    """One event placed in a mixture.

    :param onset: Start time in seconds
    :param snr: Event-to-noise ratio in dB
    :param duration: Seconds of the source used, from its start
    """

    source_id: str
    label: str
    onset: float
    snr: float
    duration: float

    def to_record(self) -> Dict[str, Any]:
        return {
            "source_id": self.source_id,
            "label": self.label,
            "onset": self.onset,
            "snr": self.snr,
            "duration": self.duration,
        }


@dataclass(frozen=True)
class MixtureManifest:
    """Ground truth of one synthetic mixture"""

    clip_id: str
    events: Tuple[MixtureEvent, ...]
    duration: float = 10.0
    sample_rate: int = 32000
    noise: Optional[str] = None
    seed: int = 0
    index: int = 0
    noise_level_db: float = -40.0
    normalization_gain: float = 1.0

    def __post_init__(self):
        events = tuple(self.events)
        object.__setattr__(self, "events", events)
        if not 1 <= len(events) <= 3:
            raise ConfigError(f"Clip '{self.clip_id}' has {len(events)} events, expected 1-3")
        labels = [e.label for e in events]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"Clip '{self.clip_id}' repeats an event class")
        for event in events:
            if event.onset < 0 or event.duration <= 0:
                raise ConfigError(f"Clip '{self.clip_id}': invalid event timing {event}")
            if event.onset + event.duration > self.duration + 1e-9:
                raise ConfigError(f"Clip '{self.clip_id}': event '{event.label}' overruns the clip")

    @property
    def labels(self) -> List[str]:
        return [e.label for e in self.events]

    def to_record(self) -> Dict[str, Any]:
        return {
            "clip_id": self.clip_id,
            "duration": self.duration,
            "sample_rate": self.sample_rate,
            "events": [e.to_record() for e in self.events],
            "noise": self.noise,
            "seed": self.seed,
            "index": self.index,
            "noise_level_db": self.noise_level_db,
            "normalization_gain": self.normalization_gain,
        }

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "MixtureManifest":
        events = tuple(MixtureEvent(**event) for event in record["events"])
        fields = {k: v for k, v in record.items() if k != "events"}
        return cls(events=events, **fields)


@dataclass(frozen=True)
class MixParams:
    """Corpus synthesis parameters.

    Defaults: 10 s clips at 32 kHz, one to three events, event SNR drawn
    uniformly from 5-20 dB.
    """

    duration: float = 10.0
    sample_rate: int = 32000
    min_events: int = 1
    max_events: int = 3
    snr_range: Tuple[float, float] = (5.0, 20.0)
    noise_level_db: float = -40.0

    def __post_init__(self):
        if not 1 <= self.min_events <= self.max_events <= 3:
            raise ConfigError(
                f"Events per clip must be within 1-3 (got min={self.min_events}, max={self.max_events})"
            )
        low, high = self.snr_range
        if low > high:
            raise ConfigError(f"Invalid SNR range: {self.snr_range}")
        if self.duration <= 0 or self.sample_rate <= 0:
            raise ConfigError("Clip duration and sample rate must be positive")
        object.__setattr__(self, "snr_range", (float(low), float(high)))
