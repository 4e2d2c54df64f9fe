"""Tagger and separator backends.

Built in:

* :class:`OracleTagger` and :class:`OracleSeparator` answer from mixture
  manifests and reference stems, standing in for trained networks.
* :class:`TemplateTagger` scores clips by distance to per-class mean
  feature summaries.
* :class:`EnsembleTagger` combines taggers with weighted score averaging.
* :class:`ExternalBackend` proxies requests to another process over the
  line protocol in :mod:`s5kit.protocol`.
"""

import abc
import hashlib
import itertools
import logging
import os
import queue
import shlex
import shutil
import subprocess
import tempfile
import threading
import zlib
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from . import protocol
from .audio import read_wav, rms, write_wav
from .exceptions import (
    AudioReadError,
    BackendError,
    BackendSpawnError,
    BackendTimeoutError,
    BackendValidationError,
    ConfigError,
    ProtocolError,
    UnknownClipError,
)
from .features import feature_summary
from .models import (
    DEFAULT_VOCABULARY,
    AudioClip,
    ClassVocabulary,
    ClipOrigin,
    EnsembleConfig,
    FeatureConfig,
    FeatureSet,
    LabelScores,
    MixtureManifest,
    SeparatorFallback,
    WavFormat,
)
from .protocol import MessageType
from .utils import scratch_root

logger = logging.getLogger(__name__)

# Weights of the four feature-set systems, strongest first
ENSEMBLE_WEIGHTS = (
    (FeatureSet.MEL_ROLLOFF_CHROMA, 0.35),
    (FeatureSet.MEL_CHROMA, 0.3),
    (FeatureSet.MEL_ROLLOFF, 0.2),
    (FeatureSet.MEL, 0.15),
)

ManifestSource = Union[Mapping[str, MixtureManifest], Iterable[MixtureManifest]]


class Tagger(abc.ABC):
    """Multi-label audio tagger. Must be deterministic for a given input."""

    vocabulary: ClassVocabulary = DEFAULT_VOCABULARY

    @abc.abstractmethod
    def tag(self, clip: AudioClip) -> LabelScores:
        """Score every vocabulary class for ``clip``"""


class Separator(abc.ABC):
    """Class-conditioned source separator"""

    @abc.abstractmethod
    def separate(self, clip: AudioClip, label: str) -> AudioClip:
        """Estimate the stem of ``label``; same length and rate as ``clip``"""


def _index_manifests(manifests: ManifestSource) -> Dict[str, MixtureManifest]:
    if isinstance(manifests, Mapping):
        return dict(manifests)
    return {m.clip_id: m for m in manifests}


def _clip_identity(clip: AudioClip, index: Mapping[str, MixtureManifest]) -> Tuple[MixtureManifest, ClipOrigin]:
    if clip.origin is None:
        raise UnknownClipError("Oracle backend needs clips that carry a clip ID")
    try:
        return index[clip.origin.clip_id], clip.origin
    except KeyError:
        raise UnknownClipError(f"No ground truth for clip '{clip.origin.clip_id}'") from None


def _stable_seed(*parts) -> List[int]:
    return [zlib.crc32(str(part).encode("utf-8")) for part in parts]


class OracleTagger(Tagger):
    """Tagger answering from ground truth.

    On a mixture every reference class scores 1.0 and every other class
    ``floor``. On a stem separated for class ``c`` only ``c`` scores 1.0
    (or the class ``confusions`` maps ``c`` to); an all-zero stem carries
    no evidence and every class scores ``floor``.

    :param manifests: Ground truth, by clip ID or as an iterable
    :param floor: Score of absent classes
    :param noise: Standard deviation of Gaussian noise added to scores, seeded
        per clip and request so repeated calls agree
    :param injected: Extra mixture scores per clip ID, ``{clip_id: {label: score}}``
    :param confusions: Label substitutions applied when re-tagging stems
    """

    def __init__(
        self,
        manifests: ManifestSource,
        floor: float = 0.0,
        noise: float = 0.0,
        seed: int = 0,
        injected: Mapping[str, Mapping[str, float]] = None,
        confusions: Mapping[str, str] = None,
        vocabulary: ClassVocabulary = DEFAULT_VOCABULARY,
    ):
        if not 0.0 <= floor <= 1.0 or noise < 0:
            raise ConfigError(f"Invalid oracle settings: floor={floor} noise={noise}")
        self._manifests = _index_manifests(manifests)
        self.floor = floor
        self.noise = noise
        self.seed = seed
        self.injected = {clip_id: dict(scores) for clip_id, scores in (injected or {}).items()}
        self.confusions = dict(confusions or {})
        self.vocabulary = vocabulary

    def tag(self, clip: AudioClip) -> LabelScores:
        manifest, origin = _clip_identity(clip, self._manifests)
        scores = dict.fromkeys(self.vocabulary, self.floor)
        if origin.label is None:
            for label in manifest.labels:
                scores[label] = 1.0
            scores.update(self.injected.get(origin.clip_id, {}))
        elif np.any(clip.samples):
            scores[self.confusions.get(origin.label, origin.label)] = 1.0
        else:
            return LabelScores(scores, self.vocabulary)
        if self.noise > 0:
            rng = np.random.default_rng(_stable_seed(self.seed, origin.clip_id, origin.label))
            values = np.array([scores[label] for label in self.vocabulary])
            values = np.clip(values + rng.normal(0.0, self.noise, values.size), 0.0, 1.0)
            return LabelScores.from_array(values, self.vocabulary)
        return LabelScores(scores, self.vocabulary)


def oracle_tagger(manifest: ManifestSource, **kwargs) -> OracleTagger:
    """Ground-truth tagger, see :class:`OracleTagger`"""
    return OracleTagger(manifest, **kwargs)


class OracleSeparator(Separator):
    """Separator returning reference stems.

    :param stems: Reference stems keyed by ``(clip_id, label)``
    :param fallback: Answer for classes not in the clip
    """

    def __init__(
        self,
        manifests: ManifestSource,
        stems: Mapping[Tuple[str, str], AudioClip],
        fallback: SeparatorFallback = SeparatorFallback.SILENCE,
    ):
        self._manifests = _index_manifests(manifests)
        self._stems = dict(stems)
        self.fallback = SeparatorFallback(fallback)

    def separate(self, clip: AudioClip, label: str) -> AudioClip:
        manifest, origin = _clip_identity(clip, self._manifests)
        stem_origin = ClipOrigin(origin.clip_id, label)
        if label in manifest.labels:
            try:
                return self._stems[(origin.clip_id, label)].with_origin(stem_origin)
            except KeyError:
                raise UnknownClipError(f"No reference stem for '{label}' in clip '{origin.clip_id}'") from None
        if self.fallback is SeparatorFallback.MIXTURE:
            return clip
        return AudioClip.silence(clip.frame_count, clip.sample_rate, clip.channel_count, stem_origin)


def oracle_separator(
    manifest: ManifestSource,
    stems: Mapping[Tuple[str, str], AudioClip],
    fallback: SeparatorFallback = SeparatorFallback.SILENCE,
) -> OracleSeparator:
    """Ground-truth separator, see :class:`OracleSeparator`"""
    return OracleSeparator(manifest, stems, fallback)


class TemplateTagger(Tagger):
    """Nearest-template tagger over clip feature summaries.

    Summaries are standardised per dimension with statistics of the training
    set, each class template is the mean standardised summary of its examples,
    and a class scores ``exp(-d^2 / tau)`` for squared Euclidean distance
    ``d^2`` to its template. Classes without examples score 0, and so does
    every class for a silent clip.

    :param training: ``(clip, label)`` examples
    :param tau: Distance scale, defaults to the summary length
    """

    def __init__(
        self,
        training: Sequence[Tuple[AudioClip, str]],
        cfg: FeatureConfig = None,
        tau: float = None,
        vocabulary: ClassVocabulary = DEFAULT_VOCABULARY,
    ):
        if not training:
            raise ConfigError("Template tagger needs a non-empty training set")
        self.cfg = cfg or FeatureConfig()
        self.vocabulary = vocabulary
        labels = [label for _, label in training]
        vocabulary.validate(labels)
        summaries = np.stack([feature_summary(clip, self.cfg) for clip, _ in training])
        self._mean = summaries.mean(axis=0)
        scale = summaries.std(axis=0)
        self._scale = np.where(scale > 0, scale, 1.0)
        standardized = (summaries - self._mean) / self._scale
        self.templates = {
            label: standardized[[i for i, other in enumerate(labels) if other == label]].mean(axis=0)
            for label in vocabulary.ordered(labels)
        }
        self.tau = float(tau) if tau is not None else float(summaries.shape[1])
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        logger.debug("Template tagger fitted on %d clips, %d classes", len(training), len(self.templates))

    def distances(self, clip: AudioClip) -> Dict[str, float]:
        """Squared distance of the clip summary to every class template"""
        z = (feature_summary(clip, self.cfg) - self._mean) / self._scale
        return {label: float(np.sum((z - template) ** 2)) for label, template in self.templates.items()}

    def tag(self, clip: AudioClip) -> LabelScores:
        scores = dict.fromkeys(self.vocabulary, 0.0)
        if rms(clip, self.cfg.channel) == 0.0:
            return LabelScores(scores, self.vocabulary)
        for label, distance in self.distances(clip).items():
            scores[label] = float(np.exp(-distance / self.tau))
        return LabelScores(scores, self.vocabulary)


def template_tagger(
    training: Sequence[Tuple[AudioClip, str]], cfg: FeatureConfig = None, tau: float = None, **kwargs
) -> TemplateTagger:
    """Build a :class:`TemplateTagger`"""
    return TemplateTagger(training, cfg, tau, **kwargs)


def ensemble_scores(per_member: Sequence[LabelScores], cfg: EnsembleConfig) -> LabelScores:
    """Weighted arithmetic mean of member scores, weights normalised to sum to one

    :raises ConfigError: if the number of score sets and weights differ
    """
    if len(per_member) != len(cfg.weights):
        raise ConfigError(f"{len(per_member)} score sets for {len(cfg.weights)} ensemble weights")
    vocabulary = per_member[0].vocabulary
    stacked = np.stack([scores.as_array() for scores in per_member])
    combined = np.clip(cfg.normalized_weights @ stacked, 0.0, 1.0)
    return LabelScores.from_array(combined, vocabulary)


class EnsembleTagger(Tagger):
    """Tagger averaging the scores of its members"""

    def __init__(self, members: Sequence[Tagger], weights: Sequence[float] = None):
        weights = tuple(weights) if weights is not None else (1.0,) * len(members)
        self.cfg = EnsembleConfig(weights=weights, members=tuple(members))
        self.vocabulary = members[0].vocabulary

    def tag(self, clip: AudioClip) -> LabelScores:
        return ensemble_scores([member.tag(clip) for member in self.cfg.members], self.cfg)


def feature_variant_ensemble(
    training: Sequence[Tuple[AudioClip, str]],
    cfg: FeatureConfig = None,
    weights: Sequence[Tuple[FeatureSet, float]] = ENSEMBLE_WEIGHTS,
    tau: float = None,
) -> EnsembleTagger:
    """Template taggers over each feature set, ensembled with ``weights``"""
    cfg = cfg or FeatureConfig()
    members = [
        TemplateTagger(
            training,
            FeatureConfig(cfg.stft, cfg.mel, cfg.rolloff, cfg.chroma, cfg.channel, feature_set),
            tau,
        )
        for feature_set, _ in weights
    ]
    return EnsembleTagger(members, [weight for _, weight in weights])


def _clip_digest(clip: AudioClip) -> str:
    digest = hashlib.sha1(clip.samples.tobytes())
    digest.update(f"{clip.sample_rate}:{clip.channel_count}".encode("ascii"))
    return digest.hexdigest()


class ExternalBackend(Tagger, Separator):
    """Tagger and separator implemented by another process.

    The process is started with ``command`` and must speak the protocol
    documented in :mod:`s5kit.protocol`. One request is in flight at a time;
    run several instances for parallelism. Answers are cached per audio
    content and request within the lifetime of the instance.

    A process that misses the timeout is killed; the next request starts a
    fresh one, so a late answer is never read as the answer to another
    request. Staged inputs and stems are removed once they have been read.

    Use as a context manager, or call :meth:`start` and :meth:`close`::

        with ExternalBackend("python my_model.py") as backend:
            scores = backend.tag(clip)

    :param command: Command line, as a list or a shell-style string
    :param timeout: Seconds to wait for each answer
    """

    def __init__(
        self,
        command: Union[str, Sequence[str]],
        vocabulary: ClassVocabulary = DEFAULT_VOCABULARY,
        timeout: float = 60.0,
    ):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        if not self.command:
            raise ConfigError("Empty backend command")
        if timeout <= 0:
            raise ConfigError(f"Backend timeout must be positive, got {timeout}")
        self.vocabulary = vocabulary
        self.timeout = timeout
        self.scratch_dir: Optional[str] = None
        self._process: Optional[subprocess.Popen] = None
        self._lines: "queue.Queue[Optional[str]]" = queue.Queue()
        self._lock = threading.Lock()
        self._ids = itertools.count(1)
        self._cache: Dict[Tuple[str, ...], object] = {}
        self._restart_pending = False
        self.restarts = 0

    def __enter__(self) -> "ExternalBackend":
        self.start()
        return self

    def __exit__(self, *exc_info):
        self.close()

    @staticmethod
    def _pump(stream, lines: queue.Queue):
        for line in stream:
            lines.put(line)
        lines.put(None)

    def start(self):
        """Spawn the process and complete the ``hello`` handshake

        :raises BackendSpawnError: if the process cannot be started
        :raises ProtocolError: if the handshake fails or versions differ
        """
        self._restart_pending = False
        # one queue per process so lines of a killed process never reach its successor
        self._lines = queue.Queue()
        self.scratch_dir = os.path.abspath(tempfile.mkdtemp(prefix="s5kit-", dir=scratch_root()))
        try:
            self._process = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            shutil.rmtree(self.scratch_dir, ignore_errors=True)
            raise BackendSpawnError(f"Cannot start backend {self.command!r}: {exc}") from None
        threading.Thread(target=self._pump, args=(self._process.stdout, self._lines), daemon=True).start()
        logger.info("Started backend %s (pid %d)", " ".join(self.command), self._process.pid)
        try:
            answer = self._exchange(protocol.hello(self.vocabulary, self.scratch_dir), expect=MessageType.HELLO_ACK)
            if answer["version"] != protocol.PROTOCOL_VERSION:
                raise ProtocolError(
                    f"Protocol version mismatch: harness speaks {protocol.PROTOCOL_VERSION}, "
                    f"backend answered {answer['version']}"
                )
        except BackendError:
            self.close()
            raise

    def close(self):
        """Ask the process to exit, then clean up the scratch directory"""
        self._restart_pending = False
        process, self._process = self._process, None
        if process is not None:
            try:
                if process.poll() is None:
                    process.stdin.write(protocol.encode({"type": MessageType.BYE}))
                    process.stdin.flush()
                process.stdin.close()
                process.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                process.kill()
                process.wait()
            logger.info("Backend %s exited with code %s", " ".join(self.command), process.returncode)
        if self.scratch_dir:
            shutil.rmtree(self.scratch_dir, ignore_errors=True)
            self.scratch_dir = None

    def _kill(self):
        process, self._process = self._process, None
        if process is not None:
            process.kill()
            process.wait()
            logger.warning("Killed backend %s (pid %d)", " ".join(self.command), process.pid)
        if self.scratch_dir:
            shutil.rmtree(self.scratch_dir, ignore_errors=True)
            self.scratch_dir = None

    def _ensure_running(self):
        if self._process is not None:
            return
        if not self._restart_pending:
            raise BackendError("Backend is not running")
        self.restarts += 1
        logger.info("Restarting backend %s (restart %d)", " ".join(self.command), self.restarts)
        self.start()

    def _exchange(self, message: dict, expect: MessageType) -> dict:
        if self._process is None:
            raise BackendError("Backend is not running")
        with self._lock:
            logger.debug("-> %s", message)
            try:
                self._process.stdin.write(protocol.encode(message))
                self._process.stdin.flush()
            except OSError as exc:
                raise ProtocolError(f"Backend closed its input: {exc}") from None
            try:
                line = self._lines.get(timeout=self.timeout)
            except queue.Empty:
                self._kill()
                self._restart_pending = True
                raise BackendTimeoutError(f"No answer from backend within {self.timeout:g} s") from None
            if line is None:
                raise ProtocolError("Backend exited without answering")
            answer = protocol.decode(line)
            logger.debug("<- %s", answer)
        if answer.get("id") != message.get("id"):
            raise ProtocolError(f"Answer id {answer.get('id')!r} does not match request {message.get('id')!r}")
        if answer["type"] is MessageType.ERROR:
            raise BackendError(f"Backend error: {answer['message']}")
        if answer["type"] is not expect:
            raise ProtocolError(f"Expected '{expect.value}', got '{answer['type'].value}'")
        return answer

    def _stage(self, clip: AudioClip, request_id: str) -> str:
        self._ensure_running()
        path = os.path.join(self.scratch_dir, f"{request_id}.wav")
        write_wav(clip, path, WavFormat.FLOAT32)
        return path

    def _discard(self, path: str):
        """Remove a file the exchange left in the scratch directory"""
        if not self.scratch_dir or os.path.dirname(os.path.abspath(path)) != self.scratch_dir:
            return
        try:
            os.remove(path)
        except FileNotFoundError:
            pass

    def _request(self, clip: AudioClip, build, expect: MessageType) -> dict:
        request_id = f"r{next(self._ids)}"
        staged = self._stage(clip, request_id)
        try:
            return self._exchange(build(request_id, staged), expect=expect)
        finally:
            self._discard(staged)

    def tag(self, clip: AudioClip) -> LabelScores:
        key = ("tag", _clip_digest(clip))
        if key not in self._cache:
            answer = self._request(clip, protocol.tag_request, MessageType.SCORES)
            if not isinstance(answer["scores"], dict):
                raise BackendValidationError("'scores' must map class names to numbers")
            self._cache[key] = LabelScores(answer["scores"], self.vocabulary)
        return self._cache[key]

    def separate(self, clip: AudioClip, label: str) -> AudioClip:
        self.vocabulary.index(label)
        key = ("separate", _clip_digest(clip), label)
        if key not in self._cache:
            answer = self._request(
                clip, lambda request_id, path: protocol.separate_request(request_id, path, label), MessageType.STEM
            )
            stem_path = protocol.check_absolute(answer["stem_path"], "stem_path")
            try:
                stem = read_wav(stem_path)
            except AudioReadError as exc:
                raise BackendValidationError(f"Unusable stem for '{label}': {exc}") from None
            finally:
                self._discard(stem_path)
            if stem.frame_count != clip.frame_count or stem.sample_rate != clip.sample_rate:
                raise BackendValidationError(
                    f"Stem for '{label}' has {stem.frame_count} frames at {stem.sample_rate} Hz, "
                    f"expected {clip.frame_count} frames at {clip.sample_rate} Hz"
                )
            origin = ClipOrigin(clip.origin.clip_id, label) if clip.origin else None
            self._cache[key] = stem.with_origin(origin)
        return self._cache[key]


def external_backend(command: Union[str, Sequence[str]], **kwargs) -> ExternalBackend:
    """Start an :class:`ExternalBackend` and return it ready for requests"""
    backend = ExternalBackend(command, **kwargs)
    backend.start()
    return backend
