"""Source pool refinement, manifest files and mixture synthesis.

Corpus layout written by :func:`generate_corpus`::

    {out_dir}/manifest.jsonl
    {out_dir}/{clip_id}/mixture.wav
    {out_dir}/{clip_id}/stems/{class}.wav
"""

import dataclasses
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .audio import active_rms, read_wav, rms, write_wav
from .exceptions import ConfigError, DatasetError, ManifestError, MixtureError, PoolError, S5KitError
from .models import (
    DEFAULT_VOCABULARY,
    AudioClip,
    ClassAudit,
    ClassVocabulary,
    ClipOrigin,
    MixParams,
    MixtureEvent,
    MixtureManifest,
    SourceFlag,
    SourceRecord,
    WavFormat,
)
from .utils import read_jsonl, write_jsonl

logger = logging.getLogger(__name__)

MIN_DURATION = 1.5
NORMALIZATION_PEAK = 0.99

MANIFEST_FORMAT = "s5kit-manifest"
RECORDS_FORMAT = "s5kit-records"
FORMAT_VERSION = 1

Resolver = Callable[[str], AudioClip]


def filter_short(
    records: Iterable[SourceRecord], min_duration: float = MIN_DURATION
) -> Tuple[List[SourceRecord], List[SourceRecord]]:
    """Split records in to ``(kept, removed)``; a record exactly ``min_duration`` long is kept"""
    if not min_duration > 0:
        raise ConfigError(f"min_duration must be positive, got {min_duration}")
    kept, removed = [], []
    for record in records:
        (kept if record.duration >= min_duration else removed).append(record)
    return kept, removed


def audit_class(records: Sequence[SourceRecord], min_duration: float = MIN_DURATION, label: str = None) -> ClassAudit:
    """Refinement tally of the records of one class.

    Records flagged ``added_external`` only count as additions and are never
    filtered. Of the others, records shorter than ``min_duration`` count as
    short removals, and the remaining heterogeneous ones as heterogeneous
    removals, so a record flagged both ways is counted once.

    :param label: Class name, needed when ``records`` is empty
    :raises DatasetError: if the records belong to more than one class
    """
    labels = {record.label for record in records}
    if label is not None:
        labels.add(label)
    if len(labels) > 1:
        raise DatasetError(f"Records of several classes given to a single-class audit: {', '.join(sorted(labels))}")
    label = labels.pop() if labels else ""

    original = [r for r in records if not r.is_added]
    kept, short = filter_short(original, min_duration)
    heterogeneous = [r for r in kept if r.is_heterogeneous]
    added = len(records) - len(original)
    return ClassAudit(
        label=label,
        original=len(original),
        short_removed=len(short),
        heterogeneous_removed=len(heterogeneous),
        added=added,
        final=len(kept) - len(heterogeneous) + added,
    )


def audit_records(
    records: Iterable[SourceRecord],
    min_duration: float = MIN_DURATION,
    vocabulary: ClassVocabulary = DEFAULT_VOCABULARY,
) -> List[ClassAudit]:
    """One audit row per vocabulary class, in vocabulary order"""
    by_class = group_by_class(records, vocabulary)
    return [audit_class(by_class.get(label, []), min_duration, label) for label in vocabulary]


def refine_records(records: Iterable[SourceRecord], min_duration: float = MIN_DURATION) -> List[SourceRecord]:
    """Records surviving refinement: external additions, plus long enough, homogeneous originals"""
    return [r for r in records if r.is_added or (r.duration >= min_duration and not r.is_heterogeneous)]


def reconcile_audit(audits: Iterable[ClassAudit], expected_final: Mapping[str, int]) -> List[Dict[str, object]]:
    """Compare computed final counts with published ones.

    :return: One entry per class whose count differs, with both values
    """
    computed = {audit.label: audit.final for audit in audits}
    discrepancies = []
    for label, expected in expected_final.items():
        final = computed.get(label)
        if final != int(expected):
            discrepancies.append({"label": label, "expected": int(expected), "computed": final})
    return discrepancies


def group_by_class(
    records: Iterable[SourceRecord], vocabulary: ClassVocabulary = DEFAULT_VOCABULARY
) -> Dict[str, List[SourceRecord]]:
    """Records grouped per class, classes in vocabulary order"""
    records = list(records)
    vocabulary.validate(r.label for r in records)
    groups = {}
    for label in vocabulary:
        members = [r for r in records if r.label == label]
        if members:
            groups[label] = members
    return groups


def apply_flags(
    records: Iterable[SourceRecord], heterogeneous_ids: Iterable[str] = (), added_ids: Iterable[str] = ()
) -> List[SourceRecord]:
    """Attach audit flags from ID lists

    :raises DatasetError: if an ID matches no record
    """
    records = list(records)
    heterogeneous_ids, added_ids = set(heterogeneous_ids), set(added_ids)
    unknown = (heterogeneous_ids | added_ids) - {r.id for r in records}
    if unknown:
        raise DatasetError(f"Flagged IDs not in the source records: {', '.join(sorted(unknown))}")
    flagged = []
    for record in records:
        flags = set(record.flags)
        if record.id in heterogeneous_ids:
            flags.add(SourceFlag.HETEROGENEOUS)
        if record.id in added_ids:
            flags.add(SourceFlag.ADDED_EXTERNAL)
        flagged.append(dataclasses.replace(record, flags=frozenset(flags)))
    return flagged


def read_flag_file(path: Union[str, Path]) -> Set[str]:
    """Source IDs listed one per line; blank lines and ``#`` comments are skipped"""
    try:
        with open(path, "r", encoding="utf-8") as file:
            lines = file.read().splitlines()
    except OSError as exc:
        raise DatasetError(f"Cannot read flag file {path}: {exc.strerror}") from None
    return {line.strip() for line in lines if line.strip() and not line.lstrip().startswith("#")}


def _read_versioned(path: Union[str, Path], expected_format: str) -> Iterable[Tuple[int, dict]]:
    lines = read_jsonl(path)
    first = next(lines, None)
    if first is None:
        raise ManifestError(path, 0, "empty file")
    line_no, header = first
    if header.get("format") != expected_format:
        raise ManifestError(path, line_no, f"expected a '{expected_format}' header line")
    if header.get("version") != FORMAT_VERSION:
        raise ManifestError(path, line_no, f"unsupported format version {header.get('version')!r}")
    yield from lines


def read_records(
    path: Union[str, Path], vocabulary: Optional[ClassVocabulary] = DEFAULT_VOCABULARY
) -> List[SourceRecord]:
    """Read a source record file

    Pass ``vocabulary=None`` for pools whose labels are free-form, such as noise.

    :raises ManifestError: for malformed lines, unknown classes or duplicate IDs
    """
    records, seen = [], set()
    for line_no, record in _read_versioned(path, RECORDS_FORMAT):
        try:
            source = SourceRecord(
                id=str(record["id"]),
                label=record["label"],
                path=record["path"],
                duration=float(record["duration"]),
                flags=frozenset(record.get("flags", ())),
            )
            if vocabulary is not None:
                vocabulary.index(source.label)
        except KeyError as exc:
            message = str(exc) if isinstance(exc, S5KitError) else f"missing field {exc}"
            raise ManifestError(path, line_no, message) from None
        except (S5KitError, TypeError, ValueError) as exc:
            raise ManifestError(path, line_no, str(exc)) from None
        if source.id in seen:
            raise ManifestError(path, line_no, f"duplicate source ID '{source.id}'")
        seen.add(source.id)
        records.append(source)
    return records


def write_records(path: Union[str, Path], records: Iterable[SourceRecord]):
    write_jsonl(path, records, header={"format": RECORDS_FORMAT, "version": FORMAT_VERSION})


def read_manifests(path: Union[str, Path], vocabulary: ClassVocabulary = DEFAULT_VOCABULARY) -> List[MixtureManifest]:
    """Read a mixture manifest file

    :raises ManifestError: for malformed lines, unknown classes or duplicate clip IDs
    """
    manifests, seen = [], set()
    for line_no, record in _read_versioned(path, MANIFEST_FORMAT):
        try:
            manifest = MixtureManifest.from_record(record)
            vocabulary.validate(manifest.labels)
        except KeyError as exc:
            message = str(exc) if isinstance(exc, S5KitError) else f"missing field {exc}"
            raise ManifestError(path, line_no, message) from None
        except (S5KitError, TypeError, ValueError) as exc:
            raise ManifestError(path, line_no, str(exc)) from None
        if manifest.clip_id in seen:
            raise ManifestError(path, line_no, f"duplicate clip ID '{manifest.clip_id}'")
        seen.add(manifest.clip_id)
        manifests.append(manifest)
    return manifests


def write_manifests(path: Union[str, Path], manifests: Iterable[MixtureManifest]):
    write_jsonl(path, manifests, header={"format": MANIFEST_FORMAT, "version": FORMAT_VERSION})


class SourceLibrary:
    """Resolve source IDs to audio, reading each file once.

    Relative record paths are taken relative to ``root``.
    """

    def __init__(self, records: Iterable[SourceRecord], root: Union[str, Path] = None):
        self.records = {record.id: record for record in records}
        self.root = Path(root) if root is not None else None
        self._cache: Dict[str, AudioClip] = {}

    def path(self, source_id: str) -> Path:
        try:
            path = Path(self.records[source_id].path)
        except KeyError:
            raise PoolError(f"Unknown source ID '{source_id}'") from None
        if self.root is not None and not path.is_absolute():
            path = self.root / path
        return path

    def __call__(self, source_id: str) -> AudioClip:
        if source_id not in self._cache:
            self._cache[source_id] = read_wav(self.path(source_id))
        return self._cache[source_id]


def snr_gain(event: AudioClip, background: AudioClip, target_snr: float, channel: int = 0) -> float:
    """Gain putting ``event`` ``target_snr`` dB above ``background``.

    The event level is its RMS over its active span, the background level
    its RMS over the whole clip.

    :raises MixtureError: if either signal is silent
    """
    event_level = active_rms(event, channel)
    background_level = rms(background, channel)
    if event_level == 0.0 or background_level == 0.0:
        raise MixtureError("Cannot set an SNR against a silent event or background")
    return 10.0 ** (target_snr / 20.0) * background_level / event_level


@dataclass(eq=False)
class SynthesisResult:
    """Output of :func:`synthesize_mixture`; ``mixture == noise + sum(stems)``"""

    mixture: AudioClip
    stems: Dict[str, AudioClip]
    noise: AudioClip
    normalization_gain: float = 1.0


def noise_bed(manifest: MixtureManifest, sources: Resolver = None) -> np.ndarray:
    """Background for a manifest at its ``noise_level_db`` RMS level.

    Uses the referenced noise source, tiled or cropped to the clip, or seeded
    white noise when the manifest names none.
    """
    n_frames = int(round(manifest.duration * manifest.sample_rate))
    if manifest.noise is None:
        rng = np.random.default_rng([manifest.seed, manifest.index, 1])
        bed = rng.standard_normal(n_frames)
    else:
        if sources is None:
            raise MixtureError(f"Clip '{manifest.clip_id}' references noise '{manifest.noise}' but no resolver")
        noise = sources(manifest.noise)
        if noise.sample_rate != manifest.sample_rate:
            raise MixtureError(
                f"Noise '{manifest.noise}' is at {noise.sample_rate} Hz, clip at {manifest.sample_rate} Hz"
            )
        if noise.frame_count == 0:
            raise MixtureError(f"Noise '{manifest.noise}' is empty")
        bed = np.resize(noise.channel(0), n_frames)
    level = float(np.sqrt(np.mean(bed * bed))) if n_frames else 0.0
    if level == 0.0:
        raise MixtureError(f"Noise bed of clip '{manifest.clip_id}' is silent")
    return bed * (10.0 ** (manifest.noise_level_db / 20.0) / level)


def synthesize_mixture(manifest: MixtureManifest, sources: Resolver) -> SynthesisResult:
    """Render a manifest in to a mono mixture and its reference stems.

    Each event is the start of its source, ``event.duration`` long, scaled to
    its SNR against the noise bed and placed at its onset. When the mixture
    peaks above full scale, mixture, stems and noise are scaled by one common
    gain, which leaves the SNRs unchanged.

    :raises MixtureError: on sample rate mismatch, short sources or events overrunning the clip
    """
    sr = manifest.sample_rate
    n_frames = int(round(manifest.duration * sr))
    bed = noise_bed(manifest, sources)
    bed_clip = AudioClip(bed, sr)
    stems = {}
    for event in manifest.events:
        try:
            source = sources(event.source_id)
        except S5KitError as exc:
            raise MixtureError(f"Clip '{manifest.clip_id}': cannot resolve source '{event.source_id}': {exc}") from None
        if source.sample_rate != sr:
            raise MixtureError(
                f"Clip '{manifest.clip_id}': source '{event.source_id}' is at {source.sample_rate} Hz, clip at {sr} Hz"
            )
        start = int(round(event.onset * sr))
        length = int(round(event.duration * sr))
        if length > source.frame_count:
            raise MixtureError(
                f"Clip '{manifest.clip_id}': source '{event.source_id}' has {source.frame_count} frames, "
                f"event needs {length}"
            )
        if start + length > n_frames:
            raise MixtureError(f"Clip '{manifest.clip_id}': event '{event.label}' overruns the clip")
        segment = AudioClip(source.channel(0)[:length], sr)
        placed = np.zeros(n_frames)
        placed[start : start + length] = snr_gain(segment, bed_clip, event.snr) * segment.channel(0)
        stems[event.label] = placed

    mixture = bed + sum(stems.values())
    peak = float(np.max(np.abs(mixture))) if n_frames else 0.0
    gain = 1.0
    if peak > 1.0:
        gain = NORMALIZATION_PEAK / peak
        logger.info("Clip %s: peak %.3f, normalising by %.4f", manifest.clip_id, peak, gain)
    return SynthesisResult(
        mixture=AudioClip(mixture * gain, sr, ClipOrigin(manifest.clip_id)),
        stems={label: AudioClip(stem * gain, sr, ClipOrigin(manifest.clip_id, label)) for label, stem in stems.items()},
        noise=AudioClip(bed * gain, sr),
        normalization_gain=gain,
    )


def plan_clip(
    pool: Mapping[str, Sequence[SourceRecord]],
    index: int,
    seed: int,
    params: MixParams = None,
    noise_pool: Sequence[SourceRecord] = (),
) -> MixtureManifest:
    """Draw the manifest of clip ``index`` from its own random stream"""
    params = params or MixParams()
    rng = np.random.default_rng([seed, index])
    sr = params.sample_rate
    n_frames = int(round(params.duration * sr))
    classes = [label for label, records in pool.items() if records]
    n_events = int(rng.integers(params.min_events, params.max_events + 1))
    if n_events > len(classes):
        raise PoolError(f"Clip {index} needs {n_events} classes, the pool has {len(classes)}")
    events = []
    for label in rng.choice(classes, size=n_events, replace=False):
        records = pool[label]
        record = records[int(rng.integers(len(records)))]
        length = min(int(math.floor(record.duration * sr)), n_frames)
        if length <= 0:
            raise PoolError(f"Source '{record.id}' is shorter than one sample")
        onset = int(rng.integers(0, n_frames - length + 1))
        snr = float(rng.uniform(*params.snr_range))
        events.append(MixtureEvent(record.id, str(label), onset / sr, round(snr, 4), length / sr))
    noise = None
    if noise_pool:
        noise = noise_pool[int(rng.integers(len(noise_pool)))].id
    return MixtureManifest(
        clip_id=f"mix{index:05d}",
        events=tuple(events),
        duration=params.duration,
        sample_rate=sr,
        noise=noise,
        seed=seed,
        index=index,
        noise_level_db=params.noise_level_db,
    )


def write_clip(out_dir: Union[str, Path], manifest: MixtureManifest, result: SynthesisResult):
    clip_dir = Path(out_dir) / manifest.clip_id
    write_wav(result.mixture, clip_dir / "mixture.wav", WavFormat.FLOAT32)
    for label, stem in result.stems.items():
        write_wav(stem, clip_dir / "stems" / f"{label}.wav", WavFormat.FLOAT32)


def generate_corpus(
    pool: Mapping[str, Sequence[SourceRecord]],
    n_clips: int,
    seed: int = 0,
    params: MixParams = None,
    out_dir: Union[str, Path] = None,
    resolver: Resolver = None,
    noise_pool: Sequence[SourceRecord] = (),
    jobs: int = 1,
) -> List[MixtureManifest]:
    """Plan, and with ``out_dir`` render, a synthetic corpus.

    Clip ``i`` depends only on ``(seed, i)``, so any ``jobs`` value gives the
    same corpus.

    :param pool: Source records per class
    :param resolver: Source ID to audio; defaults to a :class:`SourceLibrary` over the pools
    :raises PoolError: if the pool cannot supply the requested events
    """
    params = params or MixParams()
    if n_clips < 0:
        raise ConfigError(f"n_clips must not be negative, got {n_clips}")
    if jobs < 1:
        raise ConfigError(f"jobs must be at least 1, got {jobs}")
    available = [label for label, records in pool.items() if records]
    if len(available) < params.max_events:
        raise PoolError(
            f"Up to {params.max_events} events per clip need as many classes, the pool has {len(available)}"
        )
    pool = {label: list(pool[label]) for label in available}
    noise_pool = list(noise_pool)

    manifests = [plan_clip(pool, index, seed, params, noise_pool) for index in range(n_clips)]
    if out_dir is None:
        return manifests

    if resolver is None:
        resolver = SourceLibrary([r for records in pool.values() for r in records] + noise_pool)

    def render(manifest: MixtureManifest) -> MixtureManifest:
        result = synthesize_mixture(manifest, resolver)
        write_clip(out_dir, manifest, result)
        return dataclasses.replace(manifest, normalization_gain=result.normalization_gain)

    if jobs == 1:
        manifests = [render(m) for m in manifests]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            manifests = list(executor.map(render, manifests))
    write_manifests(Path(out_dir) / "manifest.jsonl", manifests)
    logger.info("Wrote %d clips to %s", len(manifests), out_dir)
    return manifests


def load_reference_stems(
    corpus_dir: Union[str, Path], manifests: Iterable[MixtureManifest]
) -> Dict[Tuple[str, str], AudioClip]:
    """Reference stems of a rendered corpus keyed by ``(clip_id, label)``"""
    stems = {}
    for manifest in manifests:
        for label in manifest.labels:
            path = Path(corpus_dir) / manifest.clip_id / "stems" / f"{label}.wav"
            stems[(manifest.clip_id, label)] = read_wav(path).with_origin(ClipOrigin(manifest.clip_id, label))
    return stems


def load_mixture(corpus_dir: Union[str, Path], clip_id: str) -> AudioClip:
    return read_wav(os.path.join(corpus_dir, clip_id, "mixture.wav"), clip_id=clip_id)
