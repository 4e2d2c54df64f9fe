import dataclasses
import math

import numpy as np
import pytest

from s5kit.audio import active_rms, rms, write_wav
from s5kit.dataset import (
    NORMALIZATION_PEAK,
    SourceLibrary,
    apply_flags,
    audit_class,
    audit_records,
    filter_short,
    generate_corpus,
    load_mixture,
    load_reference_stems,
    noise_bed,
    plan_clip,
    read_flag_file,
    read_manifests,
    read_records,
    reconcile_audit,
    refine_records,
    snr_gain,
    synthesize_mixture,
    write_manifests,
    write_records,
)
from s5kit.exceptions import ConfigError, DatasetError, ManifestError, MixtureError, PoolError, VocabularyError
from s5kit.models import (
    DEFAULT_VOCABULARY,
    AudioClip,
    ClassAudit,
    ClipOrigin,
    MixParams,
    MixtureEvent,
    MixtureManifest,
    SourceFlag,
    SourceRecord,
)

from .conftest import SR, burst, sine

# label, original, short, heterogeneous, added, published final
REFINEMENT_TABLE = [
    ("AlarmClock", 102, 2, 37, 0, 63),
    ("BicycleBell", 230, 10, 22, 0, 198),
    ("Blender", 141, 0, 2, 0, 139),
    ("Buzzer", 181, 0, 0, 0, 181),
    ("Clapping", 482, 195, 67, 0, 220),
    ("Cough", 443, 0, 8, 0, 435),
    ("CupboardOpenClose", 413, 32, 25, 0, 356),
    ("Dishes", 399, 99, 61, 0, 239),
    ("Doorbell", 75, 4, 24, 51, 98),
    ("FootSteps", 388, 53, 16, 0, 319),
    ("HairDryer", 25, 0, 2, 0, 21),
    ("MechanicalFans", 126, 0, 0, 0, 126),
    ("MusicalKeyboard", 503, 41, 35, 10, 437),
    ("Percussion", 2063, 858, 213, 0, 992),
    ("Pour", 93, 1, 3, 0, 89),
    ("Speech", 1211, 511, 68, 0, 632),
    ("Typing", 436, 28, 8, 0, 400),
    ("VacuumCleaner", 66, 0, 0, 0, 66),
]


def class_records(label, original, short, heterogeneous, added):
    records = []
    for i in range(original):
        duration = 1.0 if i < short else 3.0
        flags = {SourceFlag.HETEROGENEOUS} if short <= i < short + heterogeneous else set()
        records.append(SourceRecord(f"{label}-{i}", label, f"{label}/{i}.wav", duration, frozenset(flags)))
    for i in range(added):
        records.append(SourceRecord(f"{label}-x{i}", label, f"{label}/x{i}.wav", 2.0, {SourceFlag.ADDED_EXTERNAL}))
    return records


@pytest.fixture(scope="module")
def table_records():
    return [r for label, o, s, h, a, _ in REFINEMENT_TABLE for r in class_records(label, o, s, h, a)]


def manifest_with(events, **kwargs):
    fields = dict(clip_id="clip", duration=2.0, sample_rate=SR)
    fields.update(kwargs)
    return MixtureManifest(events=tuple(events), **fields)


@pytest.mark.parametrize("row", REFINEMENT_TABLE, ids=[row[0] for row in REFINEMENT_TABLE])
def test_audit_class(row):
    """Per-class audit reproduces the refinement tally"""
    label, original, short, heterogeneous, added, published = row
    audit = audit_class(class_records(label, original, short, heterogeneous, added))
    assert audit == ClassAudit(label, original, short, heterogeneous, added, original - short - heterogeneous + added)
    if label != "HairDryer":
        assert audit.final == published


def test_audit_records(table_records):
    """One audit row per vocabulary class, in vocabulary order"""
    audits = audit_records(table_records)
    assert [a.label for a in audits] == list(DEFAULT_VOCABULARY)
    assert sum(a.final for a in audits) == sum(row[5] for row in REFINEMENT_TABLE) + 2


def test_reconcile_flags_hair_dryer(table_records):
    """Only the HairDryer count disagrees with the published figure"""
    expected = {row[0]: row[5] for row in REFINEMENT_TABLE}
    discrepancies = reconcile_audit(audit_records(table_records), expected)
    assert discrepancies == [{"label": "HairDryer", "expected": 21, "computed": 23}]


def test_audit_counts_short_before_heterogeneous():
    """A short, heterogeneous record counts once, as short"""
    records = [
        SourceRecord("a", "Cough", "a.wav", 1.0, {SourceFlag.HETEROGENEOUS}),
        SourceRecord("b", "Cough", "b.wav", 2.0, {SourceFlag.HETEROGENEOUS}),
        SourceRecord("c", "Cough", "c.wav", 2.0),
    ]
    audit = audit_class(records)
    assert (audit.short_removed, audit.heterogeneous_removed, audit.final) == (1, 1, 1)


def test_audit_added_records_bypass_filters():
    """External additions are counted as added even when short"""
    records = [SourceRecord("x", "Doorbell", "x.wav", 0.5, {SourceFlag.ADDED_EXTERNAL})]
    audit = audit_class(records)
    assert (audit.original, audit.short_removed, audit.added, audit.final) == (0, 0, 1, 1)
    assert refine_records(records) == records


def test_audit_empty_class():
    """A class without records audits to zeros"""
    assert audit_class([], label="Pour") == ClassAudit("Pour")


def test_audit_mixed_classes():
    """A single-class audit refuses records of several classes"""
    records = [SourceRecord("a", "Cough", "a.wav", 2.0), SourceRecord("b", "Pour", "b.wav", 2.0)]
    with pytest.raises(DatasetError):
        audit_class(records)


def test_class_audit_identity():
    """Audit rows must satisfy the refinement identity"""
    with pytest.raises(ConfigError):
        ClassAudit("Cough", original=10, short_removed=1, final=10)


def test_filter_short_boundary():
    """Records exactly at the minimum duration are kept"""
    records = [SourceRecord(str(d), "Cough", "a.wav", d) for d in (1.0, 1.5, 2.0)]
    kept, removed = filter_short(records, 1.5)
    assert [r.duration for r in kept] == [1.5, 2.0]
    assert [r.duration for r in removed] == [1.0]
    with pytest.raises(ConfigError):
        filter_short(records, 0)


def test_refine_records(table_records):
    """Refined pool sizes match the audit finals"""
    refined = refine_records(table_records)
    for audit in audit_records(table_records):
        assert sum(1 for r in refined if r.label == audit.label) == audit.final


def test_apply_flags():
    """Flags come from ID lists; unknown IDs are an error"""
    records = [SourceRecord("a", "Cough", "a.wav", 2.0), SourceRecord("b", "Cough", "b.wav", 2.0)]
    flagged = apply_flags(records, heterogeneous_ids=["a"], added_ids=["b"])
    assert flagged[0].is_heterogeneous and not flagged[0].is_added
    assert flagged[1].is_added
    with pytest.raises(DatasetError):
        apply_flags(records, heterogeneous_ids=["zzz"])


def test_read_flag_file(tmp_path):
    """Flag files skip blanks and comments"""
    path = tmp_path / "flags.txt"
    path.write_text("# reviewed by ear\nCough-1\n\n  Cough-7  \n")
    assert read_flag_file(path) == {"Cough-1", "Cough-7"}
    with pytest.raises(DatasetError):
        read_flag_file(tmp_path / "missing.txt")


def test_records_round_trip(tmp_path):
    """Source records survive a write and read"""
    records = class_records("Doorbell", 3, 1, 1, 1)
    path = tmp_path / "records.jsonl"
    write_records(path, records)
    assert read_records(path) == records


def test_records_errors(tmp_path):
    """Malformed record files report the offending line"""
    path = tmp_path / "records.jsonl"
    write_records(path, [SourceRecord("a", "Guitar", "a.wav", 2.0)])
    with pytest.raises(ManifestError) as exc:
        read_records(path)
    assert exc.value.line_no == 2
    assert read_records(path, vocabulary=None)[0].label == "Guitar"

    write_records(path, [SourceRecord("a", "Cough", "a.wav", 2.0)] * 2)
    with pytest.raises(ManifestError, match="duplicate"):
        read_records(path)

    path.write_text('{"id": "a", "label": "Cough", "path": "a.wav", "duration": 2.0}\n')
    with pytest.raises(ManifestError, match="header"):
        read_records(path)

    path.write_text('{"format": "s5kit-records", "version": 1}\n{"id": "a", "label": "Cough"}\n')
    with pytest.raises(ManifestError, match="missing field"):
        read_records(path)


def test_manifests_round_trip(tmp_path, corpus):
    """Manifests survive a write and read"""
    path = tmp_path / "manifest.jsonl"
    write_manifests(path, corpus.manifests)
    assert read_manifests(path) == corpus.manifests


def test_manifest_validation():
    """Manifests hold one to three distinct events inside the clip"""
    event = MixtureEvent("s", "Cough", 0.0, 10.0, 1.0)
    with pytest.raises(ConfigError):
        manifest_with([])
    with pytest.raises(ConfigError):
        manifest_with([dataclasses.replace(event, label=label) for label in ("Cough", "Pour", "Speech", "Dishes")])
    with pytest.raises(ConfigError):
        manifest_with([event, dataclasses.replace(event, source_id="t")])
    with pytest.raises(ConfigError):
        manifest_with([dataclasses.replace(event, onset=1.5)])


def test_mix_params_validation():
    """More than three events per clip is a usage error"""
    with pytest.raises(ConfigError):
        MixParams(max_events=4)
    with pytest.raises(ConfigError):
        MixParams(min_events=3, max_events=2)
    with pytest.raises(ConfigError):
        MixParams(snr_range=(20.0, 5.0))


@pytest.mark.parametrize(
    "event_level, background_level, snr, gain",
    [(0.1, 0.1, 0.0, 1.0), (0.1, 0.1, 20.0, 10.0), (0.1, 0.2, 20 * math.log10(2), 4.0)],
)
def test_snr_gain(event_level, background_level, snr, gain):
    """Gain closed forms"""
    event = AudioClip(np.full(100, event_level), SR)
    background = AudioClip(np.full(100, background_level), SR)
    assert snr_gain(event, background, snr) == pytest.approx(gain, rel=1e-6)


def test_snr_gain_silent():
    """A silent event or background has no SNR"""
    with pytest.raises(MixtureError):
        snr_gain(AudioClip(np.zeros(10), SR), AudioClip(np.ones(10), SR), 10.0)
    with pytest.raises(MixtureError):
        snr_gain(AudioClip(np.ones(10), SR), AudioClip(np.zeros(10), SR), 10.0)


def test_synthesis_is_additive(corpus):
    """Mixture equals noise plus the sum of the stems"""
    for result in corpus.results.values():
        total = result.noise.channel(0) + sum(stem.channel(0) for stem in result.stems.values())
        np.testing.assert_allclose(result.mixture.channel(0), total, atol=1e-6)


def test_synthesis_snr(corpus):
    """Each stem sits at its SNR above the noise bed"""
    for manifest in corpus.manifests:
        result = corpus.results[manifest.clip_id]
        for event in manifest.events:
            stem = result.stems[event.label]
            measured = 20 * math.log10(active_rms(stem) / rms(result.noise))
            assert measured == pytest.approx(event.snr, abs=0.1)
            assert 5.0 <= event.snr <= 20.0


def test_synthesis_origins(corpus):
    """Mixtures and stems are tagged with their clip"""
    manifest = corpus.manifests[0]
    result = corpus.results[manifest.clip_id]
    assert result.mixture.origin == ClipOrigin(manifest.clip_id)
    for label, stem in result.stems.items():
        assert stem.origin == ClipOrigin(manifest.clip_id, label)
        assert stem.frame_count == result.mixture.frame_count


def test_synthesis_normalizes_loud_mixtures():
    """Clipping mixtures are scaled to the normalisation peak, SNR unchanged"""
    manifest = manifest_with([MixtureEvent("loud", "Speech", 0.0, 20.0, 1.0)], noise_level_db=-6.0)
    result = synthesize_mixture(manifest, {"loud": burst(5)}.__getitem__)
    assert result.normalization_gain < 1.0
    assert np.max(np.abs(result.mixture.samples)) == pytest.approx(NORMALIZATION_PEAK, abs=1e-6)
    measured = 20 * math.log10(active_rms(result.stems["Speech"]) / rms(result.noise))
    assert measured == pytest.approx(20.0, abs=0.1)


def test_synthesis_errors():
    """Short sources, rate mismatches and unknown sources are reported"""
    event = MixtureEvent("s", "Cough", 0.0, 10.0, 1.5)
    with pytest.raises(MixtureError):
        synthesize_mixture(manifest_with([event]), {"s": burst(1, duration=1.0)}.__getitem__)
    with pytest.raises(MixtureError):
        synthesize_mixture(manifest_with([event]), {"s": burst(1, duration=2.0, sr=16000)}.__getitem__)
    with pytest.raises(MixtureError):
        synthesize_mixture(manifest_with([event]), SourceLibrary([]))


def test_noise_bed_white():
    """Without a noise source the bed is seeded white noise at the noise level"""
    manifest = manifest_with([MixtureEvent("s", "Cough", 0.0, 10.0, 1.0)], seed=4, index=2)
    bed = noise_bed(manifest)
    assert bed.size == 2 * SR
    assert np.sqrt(np.mean(bed**2)) == pytest.approx(0.01)
    assert np.array_equal(bed, noise_bed(manifest))
    assert not np.array_equal(bed, noise_bed(dataclasses.replace(manifest, index=3)))


def test_noise_bed_from_source():
    """A noise source is tiled to the clip length"""
    manifest = manifest_with([MixtureEvent("s", "Cough", 0.0, 10.0, 1.0)], noise="hum", noise_level_db=-20.0)
    bed = noise_bed(manifest, {"hum": sine(50.0, duration=0.5)}.__getitem__)
    assert bed.size == 2 * SR
    assert np.sqrt(np.mean(bed**2)) == pytest.approx(0.1)
    np.testing.assert_allclose(bed[: SR // 2], bed[SR // 2 : SR])
    with pytest.raises(MixtureError):
        noise_bed(manifest)


def test_plan_clip_deterministic(source_pool):
    """Clip plans depend only on seed and index"""
    pool, _ = source_pool
    params = MixParams(duration=2.0, sample_rate=SR)
    assert plan_clip(pool, 5, 1, params) == plan_clip(pool, 5, 1, params)
    assert plan_clip(pool, 5, 1, params) != plan_clip(pool, 5, 2, params)
    manifest = plan_clip(pool, 5, 1, params)
    assert manifest.clip_id == "mix00005"
    assert 1 <= len(manifest.events) <= 3
    for event in manifest.events:
        assert event.onset + event.duration <= manifest.duration


def test_generate_corpus_event_counts(source_pool):
    """A hundred clips cover one, two and three events with distinct classes"""
    pool, _ = source_pool
    manifests = generate_corpus(pool, 100, seed=3, params=MixParams(duration=2.0, sample_rate=SR))
    assert len(manifests) == 100
    assert {len(m.events) for m in manifests} == {1, 2, 3}
    assert all(len(set(m.labels)) == len(m.labels) for m in manifests)
    assert generate_corpus(pool, 100, seed=3, params=MixParams(duration=2.0, sample_rate=SR)) == manifests


def test_generate_corpus_pool_too_small():
    """The pool must offer at least as many classes as events per clip"""
    pool = {"Cough": [SourceRecord("a", "Cough", "a.wav", 2.0)], "Pour": [], "Speech": []}
    with pytest.raises(PoolError):
        generate_corpus(pool, 3)
    with pytest.raises(ConfigError):
        generate_corpus(pool, -1, params=MixParams(max_events=1))


def test_generate_corpus_on_disk(tmp_path, source_pool):
    """Rendered corpora are identical for any number of jobs"""
    pool, resolver = source_pool
    params = MixParams(duration=2.0, sample_rate=SR)
    serial = generate_corpus(pool, 6, seed=9, params=params, out_dir=tmp_path / "a", resolver=resolver)
    parallel = generate_corpus(pool, 6, seed=9, params=params, out_dir=tmp_path / "b", resolver=resolver, jobs=3)
    assert serial == parallel
    assert read_manifests(tmp_path / "a" / "manifest.jsonl") == serial
    first = serial[0]
    mixture = load_mixture(tmp_path / "a", first.clip_id)
    assert mixture.origin == ClipOrigin(first.clip_id)
    assert np.array_equal(mixture.samples, load_mixture(tmp_path / "b", first.clip_id).samples)
    stems = load_reference_stems(tmp_path / "a", serial)
    assert set(stems) == {(m.clip_id, label) for m in serial for label in m.labels}


def test_source_library(tmp_path):
    """Relative paths resolve against the library root"""
    write_wav(sine(440.0), tmp_path / "tone.wav")
    library = SourceLibrary([SourceRecord("tone", "MusicalKeyboard", "tone.wav", 1.0)], root=tmp_path)
    assert library.path("tone") == tmp_path / "tone.wav"
    assert library("tone") is library("tone")
    with pytest.raises(PoolError):
        library("missing")


def test_unknown_record_class():
    """Grouping rejects classes outside the vocabulary"""
    with pytest.raises(VocabularyError):
        audit_records([SourceRecord("a", "Guitar", "a.wav", 2.0)])
