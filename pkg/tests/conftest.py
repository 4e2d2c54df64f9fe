import numpy as np
import pytest

from s5kit.dataset import generate_corpus, synthesize_mixture
from s5kit.models import DEFAULT_VOCABULARY, AudioClip, MixParams, SourceRecord

SR = 8000


def sine(freq, duration=1.0, sr=SR, amp=0.5):
    t = np.arange(int(round(duration * sr))) / sr
    return AudioClip(amp * np.sin(2 * np.pi * freq * t), sr)


def burst(seed, duration=1.0, sr=SR, amp=0.3):
    rng = np.random.default_rng(seed)
    return AudioClip(amp * rng.standard_normal(int(round(duration * sr))), sr)


class Corpus:
    """Synthesised clips held in memory"""

    def __init__(self, manifests, results):
        self.manifests = manifests
        self.results = results

    def mixture(self, clip_id):
        return self.results[clip_id].mixture

    @property
    def stems(self):
        return {
            (clip_id, label): stem for clip_id, result in self.results.items() for label, stem in result.stems.items()
        }


@pytest.fixture(scope="session")
def source_pool():
    """Two one-second noise bursts per class, and a resolver for them"""
    pool, audio = {}, {}
    for index, label in enumerate(DEFAULT_VOCABULARY):
        pool[label] = []
        for variant in range(2):
            source_id = f"{label}-{variant}"
            pool[label].append(SourceRecord(source_id, label, f"{source_id}.wav", 1.0))
            audio[source_id] = burst(100 * index + variant)
    return pool, audio.__getitem__


def build_corpus(source_pool, n_clips, seed=7, **params):
    pool, resolver = source_pool
    params = MixParams(duration=2.0, sample_rate=SR, **params)
    manifests = generate_corpus(pool, n_clips, seed=seed, params=params)
    results = {m.clip_id: synthesize_mixture(m, resolver) for m in manifests}
    return Corpus(manifests, results)


@pytest.fixture(scope="session")
def corpus(source_pool):
    """Fifty clips of one to three events"""
    return build_corpus(source_pool, 50)


@pytest.fixture(scope="session")
def two_event_corpus(source_pool):
    """Fifty clips with exactly two events"""
    return build_corpus(source_pool, 50, min_events=2, max_events=2)
