"""Tagging and separation metrics.

Tagging accuracies are computed per clip on label sets:

* set accuracy (Acc1) - 1 if the predicted set equals the reference set
* macro-averaged accuracy (Acc2) - share of reference labels recovered
* FP-penalized accuracy (Acc3) - ``TP / (TP + FN + FP)``

Separation is scored with the class-aware SDR improvement (CA-SDRi).
Corpus figures are arithmetic means of the per-clip values.
"""

import logging
import math
from collections import Counter
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .exceptions import AlignmentError, NothingToEvaluateError
from .models import DEFAULT_VOCABULARY, AudioClip, ClassVocabulary, ClipEval, CorpusSummary, EvalCounts

logger = logging.getLogger(__name__)

SDR_CLAMP_DB = 100.0

LabelSet = FrozenSet[str]


def label_set(labels: Iterable[str], vocabulary: ClassVocabulary = DEFAULT_VOCABULARY) -> LabelSet:
    """Build a label set, checking each label against the vocabulary

    :raises VocabularyError: for labels outside the vocabulary
    """
    return vocabulary.validate(labels)


def count_matches(
    pred: Iterable[str], truth: Iterable[str], vocabulary: ClassVocabulary = DEFAULT_VOCABULARY
) -> EvalCounts:
    """Count true positives, false negatives and false positives

    :raises VocabularyError: for labels outside the vocabulary
    """
    pred, truth = label_set(pred, vocabulary), label_set(truth, vocabulary)
    return EvalCounts(tp=len(pred & truth), fn=len(truth - pred), fp=len(pred - truth))


def fp_penalized_accuracy(counts: EvalCounts) -> float:
    """``TP / (TP + FN + FP)``; 1.0 when both sets are empty"""
    union = counts.tp + counts.fn + counts.fp
    if union == 0:
        return 1.0
    return counts.tp / union


def macro_accuracy(pred: Iterable[str], truth: Iterable[str]) -> float:
    """Share of reference labels present in the prediction.

    False positives are not penalised. With an empty reference the score is
    1.0 for an empty prediction and 0.0 otherwise.
    """
    pred, truth = frozenset(pred), frozenset(truth)
    if not truth:
        return 1.0 if not pred else 0.0
    return len(pred & truth) / len(truth)


def set_accuracy(pred: Iterable[str], truth: Iterable[str]) -> int:
    """1 if the label sets are identical, else 0"""
    return int(frozenset(pred) == frozenset(truth))


def _check_aligned(a: AudioClip, b: AudioClip, what: str):
    if a.sample_rate != b.sample_rate or a.frame_count != b.frame_count:
        raise AlignmentError(
            f"{what}: {a.frame_count} frames at {a.sample_rate} Hz vs {b.frame_count} frames at {b.sample_rate} Hz"
        )


def sdr(est: AudioClip, ref: AudioClip, channel: int = 0, clamp: float = SDR_CLAMP_DB) -> float:
    """Signal-to-distortion ratio in dB, clamped to ``[-clamp, clamp]``.

    A silent reference scores ``-clamp``; a perfect estimate ``+clamp``.

    :raises AlignmentError: on length or sample rate mismatch
    """
    _check_aligned(est, ref, "SDR")
    reference = ref.channel(channel)
    error = reference - est.channel(channel)
    signal_energy = float(np.dot(reference, reference))
    error_energy = float(np.dot(error, error))
    if signal_energy == 0.0:
        return -clamp
    if error_energy == 0.0:
        return clamp
    return float(np.clip(10.0 * math.log10(signal_energy / error_energy), -clamp, clamp))


def class_improvement(
    label: str,
    truth_stems: Mapping[str, AudioClip],
    est_stems: Mapping[str, AudioClip],
    mixture: AudioClip,
    channel: int,
    clamp: float,
) -> float:
    """SDR improvement credited to one class of the union.

    Classes present on both sides earn ``SDR(est) - SDR(mixture)``; false
    positives and missed classes earn 0. This is the only place that
    convention lives.
    """
    if label in truth_stems and label in est_stems:
        reference = truth_stems[label]
        return sdr(est_stems[label], reference, channel, clamp) - sdr(mixture, reference, channel, clamp)
    return 0.0


def ca_sdri(
    truth_stems: Mapping[str, AudioClip],
    est_stems: Mapping[str, AudioClip],
    mixture: AudioClip,
    channel: int = 0,
    clamp: float = SDR_CLAMP_DB,
    unresolved: Iterable[str] = (),
) -> Tuple[float, Dict[str, float]]:
    """Class-aware SDR improvement.

    Mean of the per-class improvement over the union of reference and
    estimated classes.

    :param unresolved: Predicted classes without an estimated stem; they join
        the union and score 0
    :return: ``(mean improvement, per-class improvement)``
    :raises NothingToEvaluateError: when the union is empty
    :raises AlignmentError: when stems and mixture are not aligned
    """
    for label, stem in list(truth_stems.items()) + list(est_stems.items()):
        _check_aligned(stem, mixture, f"stem '{label}'")
    union = set(truth_stems) | set(est_stems) | set(unresolved)
    if not union:
        raise NothingToEvaluateError("nothing to evaluate: no reference or estimated classes")
    per_class = {
        label: class_improvement(label, truth_stems, est_stems, mixture, channel, clamp) for label in sorted(union)
    }
    return sum(per_class.values()) / len(per_class), per_class


def evaluate_clip(
    clip_id: str,
    pred: Iterable[str],
    truth: Iterable[str],
    truth_stems: Mapping[str, AudioClip] = None,
    est_stems: Mapping[str, AudioClip] = None,
    mixture: AudioClip = None,
    channel: int = 0,
    clamp: float = SDR_CLAMP_DB,
    vocabulary: ClassVocabulary = DEFAULT_VOCABULARY,
) -> ClipEval:
    """All metrics for one clip.

    CA-SDRi is computed when a mixture and reference stems are given.
    Predicted classes without an estimated stem count as false positives
    scoring 0.
    """
    pred, truth = label_set(pred, vocabulary), label_set(truth, vocabulary)
    counts = count_matches(pred, truth, vocabulary)
    result = ClipEval(
        clip_id=clip_id,
        set_accuracy=float(set_accuracy(pred, truth)),
        macro_accuracy=macro_accuracy(pred, truth),
        fp_penalized=fp_penalized_accuracy(counts),
        predicted=vocabulary.ordered(pred),
        truth=vocabulary.ordered(truth),
    )
    if mixture is not None and truth_stems is not None:
        est_stems = {label: stem for label, stem in (est_stems or {}).items() if label in pred}
        missing = sorted(pred - set(est_stems))
        for label in missing:
            logger.warning("Clip %s: no estimated stem for predicted class '%s', scored as 0", clip_id, label)
        result.ca_sdri, result.per_class_sdri = ca_sdri(
            truth_stems, est_stems, mixture, channel, clamp, unresolved=missing
        )
    return result


def summarize(evals: Sequence[ClipEval]) -> CorpusSummary:
    """Arithmetic mean of per-clip metrics; CA-SDRi over clips that have it"""
    n = len(evals)
    if n == 0:
        return CorpusSummary(n_clips=0, set_accuracy=0.0, macro_accuracy=0.0, fp_penalized=0.0)
    separated = [e.ca_sdri for e in evals if e.ca_sdri is not None]
    return CorpusSummary(
        n_clips=n,
        set_accuracy=sum(e.set_accuracy for e in evals) / n,
        macro_accuracy=sum(e.macro_accuracy for e in evals) / n,
        fp_penalized=sum(e.fp_penalized for e in evals) / n,
        ca_sdri=sum(separated) / len(separated) if separated else None,
        n_separation_clips=len(separated),
    )


def per_class_accuracy(
    pairs: Iterable[Tuple[Iterable[str], Iterable[str]]], vocabulary: ClassVocabulary = DEFAULT_VOCABULARY
) -> Dict[str, Dict[str, Optional[float]]]:
    """Per-class breakdown over ``(pred, truth)`` pairs.

    For every class: number of reference occurrences, recall over them, and
    number of false positives. Recall is ``None`` for classes never present.
    """
    present, hits, false_pos = Counter(), Counter(), Counter()
    for pred, truth in pairs:
        pred, truth = label_set(pred, vocabulary), label_set(truth, vocabulary)
        present.update(truth)
        hits.update(pred & truth)
        false_pos.update(pred - truth)
    return {
        label: {
            "support": present[label],
            "recall": hits[label] / present[label] if present[label] else None,
            "false_positives": false_pos[label],
        }
        for label in vocabulary
    }


def compare_summaries(before: CorpusSummary, after: CorpusSummary) -> Dict[str, Optional[float]]:
    """Metric deltas ``after - before`` (e.g. without vs with label correction)"""
    deltas = {}
    for name in ("set_accuracy", "macro_accuracy", "fp_penalized", "ca_sdri"):
        old, new = getattr(before, name), getattr(after, name)
        deltas[name] = None if old is None or new is None else new - old
    return deltas


def fp_penalized_regressions(before: Sequence[ClipEval], after: Sequence[ClipEval]) -> List[str]:
    """IDs of clips whose FP-penalized accuracy dropped between two runs"""
    previous = {e.clip_id: e.fp_penalized for e in before}
    return [e.clip_id for e in after if e.clip_id in previous and e.fp_penalized < previous[e.clip_id]]
