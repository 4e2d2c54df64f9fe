"""Agent-based label correction.

For one mixture: tag it, expand the top-k labels with every class scoring
above the threshold, separate and re-tag each candidate, drop candidates
whose stem is tagged as something else, re-rank the survivors and separate
the final label set again.
"""

import logging
from typing import List, Tuple

from .backends import Separator, Tagger
from .exceptions import BackendError, LabelCorrectionError
from .models import AgentConfig, AgentTrace, AudioClip, EmptyFallback, LabelScores, RankBy, Verification

logger = logging.getLogger(__name__)


def candidate_labels(scores: LabelScores, cfg: AgentConfig = None) -> List[Tuple[str, float]]:
    """Top-k classes plus every class scoring strictly above the threshold.

    :return: ``(label, score)`` pairs, highest score first, ties in vocabulary order
    """
    cfg = cfg or AgentConfig()
    ranked = scores.ranked()
    return [(label, score) for rank, (label, score) in enumerate(ranked) if rank < cfg.top_k or score > cfg.threshold]


def verify_label(mixture: AudioClip, label: str, tagger: Tagger, separator: Separator) -> Verification:
    """Separate ``label`` from the mixture and check that the stem is tagged as ``label``

    :raises LabelCorrectionError: wrapping any backend failure
    """
    try:
        stem = separator.separate(mixture, label)
        retag = tagger.tag(stem)
    except BackendError as exc:
        raise LabelCorrectionError(label, exc) from exc
    retag_label = retag.top_label()
    return Verification(
        label=label,
        retag_label=retag_label,
        retag_score=retag[label],
        kept=retag_label == label,
        stem=stem,
    )


def _fallback(scores: LabelScores, cfg: AgentConfig) -> List[str]:
    if cfg.empty_fallback is EmptyFallback.ORIGINAL_TOPK:
        return [label for label, _ in scores.top_k(cfg.top_k)]
    return [label for label, _ in scores.top_k(1)]


def agent_correct(
    mixture: AudioClip, tagger: Tagger, separator: Separator, cfg: AgentConfig = None
) -> AgentTrace:
    """Run label correction on one mixture.

    :raises LabelCorrectionError: if a backend fails during verification or final separation
    """
    cfg = cfg or AgentConfig()
    clip_id = mixture.origin.clip_id if mixture.origin else None
    try:
        scores = tagger.tag(mixture)
    except BackendError as exc:
        raise LabelCorrectionError(None, exc) from exc
    candidates = candidate_labels(scores, cfg)
    verifications = [verify_label(mixture, label, tagger, separator) for label, _ in candidates]

    survivors = [v for v in verifications if v.kept]
    if cfg.rank_by is RankBy.ORIGINAL_SCORE:
        survivors.sort(key=lambda v: (-scores[v.label], scores.vocabulary.index(v.label)))
    else:
        survivors.sort(key=lambda v: (-v.retag_score, scores.vocabulary.index(v.label)))

    fallback_used = not survivors
    if fallback_used:
        final_labels = _fallback(scores, cfg)
        logger.info("Clip %s: no candidate survived verification, falling back to %s", clip_id, final_labels)
    else:
        final_labels = [v.label for v in survivors[: cfg.top_k]]
    removed = [v.label for v in verifications if not v.kept]
    if removed:
        logger.debug("Clip %s: removed %s", clip_id, removed)

    verified_stems = {v.label: v.stem for v in verifications}
    final_stems = {}
    for label in final_labels:
        if cfg.reuse_stems and label in verified_stems:
            final_stems[label] = verified_stems[label]
            continue
        try:
            final_stems[label] = separator.separate(mixture, label)
        except BackendError as exc:
            raise LabelCorrectionError(label, exc) from exc

    return AgentTrace(
        original_scores=scores,
        candidates=candidates,
        verifications=verifications,
        final_labels=final_labels,
        final_stems=final_stems,
        fallback_used=fallback_used,
        clip_id=clip_id,
    )
