import numpy as np
import pytest
import torch

from src.core.errors import ConfigError, ShapeMismatchError
from src.decoders.proposals import ProposalSet, ProposalSource
from src.evaluation.panoptic import STUFF, THING
from src.evaluation.postprocess import PostprocessThresholds, binarize, panoptic_postprocess
from src.openvocab.combine import ClassProbabilities

LABELS = ("cat", "dog", "sky")
THINGS = {"cat", "dog"}


def _logits(h, w, y0, y1, x0, x1):
    logits = torch.full((h, w), -20.0)
    logits[y0:y1, x0:x1] = 20.0
    return logits


def _props(masks, boxes, sources):
    return ProposalSet(torch.stack(masks), torch.tensor(boxes, dtype=torch.float32), torch.zeros(len(masks), 3),
                       tuple(sources))


def _probs(p_final, p_other=None):
    p_final = np.asarray(p_final, dtype=float)
    n = len(p_final)
    return ClassProbabilities(labels=LABELS, p1=p_final, p2=p_final, p_final=p_final,
                              p_other=np.zeros(n) if p_other is None else np.asarray(p_other, dtype=float),
                              lam=np.zeros(len(LABELS)))


def test_single_confident_proposal_is_kept():
    props = _props([_logits(8, 8, 0, 4, 0, 4)], [[0.0, 0.0, 0.5, 0.5]], [ProposalSource.THING])
    result = panoptic_postprocess(props, _probs([[1.0, 0.0, 0.0]]), THINGS)
    assert len(result) == 1
    segment = result.segments[0]
    assert segment.label == "cat" and segment.kind == THING
    assert np.array_equal(segment.mask.data, binarize(props, 0.5)[0])
    assert segment.score == pytest.approx(1.0)


def test_fully_covered_lower_score_segment_is_dropped():
    mask = _logits(8, 8, 0, 4, 0, 4)
    props = _props([mask, mask.clone()], [[0.0, 0.0, 0.5, 0.5]] * 2, [ProposalSource.THING] * 2)
    result = panoptic_postprocess(props, _probs([[0.9, 0.1, 0.0], [0.2, 0.8, 0.0]]), THINGS)
    assert [s.label for s in result.segments] == ["cat"]


def test_partial_overlap_respects_overlap_keep():
    props = _props([_logits(8, 8, 0, 4, 0, 8), _logits(8, 8, 3, 8, 0, 8)],
                   [[0.0, 0.0, 1.0, 0.5], [0.0, 0.375, 1.0, 1.0]], [ProposalSource.THING] * 2)
    probs = _probs([[0.9, 0.1, 0.0], [0.1, 0.8, 0.0]])
    kept = panoptic_postprocess(props, probs, THINGS)
    assert [s.label for s in kept.segments] == ["cat", "dog"]
    assert int(kept.segments[1].mask.data.sum()) == 32
    strict = panoptic_postprocess(props, probs, THINGS, PostprocessThresholds(overlap_keep=0.9))
    assert [s.label for s in strict.segments] == ["cat"]


def test_low_scores_give_empty_prediction():
    props = _props([_logits(8, 8, 0, 4, 0, 4)], [[0.0, 0.0, 0.5, 0.5]], [ProposalSource.THING])
    assert len(panoptic_postprocess(props, _probs([[1.0, 0.0, 0.0]], p_other=[0.9]), THINGS)) == 0
    assert len(panoptic_postprocess(props, _probs([[0.2, 0.2, 0.6]]), THINGS)) == 0


def test_decoupled_mode_drops_kind_mismatches():
    props = _props([_logits(8, 8, 0, 4, 0, 4)], [[0.0, 0.0, 0.5, 0.5]], [ProposalSource.THING])
    probs = _probs([[0.0, 0.0, 1.0]])
    assert len(panoptic_postprocess(props, probs, THINGS)) == 0
    unified = panoptic_postprocess(props, probs, THINGS, decoupled=False)
    assert [(s.label, s.kind) for s in unified.segments] == [("sky", STUFF)]


def test_same_class_stuff_segments_merge():
    props = _props([_logits(8, 8, 0, 2, 0, 8), _logits(8, 8, 6, 8, 0, 8)], [[0.0, 0.0, 1.0, 0.25],
                                                                          [0.0, 0.75, 1.0, 1.0]],
                   [ProposalSource.STUFF] * 2)
    result = panoptic_postprocess(props, _probs([[0.0, 0.0, 0.9], [0.0, 0.0, 0.8]]), THINGS)
    assert len(result) == 1
    assert result.segments[0].label == "sky"
    assert int(result.segments[0].mask.data.sum()) == 32
    assert result.segments[0].score == pytest.approx(0.9)


def test_same_class_things_are_suppressed_by_nms():
    props = _props([_logits(8, 8, 0, 4, 0, 4), _logits(8, 8, 4, 8, 4, 8)], [[0.0, 0.0, 0.5, 0.5]] * 2,
                   [ProposalSource.THING] * 2)
    result = panoptic_postprocess(props, _probs([[0.9, 0.0, 0.1], [0.8, 0.0, 0.2]]), THINGS)
    assert len(result) == 1 and result.segments[0].source_index == 0


def test_threshold_validation_and_shape_checks():
    with pytest.raises(ConfigError):
        PostprocessThresholds(score_threshold=1.5)
    with pytest.raises(ConfigError):
        PostprocessThresholds(overlap_keep=-0.1)
    props = _props([_logits(8, 8, 0, 4, 0, 4)], [[0.0, 0.0, 0.5, 0.5]], [ProposalSource.THING])
    with pytest.raises(ShapeMismatchError):
        panoptic_postprocess(props, _probs([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]), THINGS)
