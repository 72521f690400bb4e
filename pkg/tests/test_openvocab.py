import numpy as np
import pytest
import torch

from conftest import block_mask
from src.core.errors import PromptError, ShapeMismatchError
from src.core.geometry import BinaryMask
from src.decoders.model import SegmentationModel, image_to_tensor
from src.decoders.proposals import ProposalSet, ProposalSource
from src.openvocab.auxiliary import AuxiliaryEmbedder, mask_pool, train_auxiliary
from src.openvocab.combine import combine_logits, open_vocab_classify, softmax
from src.openvocab.hierarchy import (LabeledMask, PartRelabelInput, combine_instance_part, dual_pass_segment,
                                     relabel_external_parts)


class FixedRegionLogits:
    """Auxiliary model double returning preset region logits."""

    def __init__(self, logits):
        self.logits = torch.as_tensor(logits, dtype=torch.float64)

    def region_logits(self, image, masks, names):
        return self.logits


def _props(n, h=4, w=4):
    return ProposalSet(torch.randn(n, h, w), torch.rand(n, 4).sort(dim=1).values, torch.randn(n, 3),
                       (ProposalSource.THING,) * n)


def test_mask_pool_cases():
    features = torch.arange(2 * 2 * 3, dtype=torch.float64).reshape(2, 2, 3)
    full, empty_flag = mask_pool(features, np.ones((2, 3), dtype=bool))
    assert not empty_flag
    assert torch.allclose(full, features.flatten(1).mean(1))

    single = np.zeros((2, 3), dtype=bool)
    single[1, 2] = True
    assert torch.allclose(mask_pool(features, single)[0], features[:, 1, 2])

    pair = np.zeros((2, 3), dtype=bool)
    pair[0, 0] = pair[1, 2] = True
    assert torch.allclose(mask_pool(features, BinaryMask(pair))[0], (features[:, 0, 0] + features[:, 1, 2]) / 2)

    vector, empty_flag = mask_pool(features, np.zeros((2, 3), dtype=bool))
    assert empty_flag and torch.equal(vector, torch.zeros(2, dtype=torch.float64))


def test_mask_pool_resamples_to_feature_grid():
    features = torch.arange(4, dtype=torch.float32).reshape(1, 2, 2)
    mask = np.zeros((4, 4), dtype=bool)
    mask[:2, :2] = True
    assert torch.allclose(mask_pool(features, mask)[0], torch.tensor([0.0]))


def test_combine_logits_endpoints_and_symmetry():
    p1 = np.array([[0.8, 0.2], [0.3, 0.7]])
    p2 = np.array([[0.2, 0.8], [0.6, 0.4]])
    assert np.allclose(combine_logits(p1, p2, 0.0), p1)
    assert np.allclose(combine_logits(p1, p2, 1.0), p2)
    assert np.allclose(combine_logits(p1[:1], p2[:1], 0.5), [[0.5, 0.5]])
    assert np.allclose(combine_logits(p1, p2, 0.3).sum(axis=1), 1.0, atol=1e-9)
    with pytest.raises(ValueError):
        combine_logits(p1, p2, 1.5)


def test_combine_logits_argmax_ignores_row_rescaling():
    rng = np.random.default_rng(0)
    p1 = rng.random((6, 4))
    p2 = rng.random((6, 4))
    base = combine_logits(p1, p2, 0.45).argmax(axis=1)
    scaled = combine_logits(p1 * 3.0, p2 * 0.2, 0.45).argmax(axis=1)
    assert np.array_equal(base, scaled)


def test_open_vocab_classify_closed_set_matches_decoder():
    props = _props(3)
    logits = torch.randn(3, 4)
    aux = FixedRegionLogits(torch.randn(3, 3))
    probs = open_vocab_classify(props, torch.zeros(3, 4, 4), ["a", "b", "c"], logits, aux, lambda_seen=0.0)
    assert np.array_equal(probs.predicted(), logits[:, :3].numpy().argmax(axis=1))
    assert np.allclose(probs.p_final, probs.p1)
    assert np.allclose(probs.p_final.sum(axis=1), 1.0, atol=1e-9)


def test_open_vocab_classify_single_class_and_empty():
    props = _props(2)
    probs = open_vocab_classify(props, torch.zeros(3, 4, 4), ["a"], torch.randn(2, 2),
                                FixedRegionLogits(torch.randn(2, 1)))
    assert np.allclose(probs.p_final, 1.0)
    with pytest.raises(PromptError):
        open_vocab_classify(props, torch.zeros(3, 4, 4), [], torch.randn(2, 1))
    with pytest.raises(ShapeMismatchError):
        open_vocab_classify(props, torch.zeros(3, 4, 4), ["a", "b"], torch.randn(2, 2))


def test_open_vocab_classify_uses_seen_and_novel_factors():
    props = _props(1)
    logits = torch.log(torch.tensor([[0.8, 0.2, 1e-3]], dtype=torch.float64))
    aux_logits = torch.log(torch.tensor([[0.2, 0.8]], dtype=torch.float64))
    probs = open_vocab_classify(props, torch.zeros(3, 4, 4), ["cat", "giraffe"], logits,
                                FixedRegionLogits(aux_logits), lambda_seen=0.2, lambda_novel=0.45,
                                seen_set=["cat"])
    assert probs.lam.tolist() == [0.2, 0.45]
    expected = combine_logits(softmax(logits.numpy()[:, :2]), softmax(aux_logits.numpy()), [0.2, 0.45])
    assert np.allclose(probs.p_final, expected)
    with_other = probs.with_other()
    assert with_other.shape == (1, 3)
    assert np.allclose(with_other.sum(axis=1), 1.0)


def test_auxiliary_embedder_trains_and_embeds(scenes, tiny_vocabulary):
    aux = AuxiliaryEmbedder(channels=3, d=8, vocab_size=256)
    history = train_auxiliary(aux, scenes, tiny_vocabulary, iterations=4, log_every=0)
    assert len(history) == 4 and all(np.isfinite(history))
    image = image_to_tensor(scenes[0].image)
    with torch.no_grad():
        region = aux.embed_region(image, scenes[0].instances[0].mask)
        classes = aux.embed_class(["cat", "sky"])
    assert region.shape == (8,) and classes.shape == (2, 8)
    assert torch.allclose(classes.norm(dim=1), torch.ones(2), atol=1e-5)
    assert train_auxiliary(aux, [], tiny_vocabulary) == []


def test_dual_pass_segment(small_decoder_config, scenes):
    model = SegmentationModel(small_decoder_config).eval()
    image = image_to_tensor(scenes[0].image)
    instance_only = dual_pass_segment(model, image, ["cat", "giraffe"], [])
    assert instance_only.parts is None

    result = dual_pass_segment(model, image, ["cat", "giraffe"], ["head", "leg"])
    again = dual_pass_segment(model, image, ["cat", "giraffe"], ["head", "leg"])
    assert "giraffe leg" in result.parts.prompt.labels
    assert result.parts.probabilities.shape[1] == result.parts.prompt.num_columns
    assert np.array_equal(result.parts.probabilities, again.parts.probabilities)
    assert torch.equal(result.instances.output.proposals.masks, again.instances.output.proposals.masks)


def test_combine_instance_part(tiny_vocabulary):
    cat = LabeledMask(block_mask(8, 8, 0, 4, 0, 4), "cat")
    dog = LabeledMask(block_mask(8, 8, 4, 8, 4, 8), "dog")
    head = LabeledMask(block_mask(8, 8, 0, 2, 0, 4), "cat head")
    stray_tail = LabeledMask(block_mask(8, 8, 0, 2, 0, 2), "giraffe leg")
    result = combine_instance_part([cat, dog], [head, stray_tail], tiny_vocabulary)
    assert result[0].parts == [("head", head.mask)]
    assert result[0].groups == {"upper": head.mask}
    assert result[1].parts == []


def test_combine_instance_part_straddling_and_ties(tiny_vocabulary):
    left = LabeledMask(block_mask(4, 8, 0, 4, 0, 4), "cat")
    right = LabeledMask(block_mask(4, 8, 0, 4, 4, 8), "cat")
    body = LabeledMask(block_mask(4, 8, 0, 2, 1, 8), "cat body")
    result = combine_instance_part([left, right], [body], tiny_vocabulary)
    assert result[0].parts == [] and len(result[1].parts) == 1
    assert result[1].parts[0][1] == block_mask(4, 8, 0, 2, 4, 8)

    even = LabeledMask(block_mask(4, 8, 2, 4, 2, 6), "cat leg")
    tie = combine_instance_part([left, right], [even], tiny_vocabulary)
    assert len(tie[0].parts) == 1 and tie[1].parts == []
    for inst in tie:
        for _, mask in inst.parts:
            assert not np.any(mask.data & ~inst.mask.data)


def test_relabel_external_parts_hand_cases():
    a = block_mask(4, 4, 0, 4, 0, 3)
    b = block_mask(4, 4, 0, 4, 3, 4)
    onehot = np.array([[1.0, 0.0], [0.0, 1.0]])

    inside = relabel_external_parts(PartRelabelInput([a, b], onehot, [block_mask(4, 4, 0, 2, 0, 2)]))
    assert np.allclose(inside.probabilities, [[1.0, 0.0]])

    straddle = block_mask(4, 4, 0, 1, 0, 4)
    split = relabel_external_parts(PartRelabelInput([a, b], onehot, [straddle]))
    assert np.allclose(split.probabilities, [[0.75, 0.25]])
    assert not split.unmatched.any()

    reordered = relabel_external_parts(PartRelabelInput([b, a], onehot[::-1], [straddle]))
    assert np.allclose(reordered.probabilities, split.probabilities)

    disjoint = relabel_external_parts(PartRelabelInput([block_mask(4, 4, 0, 1, 0, 1)], onehot[:1],
                                                       [block_mask(4, 4, 3, 4, 3, 4)]))
    assert np.allclose(disjoint.probabilities, [[0.5, 0.5]])
    assert disjoint.unmatched.tolist() == [True]


def test_relabel_without_semantic_regions_is_uniform_and_needs_classes():
    parts = [block_mask(4, 4, 0, 2, 0, 2)]
    empty = relabel_external_parts(PartRelabelInput([], np.zeros((0, 3)), parts))
    assert np.allclose(empty.probabilities, [[1 / 3] * 3])
    assert empty.unmatched.tolist() == [True]
    with pytest.raises(ShapeMismatchError):
        PartRelabelInput([], np.zeros((0, 0)), parts)
    with pytest.raises(ShapeMismatchError):
        PartRelabelInput([block_mask(4, 4, 0, 4, 0, 4)], np.zeros((1, 0)), parts)


def test_relabel_rows_sum_to_one_and_shape_checks():
    rng = np.random.default_rng(4)
    semantic = [BinaryMask(rng.random((6, 6)) < 0.5) for _ in range(3)]
    parts = [BinaryMask(rng.random((6, 6)) < 0.3) for _ in range(5)]
    probs = rng.dirichlet(np.ones(4), size=3)
    result = relabel_external_parts(PartRelabelInput(semantic, probs, parts))
    assert np.allclose(result.probabilities.sum(axis=1), 1.0)
    with pytest.raises(ShapeMismatchError):
        PartRelabelInput(semantic, probs[:2], parts)
    with pytest.raises(ShapeMismatchError):
        PartRelabelInput(semantic, probs, [BinaryMask.zeros(3, 3)])
