import itertools
from dataclasses import replace

import numpy as np
import pytest
import torch

from src.assignment.cost import CostMatrix, TargetSet, build_cost
from src.assignment.matching import dynamic_k, hungarian, simota
from src.assignment.nms import nms
from src.core.geometry import box_iou_matrix
from src.decoders.proposals import ProposalSet, ProposalSource
from src.losses.weights import LossWeights


def brute_force_min(values: np.ndarray) -> float:
    n, g = values.shape
    best = np.inf
    if n >= g:
        for rows in itertools.permutations(range(n), g):
            best = min(best, sum(values[r, c] for c, r in enumerate(rows)))
    else:
        for cols in itertools.permutations(range(g), n):
            best = min(best, sum(values[r, c] for r, c in enumerate(cols)))
    return best


def validate_one_to_one(result, n, g):
    props = [p for p, _ in result.pairs]
    gts = [c for _, c in result.pairs]
    assert len(set(props)) == len(props)
    assert len(set(gts)) == len(gts)
    assert len(result.pairs) == min(n, g)
    assert result.unmatched_proposals == frozenset(set(range(n)) - set(props))


def test_hungarian_hand_cases():
    result = hungarian(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert result.pairs == ((0, 0), (1, 1))
    assert result.total_cost == pytest.approx(2.0)

    diagonal = np.ones((3, 3)) - np.eye(3)
    assert hungarian(diagonal).pairs == ((0, 0), (1, 1), (2, 2))
    assert hungarian(diagonal).total_cost == 0.0

    tall = hungarian(np.array([[1.0, 5.0], [4.0, 2.0], [3.0, 3.0]]))
    assert len(tall.pairs) == 2
    assert len(tall.unmatched_proposals) == 1


def test_hungarian_empty_and_ties():
    empty = hungarian(np.zeros((0, 3)))
    assert empty.pairs == () and empty.multiplicity == (0, 0, 0)
    assert hungarian(np.zeros((2, 2))).pairs == ((0, 0), (1, 1))
    assert hungarian(np.zeros((3, 1))).pairs == ((0, 0),)


def brute_force_square(values: np.ndarray) -> float:
    n = values.shape[0]
    perms = np.array(list(itertools.permutations(range(n))))
    return float(values[np.arange(n), perms].sum(axis=1).min())


@pytest.mark.parametrize("size", range(1, 8))
def test_hungarian_matches_exhaustive_search_per_size(size):
    rng = np.random.default_rng(size)
    for _ in range(200):
        values = rng.integers(0, 20, size=(size, size)).astype(float)
        result = hungarian(values)
        validate_one_to_one(result, size, size)
        assert result.total_cost == brute_force_square(values)


def test_hungarian_rectangular_matches_exhaustive_search():
    rng = np.random.default_rng(0)
    for _ in range(40):
        n, g = rng.integers(1, 8, size=2)
        values = rng.integers(0, 6, size=(n, g)).astype(float)
        result = hungarian(values)
        validate_one_to_one(result, n, g)
        assert result.total_cost == pytest.approx(brute_force_min(values))


def test_hungarian_rejects_non_finite():
    with pytest.raises(ValueError):
        hungarian(np.array([[np.inf, 1.0]]))


@pytest.mark.parametrize("ious, q, expected", [
    ([0.9, 0.8, 0.1], 3, 1),
    ([0.0, 0.0, 0.0, 0.0], 10, 1),
    ([0.9, 0.9, 0.9, 0.9], 10, 3),
    ([0.9, 0.9, 0.9, 0.9], 2, 1),
    ([0.9, 0.9, 0.9, 0.9], 3, 2),
    ([1.0] * 5, 5, 5),
    ([1.0] * 5, 10, 5),
    ([0.5, 0.5], 2, 1),
    ([0.5] * 6, 6, 3),
    ([0.6, 0.7, 0.8], 1, 1),
    ([0.2, 0.9, 0.3, 0.8, 0.7], 3, 2),
    ([0.2, 0.9, 0.3, 0.8, 0.7], 5, 2),
    ([0.95] * 6, 6, 5),
    ([0.1] * 10, 10, 1),
    ([0.25] * 8, 8, 2),
    ([0.99, 0.01], 2, 1),
    ([1.0, 1.0, 0.0], 3, 2),
    ([0.3, 0.3, 0.3], 3, 1),
    ([0.75] * 4, 4, 3),
    ([0.9, 0.9, 0.9], 10, 2),
])
def test_dynamic_k_formula_walk(ious, q, expected):
    column = np.array(ious)[:, None]
    assert dynamic_k(column, q=q).tolist() == [expected]


def test_dynamic_k_per_gt_columns():
    assert dynamic_k(np.zeros((4, 2)), q=10).tolist() == [1, 1]
    ious = np.array([[0.9, 0.1], [0.8, 0.2], [0.7, 0.0]])
    assert dynamic_k(ious, q=3).tolist() == [2, 1]
    assert dynamic_k(np.zeros((0, 3))).tolist() == [0, 0, 0]


def test_simota_hand_cases():
    single = simota(np.array([[0.5], [0.2], [0.9]]), np.array([[0.9], [0.8], [0.1]]), q=3)
    assert single.pairs == ((1, 0),)

    zero_iou = simota(np.array([[0.3, 0.1], [0.2, 0.4], [0.5, 0.5]]), np.zeros((3, 2)))
    assert zero_iou.pairs == ((0, 1), (1, 0))

    contested = simota(np.array([[0.1, 0.2], [0.5, 0.9], [0.9, 0.6]]), np.zeros((3, 2)))
    assert contested.pairs == ((0, 0), (2, 1))
    assert contested.multiplicity == (1, 1)


def test_simota_invariants_on_random_problems():
    rng = np.random.default_rng(1)
    for _ in range(500):
        n, g = int(rng.integers(2, 9)), int(rng.integers(1, 5))
        cost = rng.random((n, g))
        ious = rng.random((n, g))
        result = simota(cost, ious, q=4)
        props = [p for p, _ in result.pairs]
        assert len(set(props)) == len(props)
        if n >= g:
            assert all(m >= 1 for m in result.multiplicity)

        perm = rng.permutation(n)
        permuted = simota(cost[perm], ious[perm], q=4)
        assert sorted((int(perm[p]), gt) for p, gt in permuted.pairs) == sorted(result.pairs)


def test_nms_hand_cases():
    same = nms(np.array([[0, 0, 2, 2], [0, 0, 2, 2]]), [0.4, 0.9], 0.5)
    assert same == [1]
    disjoint = nms(np.array([[0, 0, 1, 1], [2, 2, 3, 3]]), [0.5, 0.6], 0.5)
    assert sorted(disjoint) == [0, 1]
    boxes = np.array([[0, 0, 10, 10], [0, 0, 10, 8], [20, 20, 30, 30]], dtype=float)
    assert nms(boxes, [0.9, 0.8, 0.7], 0.7) == [0, 2]
    assert nms(boxes, [0.9, 0.8, 0.7], 0.7, labels=["cat", "dog", "cat"]) == [0, 1, 2]


def test_nms_ties_keep_index_order_and_kept_boxes_are_separated():
    assert nms(np.array([[0, 0, 2, 2], [0, 0, 2, 2]]), [0.5, 0.5], 0.5) == [0]
    rng = np.random.default_rng(2)
    xy = rng.random((12, 2)) * 10
    boxes = np.concatenate([xy, xy + rng.random((12, 2)) * 5 + 1], axis=1)
    keep = nms(boxes, rng.random(12), 0.3)
    ious = box_iou_matrix(boxes[keep], boxes[keep])
    assert np.all(ious[~np.eye(len(keep), dtype=bool)] <= 0.3)


def _perfect_case():
    gt_mask = torch.zeros(1, 4, 4)
    gt_mask[0, :2, :2] = 1.0
    gt_box = torch.tensor([[0.0, 0.0, 0.5, 0.5]])
    props = ProposalSet(masks=(gt_mask * 2 - 1) * 50.0, boxes=gt_box.clone(), embeddings=torch.zeros(1, 3),
                        sources=(ProposalSource.THING,))
    logits = torch.tensor([[50.0, -50.0]])
    return props, gt_mask, gt_box, logits


def test_build_cost_perfect_proposal_costs_minus_cls_weight():
    props, gt_mask, gt_box, logits = _perfect_case()
    targets = TargetSet(gt_mask, gt_box, torch.tensor([0]), torch.tensor([True]))
    cost = build_cost(props, targets, logits, LossWeights())
    assert cost.total[0, 0] == pytest.approx(-2.0, abs=1e-4)
    assert cost.components["box"][0, 0] == pytest.approx(0.0, abs=1e-6)
    assert cost.offset == pytest.approx(2.0, abs=1e-4)
    assert np.all(cost.shifted >= 0)


def test_build_cost_stuff_has_no_box_term_and_cls_is_linear():
    props, gt_mask, _, logits = _perfect_case()
    far_box = torch.tensor([[0.6, 0.6, 1.0, 1.0]])
    stuff = TargetSet(gt_mask, far_box, torch.tensor([0]), torch.tensor([False]))
    thing = TargetSet(gt_mask, far_box, torch.tensor([0]), torch.tensor([True]))
    weights = LossWeights()
    assert build_cost(props, stuff, logits, weights).components["box"][0, 0] == 0.0
    assert build_cost(props, thing, logits, weights).components["box"][0, 0] > 0.0

    base = build_cost(props, thing, logits, weights)
    doubled = build_cost(props, thing, logits, replace(weights, cls=4.0))
    assert doubled.components["class"][0, 0] == pytest.approx(2 * base.components["class"][0, 0])
    assert doubled.components["box"][0, 0] == pytest.approx(base.components["box"][0, 0])
    assert doubled.components["mask"][0, 0] == pytest.approx(base.components["mask"][0, 0])


def test_cost_matrix_rejects_non_finite():
    with pytest.raises(ValueError):
        CostMatrix(np.array([[np.nan]]))
