import numpy as np
import pytest

from conftest import block_mask, mask_from
from src.core.errors import OverlappingSegmentsError
from src.core.geometry import BinaryMask, Box
from src.evaluation.detection import RECALL_POINTS, Detection, average_precision
from src.evaluation.novel import novel_class_ap, novel_probability_mass
from src.evaluation.panoptic import STUFF, THING, PanopticPrediction, Segment, panoptic_from_sample, panoptic_quality
from src.evaluation.semantic import class_ious, miou, miou_parts, oiou, semantic_map
from src.openvocab.combine import ClassProbabilities


def _segments_from_map(label_map, things=()):
    return PanopticPrediction([
        Segment(BinaryMask(label_map == label), label, THING if label in things else STUFF)
        for label in sorted(set(label_map.ravel().tolist()))
    ])


def test_pq_hand_cases():
    gt = PanopticPrediction([Segment(block_mask(4, 5, 0, 2, 0, 5), "cat")])
    assert panoptic_quality(gt, gt)["pq"] == pytest.approx(1.0)
    assert panoptic_quality(PanopticPrediction([]), gt)["pq"] == 0.0

    # 8 of the 10 gt pixels predicted: IoU 0.8, plus one unmatched prediction
    pred = PanopticPrediction([Segment(block_mask(4, 5, 0, 2, 0, 4), "cat"),
                               Segment(block_mask(4, 5, 3, 4, 0, 2), "cat")])
    report = panoptic_quality(pred, gt)
    assert report["pq"] == pytest.approx(0.8 / 1.5)
    assert report["per_class"]["cat"]["tp"] == 1 and report["per_class"]["cat"]["fp"] == 1
    assert report["sq"] == pytest.approx(0.8)
    assert report["rq"] == pytest.approx(1 / 1.5)


def test_pq_discards_other_and_rejects_overlaps():
    gt = PanopticPrediction([Segment(block_mask(4, 4, 0, 2, 0, 4), "cat")])
    pred = PanopticPrediction([Segment(block_mask(4, 4, 0, 2, 0, 4), "cat"),
                               Segment(block_mask(4, 4, 2, 4, 0, 4), "other", STUFF)])
    assert panoptic_quality(pred, gt)["pq"] == pytest.approx(1.0)
    with pytest.raises(OverlappingSegmentsError):
        PanopticPrediction([Segment(block_mask(4, 4, 0, 2, 0, 4), "cat"),
                            Segment(block_mask(4, 4, 1, 3, 0, 4), "dog")])


def _pq_oracle(pred_maps, gt_maps):
    totals = {}
    for p, g in zip(pred_maps, gt_maps):
        for c in set(p.ravel().tolist()) | set(g.ravel().tolist()):
            s = totals.setdefault(c, [0.0, 0, 0, 0])
            pm, gm = p == c, g == c
            if pm.any() and gm.any():
                iou = (pm & gm).sum() / (pm | gm).sum()
                if iou > 0.5:
                    s[0] += iou
                    s[1] += 1
                    continue
            s[2] += int(pm.any())
            s[3] += int(gm.any())
    values = [iou / (tp + 0.5 * fp + 0.5 * fn) for iou, tp, fp, fn in totals.values()]
    return float(np.mean(values))


def test_pq_and_miou_agree_with_brute_force_oracles():
    rng = np.random.default_rng(0)
    labels = np.array(["a", "b", "c", "d"], dtype=object)
    for _ in range(25):
        gt_maps = [labels[rng.integers(0, 4, size=(6, 6))] for _ in range(2)]
        pred_maps = []
        for g in gt_maps:
            p = g.copy()
            flip = rng.random((6, 6)) < 0.2
            p[flip] = labels[rng.integers(0, 4, size=int(flip.sum()))]
            pred_maps.append(p)
        preds = [_segments_from_map(p) for p in pred_maps]
        gts = [_segments_from_map(g) for g in gt_maps]
        assert panoptic_quality(preds, gts)["pq"] == pytest.approx(_pq_oracle(pred_maps, gt_maps))

        per_class = []
        for c in labels:
            inter = sum(int(((p == c) & (g == c)).sum()) for p, g in zip(pred_maps, gt_maps))
            union = sum(int(((p == c) | (g == c)).sum()) for p, g in zip(pred_maps, gt_maps))
            if union:
                per_class.append(inter / union)
        assert miou(pred_maps, gt_maps) == pytest.approx(np.mean(per_class))


def test_pq_is_order_invariant():
    gt = PanopticPrediction([Segment(block_mask(4, 4, 0, 2, 0, 4), "cat"), Segment(block_mask(4, 4, 2, 4, 0, 4),
                                                                                   "sky", STUFF)])
    pred = PanopticPrediction(list(reversed(gt.segments)))
    assert panoptic_quality(pred, gt)["pq"] == pytest.approx(1.0)


def test_miou_hand_cases():
    a = np.array([["x", "x"], ["y", "y"]], dtype=object)
    assert miou(a, a) == 1.0
    b = np.array([["y", "y"], ["x", "x"]], dtype=object)
    assert miou(a, b) == 0.0
    g = np.array([["x", "y"], ["y", "y"]], dtype=object)
    assert miou(a, g) == pytest.approx((1 / 2 + 2 / 3) / 2)
    assert class_ious(a, g) == pytest.approx({"x": 0.5, "y": 2 / 3})


def test_semantic_map_fills_background(scenes):
    sample = scenes[0]
    gt = panoptic_from_sample(sample)
    labels = semantic_map(gt, sample.height, sample.width)
    assert "other" not in set(labels.ravel().tolist())
    partial = semantic_map(PanopticPrediction(gt.segments[:1]), sample.height, sample.width)
    assert "other" in set(partial.ravel().tolist())


def test_oiou_aggregates_over_dataset():
    full = np.ones((2, 2), dtype=bool)
    assert oiou([full], [full]) == 1.0
    assert oiou([np.zeros((2, 2), dtype=bool)], [full]) == 0.0
    half = mask_from([[1, 0], [0, 0]])
    two = mask_from([[1, 1], [0, 0]])
    assert oiou([half, half], [two, two]) == pytest.approx(0.5)

    big_gt = np.zeros((4, 5), dtype=bool)
    big_gt[:2] = True
    big_pred = big_gt.copy()
    big_pred[1, 4] = False
    # (1, 2) and (9, 10): aggregate 10 / 12, per-sample mean 0.7
    assert oiou([half, big_pred], [two, big_gt]) == pytest.approx(10 / 12)


def test_miou_parts_cases():
    head = mask_from([[1, 1, 0, 0]])
    tail = mask_from([[0, 0, 1, 1]])
    identity = {"head": {"head"}, "tail": {"tail"}}
    pred = {"head": mask_from([[1, 0, 0, 0]]), "tail": tail}
    gt = {"head": head, "tail": tail}
    grouped = miou_parts([pred], [gt], identity)
    assert grouped["miou_parts"] == pytest.approx(miou(np.array([["head", "other", "tail", "tail"]], dtype=object),
                                                       np.array([["head", "head", "tail", "tail"]], dtype=object)))
    assert miou_parts([gt], [gt], identity)["miou_parts"] == 1.0

    ears = mask_from([[1, 0, 0, 0]])
    eyes = mask_from([[0, 1, 0, 0]])
    gt_parts = {"ear": mask_from([[1, 1, 0, 0]]), "eye": BinaryMask.zeros(1, 4)}
    pred_parts = {"ear": ears, "eye": eyes}
    result = miou_parts([pred_parts], [gt_parts], {"head": {"ear", "eye"}})
    assert result["per_group"]["head"] == pytest.approx(1.0)

    with pytest.raises(ValueError):
        miou_parts([{"wing": ears}], [gt_parts], {"head": {"ear", "eye"}})


def _det(label, rows, score=1.0):
    return Detection(label, mask=mask_from(rows), score=score)


def test_average_precision_hand_cases():
    gt = [[_det("cat", [[1, 1], [0, 0]])]]
    assert average_precision([[_det("cat", [[1, 1], [0, 0]], 0.9)]], gt, mode="mask")["ap"] == pytest.approx(1.0)
    assert average_precision([[]], gt)["ap"] == 0.0

    two_gts = [[_det("cat", [[1, 0, 0, 0]]), _det("cat", [[0, 0, 0, 1]])]]
    preds = [[_det("cat", [[1, 0, 0, 0]], 0.9), _det("cat", [[0, 1, 0, 0]], 0.8)]]
    coco = average_precision(preds, two_gts, mode="mask")
    assert coco["ap"] == pytest.approx(51 / 101)
    assert coco["ap50"] == pytest.approx(51 / 101)
    continuous = average_precision(preds, two_gts, mode="mask", interpolation="continuous")
    assert all(v == pytest.approx(0.5) for v in continuous["per_threshold"].values())


def _ap_oracle(preds, gts, interpolation):
    """Walk the ranked precision/recall curve per class; IoUs here are exactly 0 or 1."""
    values = []
    for label in sorted({g.label for image in gts for g in image}):
        n_gt = sum(g.label == label for image in gts for g in image)
        ranked = sorted(((d.score, image, d) for image, p in enumerate(preds) for d in p if d.label == label),
                        key=lambda item: -item[0])
        taken, tp, curve = set(), 0, []
        for rank, (_, image, d) in enumerate(ranked, start=1):
            for j, g in enumerate(gts[image]):
                if g.label == label and (image, j) not in taken and g.mask == d.mask:
                    taken.add((image, j))
                    tp += 1
                    break
            curve.append((tp / n_gt, tp / rank))
        if interpolation == "continuous":
            ap, previous = 0.0, 0.0
            for k, (recall, _) in enumerate(curve):
                if recall > previous:
                    ap += (recall - previous) * max(p for _, p in curve[k:])
                    previous = recall
        else:
            sampled = []
            for point in RECALL_POINTS:
                reachable = [p for r, p in curve if r >= point]
                sampled.append(max(reachable) if reachable else 0.0)
            ap = float(np.mean(sampled))
        values.append(ap)
    return float(np.mean(values)) if values else 0.0


def _column(width, x):
    grid = np.zeros((2, width), dtype=bool)
    grid[:, x] = True
    return BinaryMask(grid)


@pytest.mark.parametrize("interpolation", ["coco101", "continuous"])
def test_average_precision_agrees_with_ranked_curve_oracle(interpolation):
    rng = np.random.default_rng(9)
    labels = ("cat", "dog")
    width = 8
    for _ in range(100):
        gts, preds = [], []
        for _ in range(int(rng.integers(1, 4))):
            columns = rng.permutation(width)
            n_gt = int(rng.integers(0, 4))
            image_gt = [Detection(str(rng.choice(labels)), mask=_column(width, x)) for x in columns[:n_gt]]
            image_pred = []
            for _ in range(int(rng.integers(0, 6))):
                label = str(rng.choice(labels))
                if image_gt and rng.random() < 0.6:
                    mask = image_gt[int(rng.integers(len(image_gt)))].mask
                else:
                    mask = _column(width, int(rng.choice(columns[n_gt:])))
                image_pred.append(Detection(label, mask=mask, score=float(rng.random())))
            gts.append(image_gt)
            preds.append(image_pred)
        report = average_precision(preds, gts, mode="mask", interpolation=interpolation)
        assert report["ap"] == pytest.approx(_ap_oracle(preds, gts, interpolation))


def test_average_precision_box_mode_and_threshold_monotonicity():
    rng = np.random.default_rng(5)
    gts, preds = [], []
    for _ in range(4):
        image_gt, image_pred = [], []
        for label in ("cat", "dog"):
            x, y = rng.uniform(0, 20, size=2)
            box = Box(x, y, x + 10, y + 10)
            image_gt.append(Detection(label, box=box))
            shift = rng.uniform(-3, 3, size=2)
            image_pred.append(Detection(label, box=Box(x + shift[0], y + shift[1], x + 10 + shift[0],
                                                       y + 10 + shift[1]), score=float(rng.random())))
        gts.append(image_gt)
        preds.append(image_pred)
    report = average_precision(preds, gts, mode="box")
    values = list(report["per_threshold"].values())
    assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))
    assert 0.0 <= report["ap"] <= 1.0
    shuffled = average_precision([list(reversed(p)) for p in preds], gts, mode="box")
    assert shuffled["ap"] == pytest.approx(report["ap"])


def test_average_precision_rejects_bad_mode():
    with pytest.raises(ValueError):
        average_precision([[]], [[]], mode="polygon")


def test_novel_class_ap_beats_random_baseline():
    gts, preds = [], []
    for i in range(4):
        mask = block_mask(6, 6, i, i + 2, 0, 6)
        gts.append([Detection("giraffe", mask=mask)])
        preds.append([Detection("giraffe", mask=mask, score=0.9)])
    result = novel_class_ap(preds, gts, ["giraffe"], ["cat", "dog", "giraffe"], seed=1)
    assert result["novel_ap"] == pytest.approx(1.0)
    assert result["random_baseline_ap"] < 1.0
    assert result["beats_baseline"]


def test_novel_probability_mass():
    probs = ClassProbabilities(labels=("cat", "giraffe"), p1=np.zeros((2, 2)), p2=np.zeros((2, 2)),
                               p_final=np.array([[0.7, 0.3], [0.1, 0.9]]), p_other=np.zeros(2),
                               lam=np.zeros(2))
    assert novel_probability_mass([probs], ["giraffe"]) == pytest.approx(0.6)
    assert novel_probability_mass([probs], ["unicorn"]) == 0.0
