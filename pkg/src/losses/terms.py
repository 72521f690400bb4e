"""Elementwise and pairwise loss terms: focal, DICE, mask BCE, L1 and GIoU."""
import torch
import torch.nn.functional as F

from ..core.errors import ShapeMismatchError

PROB_EPS = 1e-6
DICE_EPS = 1e-6
LOGIT_CLAMP = 15.0
BOX_EPS = 1e-7


def _reduce(values: torch.Tensor, reduction: str) -> torch.Tensor:
    if reduction == "mean":
        return values.mean()
    if reduction == "sum":
        return values.sum()
    if reduction == "none":
        return values
    raise ValueError(f"Unknown reduction '{reduction}'")


def _check_shapes(a: torch.Tensor, b: torch.Tensor):
    if a.shape != b.shape:
        raise ShapeMismatchError(f"Shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")


def focal_loss(probs: torch.Tensor, targets: torch.Tensor, alpha: float = 0.25, gamma: float = 2.0,
               reduction: str = "mean") -> torch.Tensor:
    """-alpha_t (1 - p_t)^gamma log p_t with binary targets; probabilities clamped by 1e-6."""
    _check_shapes(probs, targets)
    p = probs.clamp(PROB_EPS, 1.0 - PROB_EPS)
    targets = targets.to(p.dtype)
    p_t = p * targets + (1.0 - p) * (1.0 - targets)
    alpha_t = alpha * targets + (1.0 - alpha) * (1.0 - targets)
    loss = -alpha_t * (1.0 - p_t) ** gamma * torch.log(p_t)
    return _reduce(loss, reduction)


def sigmoid_focal_loss(logits: torch.Tensor, targets: torch.Tensor, alpha: float = 0.25, gamma: float = 2.0,
                       reduction: str = "sum") -> torch.Tensor:
    return focal_loss(torch.sigmoid(logits), targets, alpha, gamma, reduction)


def dice_loss(mask_probs: torch.Tensor, gt_mask: torch.Tensor, reduction: str = "mean") -> torch.Tensor:
    """1 - (2|p.g| + eps) / (|p| + |g| + eps) per mask; leading dims index masks."""
    _check_shapes(mask_probs, gt_mask)
    gt = gt_mask.to(mask_probs.dtype)
    if mask_probs.ndim <= 2:
        p, g = mask_probs.reshape(1, -1), gt.reshape(1, -1)
    else:
        p, g = mask_probs.flatten(-2), gt.flatten(-2)
    loss = 1.0 - (2.0 * (p * g).sum(-1) + DICE_EPS) / (p.sum(-1) + g.sum(-1) + DICE_EPS)
    if mask_probs.ndim <= 2:
        loss = loss.squeeze(0)
    return _reduce(loss, reduction)


def bce_mask_loss(mask_logits: torch.Tensor, gt_mask: torch.Tensor, reduction: str = "mean") -> torch.Tensor:
    """Mean pixel binary cross-entropy with logits clamped to [-15, 15]."""
    _check_shapes(mask_logits, gt_mask)
    logits = mask_logits.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)
    per_pixel = F.binary_cross_entropy_with_logits(logits, gt_mask.to(logits.dtype), reduction="none")
    if mask_logits.ndim <= 2:
        return per_pixel.mean()
    return _reduce(per_pixel.flatten(-2).mean(-1), reduction)


def l1_box_loss(pred: torch.Tensor, gt: torch.Tensor, reduction: str = "mean") -> torch.Tensor:
    """Mean absolute coordinate difference per box."""
    _check_shapes(pred, gt)
    per_box = (pred - gt).abs().mean(-1)
    return per_box if pred.ndim == 1 else _reduce(per_box, reduction)


def generalized_box_iou(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Elementwise GIoU of corner boxes (..., 4); identical boxes score 1 even when degenerate."""
    area_a = (a[..., 2] - a[..., 0]) * (a[..., 3] - a[..., 1])
    area_b = (b[..., 2] - b[..., 0]) * (b[..., 3] - b[..., 1])
    iw = (torch.minimum(a[..., 2], b[..., 2]) - torch.maximum(a[..., 0], b[..., 0])).clamp(min=0)
    ih = (torch.minimum(a[..., 3], b[..., 3]) - torch.maximum(a[..., 1], b[..., 1])).clamp(min=0)
    inter = iw * ih
    union = area_a + area_b - inter
    hull = ((torch.maximum(a[..., 2], b[..., 2]) - torch.minimum(a[..., 0], b[..., 0]))
            * (torch.maximum(a[..., 3], b[..., 3]) - torch.minimum(a[..., 1], b[..., 1])))
    iou = inter / (union + BOX_EPS)
    giou = iou - (hull - union) / (hull + BOX_EPS)
    return torch.where((a == b).all(dim=-1), torch.ones_like(giou), giou)


def giou_loss(pred: torch.Tensor, gt: torch.Tensor, reduction: str = "mean") -> torch.Tensor:
    _check_shapes(pred, gt)
    per_box = 1.0 - generalized_box_iou(pred, gt)
    return per_box if pred.ndim == 1 else _reduce(per_box, reduction)


# Pairwise (proposal x ground truth) forms used for matching costs.

def pairwise_bce(mask_logits: torch.Tensor, gt_masks: torch.Tensor) -> torch.Tensor:
    """(N, H, W) logits vs (G, H, W) targets -> (N, G) mean pixel BCE."""
    x = mask_logits.flatten(1).clamp(-LOGIT_CLAMP, LOGIT_CLAMP)
    y = gt_masks.flatten(1).to(x.dtype)
    pixels = x.shape[1]
    return (F.softplus(x).sum(1, keepdim=True) - x @ y.transpose(0, 1)) / pixels


def pairwise_dice(mask_probs: torch.Tensor, gt_masks: torch.Tensor) -> torch.Tensor:
    p = mask_probs.flatten(1)
    g = gt_masks.flatten(1).to(p.dtype)
    numerator = 2.0 * p @ g.transpose(0, 1) + DICE_EPS
    denominator = p.sum(1, keepdim=True) + g.sum(1)[None, :] + DICE_EPS
    return 1.0 - numerator / denominator


def pairwise_l1(pred_boxes: torch.Tensor, gt_boxes: torch.Tensor) -> torch.Tensor:
    return torch.cdist(pred_boxes, gt_boxes.to(pred_boxes.dtype), p=1) / 4.0


def pairwise_giou(pred_boxes: torch.Tensor, gt_boxes: torch.Tensor) -> torch.Tensor:
    return generalized_box_iou(pred_boxes[:, None, :], gt_boxes.to(pred_boxes.dtype)[None, :, :])
