"""Cross-entropy loss over segmentation logits."""

import warnings

import torch

from .errors import ValidationError

IGNORE_INDEX = 255


def cross_entropy_loss(logits: torch.Tensor, labels: torch.Tensor,
                       ignore_index: int = IGNORE_INDEX) -> torch.Tensor:
    """Mean over scored pixels of -x_true + log(sum_j exp(x_j)).

    logits: (B, K, H, W); labels: (B, H, W) integer classes, ignore_index skipped.
    Uses max-subtraction for stability. All pixels ignored yields 0 with a warning.
    """
    if logits.ndim != 4:
        raise ValidationError(f"logits must be (B, K, H, W), got {tuple(logits.shape)}")
    if labels.shape != (logits.shape[0], *logits.shape[2:]):
        raise ValidationError(
            f"labels shape {tuple(labels.shape)} does not match logits {tuple(logits.shape)}"
        )
    num_classes = logits.shape[1]
    mask = labels != ignore_index
    scored = labels[mask]
    if scored.numel() and (scored.min() < 0 or scored.max() >= num_classes):
        raise ValidationError(
            f"labels must be in [0, {num_classes}) or {ignore_index}, "
            f"found range [{int(scored.min())}, {int(scored.max())}]"
        )
    if not mask.any():
        warnings.warn("all pixels ignored; loss defined as 0", RuntimeWarning)
        return logits.sum() * 0.0

    m = logits.max(dim=1, keepdim=True).values
    lse = m.squeeze(1) + torch.log(torch.exp(logits - m).sum(dim=1))
    true_logit = logits.gather(1, labels.clamp(0, num_classes - 1).unsqueeze(1)).squeeze(1)
    per_pixel = lse - true_logit
    return per_pixel[mask].mean()
