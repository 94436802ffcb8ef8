"""Gradient-sign input perturbation.

Nudges every pixel by +eps, -eps, or 0 along the sign of the gradient of
a scalar network score with respect to the input, then clips back to the
valid pixel range. The default score is the top-class pre-softmax logit,
so the step pushes the image toward higher confidence in its current
prediction.
"""

from __future__ import annotations

import torch

from kavguard.errors import UsageError

from .extract import _check_eval_mode


def perturb(model: torch.nn.Module, image: torch.Tensor, epsilon: float,
            score_fn=None, pixel_range: tuple[float, float] = (0.0, 1.0)
            ) -> torch.Tensor:
    """One signed-gradient step on a single (C,H,W) image."""
    if epsilon < 0:
        raise UsageError(f"epsilon must be >= 0, got {epsilon}")
    _check_eval_mode(model)
    x = torch.as_tensor(image).detach().clone()
    if x.dim() != 3:
        raise UsageError(f"expected a (C,H,W) image, got shape {tuple(x.shape)}")
    x.requires_grad_(True)
    logits = model(x.unsqueeze(0))[0]
    score = logits.max() if score_fn is None else score_fn(logits)
    if score.dim() != 0:
        raise UsageError("score_fn must return a scalar")
    try:
        (grad,) = torch.autograd.grad(score, x)
    except RuntimeError as exc:
        raise UsageError(f"score is not differentiable in the input: {exc}") \
            from exc
    stepped = x.detach() + epsilon * grad.sign()
    return stepped.clamp(*pixel_range)
