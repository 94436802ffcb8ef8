"""Degradation corpus generators: impulse noise and rotation series."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy import ndimage

from kavguard.errors import UsageError


def salt_pepper(image: np.ndarray, p: float, seed: int,
                lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """Set each pixel, independently with probability p, to lo or hi
    (equal odds). Channels of a hit pixel flip together. Deterministic
    for a given seed."""
    if not 0.0 <= p <= 1.0:
        raise UsageError(f"p must be in [0, 1], got {p}")
    out = np.array(image, copy=True)
    rng = np.random.default_rng(seed)
    pixel_shape = out.shape[:2] if out.ndim == 3 else out.shape
    hits = rng.random(pixel_shape) < p
    salt = rng.random(pixel_shape) < 0.5
    out[hits & salt] = hi
    out[hits & ~salt] = lo
    return out


def rotate_series(image: np.ndarray, angles: Sequence[float]
                  ) -> list[np.ndarray]:
    """One copy per angle (degrees, positive = counterclockwise),
    bilinear resampling, zero fill outside the frame; angle 0 is an
    exact copy."""
    out = []
    for angle in angles:
        if angle == 0:
            out.append(np.array(image, copy=True))
        else:
            out.append(ndimage.rotate(image, angle, reshape=False, order=1,
                                      mode="constant", cval=0.0))
    return out
