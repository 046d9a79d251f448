"""
Seeded random patch layouts

Generates initial aphid patch layouts in the same text format as the shipped
layout file, so a new layout can be dropped into any run config.
"""

from typing import Tuple

import numpy as np

from .errors import ConfigError
from .geometry import PatchSpec


def _overlaps(a, b, gap: float) -> bool:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    return not (ax + aw + gap <= bx or bx + bw + gap <= ax or
                ay + ah + gap <= by or by + bh + gap <= ay)


def random_patch_layout(lx: float, ly: float, k: int, seed: int,
                        size_range: Tuple[float, float] = (10.0, 50.0),
                        density: float = 1.0, gap: float = 5.0,
                        max_attempts: int = 10000) -> PatchSpec:
    """
    Place k non-overlapping rectangles uniformly at random

    Args:
        lx, ly: domain size in meters
        k: number of rectangles
        seed: seed for numpy's default generator
        size_range: (min, max) side length in meters
        density: density written for every rectangle
        gap: minimum distance between rectangles in meters
        max_attempts: rejection-sampling budget

    Returns:
        PatchSpec with k rectangles inside [0, lx] x [0, ly]
    """
    low, high = size_range
    if k < 1:
        raise ConfigError(f"Need at least one patch, got k={k}")
    if not (0 < low <= high) or high > min(lx, ly):
        raise ConfigError(f"Invalid patch size range {size_range} for a {lx} x {ly} domain")
    rng = np.random.default_rng(seed)
    rectangles = []
    attempts = 0
    while len(rectangles) < k:
        attempts += 1
        if attempts > max_attempts:
            raise ConfigError(
                f"Could not place {k} separated patches after {max_attempts} attempts; "
                f"placed {len(rectangles)}")
        width, height = rng.uniform(low, high, size=2)
        x0 = rng.uniform(0.0, lx - width)
        y0 = rng.uniform(0.0, ly - height)
        candidate = (float(x0), float(y0), float(width), float(height))
        if any(_overlaps(candidate, other, gap) for other in rectangles):
            continue
        rectangles.append(candidate)
    return PatchSpec(rectangles, [density] * k)
