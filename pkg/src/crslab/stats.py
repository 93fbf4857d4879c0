"""Small shared statistics helpers."""
from __future__ import annotations

import math

#: two-sided 95% normal quantile
Z95 = 1.959963984540054


def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval; well behaved for frequencies near 0 and 1."""
    if trials <= 0:
        return 0.0, 1.0
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = (z / denom) * math.sqrt(p * (1.0 - p) / trials + z * z / (4 * trials * trials))
    return max(0.0, center - half), min(1.0, center + half)


def binomial_sigma(p: float, trials: int) -> float:
    if trials <= 0:
        return float("inf")
    return math.sqrt(max(p * (1.0 - p), 0.0) / trials)
