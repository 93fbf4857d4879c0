"""Selectability constants and the product-extremes property check.

Closed forms where they exist (alpha, the greedy/RCRS/FO-CRS family),
bisection for the transcendental hardness constants beta and gamma.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: alpha = (3 - sqrt(5))/2, the unique root of a = (1-a)^2 in (0,1).
ALPHA = (3.0 - math.sqrt(5.0)) / 2.0

#: alpha/(1-alpha) = (sqrt(5)-1)/2, the contraction ratio in the alpha_ell formula.
ALPHA_RATIO = ALPHA / (1.0 - ALPHA)

BISECTION_ITERATIONS = 200
BISECTION_BRACKET = (0.01, 0.5)


@dataclass(frozen=True)
class ConstantResult:
    name: str
    value: float
    residual: float
    method: str  # "closed_form" | "bisection"


def alpha() -> ConstantResult:
    """(3 - sqrt(5))/2, fixed point of a = (1-a)^2."""
    a = ALPHA
    return ConstantResult("alpha", a, a - (1.0 - a) ** 2, "closed_form")


def alpha_ell(ell: int) -> ConstantResult:
    """Depth-limited constant (1 - r^(2*ceil(ell/2)))^2 * alpha, r = alpha/(1-alpha).

    Increases to alpha as ell grows (r < 1).
    """
    if ell < 1:
        raise ValueError(f"ell must be >= 1, got {ell}")
    k = (ell + 1) // 2  # integer ceil(ell/2)
    value = (1.0 - ALPHA_RATIO ** (2 * k)) ** 2 * ALPHA
    return ConstantResult(f"alpha_{ell}", value, 0.0, "closed_form")


def _bisect(name: str, f, lo: float, hi: float) -> ConstantResult:
    """Sign-change bisection with a fixed iteration count (bit-reproducible)."""
    flo, fhi = f(lo), f(hi)
    if not (flo > 0.0 > fhi or flo < 0.0 < fhi):
        raise ValueError(f"{name}: no sign change on [{lo}, {hi}]")
    for _ in range(BISECTION_ITERATIONS):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:  # interval collapsed to adjacent doubles
            break
        fmid = f(mid)
        if (fmid > 0.0) == (flo > 0.0):
            lo, flo = mid, fmid
        else:
            hi = mid
    root = 0.5 * (lo + hi)
    return ConstantResult(name, root, f(root), "bisection")


def beta() -> ConstantResult:
    """Root of 1 - 2b - b*exp(2 - 1/b) on (0.01, 0.5); ~0.38954."""
    return _bisect("beta", lambda b: 1.0 - 2.0 * b - b * math.exp(2.0 - 1.0 / b),
                   *BISECTION_BRACKET)


def gamma() -> ConstantResult:
    """Root of 1 - 2g - g*exp(g - 1) on (0.01, 0.5); ~0.39294."""
    return _bisect("gamma", lambda g: 1.0 - 2.0 * g - g * math.exp(g - 1.0),
                   *BISECTION_BRACKET)


def rcrs_constants() -> dict[str, float]:
    """Closed-form random-order / free-order selectability constants.

    greedy_general: greedy on general graphs under uniform order, (1-e^-2)/2.
    rcrs:           greedy on 1-regular instances under uniform order, 1/2.
    focrs:          greedy under the lexicographic free order, 1 - ln(2 - 1/e).
    """
    return {
        "greedy_general": (1.0 - math.exp(-2.0)) / 2.0,
        "rcrs": 0.5,
        "focrs": 1.0 - math.log(2.0 - math.exp(-1.0)),
    }


def all_constants() -> list[ConstantResult]:
    out = [alpha(), alpha_ell(7), alpha_ell(15), beta(), gamma()]
    for name, value in rcrs_constants().items():
        if name == "rcrs":
            res = value - 0.5
        elif name == "greedy_general":
            res = value - (1.0 - math.exp(-2.0)) / 2.0
        else:
            res = value - (1.0 - math.log(2.0 - math.exp(-1.0)))
        out.append(ConstantResult(name, value, res, "closed_form"))
    return out


def product_extremes_check(eps: float, alpha_val: float, xs) -> dict[str, float]:
    """Running products prod(1 +- eps*a*x_i / (1 - a*sum_{j<=i} x_j)) vs closed forms.

    For any nonnegative partition xs with sum xbar <= 1 the plus-product is
    at most 1 + eps*a*xbar/(1 - a*xbar) and the minus-product at least
    1 - eps*a*xbar/(1 - a*xbar); both are tight when all mass sits in one block.
    """
    xs = np.asarray(xs, dtype=float)
    if np.any(xs < 0.0):
        raise ValueError("xs must be nonnegative")
    xbar = float(xs.sum())
    if not (0.0 <= eps <= 1.0 and 0.0 <= xbar <= 1.0 + 1e-12):
        raise ValueError(f"need eps in [0,1] and sum(xs) <= 1, got eps={eps}, sum={xbar}")
    if not (0.0 < alpha_val < 1.0):
        raise ValueError(f"alpha_val must be in (0,1), got {alpha_val}")
    prefix = np.cumsum(xs)
    denom = 1.0 - alpha_val * prefix
    if np.any(denom <= 0.0):
        raise ValueError("1 - alpha*prefix must stay positive")
    terms = eps * alpha_val * xs / denom
    max_product = float(np.prod(1.0 + terms))
    min_product = float(np.prod(1.0 - terms))
    closed = eps * alpha_val * xbar / (1.0 - alpha_val * xbar)
    return {
        "max_product": max_product,
        "min_product": min_product,
        "closed_max": 1.0 + closed,
        "closed_min": 1.0 - closed,
    }
