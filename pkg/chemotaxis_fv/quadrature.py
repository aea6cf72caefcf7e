"""
quadrature.py - Adaptive Simpson rule for scalar integrals and vectorized
Gauss-Legendre panels for integrating over many short intervals at once
"""

import logging
from functools import lru_cache
from typing import Callable, Tuple

import numpy as np

from chemotaxis_fv.config import SIMPSON_MAX_DEPTH

logger = logging.getLogger(__name__)

_TINY = 1e-300


def _simpson(f, a, fa, b, fb) -> Tuple[float, float, float]:
    m = 0.5 * (a + b)
    fm = f(m)
    return m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def _refine(f, a, fa, b, fb, m, fm, whole, eps, depth, capped):
    lm, flm, left = _simpson(f, a, fa, m, fm)
    rm, frm, right = _simpson(f, m, fm, b, fb)
    delta = left + right - whole
    if abs(delta) <= 15.0 * eps:
        return left + right + delta / 15.0
    if depth <= 0:
        capped[0] += 1
        return left + right + delta / 15.0
    return (_refine(f, a, fa, m, fm, lm, flm, left, 0.5 * eps, depth - 1, capped)
            + _refine(f, m, fm, b, fb, rm, frm, right, 0.5 * eps, depth - 1, capped))


def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     rel_tol: float = 1e-8, max_depth: int = SIMPSON_MAX_DEPTH) -> float:
    """
    Integrate f over [a, b] by recursive adaptive Simpson bisection.

    The absolute tolerance is rel_tol times the size of the integral of |f|;
    since that is only known after integrating, a coarse Simpson estimate
    is used first and the pass is repeated once if the result turns out
    much larger than the estimate.

    Args:
        f: integrand, finite on the closed interval
        a, b: limits; b < a integrates backwards
        rel_tol: relative tolerance
        max_depth: bisection depth cap

    Returns:
        The integral estimate
    """
    if a == b:
        return 0.0
    if b < a:
        return -adaptive_simpson(f, b, a, rel_tol, max_depth)

    fa, fb = f(a), f(b)
    m, fm, whole = _simpson(f, a, fa, b, fb)
    scale = max(abs(whole), (b - a) / 6.0 * (abs(fa) + 4.0 * abs(fm) + abs(fb)))
    result = 0.0
    capped = [0]
    for _ in range(2):
        capped[0] = 0
        eps = rel_tol * max(scale, _TINY)
        result = _refine(f, a, fa, b, fb, m, fm, whole, eps, max_depth, capped)
        if abs(result) <= 2.0 * scale:
            break
        scale = abs(result)
    if capped[0]:
        logger.warning("adaptive_simpson on [%g, %g]: %d panels hit depth cap %d",
                     a, b, capped[0], max_depth)
    return result


@lru_cache(maxsize=8)
def _gauss_rule(order: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(order)


def panel_moments(f: Callable[[np.ndarray], np.ndarray], lo: np.ndarray, hi: np.ndarray,
                  anchor: np.ndarray, order: int = 8) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per panel, the integrals of f and of |anchor - x| * f over [lo, hi].

    The second moment is what a nested integral picks up on a panel whose
    far end is the anchor point.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    nodes, weights = _gauss_rule(order)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    x = mid[:, None] + half[:, None] * nodes[None, :]
    fx = f(x)
    plain = half * (fx @ weights)
    weighted = half * ((np.abs(np.asarray(anchor, dtype=float)[:, None] - x) * fx) @ weights)
    return plain, weighted
