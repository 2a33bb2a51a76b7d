"""Proximal maps and Moreau-Yosida envelopes of the two nonsmooth terms.

The envelope of a convex g is  min_y { g(y) + (sigma/2) ||x - y||^2 };  its
gradient is sigma * (x - prox(x)), where prox minimizes the same expression.
Two instances are needed here: the weighted l1 norm mu*||.||_1 (soft
thresholding) and the indicator of the nonpositive orthant (clipping).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EnvelopeResult:
    """Envelope value, its gradient, and the underlying proximal point.

    The identity ``gradient == sigma * (x - prox_point)`` holds exactly.
    """

    value: float
    gradient: np.ndarray
    prox_point: np.ndarray


def prox_l1(x: np.ndarray, threshold: float) -> np.ndarray:
    """Elementwise soft threshold sign(x) * max(|x| - threshold, 0).

    ``threshold`` is mu/sigma for the envelope of mu*||.||_1 at weight sigma.
    """
    if threshold <= 0:
        raise ValueError("soft-threshold level must be positive")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - threshold, 0.0)


def env_l1(x: np.ndarray, mu: float, sigma: float) -> EnvelopeResult:
    """Moreau-Yosida envelope of mu*||.||_1 with quadratic weight sigma/2.

    The gradient is sigma*(x - p) with p the soft threshold of x at mu/sigma;
    it satisfies ||gradient||_inf <= mu.
    """
    if mu <= 0 or sigma <= 0:
        raise ValueError("mu and sigma must be positive")
    x = np.asarray(x, dtype=float)
    p = prox_l1(x, mu / sigma)
    diff = x - p
    value = mu * float(np.abs(p).sum()) + 0.5 * sigma * float(np.sum(diff * diff))
    return EnvelopeResult(value=value, gradient=sigma * diff, prox_point=p)


def project_nonpositive(x: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the nonpositive orthant: min(x, 0)."""
    return np.minimum(np.asarray(x, dtype=float), 0.0)


def env_indicator_nonpositive(x: np.ndarray, sigma: float) -> EnvelopeResult:
    """Envelope of the nonpositive-orthant indicator: (sigma/2)||max(x,0)||^2."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    x = np.asarray(x, dtype=float)
    pos = np.maximum(x, 0.0)
    value = 0.5 * sigma * float(np.sum(pos * pos))
    return EnvelopeResult(
        value=value, gradient=sigma * pos, prox_point=np.minimum(x, 0.0)
    )
