"""Closed-form invariant-metric oracles on the unit ball of C^2.

These are external references for comparability audits and never feed back
into the metric implementation: the infinitesimal metric is the classical
Mobius-invariant one,

    K_B(z, X) = sqrt((1 - |z|^2) |X|^2 + |<X, z>|^2) / (1 - |z|^2),

and the distance is atanh of the Mobius pseudo-norm,

    d_B(p, q) = atanh sqrt(1 - (1 - |p|^2)(1 - |q|^2) / |1 - <q, p>|^2),

with the Hermitian product <a, b> = sum_i a_i conj(b_i).  Conventions match
a Poincare disk metric 1/(1 - t^2) on radial slices.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["ball_metric", "ball_distance"]


def _herm(a, b):
    return np.sum(np.asarray(a) * np.conjugate(b), axis=-1)


def ball_metric(z, X) -> np.ndarray:
    """Invariant metric of the unit ball at z in direction X (vectorized)."""
    z = np.asarray(z, dtype=complex)
    X = np.asarray(X, dtype=complex)
    zz = np.sum(np.abs(z) ** 2, axis=-1)
    if np.any(zz >= 1):
        raise ValueError("ball metric requires |z| < 1")
    xx = np.sum(np.abs(X) ** 2, axis=-1)
    mix = np.abs(_herm(X, z)) ** 2
    return np.sqrt((1 - zz) * xx + mix) / (1 - zz)


def ball_distance(p, q) -> float:
    """Invariant distance of the unit ball between p and q."""
    p = np.asarray(p, dtype=complex)
    q = np.asarray(q, dtype=complex)
    pp = float(np.sum(np.abs(p) ** 2))
    qq = float(np.sum(np.abs(q) ** 2))
    if pp >= 1 or qq >= 1:
        raise ValueError("ball distance requires interior points")
    denom = abs(1 - _herm(q, p)) ** 2
    s2 = 1.0 - (1 - pp) * (1 - qq) / denom
    s2 = min(max(float(s2), 0.0), 1.0 - 1e-300)
    return math.atanh(math.sqrt(s2))
