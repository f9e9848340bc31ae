"""Logarithm / exponential maps between unit quaternions and so(3).

A Lie vector ``u`` is a 3-vector whose norm is the *half* rotation angle of
``exp(u)``: ``exp(u) = cos|u| + sin|u| u/|u|``. ``log_map`` works on the
``w >= 0`` representative, so it returns vectors with ``|u| <= pi/2``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import EmptyList
from .quaternion import as_quat, as_vec3, canonicalize, check_unit

SERIES_THRESHOLD = 1e-8


def log_map(r) -> np.ndarray:
    """Principal logarithm of a unit quaternion.

    Raises:
        NonUnitRotor: if ``r`` is not unit norm within 1e-9.
    """
    r = canonicalize(check_unit(r))
    w, vec = r[..., 0], r[..., 1:]
    s = np.linalg.norm(vec, axis=-1)
    small = s < SERIES_THRESHOLD
    safe = np.where(small, 1.0, s)
    # alpha / sin(alpha) with sin(alpha) = |vec|; series near the identity
    ratio = np.where(small, 1.0 + s * s / 6.0, np.arctan2(s, w) / safe)
    return ratio[..., None] * vec


def exp_map(u) -> np.ndarray:
    """Exponential map ``so(3) -> S^3``; ``exp_map(0)`` is exactly the identity."""
    u = as_vec3(u)
    t = np.linalg.norm(u, axis=-1)
    small = t < SERIES_THRESHOLD
    safe = np.where(small, 1.0, t)
    sinc = np.where(small, 1.0 - t * t / 6.0, np.sin(t) / safe)
    w = np.cos(t)[..., None]
    return np.concatenate([w, sinc[..., None] * u], axis=-1)


def mean_lie_vector(vectors) -> np.ndarray:
    """Uniform mean of Lie vectors stacked along axis 0.

    Each component is summed in sorted order, which makes the result
    bit-identical under any permutation of the inputs.
    """
    vectors = as_vec3(vectors)
    if vectors.ndim < 2 or vectors.shape[0] == 0:
        raise EmptyList("mean of an empty collection of rotations")
    ordered = np.sort(vectors, axis=0)
    total = ordered[0].copy()
    for row in ordered[1:]:
        total += row
    return total / vectors.shape[0]


def geometric_mean(rotations: Sequence) -> np.ndarray:
    """Log-exp mean ``exp((1/n) sum log r_k)`` of unit quaternions.

    ``rotations`` is a sequence (or an array stacked along axis 0) of
    quaternions; extra trailing batch axes are averaged independently.

    Raises:
        EmptyList: for an empty input.
        NonUnitRotor: if any element is not unit norm.
    """
    if len(rotations) == 0:
        raise EmptyList("geometric mean of an empty list")
    stacked = as_quat(np.stack([as_quat(r) for r in rotations]))
    return exp_map(mean_lie_vector(log_map(stacked)))
