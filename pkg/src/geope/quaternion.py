"""Quaternion arithmetic and SO(3) rotation primitives.

Quaternions are numpy arrays whose last axis holds ``(w, x, y, z)``; vectors
are arrays whose last axis holds ``(x, y, z)``. Every function broadcasts over
leading axes, so a single call handles one rotation or a whole grid of them.

All arithmetic is float64.
"""

from __future__ import annotations

import numpy as np

from .errors import NonUnitRotor, ZeroAxis

UNIT_TOL = 1e-9  # user-facing precondition on |q|
POST_TOL = 1e-12  # internal postconditions

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def as_quat(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.shape[-1:] != (4,):
        raise ValueError(f"quaternion needs a trailing axis of 4, got shape {q.shape}")
    return q


def as_vec3(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1:] != (3,):
        raise ValueError(f"vector needs a trailing axis of 3, got shape {v.shape}")
    return v


def hamilton_product(a, b) -> np.ndarray:
    """Hamilton product ``a * b``.

    Written in scalar/vector form: with ``a = s1 + v1`` and ``b = s2 + v2``,

        a b = s1 s2 - v1.v2 + s1 v2 + s2 v1 + v1 x v2
    """
    a, b = np.broadcast_arrays(as_quat(a), as_quat(b))
    s1, v1 = a[..., :1], a[..., 1:]
    s2, v2 = b[..., :1], b[..., 1:]
    scalar = s1 * s2 - np.sum(v1 * v2, axis=-1, keepdims=True)
    vector = s1 * v2 + s2 * v1 + np.cross(v1, v2)
    return np.concatenate([scalar, vector], axis=-1)


def conjugate(q) -> np.ndarray:
    q = as_quat(q)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def norm(q) -> np.ndarray:
    return np.linalg.norm(as_quat(q), axis=-1)


def inverse(q) -> np.ndarray:
    """General inverse ``q* / |q|^2``; valid for any non-zero quaternion."""
    q = as_quat(q)
    return conjugate(q) / np.sum(q * q, axis=-1, keepdims=True)


def canonicalize(q) -> np.ndarray:
    """Pick the double-cover representative with ``w >= 0``.

    When ``w == 0`` the first non-zero vector component is made positive.
    """
    q = as_quat(q)
    # first non-zero component across (w, x, y, z) decides the sign
    nonzero = q != 0.0
    first = np.argmax(nonzero, axis=-1)
    lead = np.take_along_axis(q, first[..., None], axis=-1)
    sign = np.where(lead < 0.0, -1.0, 1.0)
    return q * sign


def check_unit(q, tol: float = UNIT_TOL) -> np.ndarray:
    """Validate ``|q| = 1`` within ``tol`` and return the renormalized quaternion."""
    q = as_quat(q)
    n = norm(q)
    bad = np.abs(n - 1.0) > tol
    if np.any(bad) or not np.all(np.isfinite(n)):
        worst = float(np.max(np.abs(n - 1.0)))
        raise NonUnitRotor(f"rotation quaternion is not unit norm (max |norm - 1| = {worst:.3e})")
    return q / n[..., None]


def lift(v) -> np.ndarray:
    """Embed vectors as pure quaternions ``0 + x i + y j + z k``."""
    v = as_vec3(v)
    return np.concatenate([np.zeros(v.shape[:-1] + (1,)), v], axis=-1)


def sandwich_rotate(r, v) -> np.ndarray:
    """Rotate ``v`` by the unit quaternion ``r`` via ``r p r*``.

    Raises:
        NonUnitRotor: if ``r`` is not unit norm within 1e-9.
    """
    r = check_unit(r)
    v = as_vec3(v)
    out = hamilton_product(hamilton_product(r, lift(v)), conjugate(r))
    scale = np.maximum(1.0, np.linalg.norm(v, axis=-1))
    residue = np.abs(out[..., 0]) / scale
    if np.any(residue > POST_TOL):
        raise ArithmeticError(f"sandwich product left a scalar residue of {float(np.max(residue)):.3e}")
    return out[..., 1:]


def conjugate_by(r, v) -> np.ndarray:
    """``r p r^-1`` for any non-zero ``r`` (not necessarily unit).

    Returns the full quaternion so callers can inspect the scalar part.
    """
    return hamilton_product(hamilton_product(as_quat(r), lift(v)), inverse(r))


def axis_angle(axis, angle) -> np.ndarray:
    """Unit quaternion for a rotation of ``angle`` radians about ``axis``.

    A zero angle yields the identity whatever the axis.

    Raises:
        ZeroAxis: if the axis has length <= 1e-15 and the angle is non-zero.
    """
    axis = as_vec3(axis)
    angle = np.asarray(angle, dtype=np.float64)
    length = np.linalg.norm(axis, axis=-1)
    degenerate = length <= 1e-15
    if np.any(degenerate & (angle != 0.0)):
        raise ZeroAxis("cannot rotate about a zero-length axis")
    safe = np.where(degenerate, 1.0, length)[..., None]
    half = 0.5 * angle
    vec = np.sin(half)[..., None] * axis / safe
    w = np.broadcast_to(np.cos(half)[..., None], vec.shape[:-1] + (1,))
    q = np.concatenate([w, vec], axis=-1)
    return np.where((angle == 0.0)[..., None], IDENTITY, q)


def to_rotation_matrix(r) -> np.ndarray:
    """3x3 rotation matrix ``M`` with ``M @ v == sandwich_rotate(r, v)``."""
    r = check_unit(r)
    w, x, y, z = np.moveaxis(r, -1, 0)
    m = np.stack(
        [
            1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
            2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
            2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
        ],
        axis=-1,
    )
    return m.reshape(r.shape[:-1] + (3, 3))


def rotation_angle(r) -> np.ndarray:
    """Rotation angle in ``[0, pi]`` represented by the unit quaternion ``r``."""
    r = canonicalize(check_unit(r))
    return 2.0 * np.arctan2(np.linalg.norm(r[..., 1:], axis=-1), r[..., 0])


def same_rotation(a, b, atol: float = POST_TOL) -> bool:
    """Componentwise equality up to the sign ambiguity ``q ~ -q``."""
    a, b = as_quat(a), as_quat(b)
    direct = np.max(np.abs(a - b), axis=-1)
    flipped = np.max(np.abs(a + b), axis=-1)
    return bool(np.all(np.minimum(direct, flipped) <= atol))
