"""Linear GeoPE: relative rotations from differences of Lie vectors.

For a query at ``m`` and a key at ``n`` the relative Lie vector is
``u_k - u_q``; in 2D that is ``(0, dth/4, dtw/4)`` per sub-vector, a function
of the displacement ``n - m`` alone. The score is ``<q, R_rel k>``.

Rodrigues' formula splits that inner product into three parts::

    <q, R k> = <q, k> cos A                    (projected similarity)
             + (q.n)(k.n)(1 - cos A)           (axial alignment)
             - ((n x q) . k) sin A             (torsional component)

The minus sign on the torsional term is the one that agrees with an explicit
matrix product for a right-handed rotation by ``+A`` about ``n``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import IndexOutOfRange, NonUnitAxis
from .lie import exp_map
from .operators import PhaseSchedule
from .quaternion import as_vec3, to_rotation_matrix

AXIS_TOL = 1e-9


class Displacement(NamedTuple):
    """Signed key-minus-query offset in patch units."""

    dp_h: int
    dp_w: int
    dp_d: Optional[int] = None


@dataclass(frozen=True)
class RelativeRotation:
    """Rotation of one sub-vector: angle ``A``, unit axis ``n`` and matrix.

    At ``A = 0`` the axis is the zero vector and the matrix the identity.
    """

    angle: float
    axis: np.ndarray
    matrix: np.ndarray


class ScoreDecomposition(NamedTuple):
    projected_similarity: float
    axial_alignment: float
    torsional: float
    total: float


def relative_lie_vector(u_q, u_k) -> np.ndarray:
    """``u_k - u_q``."""
    return as_vec3(u_k) - as_vec3(u_q)


def lie_vector(theta_h, theta_w, theta_d=None) -> np.ndarray:
    """Averaged Lie vector of the symmetric operator for the given phases."""
    theta_h = np.asarray(theta_h, dtype=np.float64)
    theta_w = np.asarray(theta_w, dtype=np.float64)
    if theta_d is None:
        return np.stack(np.broadcast_arrays(np.zeros_like(theta_h), theta_h / 4, theta_w / 4), axis=-1)
    theta_d = np.asarray(theta_d, dtype=np.float64)
    return np.stack(np.broadcast_arrays(theta_d / 6, theta_h / 6, theta_w / 6), axis=-1)


def _angle_axis(dth, dtw, dtd=None):
    """Closed-form angle ``A`` and axis ``n`` of ``exp(u_rel)``.

    2D: ``A = sqrt(dth^2 + dtw^2) / 2``, ``n = (0, dth, dtw) / sqrt(...)``.
    3D: ``A = sqrt(dtd^2 + dth^2 + dtw^2) / 3``, ``n`` likewise normalized.
    """
    dth, dtw = np.broadcast_arrays(np.asarray(dth, dtype=np.float64), np.asarray(dtw, dtype=np.float64))
    if dtd is None:
        zero = np.zeros_like(dth)
        rho = np.hypot(dth, dtw)
        angle = rho / 2.0
        vec = np.stack([zero, dth, dtw], axis=-1)
    else:
        dtd = np.broadcast_to(np.asarray(dtd, dtype=np.float64), dth.shape)
        rho = np.sqrt(dtd * dtd + dth * dth + dtw * dtw)
        angle = rho / 3.0
        vec = np.stack([dtd, dth, dtw], axis=-1)
    safe = np.where(rho > 0.0, rho, 1.0)
    return angle, vec / safe[..., None]


def relative_rotation(delta, i: int, schedule: PhaseSchedule) -> RelativeRotation:
    """Relative rotation of sub-vector ``i`` for displacement ``delta``.

    ``delta`` is a :class:`Displacement` or an ``(dp_h, dp_w)`` tuple. The
    result depends on ``delta`` only, never on absolute positions.

    Raises:
        IndexOutOfRange: if ``i`` is outside the schedule's index range.
    """
    delta = Displacement(*delta)
    mode = "two_d" if delta.dp_d is None else "three_d"
    if i not in schedule.index_range(mode):
        raise IndexOutOfRange(f"sub-vector index {i} outside {schedule.index_range(mode)}")
    f = float(schedule.frequency(i))
    dth, dtw = delta.dp_h * f, delta.dp_w * f
    dtd = None if delta.dp_d is None else delta.dp_d * f
    u_rel = lie_vector(dth, dtw, dtd)
    matrix = to_rotation_matrix(exp_map(u_rel))
    angle, axis = _angle_axis(dth, dtw, dtd)
    matrix.setflags(write=False)
    axis.setflags(write=False)
    return RelativeRotation(float(angle), axis, matrix)


def relative_score(q, k, rel: RelativeRotation) -> float:
    """``<q, M k>`` with the cached relative matrix."""
    return float(np.dot(as_vec3(q), rel.matrix @ as_vec3(k)))


def decompose_score(q, k, angle: float, axis) -> ScoreDecomposition:
    """Split ``<q, R(axis, angle) k>`` into its three Rodrigues terms.

    Raises:
        NonUnitAxis: if ``angle != 0`` and ``|axis|`` differs from 1 by more than 1e-9.
    """
    q, k = as_vec3(q), as_vec3(k)
    if angle == 0.0:
        dot = float(np.dot(q, k))
        return ScoreDecomposition(dot, 0.0, 0.0, dot + 0.0 + 0.0)
    n = as_vec3(axis)
    if abs(np.linalg.norm(n) - 1.0) > AXIS_TOL:
        raise NonUnitAxis(f"rotation axis has norm {np.linalg.norm(n):.12g}")
    c, s = np.cos(angle), np.sin(angle)
    projected = float(np.dot(q, k) * c)
    axial = float(np.dot(q, n) * np.dot(k, n) * (1.0 - c))
    torsional = float(-np.dot(np.cross(n, q), k) * s)
    return ScoreDecomposition(projected, axial, torsional, projected + axial + torsional)


class DisplacementTable:
    """Dense cache of relative rotations for every displacement of an ``H x W`` grid.

    Entry ``[dp_h + H - 1, dp_w + W - 1, i]`` holds block ``i``'s rotation, so
    there are exactly ``(2H - 1)(2W - 1)`` displacement entries.
    """

    def __init__(self, grid, schedule: PhaseSchedule):
        h, w = (int(g) for g in grid)
        if h < 1 or w < 1:
            raise ValueError(f"grid dimensions must be >= 1, got {grid}")
        self.grid = (h, w)
        self.schedule = schedule
        freqs = schedule.frequencies("two_d")
        dh = np.arange(-(h - 1), h, dtype=np.float64)
        dw = np.arange(-(w - 1), w, dtype=np.float64)
        dth = dh[:, None, None] * freqs
        dtw = dw[None, :, None] * freqs
        dth, dtw = np.broadcast_arrays(dth, dtw)
        self.angles, self.axes = _angle_axis(dth, dtw)
        self.matrices = to_rotation_matrix(exp_map(lie_vector(dth, dtw)))
        for a in (self.angles, self.axes, self.matrices):
            a.setflags(write=False)

    def __len__(self) -> int:
        return self.angles.shape[0] * self.angles.shape[1]

    @property
    def num_blocks(self) -> int:
        return self.angles.shape[2]

    @property
    def nbytes(self) -> int:
        return self.angles.nbytes + self.axes.nbytes + self.matrices.nbytes

    def index(self, delta) -> tuple[int, int]:
        dp_h, dp_w = int(delta[0]), int(delta[1])
        h, w = self.grid
        if abs(dp_h) >= h or abs(dp_w) >= w:
            raise KeyError(f"displacement {(dp_h, dp_w)} outside a {h}x{w} grid")
        return dp_h + h - 1, dp_w + w - 1

    def lookup(self, delta, i: int) -> RelativeRotation:
        """Entry for displacement ``delta`` and block position ``i`` (0-based)."""
        a, b = self.index(delta)
        return RelativeRotation(float(self.angles[a, b, i]), self.axes[a, b, i], self.matrices[a, b, i])

    def pair_matrices(self, positions) -> np.ndarray:
        """``(T, T, n, 3, 3)`` relative matrices for key-minus-query displacements.

        ``positions`` is ``(T, 2)`` of ``(p_h, p_w)``; only differences matter,
        so translated grids give identical output.
        """
        positions = np.asarray(positions, dtype=np.int64)
        delta = positions[None, :, :] - positions[:, None, :]
        h, w = self.grid
        return self.matrices[delta[..., 0] + h - 1, delta[..., 1] + w - 1]


def displacement_table(grid, schedule: PhaseSchedule) -> DisplacementTable:
    return DisplacementTable(grid, schedule)
