"""GeoPE rotational operators built from grid positions.

A feature vector of length ``d`` is cut into ``d/3`` sub-vectors (``d/2``
pairs in 1D mode). Sub-vector ``i`` at grid position ``p`` is rotated by a
unit quaternion whose phases are ``p_axis * base**(sign * 2i/d)``.

Quaternion builders:

* ``build_1d``  -- single rotation about ``j`` (RoPE embedded in 3D).
* ``build_2d``  -- log-exp mean of ``r_h`` (about ``j``) and ``r_w`` (about ``k``).
* ``build_3d``  -- log-exp mean of ``r_d`` (``i``), ``r_h`` (``j``), ``r_w`` (``k``).

The 2D/3D builders use the closed form of the mean: the averaged Lie vector
is ``(0, th/4, tw/4)`` (resp. ``(td, th, tw)/6``), so the rotation angle is
``Theta = |phases| / 2`` (resp. ``/ 3``) about the normalized phase vector.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional

import numpy as np

from .errors import DimensionMismatch, IndexOutOfRange
from .quaternion import sandwich_rotate, to_rotation_matrix

SERIES_THRESHOLD = 1e-8

MODES = ("one_d", "two_d", "three_d")


class GridPosition(NamedTuple):
    """Integer patch coordinates; ``p_d`` is ``None`` for 2D grids."""

    p_h: int
    p_w: int
    p_d: Optional[int] = None


@dataclass(frozen=True)
class PhaseSchedule:
    """Frequency rule ``theta = p * base_lambda ** (sign * 2 i / head_dim)``.

    ``index_convention`` selects ``i`` in ``0..n-1`` (``"zero"``) or ``1..n``
    (``"one"``). ``exponent_sign="negative"`` gives RoPE-style decaying
    frequencies; ``"positive"`` follows the growing-frequency form.
    ``remainder="passthrough"`` is experimental: trailing dimensions that do
    not fill a whole block are left unrotated instead of raising.
    """

    head_dim: int
    base_lambda: float = 100.0
    index_convention: str = "zero"
    exponent_sign: str = "negative"
    remainder: str = "error"

    def __post_init__(self):
        if not self.base_lambda > 1.0:
            raise ValueError(f"base_lambda must exceed 1, got {self.base_lambda}")
        if self.head_dim < 2:
            raise ValueError(f"head_dim must be >= 2, got {self.head_dim}")
        if self.index_convention not in ("zero", "one"):
            raise ValueError(f"unknown index convention {self.index_convention!r}")
        if self.exponent_sign not in ("positive", "negative"):
            raise ValueError(f"unknown exponent sign {self.exponent_sign!r}")
        if self.remainder not in ("error", "passthrough"):
            raise ValueError(f"unknown remainder policy {self.remainder!r}")

    @property
    def sign(self) -> float:
        return 1.0 if self.exponent_sign == "positive" else -1.0

    def block_size(self, mode: str) -> int:
        _check_mode(mode)
        return 2 if mode == "one_d" else 3

    def num_blocks(self, mode: str) -> int:
        """Number of rotated sub-vectors; validates divisibility of ``head_dim``."""
        size = self.block_size(mode)
        if self.head_dim % size and self.remainder == "error":
            raise DimensionMismatch(
                f"head_dim {self.head_dim} is not divisible by {size} (mode {mode})"
            )
        if self.head_dim < size:
            raise DimensionMismatch(f"head_dim {self.head_dim} too small for mode {mode}")
        return self.head_dim // size

    def index_range(self, mode: str) -> range:
        n = self.num_blocks(mode)
        return range(n) if self.index_convention == "zero" else range(1, n + 1)

    def frequency(self, i) -> np.ndarray:
        """``base_lambda ** (sign * 2 i / head_dim)`` for schedule index ``i``."""
        i = np.asarray(i, dtype=np.float64)
        return self.base_lambda ** (self.sign * 2.0 * i / self.head_dim)

    def frequencies(self, mode: str) -> np.ndarray:
        """Per-block frequencies in block order."""
        return self.frequency(np.array(self.index_range(mode)))


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"unknown operator mode {mode!r}; expected one of {MODES}")


def _coerce_position(pos) -> GridPosition:
    if isinstance(pos, GridPosition):
        return pos
    if np.ndim(pos) == 0:
        return GridPosition(0, int(pos))
    pos = tuple(pos)
    if len(pos) == 2:
        return GridPosition(pos[0], pos[1])
    if len(pos) == 3:
        return GridPosition(pos[1], pos[2], pos[0])
    raise ValueError(f"position must have 1, 2 or 3 coordinates, got {pos!r}")


def phases(pos, i: int, schedule: PhaseSchedule, mode: str = "two_d"):
    """Phases ``(theta_d, theta_h, theta_w)`` of sub-vector ``i`` at ``pos``.

    ``theta_d`` is ``None`` for positions without a depth coordinate. ``pos``
    may be a :class:`GridPosition`, an ``(h, w)`` / ``(d, h, w)`` tuple, or an
    integer (1D index, reported as ``theta_w``).

    Raises:
        IndexOutOfRange: if ``i`` is outside the schedule's index range.
    """
    if i not in schedule.index_range(mode):
        raise IndexOutOfRange(
            f"sub-vector index {i} outside {schedule.index_range(mode)} "
            f"({schedule.index_convention}-based, mode {mode})"
        )
    pos = _coerce_position(pos)
    f = float(schedule.frequency(i))
    theta_d = None if pos.p_d is None else pos.p_d * f
    return theta_d, pos.p_h * f, pos.p_w * f


def _half_sinc(theta):
    """``sin(theta/2) / theta`` with its series below the threshold."""
    theta = np.asarray(theta, dtype=np.float64)
    small = theta < SERIES_THRESHOLD
    safe = np.where(small, 1.0, theta)
    return np.where(small, 0.5 - theta * theta / 48.0, np.sin(0.5 * theta) / safe)


def build_1d(theta) -> np.ndarray:
    """``cos(theta/2) + sin(theta/2) j``: rotation by ``theta`` about the y axis."""
    theta = np.asarray(theta, dtype=np.float64)
    half = 0.5 * theta
    zero = np.zeros_like(theta)
    return np.stack([np.cos(half), zero, np.sin(half), zero], axis=-1)


def build_2d(theta_h, theta_w) -> np.ndarray:
    """Closed-form symmetric operator for a 2D position.

    ``cos(T/2) + sin(T/2) (th/(2T) j + tw/(2T) k)`` with ``T = sqrt(th^2 + tw^2) / 2``.
    Returns exactly the identity at ``th = tw = 0``.
    """
    th, tw = np.broadcast_arrays(
        np.asarray(theta_h, dtype=np.float64), np.asarray(theta_w, dtype=np.float64)
    )
    big_theta = 0.5 * np.hypot(th, tw)
    coef = _half_sinc(big_theta) / 2.0
    return np.stack([np.cos(0.5 * big_theta), np.zeros_like(th), coef * th, coef * tw], axis=-1)


def build_3d(theta_d, theta_h, theta_w) -> np.ndarray:
    """Closed-form symmetric operator for a 3D position.

    ``cos(T/2) + sin(T/2) (td i + th j + tw k) / (3T)`` with
    ``T = sqrt(td^2 + th^2 + tw^2) / 3``.
    """
    td, th, tw = np.broadcast_arrays(
        *(np.asarray(t, dtype=np.float64) for t in (theta_d, theta_h, theta_w))
    )
    big_theta = np.sqrt(td * td + th * th + tw * tw) / 3.0
    coef = _half_sinc(big_theta) / 3.0
    return np.stack([np.cos(0.5 * big_theta), coef * td, coef * th, coef * tw], axis=-1)


def rotation_block(theta_h, theta_w) -> np.ndarray:
    """Explicit 3x3 rotation for phases ``(theta_h, theta_w)``.

    Entry by entry, with ``rho = sqrt(th^2 + tw^2)`` and ``T = rho / 2``::

        [ cos T          -tw sin T/rho            th sin T/rho          ]
        [ tw sin T/rho   1 - tw^2 (1-cos T)/rho^2  th tw (1-cos T)/rho^2 ]
        [ -th sin T/rho  th tw (1-cos T)/rho^2     1 - th^2 (1-cos T)/rho^2 ]

    ``sin T / rho`` and ``(1 - cos T) / rho^2`` switch to series near 0.
    """
    th, tw = np.broadcast_arrays(
        np.asarray(theta_h, dtype=np.float64), np.asarray(theta_w, dtype=np.float64)
    )
    rho = np.hypot(th, tw)
    big_theta = 0.5 * rho
    small = rho < SERIES_THRESHOLD
    safe = np.where(small, 1.0, rho)
    s = np.where(small, 0.5 - big_theta**2 / 12.0, np.sin(big_theta) / safe)
    c = np.where(small, 0.125 - big_theta**2 / 96.0, (1.0 - np.cos(big_theta)) / safe**2)
    cos_t = np.cos(big_theta)
    one = np.ones_like(th)
    m = np.stack(
        [
            cos_t, -tw * s, th * s,
            tw * s, one - tw * tw * c, th * tw * c,
            -th * s, th * tw * c, one - th * th * c,
        ],
        axis=-1,
    )
    return m.reshape(th.shape + (3, 3))


def rope_reference_1d(pair, theta) -> np.ndarray:
    """Standard RoPE: ``[[cos, -sin], [sin, cos]] @ pair``."""
    pair = np.asarray(pair, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    c, s = np.cos(theta), np.sin(theta)
    a, b = pair[..., 0], pair[..., 1]
    return np.stack([c * a - s * b, s * a + c * b], axis=-1)


@dataclass(frozen=True)
class GeoPEOperator:
    """Block-diagonal rotation for one token.

    ``quaternions`` has shape ``(n, 4)``, ``matrices`` ``(n, 3, 3)`` and
    ``phases`` ``(n, 3)`` holding ``(theta_d, theta_h, theta_w)`` per block.
    """

    mode: str
    head_dim: int
    quaternions: np.ndarray
    matrices: np.ndarray
    phases: np.ndarray = field(repr=False)

    @property
    def num_blocks(self) -> int:
        return self.quaternions.shape[0]

    @property
    def block_size(self) -> int:
        return 2 if self.mode == "one_d" else 3

    @property
    def blocks(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        return zip(self.quaternions, self.matrices)


def _quaternions_for(mode: str, phase: np.ndarray) -> np.ndarray:
    """Quaternions from a ``(..., 3)`` array of ``(theta_d, theta_h, theta_w)``."""
    if mode == "one_d":
        return build_1d(phase[..., 2])
    if mode == "two_d":
        return build_2d(phase[..., 1], phase[..., 2])
    return build_3d(phase[..., 0], phase[..., 1], phase[..., 2])


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


def build_operator(pos, schedule: PhaseSchedule, mode: str = "two_d") -> GeoPEOperator:
    """Operator for a single position.

    In ``one_d`` mode ``pos`` is the sequence index (an int). ``three_d``
    needs a depth coordinate; it is taken as 0 when absent.

    Raises:
        DimensionMismatch: if ``head_dim`` is not divisible by the block size.
    """
    schedule.num_blocks(mode)
    pos = _coerce_position(pos)
    coords = np.array([pos.p_d or 0, pos.p_h, pos.p_w], dtype=np.float64)
    phase = schedule.frequencies(mode)[:, None] * coords
    if mode == "one_d":
        phase[:, :2] = 0.0
    elif mode == "two_d":
        phase[:, 0] = 0.0
    quats = _quaternions_for(mode, phase)
    mats = to_rotation_matrix(quats)
    _freeze(quats, mats, phase)
    return GeoPEOperator(mode, schedule.head_dim, quats, mats, phase)


def _split(x: np.ndarray, head_dim: int, size: int, n: int):
    if x.shape[-1] != head_dim:
        raise DimensionMismatch(f"feature length {x.shape[-1]} != head_dim {head_dim}")
    body = x[..., : n * size].reshape(x.shape[:-1] + (n, size))
    return body, x[..., n * size :]


def apply_operator(op: GeoPEOperator, x, use_matrix: bool = False) -> np.ndarray:
    """Rotate every sub-vector of ``x`` (shape ``(..., head_dim)``) by its block.

    The default path is the quaternion sandwich product; ``use_matrix`` uses
    the cached 3x3 blocks instead. Trailing passthrough dimensions are copied.

    Raises:
        DimensionMismatch: if ``x`` does not have ``head_dim`` features.
    """
    x = np.asarray(x, dtype=np.float64)
    return _apply_blocks(op.quaternions, op.matrices, op.mode, x, op.head_dim, use_matrix)


def _apply_blocks(quats, mats, mode, x, head_dim, use_matrix):
    size = 2 if mode == "one_d" else 3
    n = quats.shape[-2]
    body, rest = _split(x, head_dim, size, n)
    if mode == "one_d":
        # pair (a, b) is lifted to (a, 0, b)
        body = np.stack([body[..., 0], np.zeros_like(body[..., 0]), body[..., 1]], axis=-1)
    if use_matrix:
        out = np.einsum("...ij,...j->...i", mats, body)
    else:
        out = sandwich_rotate(quats, body)
    if mode == "one_d":
        out = out[..., [0, 2]]
    out = out.reshape(x.shape[:-1] + (n * size,))
    return np.concatenate([out, rest], axis=-1) if rest.shape[-1] else out


@dataclass(frozen=True)
class GridOperators:
    """Operators for every token of a grid, in row-major token order.

    ``quaternions``: ``(T, n, 4)``; ``matrices``: ``(T, n, 3, 3)``;
    ``phases``: ``(T, n, 3)``; ``positions``: ``(T, 3)`` as ``(p_d, p_h, p_w)``.
    Arrays are read-only so a cached instance can be shared.
    """

    mode: str
    head_dim: int
    positions: np.ndarray
    phases: np.ndarray
    quaternions: np.ndarray
    matrices: np.ndarray

    def operator(self, token: int) -> GeoPEOperator:
        return GeoPEOperator(
            self.mode, self.head_dim, self.quaternions[token], self.matrices[token], self.phases[token]
        )

    def apply(self, x, use_matrix: bool = False) -> np.ndarray:
        """Rotate ``x`` of shape ``(T, ..., head_dim)``, token axis first."""
        x = np.asarray(x, dtype=np.float64)
        extra = x.ndim - 2
        shape = (x.shape[0],) + (1,) * extra
        quats = self.quaternions.reshape(shape + self.quaternions.shape[1:])
        mats = self.matrices.reshape(shape + self.matrices.shape[1:])
        return _apply_blocks(quats, mats, self.mode, x, self.head_dim, use_matrix)


def grid_positions(grid, offset=(0, 0, 0)) -> np.ndarray:
    """Zero-based row-major positions ``(p_d, p_h, p_w)`` of a ``(H, W)`` or ``(D, H, W)`` grid."""
    grid = tuple(int(g) for g in grid)
    if len(grid) == 2:
        grid = (1,) + grid
    if len(grid) != 3 or min(grid) < 1:
        raise ValueError(f"grid must be (H, W) or (D, H, W) with positive sizes, got {grid}")
    offset = tuple(offset)
    if len(offset) == 2:
        offset = (0,) + offset
    d, h, w = np.meshgrid(*(np.arange(g) for g in grid), indexing="ij")
    pos = np.stack([d.ravel(), h.ravel(), w.ravel()], axis=-1)
    return pos + np.asarray(offset, dtype=np.int64)


@functools.lru_cache(maxsize=64)
def grid_operators(grid: tuple, schedule: PhaseSchedule, mode: str = "two_d", offset=(0, 0, 0)) -> GridOperators:
    """Build (once) and cache the operators for every position of ``grid``.

    In ``one_d`` mode each token's position is its row-major flat index.
    """
    schedule.num_blocks(mode)
    pos = grid_positions(grid, offset)
    coords = pos.astype(np.float64)
    if mode == "one_d":
        flat = np.arange(pos.shape[0], dtype=np.float64)
        coords = np.stack([np.zeros_like(flat), np.zeros_like(flat), flat], axis=-1)
    elif mode == "two_d":
        coords[:, 0] = 0.0
    phase = coords[:, None, :] * schedule.frequencies(mode)[None, :, None]
    quats = _quaternions_for(mode, phase)
    mats = to_rotation_matrix(quats)
    _freeze(pos, phase, quats, mats)
    return GridOperators(mode, schedule.head_dim, pos, phase, quats, mats)


def block_norms(x, size: int, n: int) -> np.ndarray:
    x = np.asarray(x)
    return np.linalg.norm(x[..., : n * size].reshape(x.shape[:-1] + (n, size)), axis=-1)

