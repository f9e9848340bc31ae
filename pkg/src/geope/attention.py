"""Desk-scale multi-head attention over synthetic token grids.

Tokens are laid out row-major: token ``t`` of an ``H x W`` grid sits at
``(p_h, p_w) = (t // W, t % W)``. Queries and keys are drawn from a seeded
unit Gaussian; there is no value projection, the products are the attention
weights and the mean attention distance derived from them.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionMismatch
from .linear import displacement_table
from .operators import PhaseSchedule, grid_operators, grid_positions, rope_reference_1d

PE_MODES = ("none", "rope1d", "geope1d", "geope2d", "geope3d", "lingeope2d")
OPERATOR_MODE = {"rope1d": "one_d", "geope1d": "one_d", "geope2d": "two_d", "geope3d": "three_d", "lingeope2d": "two_d"}
PRECISIONS = ("f64", "f32-apply")


def thread_count() -> int:
    """Worker cap from ``GEOPE_THREADS`` (0 or unset means one per CPU)."""
    raw = os.environ.get("GEOPE_THREADS", "0").strip() or "0"
    n = int(raw)
    if n < 0:
        raise ValueError(f"GEOPE_THREADS must be >= 0, got {n}")
    return n or (os.cpu_count() or 1)


@dataclass(frozen=True)
class AttentionConfig:
    heads: int = 12
    head_dim: int = 48
    grid: tuple = (14, 14)
    pe_mode: str = "geope2d"
    schedule: Optional[PhaseSchedule] = None
    seed: int = 0
    precision: str = "f64"
    offset: tuple = (0, 0)

    def __post_init__(self):
        if self.schedule is None:
            object.__setattr__(self, "schedule", PhaseSchedule(self.head_dim))
        object.__setattr__(self, "grid", tuple(int(g) for g in self.grid))
        object.__setattr__(self, "offset", tuple(int(o) for o in self.offset))
        self.validate()

    def validate(self) -> None:
        if self.heads < 1:
            raise ValueError(f"heads must be >= 1, got {self.heads}")
        if self.pe_mode not in PE_MODES:
            raise ValueError(f"unknown pe_mode {self.pe_mode!r}; expected one of {PE_MODES}")
        if self.precision not in PRECISIONS:
            raise ValueError(f"unknown precision {self.precision!r}")
        if len(self.grid) not in (2, 3) or min(self.grid) < 1:
            raise ValueError(f"grid must be HxW or DxHxW with positive sizes, got {self.grid}")
        if self.schedule.head_dim != self.head_dim:
            raise DimensionMismatch(
                f"schedule head_dim {self.schedule.head_dim} != config head_dim {self.head_dim}"
            )
        if self.pe_mode == "lingeope2d" and len(self.grid) == 3 and self.grid[0] != 1:
            raise ValueError("lingeope2d needs a 2D grid")
        if self.pe_mode != "none":
            self.schedule.num_blocks(OPERATOR_MODE[self.pe_mode])

    @property
    def num_tokens(self) -> int:
        return math.prod(self.grid)

    @property
    def dtype(self):
        return np.float32 if self.precision == "f32-apply" else np.float64

    def positions(self) -> np.ndarray:
        """``(T, 3)`` integer positions ``(p_d, p_h, p_w)`` including the offset."""
        return grid_positions(self.grid, self.offset)


@dataclass(frozen=True)
class AttentionTrace:
    """Result of one attention pass.

    ``q`` / ``k``: ``(T, heads, head_dim)`` rotated projections.
    ``logits`` / ``weights``: ``(heads, T, T)``, query rows, key columns.
    ``distance_per_head``: mean attention distance per head, in patch units.
    """

    q: np.ndarray
    k: np.ndarray
    logits: np.ndarray
    weights: np.ndarray
    positions: np.ndarray
    distance_per_head: np.ndarray = field(repr=False)

    @property
    def mean_distance(self) -> float:
        return float(np.mean(self.distance_per_head))


def synthetic_qk(config: AttentionConfig):
    """Seeded Gaussian ``(Q, K)`` of shape ``(T, heads, head_dim)``."""
    rng = np.random.Generator(np.random.PCG64(config.seed))
    shape = (config.num_tokens, config.heads, config.head_dim)
    return rng.standard_normal(shape), rng.standard_normal(shape)


def _rope(x: np.ndarray, config: AttentionConfig) -> np.ndarray:
    n = config.head_dim // 2
    freqs = config.schedule.frequencies("one_d")
    theta = np.arange(config.num_tokens, dtype=np.float64)[:, None] * freqs  # (T, n)
    pairs = x[..., : 2 * n].reshape(x.shape[:-1] + (n, 2))
    out = rope_reference_1d(pairs, theta[:, None, :].astype(x.dtype)).astype(x.dtype)
    return out.reshape(x.shape[:-1] + (2 * n,))


def encode_qk(q, k, config: AttentionConfig):
    """Apply the configured positional rotation to every head of ``q`` and ``k``.

    ``none`` and ``lingeope2d`` return the inputs unchanged (the latter applies
    its rotation at score time). ``f32-apply`` performs the rotation in float32.

    Raises:
        DimensionMismatch: if the inputs do not match ``(T, heads, head_dim)``.
    """
    dtype = config.dtype
    q = np.asarray(q, dtype=dtype)
    k = np.asarray(k, dtype=dtype)
    expected = (config.num_tokens, config.heads, config.head_dim)
    if q.shape != expected or k.shape != expected:
        raise DimensionMismatch(f"expected q/k of shape {expected}, got {q.shape} and {k.shape}")
    if config.pe_mode in ("none", "lingeope2d"):
        return q, k
    if config.pe_mode == "rope1d":
        return _rope(q, config), _rope(k, config)
    ops = grid_operators(config.grid, config.schedule, OPERATOR_MODE[config.pe_mode], _offset3(config))
    if dtype == np.float32:
        return _apply_f32(ops, q), _apply_f32(ops, k)
    return ops.apply(q), ops.apply(k)


def _offset3(config: AttentionConfig) -> tuple:
    off = config.offset
    return (0,) + off if len(off) == 2 else off


def _apply_f32(ops, x: np.ndarray) -> np.ndarray:
    """Matrix-path rotation in float32; 1D mode uses the (x, z) minor of each block."""
    size = 2 if ops.mode == "one_d" else 3
    n = ops.matrices.shape[1]
    mats = ops.matrices.astype(np.float32)[:, None]  # (T, 1, n, 3, 3)
    if size == 2:
        mats = mats[..., [0, 2], :][..., [0, 2]]
    body = x[..., : n * size].reshape(x.shape[:-1] + (n, size))
    out = np.einsum("...ij,...j->...i", mats, body).reshape(x.shape[:-1] + (n * size,))
    return np.concatenate([out, x[..., n * size :]], axis=-1)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _linear_logits_head(qh, kh, pair_mats, n):
    """Raw scores ``sum_i <q_i, M_rel,i k_i>`` for one head; ``qh``/``kh`` are ``(T, d)``."""
    qb = qh[:, : 3 * n].reshape(-1, n, 3)
    kb = kh[:, : 3 * n].reshape(-1, n, 3)
    rotated = (pair_mats @ kb[None, :, :, :, None])[..., 0]  # (Tq, Tk, n, 3)
    raw = np.einsum("qna,qkna->qk", qb, rotated)
    rest = qh.shape[1] - 3 * n
    if rest:
        raw = raw + qh[:, 3 * n :] @ kh[:, 3 * n :].T
    return raw


def attention_scores(q, k, config: AttentionConfig) -> AttentionTrace:
    """Scaled dot-product logits and row-softmax weights for every head.

    For ``lingeope2d`` the raw score is ``sum_i <q_i, M_rel,i(n - m) k_i>``
    using the cached displacement table. Heads are computed independently (and
    in parallel up to ``GEOPE_THREADS``); the result does not depend on the
    worker count.
    """
    q = np.asarray(q)
    k = np.asarray(k)
    dtype = config.dtype
    scale = dtype(1.0 / math.sqrt(config.head_dim))
    positions = config.positions()

    if config.pe_mode == "lingeope2d":
        table = displacement_table(config.grid[-2:], config.schedule)
        pair_mats = table.pair_matrices(positions[:, 1:]).astype(dtype)
        n = table.num_blocks

        def head_logits(h):
            return _linear_logits_head(q[:, h], k[:, h], pair_mats, n)
    else:

        def head_logits(h):
            return q[:, h] @ k[:, h].T

    workers = min(thread_count(), config.heads)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(head_logits, range(config.heads)))
    else:
        raw = [head_logits(h) for h in range(config.heads)]
    logits = (np.stack(raw) * scale).astype(dtype)
    weights = _softmax(logits)
    per_head, _ = mean_attention_distance(weights, positions)
    for a in (logits, weights, per_head):
        a.setflags(write=False)
    return AttentionTrace(q, k, logits, weights, positions, per_head)


def mean_attention_distance(weights, positions):
    """Attention-weighted query-key distance.

    For each query the Euclidean distance to every key is weighted by the
    attention weight and summed; that is averaged over queries per head, and
    the per-head values are averaged for the overall mean.

    Args:
        weights: ``(heads, T, T)`` or ``(T, T)`` row-stochastic weights.
        positions: ``(T, k)`` coordinates in patch units.

    Returns:
        ``(per_head, mean)`` with ``per_head`` of shape ``(heads,)``.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim == 2:
        w = w[None]
    pos = np.asarray(positions, dtype=np.float64)
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    per_query = np.sum(w * dist[None], axis=-1)
    per_head = per_query.mean(axis=-1)
    return per_head, float(per_head.mean())


def resolution_phase_grid(h: int, w: int, schedule: PhaseSchedule):
    """Phases of every position of an ``h x w`` grid under a fixed schedule.

    Returns ``(positions, phases)`` where ``positions`` is ``(h*w, 2)`` of
    ``(p_h, p_w)`` and ``phases`` is ``(h*w, n, 2)`` of ``(theta_h, theta_w)``.
    The schedule is not rescaled: larger grids simply reach larger phases.
    """
    if h < 1 or w < 1:
        raise ValueError(f"grid dimensions must be >= 1, got {(h, w)}")
    pos = grid_positions((h, w))[:, 1:]
    freqs = schedule.frequencies("two_d")
    return pos, pos[:, None, :].astype(np.float64) * freqs[None, :, None]


def lattice_displacements(distance: int) -> np.ndarray:
    """Integer ``(dp_h, dp_w)`` with ``dp_h^2 + dp_w^2 == distance^2``."""
    d = int(distance)
    if d == 0:
        return np.zeros((1, 2), dtype=np.int64)
    a = np.arange(-d, d + 1)
    dh, dw = np.meshgrid(a, a, indexing="ij")
    mask = dh * dh + dw * dw == d * d
    return np.stack([dh[mask], dw[mask]], axis=-1)


def decay_scores(schedule: PhaseSchedule, distance: int, draws: int, seed: int, tied: bool = True) -> np.ndarray:
    """``|S|`` samples of the leading score term at one displacement magnitude.

    ``S = sum_i <q_i, k_i> cos(A_i)`` with ``A_i = |dp| f_i / 2``. Each draw
    samples unit sub-vectors ``q_i`` (and ``k_i = q_i`` when ``tied``); every
    lattice direction with ``|dp| == distance`` is included. Returns an array
    of shape ``(draws, directions)``.
    """
    if draws < 1:
        raise ValueError("draws must be >= 1")
    n = schedule.num_blocks("two_d")
    freqs = schedule.frequencies("two_d")
    seq = np.random.SeedSequence(seed)
    sims = np.empty((draws, n))
    for j, child in enumerate(seq.spawn(draws)):
        rng = np.random.Generator(np.random.PCG64(child))
        qv = rng.standard_normal((n, 3))
        qv /= np.linalg.norm(qv, axis=-1, keepdims=True)
        if tied:
            kv = qv
        else:
            kv = rng.standard_normal((n, 3))
            kv /= np.linalg.norm(kv, axis=-1, keepdims=True)
        sims[j] = np.sum(qv * kv, axis=-1)
    disp = lattice_displacements(distance).astype(np.float64)
    radius = np.hypot(disp[:, 0], disp[:, 1])
    angles = 0.5 * radius[:, None] * freqs[None, :]  # (directions, n)
    return np.abs(sims @ np.cos(angles).T)


def decay_profile(schedule: PhaseSchedule, distances, draws: int, seed: int, tied: bool = True):
    """Rows ``(distance, mean_abs_score, std_abs_score)`` for each distance."""
    rows = []
    for dist in distances:
        s = decay_scores(schedule, dist, draws, seed, tied)
        rows.append((int(dist), float(s.mean()), float(s.std())))
    return rows
