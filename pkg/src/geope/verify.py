"""Seeded property suite behind ``geope verify``.

Every check draws from its own PCG64 stream derived from ``(seed, index)``, so
results do not depend on which other checks run. A check reports the largest
deviation it observed and the bound it is held to.
"""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import lie
from . import quaternion as qa
from .attention import (
    AttentionConfig,
    attention_scores,
    decay_profile,
    encode_qk,
    grid_positions,
    mean_attention_distance,
    synthetic_qk,
)
from .linear import decompose_score, displacement_table, lie_vector, relative_rotation
from .operators import (
    PhaseSchedule,
    apply_operator,
    build_1d,
    build_2d,
    build_3d,
    build_operator,
    phases,
    rope_reference_1d,
    rotation_block,
)

COMPARE = {"<=": operator.le, "<": operator.lt, ">": operator.gt, "==": operator.eq}


@dataclass(frozen=True)
class CheckResult:
    name: str
    samples: int
    max_error: float
    tolerance: float
    comparison: str = "<="

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_error)) and COMPARE[self.comparison](self.max_error, self.tolerance)


@dataclass(frozen=True)
class VerifyContext:
    seed: int
    schedule: PhaseSchedule
    samples: int = 10_000

    def rng(self, index: int) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, index])))

    def schedules(self):
        """The configured schedule under both exponent signs."""
        base = self.schedule
        for sign in ("negative", "positive"):
            yield PhaseSchedule(base.head_dim, base.base_lambda, base.index_convention, sign, base.remainder)


CHECKS: list[tuple[str, Callable[[VerifyContext, np.random.Generator], CheckResult]]] = []


def check(name: str):
    def register(fn):
        CHECKS.append((name, fn))
        return fn

    return register


def _unit_quats(rng, n):
    q = rng.standard_normal((n, 4))
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def _sign_free(a, b):
    return np.minimum(np.max(np.abs(a - b), axis=-1), np.max(np.abs(a + b), axis=-1))


# -- quaternion algebra -----------------------------------------------------


@check("quat.associativity")
def _(ctx, rng):
    a, b, c = (rng.standard_normal((ctx.samples, 4)) for _ in range(3))
    lhs = qa.hamilton_product(qa.hamilton_product(a, b), c)
    rhs = qa.hamilton_product(a, qa.hamilton_product(b, c))
    scale = qa.norm(a) * qa.norm(b) * qa.norm(c)
    return CheckResult("quat.associativity", ctx.samples, float(np.max(np.abs(lhs - rhs).max(-1) / scale)), 1e-12)


@check("quat.conjugate_involution")
def _(ctx, rng):
    q = rng.standard_normal((ctx.samples, 4))
    return CheckResult("quat.conjugate_involution", ctx.samples, float(np.max(np.abs(qa.conjugate(qa.conjugate(q)) - q))), 0.0)


@check("quat.norm_multiplicative")
def _(ctx, rng):
    a, b = rng.standard_normal((2, ctx.samples, 4))
    na, nb = qa.norm(a), qa.norm(b)
    err = np.abs(qa.norm(qa.hamilton_product(a, b)) - na * nb) / (na * nb)
    return CheckResult("quat.norm_multiplicative", ctx.samples, float(err.max()), 1e-12)


@check("quat.isometry")
def _(ctx, rng):
    r = _unit_quats(rng, ctx.samples)
    v = rng.standard_normal((ctx.samples, 3))
    out = qa.sandwich_rotate(r, v)
    nv = np.linalg.norm(v, axis=-1)
    err = np.abs(np.linalg.norm(out, axis=-1) - nv) / nv
    return CheckResult("quat.isometry", ctx.samples, float(err.max()), 1e-12)


@check("quat.purity")
def _(ctx, rng):
    r = _unit_quats(rng, ctx.samples)
    v = rng.standard_normal((ctx.samples, 3))
    full = qa.hamilton_product(qa.hamilton_product(r, qa.lift(v)), qa.conjugate(r))
    return CheckResult("quat.purity", ctx.samples, float(np.max(np.abs(full[:, 0]))), 1e-12)


@check("quat.composition")
def _(ctx, rng):
    r1, r2 = _unit_quats(rng, ctx.samples), _unit_quats(rng, ctx.samples)
    v = rng.standard_normal((ctx.samples, 3))
    lhs = qa.sandwich_rotate(qa.hamilton_product(r1, r2) / qa.norm(qa.hamilton_product(r1, r2))[:, None], v)
    rhs = qa.sandwich_rotate(r1, qa.sandwich_rotate(r2, v))
    return CheckResult("quat.composition", ctx.samples, float(np.max(np.abs(lhs - rhs))), 1e-11)


@check("quat.scale_equivalence")
def _(ctx, rng):
    r = _unit_quats(rng, ctx.samples)
    a = rng.uniform(0.1, 10.0, ctx.samples) * rng.choice([-1.0, 1.0], ctx.samples)
    v = rng.standard_normal((ctx.samples, 3))
    scaled = qa.conjugate_by(a[:, None] * r, v)[:, 1:]
    err = np.abs(scaled - qa.sandwich_rotate(r, v)).max(-1) / np.maximum(1.0, np.linalg.norm(v, axis=-1))
    return CheckResult("quat.scale_equivalence", ctx.samples, float(err.max()), 1e-12)


@check("quat.matrix_agreement")
def _(ctx, rng):
    r = _unit_quats(rng, ctx.samples)
    v = rng.standard_normal((ctx.samples, 3))
    m = qa.to_rotation_matrix(r)
    err = np.abs(np.einsum("nij,nj->ni", m, v) - qa.sandwich_rotate(r, v))
    return CheckResult("quat.matrix_agreement", ctx.samples, float(err.max()), 1e-12)


@check("quat.matrix_orthogonality")
def _(ctx, rng):
    m = qa.to_rotation_matrix(_unit_quats(rng, ctx.samples))
    ortho = np.abs(np.swapaxes(m, -1, -2) @ m - np.eye(3)).max(axis=(-1, -2))
    det = np.abs(np.linalg.det(m) - 1.0)
    return CheckResult("quat.matrix_orthogonality", ctx.samples, float(max(ortho.max(), det.max())), 1e-12)


# -- Lie maps -----------------------------------------------------------------


@check("lie.exp_log_roundtrip")
def _(ctx, rng):
    r = qa.canonicalize(_unit_quats(rng, ctx.samples))
    back = lie.exp_map(lie.log_map(r))
    return CheckResult("lie.exp_log_roundtrip", ctx.samples, float(_sign_free(back, r).max()), 1e-12)


@check("lie.log_exp_roundtrip")
def _(ctx, rng):
    u = rng.standard_normal((ctx.samples, 3))
    u *= (rng.uniform(0.0, 0.999 * math.pi / 2, ctx.samples) / np.linalg.norm(u, axis=-1))[:, None]
    err = np.abs(lie.log_map(lie.exp_map(u)) - u)
    return CheckResult("lie.log_exp_roundtrip", ctx.samples, float(err.max()), 1e-12)


@check("lie.small_angle_continuity")
def _(ctx, rng):
    worst = 0.0
    for size in (1e-12, 1e-9, 1e-6):
        u = rng.standard_normal((1000, 3))
        u *= size / np.linalg.norm(u, axis=-1, keepdims=True)
        worst = max(worst, float(np.abs(lie.log_map(lie.exp_map(u)) - u).max()))
    return CheckResult("lie.small_angle_continuity", 3000, worst, 1e-12)


def _base_h(theta):
    return build_1d(theta)


def _base_w(theta):
    theta = np.asarray(theta)
    z = np.zeros_like(theta)
    return np.stack([np.cos(theta / 2), z, z, np.sin(theta / 2)], axis=-1)


def _base_d(theta):
    theta = np.asarray(theta)
    z = np.zeros_like(theta)
    return np.stack([np.cos(theta / 2), np.sin(theta / 2), z, z], axis=-1)


@check("lie.mean_symmetry")
def _(ctx, rng):
    n = ctx.samples
    a, b, c = _unit_quats(rng, n), _unit_quats(rng, n), _unit_quats(rng, n)
    two = np.abs(lie.geometric_mean([a, b]) - lie.geometric_mean([b, a])).max()
    three = max(
        np.abs(lie.geometric_mean([a, b, c]) - lie.geometric_mean(perm)).max()
        for perm in ([a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a])
    )
    return CheckResult("lie.mean_symmetry", n, float(max(two, three)), 0.0)


@check("lie.mean_vector_consistency")
def _(ctx, rng):
    th, tw = rng.uniform(-math.pi, math.pi, (2, ctx.samples))
    logs = lie.log_map(np.stack([_base_h(th), _base_w(tw)]))
    mean = lie.mean_lie_vector(logs)
    expected = np.stack([np.zeros_like(th), th / 4, tw / 4], axis=-1)
    return CheckResult("lie.mean_vector_consistency", ctx.samples, float(np.abs(mean - expected).max()), 1e-15)


@check("lie.mean_rotation_angle")
def _(ctx, rng):
    th, tw = rng.uniform(-math.pi, math.pi, (2, ctx.samples))
    angle = qa.rotation_angle(lie.geometric_mean([_base_h(th), _base_w(tw)]))
    return CheckResult("lie.mean_rotation_angle", ctx.samples, float(np.abs(angle - 0.5 * np.hypot(th, tw)).max()), 1e-12)


# -- operator builder ---------------------------------------------------------


def _lifted_mean(*axis_phases):
    """exp of the mean of the single-axis logs (theta/2 along each axis)."""
    u = np.stack([t / 2 for t in axis_phases], axis=-1) / len(axis_phases)
    if u.shape[-1] == 2:
        u = np.concatenate([np.zeros(u.shape[:-1] + (1,)), u], axis=-1)
    return lie.exp_map(u)


@check("op.closed_form_2d")
def _(ctx, rng):
    th, tw = rng.uniform(-20, 20, (2, ctx.samples))
    full = _sign_free(build_2d(th, tw), _lifted_mean(th, tw)).max()
    sh, sw = rng.uniform(-math.pi, math.pi, (2, ctx.samples))
    principal = _sign_free(build_2d(sh, sw), lie.geometric_mean([_base_h(sh), _base_w(sw)])).max()
    return CheckResult("op.closed_form_2d", 2 * ctx.samples, float(max(full, principal)), 1e-12)


@check("op.closed_form_3d")
def _(ctx, rng):
    td, th, tw = rng.uniform(-20, 20, (3, ctx.samples))
    full = _sign_free(build_3d(td, th, tw), _lifted_mean(td, th, tw)).max()
    sd, sh, sw = rng.uniform(-math.pi, math.pi, (3, ctx.samples))
    principal = _sign_free(
        build_3d(sd, sh, sw), lie.geometric_mean([_base_d(sd), _base_h(sh), _base_w(sw)])
    ).max()
    return CheckResult("op.closed_form_3d", 2 * ctx.samples, float(max(full, principal)), 1e-12)


@check("op.explicit_matrix")
def _(ctx, rng):
    th, tw = rng.uniform(-20, 20, (2, ctx.samples))
    tiny = rng.uniform(-1e-9, 1e-9, (2, 100))
    th, tw = np.concatenate([th, tiny[0], [0.0]]), np.concatenate([tw, tiny[1], [0.0]])
    err = np.abs(rotation_block(th, tw) - qa.to_rotation_matrix(build_2d(th, tw))).max()
    return CheckResult("op.explicit_matrix", th.size, float(err), 1e-10)


@check("op.axis_swap")
def _(ctx, rng):
    th, tw = rng.uniform(-20, 20, (2, ctx.samples))
    a, b = build_2d(th, tw), build_2d(tw, th)
    err = np.abs(a[:, [0, 1, 2, 3]] - b[:, [0, 1, 3, 2]]).max()
    return CheckResult("op.axis_swap", ctx.samples, float(err), 1e-15)


@check("op.rope_degeneration")
def _(ctx, rng):
    theta = rng.uniform(-20, 20, ctx.samples)
    pair = rng.standard_normal((ctx.samples, 2))
    lifted = np.stack([pair[:, 0], np.zeros(ctx.samples), pair[:, 1]], axis=-1)
    geo = qa.sandwich_rotate(build_1d(theta), lifted)
    err = max(np.abs(geo[:, [0, 2]] - rope_reference_1d(pair, -theta)).max(), np.abs(geo[:, 1]).max())
    return CheckResult("op.rope_degeneration", ctx.samples, float(err), 1e-12)


@check("op.monotone_phase")
def _(ctx, rng):
    worst, count = 0.0, 0
    for sched in ctx.schedules():
        for i in sched.index_range("two_d"):
            f = float(sched.frequency(i))
            for p in range(32):
                _, h0, w0 = phases((p, p), i, sched)
                _, h1, w1 = phases((p + 1, p + 1), i, sched)
                if not (h1 > h0 and w1 > w0):
                    worst = math.inf
                worst = max(worst, abs((h1 - h0) - f) / f, abs((w1 - w0) - f) / f)
                count += 1
    return CheckResult("op.monotone_phase", count, worst, 1e-12)


@check("op.block_isometry")
def _(ctx, rng):
    worst, count = 0.0, 0
    d = ctx.schedule.head_dim
    for sched in ctx.schedules():
        for mode, size in (("one_d", 2), ("two_d", 3), ("three_d", 3)):
            if d % size:
                continue
            n = d // size
            for _ in range(50):
                pos = tuple(int(v) for v in rng.integers(-64, 64, 3))
                op = build_operator(pos[2] if mode == "one_d" else pos if mode == "three_d" else pos[1:], sched, mode)
                x = rng.standard_normal((20, d))
                y = apply_operator(op, x)
                ym = apply_operator(op, x, use_matrix=True)
                nx = np.linalg.norm(x[:, : n * size].reshape(20, n, size), axis=-1)
                ny = np.linalg.norm(y[:, : n * size].reshape(20, n, size), axis=-1)
                worst = max(worst, float(np.max(np.abs(ny - nx) / nx)), float(np.abs(y - ym).max()))
                count += 20
    return CheckResult("op.block_isometry", count, worst, 1e-12)


# -- linear relative ----------------------------------------------------------


@check("lin.shift_invariance")
def _(ctx, rng):
    worst, count = 0.0, 0
    for sched in ctx.schedules():
        for i in sched.index_range("two_d"):
            for _ in range(20):
                m = rng.integers(-50, 50, 2)
                n = rng.integers(-50, 50, 2)
                t = rng.integers(-1000, 1000, 2)
                a = relative_rotation(tuple(n - m), i, sched)
                b = relative_rotation(tuple((n + t) - (m + t)), i, sched)
                worst = max(worst, float(np.abs(a.matrix - b.matrix).max()), abs(a.angle - b.angle))
                count += 1
    return CheckResult("lin.shift_invariance", count, worst, 0.0)


@check("lin.decomposition")
def _(ctx, rng):
    q, k, n = rng.standard_normal((3, ctx.samples, 3))
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    angle = rng.uniform(-2 * math.pi, 2 * math.pi, ctx.samples)
    mats = qa.to_rotation_matrix(qa.axis_angle(n, angle))
    direct = np.einsum("ni,nij,nj->n", q, mats, k)
    total = np.array([decompose_score(q[j], k[j], angle[j], n[j]).total for j in range(ctx.samples)])
    return CheckResult("lin.decomposition", ctx.samples, float(np.abs(total - direct).max()), 1e-12)


@check("lin.inverse_consistency")
def _(ctx, rng):
    worst, count = 0.0, 0
    for sched in ctx.schedules():
        for i in sched.index_range("two_d"):
            for _ in range(20):
                delta = tuple(int(v) for v in rng.integers(-30, 30, 2))
                fwd = relative_rotation(delta, i, sched).matrix
                back = relative_rotation((-delta[0], -delta[1]), i, sched).matrix
                worst = max(worst, float(np.abs(fwd @ back - np.eye(3)).max()))
                count += 1
    return CheckResult("lin.inverse_consistency", count, worst, 1e-12)


@check("lin.angle_formula")
def _(ctx, rng):
    worst, count = 0.0, 0
    for sched in ctx.schedules():
        for i in sched.index_range("two_d"):
            f = float(sched.frequency(i))
            for _ in range(20):
                dh, dw = (int(v) for v in rng.integers(-14, 14, 2))
                rel = relative_rotation((dh, dw), i, sched)
                u = lie_vector(dh * f, dw * f)
                angle = float(qa.rotation_angle(lie.exp_map(u)))
                expected = 0.5 * math.hypot(dh * f, dw * f)
                # the rotation angle is reported in [0, pi]; compare modulo 2 pi
                wrapped = abs((expected + math.pi) % (2 * math.pi) - math.pi)
                worst = max(worst, abs(2 * np.linalg.norm(u) - expected), abs(rel.angle - expected), abs(angle - wrapped))
                count += 1
    return CheckResult("lin.angle_formula", count, worst, 1e-12)


@check("lin.nonlinearity_witness")
def _(ctx, rng):
    sched = ctx.schedule
    i = sched.index_range("two_d")[0]
    m, n = (1, 2), (3, -1)
    q, k = rng.standard_normal((2, 3))
    r_m = qa.to_rotation_matrix(build_operator(m, sched).quaternions[0])
    r_n = qa.to_rotation_matrix(build_operator(n, sched).quaternions[0])
    absolute = float((r_m @ q) @ (r_n @ k))
    linear = float(q @ relative_rotation((n[0] - m[0], n[1] - m[1]), i, sched).matrix @ k)
    return CheckResult("lin.nonlinearity_witness", 1, abs(absolute - linear), 1e-9, ">")


@check("lin.cache")
def _(ctx, rng):
    sched = ctx.schedule
    worst = 0.0
    for h, w in ((1, 1), (2, 2), (3, 5), (14, 14)):
        table = displacement_table((h, w), sched)
        worst = max(worst, abs(len(table) - (2 * h - 1) * (2 * w - 1)))
    table = displacement_table((5, 5), sched)
    for dh in range(-4, 5):
        for dw in range(-4, 5):
            for i, idx in enumerate(sched.index_range("two_d")):
                naive = relative_rotation((dh, dw), idx, sched).matrix
                worst = max(worst, float(np.abs(table.lookup((dh, dw), i).matrix - naive).max()))
    return CheckResult("lin.cache", 81 * table.num_blocks, worst, 1e-12)


# -- attention engine ---------------------------------------------------------


def _attention(ctx, pe_mode, grid=(4, 4), precision="f64", offset=(0, 0), heads=2):
    cfg = AttentionConfig(heads, ctx.schedule.head_dim, grid, pe_mode, ctx.schedule, ctx.seed, precision, offset)
    q, k = synthetic_qk(cfg)
    return attention_scores(*encode_qk(q, k, cfg), cfg)


def _modes(ctx):
    modes = ["none"]
    d = ctx.schedule.head_dim
    if d % 2 == 0:
        modes += ["rope1d", "geope1d"]
    if d % 3 == 0 or ctx.schedule.remainder == "passthrough":
        modes += ["geope2d", "geope3d", "lingeope2d"]
    return modes


def _softmax_check(name, precision, tol):
    def run(ctx, rng):
        modes = _modes(ctx)
        worst = max(float(np.abs(_attention(ctx, m, precision=precision).weights.sum(-1) - 1.0).max()) for m in modes)
        return CheckResult(name, len(modes), worst, tol)

    check(name)(run)


_softmax_check("attn.softmax_rows_f64", "f64", 1e-12)
_softmax_check("attn.softmax_rows_f32", "f32-apply", 1e-6)


@check("attn.f32_matches_f64")
def _(ctx, rng):
    worst = 0.0
    for mode in _modes(ctx):
        a = _attention(ctx, mode)
        b = _attention(ctx, mode, precision="f32-apply")
        worst = max(worst, float(np.abs(a.weights - b.weights).max()))
    return CheckResult("attn.f32_matches_f64", len(_modes(ctx)), worst, 1e-3)


@check("attn.linear_translation_invariance")
def _(ctx, rng):
    if "lingeope2d" not in _modes(ctx):
        return CheckResult("attn.linear_translation_invariance", 0, 0.0, 0.0)
    base = _attention(ctx, "lingeope2d", grid=(6, 6))
    worst = 0.0
    for _ in range(3):
        off = tuple(int(v) for v in rng.integers(-100, 100, 2))
        moved = _attention(ctx, "lingeope2d", grid=(6, 6), offset=off)
        worst = max(worst, float(np.abs(moved.logits - base.logits).max()))
    return CheckResult("attn.linear_translation_invariance", 3, worst, 0.0)


@check("attn.mean_distance_uniform")
def _(ctx, rng):
    per_head, mean = mean_attention_distance(np.full((4, 4), 0.25), grid_positions((2, 2)))
    expected = (0 + 1 + 1 + math.sqrt(2)) / 4
    _, single = mean_attention_distance(np.ones((1, 1)), grid_positions((1, 1)))
    return CheckResult("attn.mean_distance_uniform", 2, max(abs(mean - expected), abs(single)), 1e-5)


@check("attn.decay_trend")
def _(ctx, rng):
    """Ratio of mean |S| at distance 32 to distance 1 under the configured sign."""
    sched = ctx.schedule
    if sched.head_dim % 3:
        return CheckResult("attn.decay_trend", 0, 0.0, 1.0, "<")
    rows = decay_profile(sched, [1, 32], 200, ctx.seed)
    return CheckResult("attn.decay_trend", 200, rows[1][1] / rows[0][1], 1.0, "<")


def run_checks(seed: int, schedule: PhaseSchedule, samples: int = 10_000) -> list[CheckResult]:
    ctx = VerifyContext(seed, schedule, samples)
    return [fn(ctx, ctx.rng(index)) for index, (_, fn) in enumerate(CHECKS)]
