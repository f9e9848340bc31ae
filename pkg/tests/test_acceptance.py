"""Acceptance criteria, one test each, at the stated tolerances.

Every test prints a single ``PASS``/``FAIL`` line; the lines are repeated in
the pytest terminal summary. Run alone with ``pytest tests/test_acceptance.py``.
"""

import itertools
import math
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.linalg import expm

from conftest import sign_free_error
from geope.attention import AttentionConfig, attention_scores, decay_profile, encode_qk, mean_attention_distance, synthetic_qk
from geope.lie import exp_map, geometric_mean
from geope.linear import decompose_score, displacement_table, lie_vector
from geope.operators import PhaseSchedule, build_1d, build_2d, build_3d, grid_operators, rope_reference_1d, rotation_block
from geope.quaternion import axis_angle, conjugate_by, to_rotation_matrix

SEED = 20240607


def left_matrix(u):
    """4x4 matrix of left multiplication by the pure quaternion ``u``."""
    a, b, c = u[..., 0], u[..., 1], u[..., 2]
    z = np.zeros_like(a)
    rows = [[z, -a, -b, -c], [a, z, -c, b], [b, c, z, -a], [c, -b, a, z]]
    return np.moveaxis(np.array(rows), (0, 1), (-2, -1))


def expm_exp(u):
    """``exp`` of pure quaternions through the matrix exponential."""
    return expm(left_matrix(u))[..., :, 0]


def test_1_closed_form_correctness(report):
    rng = np.random.default_rng(SEED)
    start = time.perf_counter()
    th, tw, td = rng.uniform(-20, 20, (3, 10_000))
    zero = np.zeros_like(th)
    # log of a single-axis rotation by theta is theta/2 on that axis; average, then exp
    u2 = np.stack([zero, th / 2, tw / 2], -1) / 2
    u3 = np.stack([td / 2, th / 2, tw / 2], -1) / 3
    err2 = sign_free_error(build_2d(th, tw), expm_exp(u2)).max()
    err3 = sign_free_error(build_3d(td, th, tw), expm_exp(u3)).max()
    # inside the principal branch the package's own log/exp pipeline must agree too
    inside = (np.abs(th) <= math.pi) & (np.abs(tw) <= math.pi)
    err_gm = max(
        sign_free_error(build_2d(a, b), geometric_mean([build_1d(a), axis_angle([0, 0, 1], b)]))
        for a, b in zip(th[inside][:200], tw[inside][:200])
    )
    elapsed = time.perf_counter() - start
    err = max(err2, err3, err_gm)
    report(err <= 1e-12 and elapsed < 5.0, f"max error {err:.2e} (2D {err2:.2e}, 3D {err3:.2e}) <= 1e-12 in {elapsed:.2f}s < 5s")


def test_2_explicit_matrix(report):
    values = np.concatenate([np.linspace(-20, 20, 94), [0.0, 1e-12, -3e-10, 5e-9, -9.9e-9, 1.1e-8]])
    assert len(values) == 100
    th, tw = np.meshgrid(values, values, indexing="ij")
    err = np.abs(rotation_block(th, tw) - to_rotation_matrix(build_2d(th, tw))).max()
    tiny = (np.hypot(th, tw) < 1e-8).sum()
    report(err <= 1e-10, f"max entry error {err:.2e} <= 1e-10 over 10^4 phases ({tiny} series-branch cases)")


def test_3_rope_degeneration(report):
    rng = np.random.default_rng(SEED + 3)
    theta = rng.uniform(-20, 20, 1000)
    v = rng.standard_normal((1000, 2))
    lifted = np.stack([v[:, 0], np.zeros(1000), v[:, 1]], -1)
    rotated = np.einsum("nij,nj->ni", to_rotation_matrix(build_1d(theta)), lifted)
    err = np.abs(rotated[:, [0, 2]] - rope_reference_1d(v, -theta)).max()
    residue = np.abs(rotated[:, 1]).max()
    report(max(err, residue) <= 1e-12, f"max error {err:.2e}, y-leak {residue:.2e} <= 1e-12 over 1000 (theta, v)")


def test_4_symmetry(report):
    rng = np.random.default_rng(SEED + 4)
    q = rng.standard_normal((6, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    ref = geometric_mean(list(q))
    exact = all(np.array_equal(geometric_mean([q[i] for i in p]), ref) for p in itertools.permutations(range(6)))
    th, tw = rng.uniform(-20, 20, (2, 10_000))
    swap = np.abs(build_2d(th, tw)[:, [0, 1, 3, 2]] - build_2d(tw, th)).max()
    report(exact and swap <= 1e-15, f"720 permutations bit-exact={exact}; axis-swap error {swap:.2e} <= 1e-15")


def test_5_relative_shift_invariance(report):
    base = None
    identical = True
    for offset in [(0, 0), (1, 0), (0, 7), (-13, 4), (1000, -999)]:
        cfg = AttentionConfig(heads=3, head_dim=48, grid=(6, 6), pe_mode="lingeope2d", offset=offset)
        q, k = synthetic_qk(cfg)
        logits = attention_scores(*encode_qk(q, k, cfg), cfg).logits
        if base is None:
            base = logits
        identical &= np.array_equal(logits, base)
    report(identical, f"6x6 raw score matrices bit-identical across 5 translations: {identical}")


def test_6_decomposition_identity(report):
    rng = np.random.default_rng(SEED + 6)
    q, k, n = rng.standard_normal((3, 10_000, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    angle = rng.uniform(-math.pi, math.pi, 10_000)
    mats = to_rotation_matrix(axis_angle(n, angle))
    direct = np.einsum("ni,nij,nj->n", q, mats, k)
    totals = np.array([decompose_score(*args).total for args in zip(q, k, angle, n)])
    err = np.abs(totals - direct).max()
    # labels: axis-parallel vectors carry no torsion; a quarter turn of orthogonal vectors is pure torsion
    par = decompose_score(n[0], n[0], 0.9, n[0])
    tor = decompose_score([1, 0, 0], [0, 1, 0], math.pi / 2, [0, 0, 1])
    labels = (
        abs(par.projected_similarity - math.cos(0.9)) < 1e-15
        and abs(par.axial_alignment - (1 - math.cos(0.9))) < 1e-15
        and par.torsional == 0
        and abs(tor.torsional + 1) < 1e-15
        and abs(tor.projected_similarity) < 1e-15
        and tor.axial_alignment == 0
    )
    report(err <= 1e-12 and labels, f"max |total - <q, R k>| {err:.2e} <= 1e-12 over 10^4; term labels consistent={labels}")


def test_7_isometry_and_purity(report):
    rng = np.random.default_rng(SEED + 7)
    start = time.perf_counter()
    sched = PhaseSchedule(48)
    worst_norm, samples = 0.0, 0
    for mode, grid in (("one_d", (1, 2084)), ("two_d", (46, 46)), ("three_d", (13, 13, 13))):
        ops = grid_operators(grid, sched, mode, (0, 0, 0))
        x = rng.standard_normal((ops.positions.shape[0], 48))
        size = 2 if mode == "one_d" else 3
        before = np.linalg.norm(x.reshape(len(x), -1, size), axis=-1)
        samples += before.size
        for use_matrix in (False, True):
            after = np.linalg.norm(ops.apply(x, use_matrix).reshape(len(x), -1, size), axis=-1)
            worst_norm = max(worst_norm, (np.abs(after - before) / before).max())
    r = rng.standard_normal((100_000, 4))
    r /= np.linalg.norm(r, axis=1, keepdims=True)
    v = rng.standard_normal((100_000, 3))
    full = conjugate_by(r, v)
    residue = np.abs(full[:, 0]).max()
    worst_norm = max(worst_norm, (np.abs(np.linalg.norm(full[:, 1:], axis=1) / np.linalg.norm(v, axis=1) - 1)).max())
    elapsed = time.perf_counter() - start
    ok = worst_norm <= 1e-12 and residue <= 1e-12 and elapsed < 10
    report(ok, f"norm rel error {worst_norm:.2e}, scalar residue {residue:.2e} <= 1e-12; {samples} sub-vectors per apply path, 10^5 sandwiches, {elapsed:.2f}s < 10s")


@pytest.mark.parametrize("sign", ["negative", "positive"])
def test_8_decay_trend(report, sign):
    sched = PhaseSchedule(48, 100.0, exponent_sign=sign)
    (_, near, _), (_, far, _) = decay_profile(sched, [1, 32], draws=200, seed=SEED)
    ratio = far / near
    report(far < near, f"{sign} exponent: mean|S|(32)={far:.4f}, mean|S|(1)={near:.4f}, ratio {ratio:.4f} < 1")


def test_9_mean_attention_distance(report):
    pos = np.array([(0, 0), (0, 1), (1, 0), (1, 1)])
    # brute force over all 16 pairs
    brute = sum(math.dist(a, b) for a in pos for b in pos) / 16
    _, mean = mean_attention_distance(np.full((2, 4, 4), 0.25), pos)
    cfg = AttentionConfig(heads=2, head_dim=12, grid=(1, 1))
    single = attention_scores(*synthetic_qk(cfg), cfg).mean_distance
    ok = abs(mean - 0.85355) <= 1e-5 and abs(mean - brute) < 1e-15 and single == 0.0
    report(ok, f"uniform 2x2 {mean:.10f} (0.85355 +- 1e-5, brute force {brute:.10f}); single token {single}")


def test_10_displacement_cache(report):
    sched = PhaseSchedule(48)
    sizes = {g: len(displacement_table(g, sched)) for g in [(1, 1), (2, 2), (3, 5), (14, 14)]}
    counts = all(n == (2 * h - 1) * (2 * w - 1) for (h, w), n in sizes.items()) and sizes[(14, 14)] == 729
    cfg = AttentionConfig(heads=2, head_dim=48, grid=(5, 5), pe_mode="lingeope2d")
    q, k = synthetic_qk(cfg)
    logits = attention_scores(q, k, cfg).logits * math.sqrt(48)
    pos = cfg.positions()[:, 1:]
    freqs = sched.frequencies("two_d")
    naive = np.empty_like(logits)
    for m, n in itertools.product(range(25), repeat=2):
        uq = lie_vector(pos[m, 0] * freqs, pos[m, 1] * freqs)
        uk = lie_vector(pos[n, 0] * freqs, pos[n, 1] * freqs)
        mats = to_rotation_matrix(exp_map(uk - uq))
        for h in range(2):
            qb, kb = q[m, h].reshape(16, 3), k[n, h].reshape(16, 3)
            naive[h, m, n] = np.einsum("ni,nij,nj->", qb, mats, kb)
    err = np.abs(logits - naive).max()
    report(counts and err <= 1e-12, f"entry counts {sizes[(14, 14)]} for 14x14 and (2H-1)(2W-1) elsewhere={counts}; cache vs naive {err:.2e} <= 1e-12")


def test_11_determinism(report):
    cmd = [sys.executable, "-m", "geope.cli", "verify", "--seed", "7"]
    start = time.perf_counter()
    first = subprocess.run(cmd, capture_output=True, check=False)
    elapsed = time.perf_counter() - start
    second = subprocess.run(cmd, capture_output=True, check=False)
    same = first.stdout == second.stdout and len(first.stdout) > 0
    report(same and elapsed < 60, f"byte-identical={same} ({len(first.stdout)} bytes), exit {first.returncode}, {elapsed:.2f}s < 60s")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
