import math

import numpy as np
import pytest

from geope.attention import (
    AttentionConfig,
    attention_scores,
    decay_profile,
    decay_scores,
    encode_qk,
    lattice_displacements,
    mean_attention_distance,
    resolution_phase_grid,
    synthetic_qk,
)
from geope.errors import DimensionMismatch
from geope.operators import PhaseSchedule, build_operator


def run(**kw):
    cfg = AttentionConfig(**kw)
    q, k = synthetic_qk(cfg)
    return cfg, q, k, attention_scores(*encode_qk(q, k, cfg), cfg)


def test_none_mode_is_identity():
    cfg = AttentionConfig(heads=2, head_dim=12, grid=(3, 3), pe_mode="none")
    q, k = synthetic_qk(cfg)
    q2, k2 = encode_qk(q, k, cfg)
    np.testing.assert_array_equal(q2, q)
    np.testing.assert_array_equal(k2, k)


@pytest.mark.parametrize("mode", ["rope1d", "geope1d", "geope2d", "geope3d"])
def test_encoding_preserves_norms(mode):
    cfg = AttentionConfig(heads=3, head_dim=48, grid=(2, 3, 4) if mode == "geope3d" else (5, 5), pe_mode=mode)
    q, k = synthetic_qk(cfg)
    q2, _ = encode_qk(q, k, cfg)
    np.testing.assert_allclose(np.linalg.norm(q2, axis=-1), np.linalg.norm(q, axis=-1), rtol=1e-12)


@pytest.mark.parametrize("mode", ["geope1d", "geope2d", "geope3d", "rope1d"])
def test_single_token_unrotated(mode):
    cfg = AttentionConfig(heads=2, head_dim=12, grid=(1, 1), pe_mode=mode)
    q, k = synthetic_qk(cfg)
    q2, _ = encode_qk(q, k, cfg)
    np.testing.assert_allclose(q2, q, atol=0)


def test_encode_shape_mismatch():
    cfg = AttentionConfig(heads=2, head_dim=12, grid=(2, 2))
    with pytest.raises(DimensionMismatch):
        encode_qk(np.zeros((4, 2, 9)), np.zeros((4, 2, 9)), cfg)


def test_config_validation():
    with pytest.raises(DimensionMismatch):
        AttentionConfig(head_dim=64, pe_mode="geope2d")
    with pytest.raises(ValueError):
        AttentionConfig(pe_mode="bogus")
    AttentionConfig(head_dim=64, pe_mode="rope1d")


def test_single_token_weight_is_one():
    *_, trace = run(heads=2, head_dim=12, grid=(1, 1))
    np.testing.assert_array_equal(trace.weights, np.ones((2, 1, 1)))
    assert trace.mean_distance == 0.0


def test_symmetric_scores_for_identical_inputs():
    cfg = AttentionConfig(heads=2, head_dim=12, grid=(3, 3), pe_mode="none")
    q, _ = synthetic_qk(cfg)
    trace = attention_scores(q, q, cfg)
    np.testing.assert_array_equal(trace.logits, np.swapaxes(trace.logits, 1, 2))


def test_rows_sum_to_one():
    *_, trace = run(heads=4, head_dim=24, grid=(4, 4))
    np.testing.assert_allclose(trace.weights.sum(-1), 1.0, atol=1e-12)


def test_geope2d_matches_explicit_pair_products():
    cfg, q, k, trace = run(heads=2, head_dim=12, grid=(3, 3))
    pos = cfg.positions()[:, 1:]
    mats = [build_operator(tuple(p), cfg.schedule).matrices for p in pos]
    T, scale = len(pos), 1 / math.sqrt(12)
    for h in range(2):
        ref = np.empty((T, T))
        for m in range(T):
            for n in range(T):
                qb, kb = q[m, h].reshape(4, 3), k[n, h].reshape(4, 3)
                ref[m, n] = sum(qb[i] @ (mats[m][i].T @ mats[n][i] @ kb[i]) for i in range(4))
        np.testing.assert_allclose(trace.logits[h], ref * scale, atol=1e-10)


def test_lingeope_translation_bit_identical():
    a = run(heads=2, head_dim=12, grid=(4, 4), pe_mode="lingeope2d")[-1]
    b = run(heads=2, head_dim=12, grid=(4, 4), pe_mode="lingeope2d", offset=(9, -3))[-1]
    np.testing.assert_array_equal(a.logits, b.logits)


def test_f32_close_to_f64():
    a = run(heads=2, head_dim=48, grid=(5, 5))[-1]
    b = run(heads=2, head_dim=48, grid=(5, 5), precision="f32-apply")[-1]
    assert b.weights.dtype == np.float32
    assert np.abs(a.weights - b.weights).max() <= 1e-3


def test_thread_count_independent(monkeypatch):
    monkeypatch.setenv("GEOPE_THREADS", "1")
    a = run(heads=4, head_dim=12, grid=(3, 3), pe_mode="lingeope2d")[-1]
    monkeypatch.setenv("GEOPE_THREADS", "4")
    b = run(heads=4, head_dim=12, grid=(3, 3), pe_mode="lingeope2d")[-1]
    np.testing.assert_array_equal(a.weights, b.weights)


def test_trace_is_immutable():
    *_, trace = run(heads=1, head_dim=12, grid=(2, 2))
    with pytest.raises(ValueError):
        trace.weights[0, 0, 0] = 0.0


def test_mean_distance_examples():
    pos = np.array([(0, 0), (0, 1), (1, 0), (1, 1)])
    per_head, mean = mean_attention_distance(np.full((4, 4), 0.25), pos)
    assert mean == pytest.approx((2 + math.sqrt(2)) / 4, abs=1e-15)
    assert mean_attention_distance(np.eye(4), pos)[1] == 0.0
    assert mean_attention_distance(np.ones((1, 1)), np.zeros((1, 2)))[1] == 0.0


def test_resolution_phase_grid():
    sched = PhaseSchedule(12)
    pos, ph = resolution_phase_grid(1, 1, sched)
    np.testing.assert_array_equal(ph, np.zeros((1, 4, 2)))
    pos, ph = resolution_phase_grid(2, 3, sched)
    assert len(pos) == 6
    f = sched.frequencies("two_d")
    np.testing.assert_allclose(np.unique(ph[:, 1, 1]), [0, f[1], 2 * f[1]])
    small = resolution_phase_grid(14, 14, sched)[1][..., 0].max(axis=0)
    big = resolution_phase_grid(28, 28, sched)[1][..., 0].max(axis=0)
    np.testing.assert_allclose(big, small * 27 / 13)


def test_lattice_displacements():
    assert sorted(map(tuple, lattice_displacements(0))) == [(0, 0)]
    assert len(lattice_displacements(1)) == 4
    assert len(lattice_displacements(5)) == 12  # (±5,0),(0,±5),(±3,±4),(±4,±3)
    d = lattice_displacements(25)
    np.testing.assert_array_equal(d[:, 0] ** 2 + d[:, 1] ** 2, 625)


def test_decay_scores_shape_and_seed():
    sched = PhaseSchedule(48)
    a = decay_scores(sched, 5, 10, seed=3)
    assert a.shape == (10, 12)
    np.testing.assert_array_equal(a, decay_scores(sched, 5, 10, seed=3))
    np.testing.assert_allclose(decay_scores(sched, 0, 4, seed=0), 16.0)


def test_decay_negative_sign_trend():
    rows = decay_profile(PhaseSchedule(48), [1, 32], 200, seed=0)
    assert rows[1][1] < rows[0][1]
