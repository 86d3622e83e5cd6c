import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from promptmatch import kernels
from promptmatch.policy import (
    AdamWState,
    CheckpointError,
    DimensionError,
    NonFiniteGradient,
    PolicyParams,
    RunningNormalizer,
    Transition,
    init_policy,
    load_checkpoint,
    lr_schedule,
    policy_forward,
    policy_gradient_update,
    policy_loss,
    sample_action,
    save_checkpoint,
)

BACKENDS = sorted(kernels.backends())


def test_parameter_counts():
    assert init_policy(1024, 600, 15, 0).num_parameters == 623_400
    assert init_policy(8, 5, 3, 0).num_parameters == 55


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.integers(1, 20))
def test_parameter_count_formula(sd, hd, ad):
    assert init_policy(sd, hd, ad, 0).num_parameters == sd * hd + hd * ad


def test_init_deterministic_and_scaled():
    a, b = init_policy(30, 20, 4, 7), init_policy(30, 20, 4, 7)
    assert np.array_equal(a.w1, b.w1) and np.array_equal(a.w2, b.w2)
    assert np.abs(a.w1).max() <= 1 / math.sqrt(30)
    assert np.abs(a.w2).max() <= 1 / math.sqrt(20)
    assert not np.array_equal(a.w1, init_policy(30, 20, 4, 8).w1)


def test_init_rejects_zero_dims():
    with pytest.raises(DimensionError):
        init_policy(0, 5, 3, 0)


def test_zero_weights_uniform():
    p = PolicyParams(np.zeros((5, 8)), np.zeros((3, 5)))
    probs, _ = policy_forward(p, np.ones(8))
    assert np.allclose(probs, 1 / 3, atol=0, rtol=1e-15)


@pytest.mark.parametrize("backend", BACKENDS)
def test_forward_matches_straight_line_oracle(backend):
    p = init_policy(8, 5, 3, 11)
    s = np.random.default_rng(2).normal(size=8)
    _, probs = kernels.backends()[backend].forward(p.w1, p.w2, s)
    assert np.max(np.abs(probs - oracles.forward(p.w1.tolist(), p.w2.tolist(), s.tolist()))) < 1e-12


def test_forward_dimension_mismatch():
    with pytest.raises(DimensionError):
        policy_forward(init_policy(8, 5, 3, 0), np.ones(7))


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, 8, elements=st.floats(-1e3, 1e3)), st.integers(0, 2**31 - 1))
def test_forward_valid_distribution(state, seed):
    p = init_policy(8, 5, 3, seed)
    probs, _ = policy_forward(p, state)
    assert abs(probs.sum() - 1.0) <= 1e-12
    assert np.all(probs >= 0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_backends_agree(backend):
    p = init_policy(16, 7, 5, 3)
    rng = np.random.default_rng(0)
    S, A, R = rng.normal(size=(12, 16)), rng.integers(5, size=12), rng.normal(size=12)
    ref = kernels.backends()["python"].loss_and_grad(p.w1, p.w2, S, A, R, 0.05)
    got = kernels.backends()[backend].loss_and_grad(p.w1, p.w2, S, A, R, 0.05)
    assert got[0] == pytest.approx(ref[0], abs=1e-12)
    assert np.allclose(got[2], ref[2], atol=1e-13) and np.allclose(got[3], ref[3], atol=1e-13)
    _, pb = kernels.backends()[backend].forward_batch(p.w1, p.w2, S)
    for i in range(len(S)):
        assert np.allclose(pb[i], kernels.backends()["python"].forward(p.w1, p.w2, S[i])[1], atol=1e-15)


@pytest.mark.parametrize("backend", BACKENDS)
def test_gradient_vs_finite_differences(backend):
    k = kernels.backends()[backend]
    worst = 0.0
    for seed in range(20):
        p = init_policy(8, 5, 3, seed)
        rng = np.random.default_rng(seed)
        S, A, R = rng.normal(size=(16, 8)), rng.integers(3, size=16), rng.normal(size=16)
        _, _, g1, g2 = k.loss_and_grad(p.w1, p.w2, S, A, R, 0.06)
        n1, n2 = oracles.fd_grad(p.w1.tolist(), p.w2.tolist(), S.tolist(), A.tolist(), R.tolist(), 0.06, h=1e-5)
        worst = max(worst, oracles.max_rel_error(g1, n1), oracles.max_rel_error(g2, n2))
    assert worst < 1e-4


@pytest.mark.parametrize("backend", BACKENDS)
def test_loss_matches_oracle(backend):
    p = init_policy(8, 5, 3, 4)
    rng = np.random.default_rng(4)
    S, A, R = rng.normal(size=(6, 8)), rng.integers(3, size=6), rng.normal(size=6)
    loss, ent, _, _ = kernels.backends()[backend].loss_and_grad(p.w1, p.w2, S, A, R, 0.1)
    assert loss == pytest.approx(oracles.loss(p.w1.tolist(), p.w2.tolist(), S.tolist(), A.tolist(), R.tolist(), 0.1),
                                 abs=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_adamw_step_matches_formula(backend):
    rng = np.random.default_rng(1)
    param = rng.normal(size=(4, 3))
    grad = rng.normal(size=(4, 3))
    m, v = np.zeros_like(param), np.zeros_like(param)
    expect = param.copy()
    em, ev = np.zeros_like(param), np.zeros_like(param)
    for step in (1, 2, 3):
        kernels.backends()[backend].adamw_step(param, grad, m, v, step, 1e-2, 0.9, 0.999, 1e-5, 0.01)
        expect = expect * (1 - 1e-2 * 0.01)
        em = 0.9 * em + 0.1 * grad
        ev = 0.999 * ev + 0.001 * grad ** 2
        expect = expect - 1e-2 * (em / (1 - 0.9 ** step)) / (np.sqrt(ev / (1 - 0.999 ** step)) + 1e-5)
    assert np.allclose(param, expect, atol=1e-15, rtol=1e-13)


def test_sample_one_hot():
    rng = np.random.default_rng(0)
    assert all(sample_action(np.array([0.0, 1.0, 0.0]), rng) == 1 for _ in range(200))


def test_sample_frequencies():
    rng = np.random.default_rng(1234)
    draws = [sample_action(np.full(3, 1 / 3), rng) for _ in range(30_000)]
    freq = np.bincount(draws, minlength=3) / 30_000
    assert np.all(np.abs(freq - 1 / 3) <= 0.02)


def test_sample_same_state_same_index():
    d = np.array([0.2, 0.5, 0.3])
    a = np.random.default_rng(5)
    b = np.random.default_rng(5)
    assert [sample_action(d, a) for _ in range(50)] == [sample_action(d, b) for _ in range(50)]


def test_normalizer_first_observation_centered():
    n = RunningNormalizer((3,))
    n.update(np.array([1.0, 2.0, 3.0]))
    assert np.array_equal(n.normalize(np.array([1.0, 2.0, 3.0])), np.zeros(3))
    r = RunningNormalizer(())
    r.update(5.0)
    assert float(r.normalize(5.0)) == 0.0


def test_normalizer_two_pass_oracle():
    n = RunningNormalizer(())
    xs = list(range(1, 101))
    for x in xs:
        n.update(float(x))
    mean, var = oracles.two_pass_var(xs)
    assert float(n.mean) == pytest.approx(50.5, abs=1e-12)
    assert float(n.var) == pytest.approx(var, abs=1e-9)


def test_normalizer_constant_stream():
    n = RunningNormalizer(())
    outs = []
    for _ in range(20):
        n.update(3.5)
        outs.append(float(n.normalize(3.5)))
    assert outs == [0.0] * 20


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=50))
def test_normalizer_variance_nonnegative_and_matches(xs):
    n = RunningNormalizer(())
    for x in xs:
        n.update(x)
        assert float(n.m2) >= -1e-9
    mean, var = oracles.two_pass_var(xs)
    assert float(n.mean) == pytest.approx(mean, abs=1e-9 * max(1.0, abs(mean)))
    assert float(n.var) == pytest.approx(var, abs=1e-7 * max(1.0, var))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=30), st.floats(0.5, 100))
def test_reward_normalization_scale_invariant(xs, c):
    a, b = RunningNormalizer(()), RunningNormalizer(())
    za, zb = [], []
    for x in xs:
        a.update(x)
        b.update(c * x)
        za.append(float(a.normalize(x)))
        zb.append(float(b.normalize(c * x)))
    # eps inside the sqrt breaks exact invariance for near-constant streams only
    for k, (u, w) in enumerate(zip(za, zb)):
        if float(np.var(xs[:k + 1])) > 1e-3:
            assert u == pytest.approx(w, rel=1e-4, abs=1e-6)


def _batch(states, actions, rewards):
    return [Transition(s, int(a), float(r), float(r)) for s, a, r in zip(states, actions, rewards)]


def test_zero_reward_zero_entropy_leaves_params():
    p = init_policy(8, 5, 3, 0)
    before = p.copy()
    rng = np.random.default_rng(0)
    batch = _batch(rng.normal(size=(4, 8)), [0, 1, 2, 0], [0.0] * 4)
    opt = AdamWState()
    policy_gradient_update(p, batch, 1e-3, 0.0, opt)
    assert np.array_equal(p.w1, before.w1) and np.array_equal(p.w2, before.w2)
    assert opt.step == 0


def test_entropy_bonus_increases_entropy():
    p = init_policy(8, 5, 3, 1)
    p.w2 *= 8  # start from a peaked policy
    rng = np.random.default_rng(1)
    states = rng.normal(size=(16, 8))
    batch = _batch(states, rng.integers(3, size=16), [0.0] * 16)
    _, ent0, _, _ = policy_loss(p, states, np.zeros(16, dtype=int), np.zeros(16), 0.0)
    policy_gradient_update(p, batch, 1e-2, 0.5, AdamWState())
    _, ent1, _, _ = policy_loss(p, states, np.zeros(16, dtype=int), np.zeros(16), 0.0)
    assert ent1 > ent0


def test_non_finite_gradient_aborts():
    p = init_policy(8, 5, 3, 0)
    batch = [Transition(np.ones(8), 0, 1.0, float("nan"))]
    with pytest.raises(NonFiniteGradient):
        policy_gradient_update(p, batch, 1e-3, 0.0, AdamWState())


def test_empty_batch_rejected():
    with pytest.raises(ValueError):
        policy_gradient_update(init_policy(8, 5, 3, 0), [], 1e-3, 0.0, AdamWState())


def test_lr_schedule():
    assert lr_schedule(1e-3, 0, 200, 1e-4) == 1e-3
    assert lr_schedule(1e-3, 100, 200, 0.0) == pytest.approx(5e-4, abs=1e-18)
    assert lr_schedule(1e-3, 195, 200, 1e-4) == 1e-4


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 500), st.data())
def test_lr_schedule_monotone(epoch_max, data):
    e = data.draw(st.integers(0, epoch_max - 1))
    assert lr_schedule(1e-3, e, epoch_max) >= lr_schedule(1e-3, min(e + 1, epoch_max - 1), epoch_max) >= 1e-4


def _norms(sd):
    sn, rn = RunningNormalizer((sd,)), RunningNormalizer(())
    rng = np.random.default_rng(0)
    for _ in range(5):
        sn.update(rng.normal(size=sd))
        rn.update(float(rng.normal()))
    return sn, rn


def test_checkpoint_round_trip(tmp_path):
    p = init_policy(8, 5, 3, 9)
    sn, rn = _norms(8)
    save_checkpoint(tmp_path / "c.ckpt", p, sn, rn)
    q, sn2, rn2 = load_checkpoint(tmp_path / "c.ckpt", expect_dims=(8, 5, 3))
    assert q.w1.tobytes() == p.w1.tobytes() and q.w2.tobytes() == p.w2.tobytes()
    assert sn2.count == 5 and sn2.mean.tobytes() == sn.mean.tobytes() and sn2.m2.tobytes() == sn.m2.tobytes()
    assert float(rn2.mean) == float(rn.mean) and float(rn2.m2) == float(rn.m2)
    save_checkpoint(tmp_path / "d.ckpt", q, sn2, rn2)
    assert (tmp_path / "c.ckpt").read_bytes() == (tmp_path / "d.ckpt").read_bytes()


def test_checkpoint_layout(tmp_path):
    import struct
    p = init_policy(2, 2, 2, 0)
    sn, rn = _norms(2)
    save_checkpoint(tmp_path / "c.ckpt", p, sn, rn)
    data = (tmp_path / "c.ckpt").read_bytes()
    assert data.startswith(b"PMPOLICY")
    off = len(b"PMPOLICY\x00\x01")
    assert struct.unpack_from("<QQQQQ", data, off) == (2, 2, 2, 5, 5)
    w1 = struct.unpack_from("<4d", data, off + 40)
    assert list(w1) == p.w1.ravel().tolist()


def test_checkpoint_truncated(tmp_path):
    p = init_policy(8, 5, 3, 0)
    save_checkpoint(tmp_path / "c.ckpt", p, *_norms(8))
    data = (tmp_path / "c.ckpt").read_bytes()
    (tmp_path / "t.ckpt").write_bytes(data[:-9])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "t.ckpt")
    (tmp_path / "j.ckpt").write_bytes(b"garbage")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "j.ckpt")


def test_checkpoint_dimension_mismatch(tmp_path):
    save_checkpoint(tmp_path / "c.ckpt", init_policy(8, 5, 3, 0), *_norms(8))
    with pytest.raises(DimensionError):
        load_checkpoint(tmp_path / "c.ckpt", expect_dims=(1024, 600, 15))


def test_fallback_selected_by_env():
    import os
    import subprocess
    import sys
    code = "import promptmatch.kernels as k; print(k.BACKEND)"
    env = {**os.environ, "PROMPTMATCH_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
