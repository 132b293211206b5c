import hashlib

import numpy as np
import pytest

from aiscyclegen import tensor as T
from aiscyclegen import training as tr
from aiscyclegen.errors import ConfigError, CorruptCheckpointError, ParameterError
from aiscyclegen.model import DiscriminatorConfig, GeneratorConfig
from aiscyclegen.tensor import Tensor
from aiscyclegen.training import (
    AdamState, LossComponents, LossWeights, TrainConfig, adam_step, cycle_loss, fit, gradient_penalty,
    identity_loss, load_checkpoint, save_checkpoint, total_generator_loss, wgan_losses,
)


@pytest.fixture(autouse=True)
def float64():
    with T.default_dtype(np.float64):
        yield


def linear_critic(w, b=0.0):
    W = Tensor(np.asarray(w, dtype=np.float64).reshape(-1, 1))
    bias = Tensor(np.array([b]))

    def D(z):
        z = z if isinstance(z, Tensor) else Tensor(z)
        return T.dense(T.reshape(z, (z.shape[0], -1)), W, bias)
    return D


def unit_vector(dim, seed=0):
    v = np.random.default_rng(seed).normal(size=dim)
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------- penalty


@pytest.mark.parametrize("norm,expected", [(0.0, 1.0), (1.0, 0.0), (3.0, 4.0)])
def test_penalty_linear_critic(norm, expected):
    rng = np.random.default_rng(0)
    real, fake = rng.uniform(size=(16, 2, 8)), rng.uniform(size=(16, 2, 8))
    D = linear_critic(norm * unit_vector(16))
    gp = gradient_penalty(D, real, fake, 1e-3, np.random.default_rng(1)).item()
    assert abs(gp - expected) < 0.05


@pytest.mark.parametrize("norm,expected", [(1.0, 0.0), (3.0, 4.0)])
def test_penalty_random_directions_many_probes(norm, expected):
    rng = np.random.default_rng(0)
    real, fake = rng.uniform(size=(16, 2, 8)), rng.uniform(size=(16, 2, 8))
    D = linear_critic(norm * unit_vector(16))
    gp = gradient_penalty(D, real, fake, 1e-3, np.random.default_rng(1), directions="random", probes=512).item()
    assert abs(gp - expected) < 0.05 * max(1.0, expected)


def test_penalty_bad_eps():
    with pytest.raises(ParameterError):
        gradient_penalty(linear_critic(np.ones(4)), np.zeros((1, 1, 4)), np.zeros((1, 1, 4)), 0.0)


def test_penalty_is_differentiable_in_critic_params():
    W = Tensor(3.0 * unit_vector(8).reshape(-1, 1), requires_grad=True)
    D = lambda z: T.dense(T.reshape(z, (z.shape[0], -1)), W)
    rng = np.random.default_rng(0)
    gp = gradient_penalty(D, rng.uniform(size=(4, 1, 8)), rng.uniform(size=(4, 1, 8)), 1e-3, rng)
    (g,) = T.grad(gp, [W])
    # d/dW (|W| - 1)^2 = 2 (|W| - 1) W / |W|
    assert np.allclose(g, 2 * 2.0 * W.data / 3.0, atol=1e-6)


def test_wgan_losses_zero_critic():
    zero = linear_critic(np.zeros(8))
    real, fake = np.ones((4, 1, 8)), np.zeros((4, 1, 8))
    c, g = wgan_losses(zero, real, fake, lambda_gp=10.0, rng=np.random.default_rng(0))
    assert c.item() == pytest.approx(10.0) and g.item() == 0.0


def test_wgan_losses_linear_fixture():
    rng = np.random.default_rng(2)
    w = 3.0 * unit_vector(8, 5)
    real, fake = rng.uniform(size=(6, 1, 8)), rng.uniform(size=(6, 1, 8))
    c, g = wgan_losses(linear_critic(w, 0.5), real, fake, lambda_gp=2.0, rng=rng)
    s_real = real.reshape(6, -1) @ w + 0.5
    s_fake = fake.reshape(6, -1) @ w + 0.5
    assert c.item() == pytest.approx(s_fake.mean() - s_real.mean() + 2.0 * 4.0, abs=1e-6)
    assert g.item() == pytest.approx(-s_fake.mean(), abs=1e-12)


# ---------------------------------------------------------------- cycle / identity / total


def l1_loop(a, b):
    a, b = a.ravel(), b.ravel()
    return sum(abs(a[i] - b[i]) for i in range(len(a))) / len(a)


def test_cycle_and_identity_zero_for_identity_maps():
    ident = lambda z: z
    x, y = np.random.default_rng(0).uniform(size=(2, 3, 2, 5))
    assert cycle_loss(ident, ident, x, y).item() == 0.0
    assert identity_loss(ident, ident, x, y).item() == 0.0


def test_cycle_constant_offset():
    G = lambda z: z + 0.25
    F = lambda z: z
    x, y = np.zeros((2, 1, 4)), np.zeros((2, 1, 4))
    assert cycle_loss(G, F, x, y).item() == pytest.approx(0.5)


def test_identity_zero_map_on_ones():
    G = lambda z: z * 0.0
    F = lambda z: z
    assert identity_loss(G, F, np.zeros((1, 1, 3)), np.ones((1, 1, 3))).item() == pytest.approx(1.0)


def test_cycle_and_identity_match_loop_oracle():
    rng = np.random.default_rng(3)
    A, Bm = rng.normal(size=(4, 4)), rng.normal(size=(4, 4))
    G = lambda z: T.tanh(T.reshape(T.matmul(T.reshape(z, (6, 4)), Tensor(A)), (3, 2, 4)))
    F = lambda z: T.tanh(T.reshape(T.matmul(T.reshape(z, (6, 4)), Tensor(Bm)), (3, 2, 4)))
    x, y = rng.normal(size=(3, 2, 4)), rng.normal(size=(3, 2, 4))
    g = lambda z: np.tanh(z @ A)
    f = lambda z: np.tanh(z @ Bm)
    assert abs(cycle_loss(G, F, x, y).item() - (l1_loop(f(g(x)), x) + l1_loop(g(f(y)), y))) < 1e-6
    assert abs(identity_loss(G, F, x, y).item() - (l1_loop(g(y), y) + l1_loop(f(x), x))) < 1e-6


def test_total_loss_weighted_sum():
    assert total_generator_loss(LossComponents(2.0, 3.0, 4.0), LossWeights(0.101, 0.102)) == pytest.approx(2.711)
    assert total_generator_loss(LossComponents(0.0, 3.0, 4.0), LossWeights(0.0, 0.0)) == 0.0


def test_total_loss_linear_in_weights():
    c = LossComponents(1.5, 0.7, 0.3)
    one = total_generator_loss(c, LossWeights(0.2, 0.4))
    two = total_generator_loss(c, LossWeights(0.4, 0.8))
    assert two - one == pytest.approx(0.2 * 0.7 + 0.4 * 0.3)


def test_negative_weight_rejected():
    with pytest.raises(ConfigError):
        total_generator_loss(LossComponents(1, 1, 1), LossWeights(-0.1, 0.1))


# ---------------------------------------------------------------- Adam


def test_adam_zero_gradient_keeps_params():
    p = {"w": np.array([1.0, -2.0])}
    adam_step(p, {"w": np.zeros(2)}, AdamState.zeros_like(p), 0.1)
    assert np.array_equal(p["w"], [1.0, -2.0])


def test_adam_first_step_hand_formula():
    g = np.array([0.5, -2.0, 1e-3])
    p = {"w": np.zeros(3)}
    adam_step(p, {"w": g}, AdamState.zeros_like(p), 0.01)
    assert np.allclose(p["w"], -0.01 * g / (np.abs(g) + 1e-8), atol=1e-12)


def test_adam_constant_gradient_descends():
    p = {"w": np.zeros(2)}
    st = AdamState.zeros_like(p)
    for _ in range(20):
        adam_step(p, {"w": np.array([1.0, -1.0])}, st, 0.01)
    assert p["w"][0] < 0 < p["w"][1] and st.t == 20


# ---------------------------------------------------------------- loop


def tiny_data(seed=0, n=8, L=8):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.2, 0.4, size=(n, L, 2)), rng.uniform(0.6, 0.8, size=(n, L, 2))


CONFIGS = dict(gen_config=GeneratorConfig(2, 8, 4, 2, 1), disc_config=DiscriminatorConfig(2, 8, 4, 2))


def small_config(**kw):
    base = dict(learning_rate=1e-3, batch_size=4, steps=4, critic_iters=2, seed=0)
    base.update(kw)
    return TrainConfig(**base)


def state_arrays(state):
    return {f"{n}/{k}": a.copy() for n, p in state.model.networks().items() for k, a in p.state_arrays().items()}


def test_one_epoch_smoke():
    state = fit(tiny_data(), small_config(steps=None, epochs=1), **CONFIGS)
    assert len(state.history) == state.step == 2
    assert set(state.history[0]) == set(tr.HISTORY_COLUMNS)


def test_training_deterministic():
    a = fit(tiny_data(), small_config(), **CONFIGS)
    b = fit(tiny_data(), small_config(), **CONFIGS)
    assert a.history == b.history
    sa, sb = state_arrays(a), state_arrays(b)
    assert all(np.array_equal(sa[k], sb[k]) for k in sa)


def test_resume_equals_uninterrupted(tmp_path):
    cfg = small_config(steps=6)
    full = fit(tiny_data(), cfg, **CONFIGS)
    part = fit(tiny_data(), cfg, until_step=3, **CONFIGS)
    save_checkpoint(part, tmp_path / "mid.ckpt", cfg)
    resumed = fit(tiny_data(), cfg, state=load_checkpoint(tmp_path / "mid.ckpt"))
    assert resumed.history == full.history
    sf, sr = state_arrays(full), state_arrays(resumed)
    assert all(np.array_equal(sf[k], sr[k]) for k in sf)


def test_checkpoint_round_trip_and_truncation(tmp_path):
    state = fit(tiny_data(), small_config(steps=2), **CONFIGS)
    save_checkpoint(state, tmp_path / "s.ckpt")
    back = load_checkpoint(tmp_path / "s.ckpt")
    sa, sb = state_arrays(state), state_arrays(back)
    assert all(np.array_equal(sa[k], sb[k]) for k in sa)
    assert back.step == state.step and back.history == state.history
    raw = (tmp_path / "s.ckpt").read_bytes()
    (tmp_path / "t.ckpt").write_bytes(raw[:-100])
    with pytest.raises(CorruptCheckpointError):
        load_checkpoint(tmp_path / "t.ckpt")


def _digest(params):
    h = hashlib.sha256()
    for k, t in params.tensors.items():
        h.update(k.encode())
        h.update(t.data.tobytes())
    return h.hexdigest()


def test_parameter_isolation(monkeypatch):
    state = tr.init_state(tr.as_network_arrays(tiny_data()[0]), tr.as_network_arrays(tiny_data()[1]),
                          small_config(), **CONFIGS)
    nets = state.model.networks()
    by_moments = {id(state.optim[n]): n for n in nets}
    real_step = tr.adam_step
    updated = []

    def spy(params, grads, moments, *a, **kw):
        target = by_moments[id(moments)]
        before = {n: _digest(p) for n, p in nets.items()}
        out = real_step(params, grads, moments, *a, **kw)
        after = {n: _digest(p) for n, p in nets.items()}
        changed = {n for n in nets if before[n] != after[n]}
        assert changed <= {target}
        updated.append(target)
        return out

    monkeypatch.setattr(tr, "adam_step", spy)
    src, tgt = (tr.as_network_arrays(a) for a in tiny_data())
    tr.train_step(state, src, tgt, small_config())
    assert updated == ["d_s", "d_t"] * 2 + ["g_st", "g_ts"]


def test_bad_train_config():
    with pytest.raises(ConfigError):
        small_config(learning_rate=0.0).validate()
    with pytest.raises(ConfigError):
        small_config(critic_iters=0).validate()
