import numpy as np
import pytest
from scipy import stats

from d3pg_wifi.agent import (AGENTS, AgentConfig, Batch, D3pgAgent, DdpgAgent, ExplorationNoise, ReplayBuffer,
                             Transition)
from d3pg_wifi.diffusion import vp_schedule
from d3pg_wifi.errors import CompatibilityError, ConfigError, ShapeError

from conftest import central_diff

TINY = AgentConfig(hidden=(6,), denoise_steps=2)


def tr(i, sd=2, ad=3):
    return Transition(np.full(sd, i, float), np.full(ad, i / 1000), float(i), np.full(sd, i + 0.5))


def test_buffer_push_and_evict():
    buf = ReplayBuffer(256, 2, 3)
    buf.push(tr(0))
    assert len(buf) == 1
    for i in range(1, 257):
        buf.push(tr(i))
    assert len(buf) == 256
    assert buf.get(0).r == 1.0 and buf.get(255).r == 256.0
    assert all(buf.get(k).r != 0.0 for k in range(256))


def test_buffer_readback_is_exact(rng):
    buf = ReplayBuffer(4, 3, 2)
    t = Transition(rng.standard_normal(3), rng.random(2), float(rng.standard_normal()), rng.standard_normal(3))
    buf.push(t)
    got = buf.get(0)
    assert np.array_equal(got.s, t.s) and np.array_equal(got.a, t.a)
    assert got.r == t.r and np.array_equal(got.s_next, t.s_next)


def test_buffer_rejects_bad_input():
    buf = ReplayBuffer(4, 2, 3)
    with pytest.raises(ShapeError):
        buf.push(Transition(np.zeros(3), np.zeros(3), 0.0, np.zeros(2)))
    with pytest.raises(ConfigError):
        ReplayBuffer(0, 1, 1)


def test_sample_cases(rng):
    buf = ReplayBuffer(256, 2, 3)
    assert buf.sample(1, rng) is None
    buf.push(tr(7))
    b = buf.sample(1, rng)
    assert b.r[0] == 7.0 and np.array_equal(b.s[0], tr(7).s)
    for i in range(300):
        buf.push(tr(i))
    b = buf.sample(12, rng)
    assert len(b) == 12
    assert set(b.r) <= {float(i) for i in range(44, 300)}


def test_sample_is_uniform():
    buf = ReplayBuffer(16, 1, 1)
    for i in range(16):
        buf.push(Transition(np.zeros(1), np.zeros(1), float(i), np.zeros(1)))
    idx = buf.sample_indices(100_000, np.random.default_rng(0))
    counts = np.bincount(idx, minlength=16)
    assert stats.chisquare(counts).pvalue > 0.01


def test_noise_decay():
    n = ExplorationNoise(0.2, 0.999, 0.01)
    assert n.sigma == 0.2
    for _ in range(1000):
        n.advance()
    assert n.sigma == pytest.approx(0.2 * 0.999 ** 1000)
    n.steps = 10_000
    assert n.sigma == 0.01


@pytest.mark.parametrize("algo", ["d3pg", "ddpg"])
def test_act_determinism_and_range(algo):
    ag = AGENTS[algo](3, 4, TINY, seed=1)
    s = np.array([0.3, 0.1, 0.0])
    a1 = ag.act(s, rng=np.random.default_rng(5))
    a2 = ag.act(s, rng=np.random.default_rng(5))
    assert np.array_equal(a1, a2) and a1.shape == (4,)
    for k in range(20):
        a = ag.act(s, explore=True, rng=np.random.default_rng(k))
        assert np.all((a >= 0) & (a <= 1))
    with pytest.raises(ShapeError):
        ag.act(np.zeros(2))


def test_zero_actor_single_step_closed_form():
    ag = D3pgAgent(2, 3, AgentConfig(hidden=(5,), denoise_steps=1), seed=0)
    for arr in ag.actor.net.arrays():
        arr[...] = 0.0
    x_T = np.random.default_rng(9).standard_normal((1, 3))[0]
    a = ag.act(np.zeros(2), rng=np.random.default_rng(9))
    expected = np.clip(x_T / np.sqrt(vp_schedule(1).alpha_bar(1)), 0, 1)
    np.testing.assert_allclose(a, expected, rtol=1e-12, atol=1e-15)


def _batch(rng, n=5, sd=2, ad=2):
    return Batch(rng.random((n, sd)), rng.random((n, ad)), rng.random(n), rng.random((n, sd)))


@pytest.mark.parametrize("algo", ["d3pg", "ddpg"])
def test_target_without_discount_is_reward(algo, rng):
    b = _batch(rng)
    ag = AGENTS[algo](2, 2, AgentConfig(hidden=(6,), denoise_steps=2, gamma=0.0), seed=0)
    np.testing.assert_array_equal(ag.critic_target_values(b), b.r)
    ag = AGENTS[algo](2, 2, TINY, seed=0)
    for arr in ag.critic_target.arrays():
        arr[...] = 0.0
    np.testing.assert_array_equal(ag.critic_target_values(b), b.r)


def test_critic_converges_to_geometric_fixed_point():
    cfg = AgentConfig(hidden=(16,), actor_lr=0.0, critic_lr=1e-2)
    ag = DdpgAgent(1, 1, cfg, seed=0)
    s = np.ones(1)
    a = ag.act(s)
    for _ in range(cfg.buffer_size):
        ag.buffer.push(Transition(s, a, 0.5, s))
    rng = np.random.default_rng(0)
    for _ in range(3000):
        ag.train_step(ag.buffer.sample(cfg.batch_size, rng))
    q = ag.q_values(ag.critic, s[None, :], a[None, :])[0]
    assert q == pytest.approx(0.5 / 0.9, rel=0.01)


@pytest.mark.parametrize("algo", ["d3pg", "ddpg"])
def test_zero_learning_rates_freeze_weights(algo, rng):
    ag = AGENTS[algo](2, 2, AgentConfig(hidden=(6,), denoise_steps=2, actor_lr=0.0, critic_lr=0.0), seed=0)
    before = [p.copy() for p in ag._actor_params(ag.actor).arrays() + ag.critic.arrays()]
    c_loss, obj = ag.train_step(_batch(rng))
    after = ag._actor_params(ag.actor).arrays() + ag.critic.arrays()
    assert all(np.array_equal(x, y) for x, y in zip(before, after))
    assert np.isfinite(c_loss) and np.isfinite(obj)


@pytest.mark.parametrize("algo", ["d3pg", "ddpg"])
def test_target_networks_lag_by_tau(algo, rng):
    ag = AGENTS[algo](2, 2, TINY, seed=0)
    old_critic_target = ag.critic_target.copy()
    old_actor_target = ag._actor_params(ag.actor_target).copy()
    ag.train_step(_batch(rng))
    tau = TINY.tau
    for t, o, n in zip(ag.critic_target.arrays(), old_critic_target.arrays(), ag.critic.arrays()):
        np.testing.assert_allclose(t, tau * n + (1 - tau) * o, rtol=0, atol=1e-15)
    for t, o, n in zip(ag._actor_params(ag.actor_target).arrays(), old_actor_target.arrays(),
                       ag._actor_params(ag.actor).arrays()):
        np.testing.assert_allclose(t, tau * n + (1 - tau) * o, rtol=0, atol=1e-15)


def test_critic_gradient_matches_finite_differences(rng):
    ag = DdpgAgent(2, 2, AgentConfig(hidden=(5,)), seed=3)
    b = _batch(rng, n=4)
    y = rng.random(4)
    _, grads = ag.critic_loss_and_grads(b, y)
    arrays = ag.critic.arrays()
    fd = central_diff(lambda: ag.critic_loss_and_grads(b, y)[0], arrays)
    for g, f in zip(grads.arrays(), fd):
        np.testing.assert_allclose(g, f, rtol=1e-4, atol=1e-9)


@pytest.mark.parametrize("algo", ["d3pg", "ddpg"])
def test_observe_trains_once_buffer_holds_a_batch(algo):
    ag = AGENTS[algo](2, 2, AgentConfig(hidden=(6,), denoise_steps=2, batch_size=3), seed=0)
    outs = [ag.observe(tr(i, 2, 2)) for i in range(4)]
    assert outs[0] is None and outs[1] is None
    assert outs[2] is not None and ag.train_steps == 2
    assert ag.noise.steps == 4


@pytest.mark.parametrize("algo", ["d3pg", "ddpg"])
def test_checkpoint_roundtrip(algo, tmp_path):
    ag = AGENTS[algo](3, 4, TINY, seed=2)
    for i in range(15):
        ag.observe(Transition(np.full(3, i / 15), np.full(4, 0.5), 0.1 * i, np.full(3, 0.2)))
    ag.save(tmp_path)
    back = AGENTS[algo].load(tmp_path, seed=2)
    s = np.array([0.5, 0.1, 0.2])
    assert np.array_equal(ag.act(s, rng=np.random.default_rng(0)), back.act(s, rng=np.random.default_rng(0)))
    assert back.train_steps == ag.train_steps and back.noise.steps == ag.noise.steps
    other = "ddpg" if algo == "d3pg" else "d3pg"
    with pytest.raises(CompatibilityError):
        AGENTS[other].load(tmp_path)


def test_agent_config_validation():
    with pytest.raises(ConfigError):
        AgentConfig(gamma=1.0)
    with pytest.raises(ConfigError):
        AgentConfig(denoise_steps=0)
