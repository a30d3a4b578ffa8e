import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from d3pg_wifi.env import RewardParams, WifiEnv, build_state, env_step, map_action, reward
from d3pg_wifi.errors import RangeError, ShapeError
from d3pg_wifi.macsim import PeriodMetrics, SimConfig, Simulator


def metrics(idle_us=0.0, duration_us=50_000.0, tx=(), ack=()):
    tx = np.asarray(tx, dtype=np.int64)
    ack = np.asarray(ack, dtype=np.int64)
    n = tx.shape[0]
    return PeriodMetrics(duration_us=duration_us, idle_us=idle_us, busy_us=duration_us - idle_us,
                         throughput_mbps=0.0, delivered_mpdus=0, tx_count=tx, ack_count=ack,
                         collision_count=0, success_count=int(ack.sum()) if n else 0, error_loss_count=0,
                         access_delay_sum_us=0.0, idle_slots=0, events=0)


def test_state_idle_fraction():
    s = build_state(metrics(idle_us=25_000.0, tx=[3], ack=[3]))
    assert s[0] == 0.5 and s.shape == (2,)


def test_state_loss_rates():
    s = build_state(metrics(tx=[100, 7, 0], ack=[90, 7, 0]))
    assert s[1] == pytest.approx(0.1, abs=1e-12)
    assert s[2] == 0.0 and s[3] == 0.0


def test_state_rejects_empty_period():
    with pytest.raises(RangeError):
        build_state(metrics(duration_us=0.0))


@pytest.mark.parametrize("u,v,cw,L", [(0.0, 0.0, 15, 1), (1.0, 1.0, 1023, 256), (0.5, 0.5, 127, 129)])
def test_action_mapping_points(u, v, cw, L):
    c = map_action([u, v], 1)
    assert c.cw[0] == cw and c.agg_len[0] == L


def test_action_mapping_clamps_and_checks_shape():
    c = map_action([-0.3, 1.7], 1)
    assert c.cw[0] == 15 and c.agg_len[0] == 256
    with pytest.raises(ShapeError):
        map_action([0.1, 0.2, 0.3], 2)


@given(st.floats(0, 1), st.floats(0, 1))
def test_action_mapping_monotone(x, y):
    lo, hi = min(x, y), max(x, y)
    a, b = map_action([lo, lo], 1), map_action([hi, hi], 1)
    assert a.cw[0] <= b.cw[0] and a.agg_len[0] <= b.agg_len[0]
    assert a.cw[0] in (15, 31, 63, 127, 255, 511, 1023) and 1 <= a.agg_len[0] <= 256


def test_reward_values():
    assert reward(0.0) == 0.0
    sig = 1.0 / (1.0 + math.exp(-1.0))
    assert reward(450.0) == pytest.approx(2 * (sig - 0.5), abs=1e-12)
    assert reward(450.0) == pytest.approx(0.462117, abs=1e-6)
    assert reward(1e6) == pytest.approx(1.0, abs=1e-12)
    assert reward(100.0, RewardParams(100.0)) == pytest.approx(reward(450.0), abs=1e-15)


def test_reward_errors():
    with pytest.raises(RangeError):
        reward(-1.0)
    with pytest.raises(RangeError):
        RewardParams(0.0)


def test_single_station_zero_action_is_deterministic():
    def run():
        sim = Simulator(SimConfig(n_stas=1), seed=3)
        return env_step(sim, np.zeros(2))

    (m1, s1, r1), (m2, s2, r2) = run(), run()
    assert m1.csv_row() == m2.csv_row() and np.array_equal(s1, s2) and r1 == r2


def test_consecutive_steps_reproducible():
    def run():
        env = WifiEnv(SimConfig(n_stas=6), seed=11)
        env.reset()
        a = np.linspace(0, 1, 12)
        return [env.step(a) for _ in range(2)]

    for (m1, s1, r1), (m2, s2, r2) in zip(run(), run()):
        assert np.array_equal(s1, s2) and r1 == r2 and m1.csv_row() == m2.csv_row()


def test_env_dimensions():
    env = WifiEnv(SimConfig(n_stas=5), seed=0)
    assert env.state_dim == 6 and env.action_dim == 10
    assert env.reset().shape == (6,)


def test_fewer_errors_give_more_reward():
    a = np.concatenate([np.full(8, 0.5), np.full(8, 0.3)])

    def mean_reward(p):
        out = []
        for seed in range(5):
            env = WifiEnv(SimConfig(n_stas=8, per_mpdu_error_prob=p), seed=seed)
            env.reset()
            out.append(np.mean([env.step(a)[2] for _ in range(10)]))
        return np.mean(out)

    assert mean_reward(0.0) > mean_reward(0.3)
