"""MDP wrapper around the simulator: observations, action mapping, reward."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RangeError, ShapeError
from .macsim import MacControl, PeriodMetrics, SimConfig, Simulator

DEFAULT_DT_US = 50_000.0
DEFAULT_LAMBDA = 450.0
CW_STAGES = 6  # 15 * 2**k ladder up to 1023
L_MIN, L_MAX = 1, 256


@dataclass(frozen=True)
class RewardParams:
    lam: float = DEFAULT_LAMBDA

    def __post_init__(self):
        if not self.lam > 0:
            raise RangeError("reward normalisation lambda must be positive")


def build_state(m: PeriodMetrics) -> np.ndarray:
    """``[idle fraction, plr_1, ..., plr_N]``; PLR is 0 for a silent station."""
    if not m.duration_us > 0:
        raise RangeError("period duration must be positive")
    itp = m.idle_us / m.duration_us
    tx = m.tx_count.astype(np.float64)
    plr = np.zeros_like(tx)
    sent = tx > 0
    plr[sent] = 1.0 - m.ack_count[sent] / tx[sent]
    return np.concatenate([[itp], plr])


def _round_half_up(x):
    return np.floor(x + 0.5).astype(np.int64)


def map_action(a, n_stas: int) -> MacControl:
    """First ``n_stas`` entries pick a CW on the 15..1023 power-of-two ladder, the rest pick L in 1..256."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (2 * n_stas,):
        raise ShapeError(f"action has shape {a.shape}, expected ({2 * n_stas},)")
    a = np.clip(a, 0.0, 1.0)
    k = _round_half_up(a[:n_stas] * CW_STAGES)
    cw = (1 << (k + 4)) - 1
    agg = L_MIN + _round_half_up(a[n_stas:] * (L_MAX - L_MIN))
    return MacControl(cw, agg)


def reward(throughput_mbps: float, params: RewardParams = RewardParams()) -> float:
    """``2 * (sigmoid(thr / lambda) - 0.5)``, which equals ``tanh(thr / (2 lambda))``."""
    if throughput_mbps < 0:
        raise RangeError("throughput cannot be negative")
    return float(np.tanh(throughput_mbps / (2.0 * params.lam)))


class WifiEnv:
    """Drives one simulator in fixed-length interaction periods."""

    def __init__(self, config: SimConfig, seed: int | None = None, dt_us: float = DEFAULT_DT_US,
                 reward_params: RewardParams = RewardParams()):
        self.config = config
        self.sim = Simulator(config, seed)
        self.dt_us = dt_us
        self.reward_params = reward_params

    @property
    def n_stas(self) -> int:
        return self.config.n_stas

    @property
    def state_dim(self) -> int:
        return 1 + self.config.n_stas

    @property
    def action_dim(self) -> int:
        return 2 * self.config.n_stas

    def reset(self) -> np.ndarray:
        """Observe one period of the current (default BEB) behaviour."""
        return build_state(self.sim.run_for(self.dt_us))

    def step(self, a) -> tuple[PeriodMetrics, np.ndarray, float]:
        return env_step(self.sim, a, self.dt_us, self.reward_params)

    def step_static(self) -> tuple[PeriodMetrics, np.ndarray, float]:
        """Advance one period without issuing a control (BEB baseline)."""
        m = self.sim.run_for(self.dt_us)
        return m, build_state(m), reward(m.throughput_mbps, self.reward_params)


def env_step(sim: Simulator, a, dt_us: float = DEFAULT_DT_US,
             reward_params: RewardParams = RewardParams()) -> tuple[PeriodMetrics, np.ndarray, float]:
    sim.apply_control(map_action(a, sim.config.n_stas))
    m = sim.run_for(dt_us)
    return m, build_state(m), reward(m.throughput_mbps, reward_params)
