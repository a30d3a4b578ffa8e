"""Actor-critic learners: the diffusion-actor agent and the plain DDPG baseline."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .diffusion import (CLAMP_GRAD_MODES, DiffusionSchedule, Denoiser, boundary_penalty, clamp_backward, denoise,
                        denoise_backward, make_denoiser, vp_schedule)
from .errors import CompatibilityError, ConfigError, NumericError, ShapeError
from .numkernel import (MlpParams, adam_init, adam_step, load_params, mlp_backward, mlp_forward,
                        mlp_init, save_params, soft_update)


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray

    def __len__(self):
        return self.r.shape[0]


class ReplayBuffer:
    """Fixed-capacity ring buffer; the oldest transition is overwritten first."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity < 1:
            raise ConfigError("replay capacity must be >= 1")
        self.capacity = capacity
        self.state_dim = state_dim
        self.action_dim = action_dim
        self._s = np.zeros((capacity, state_dim))
        self._a = np.zeros((capacity, action_dim))
        self._r = np.zeros(capacity)
        self._s2 = np.zeros((capacity, state_dim))
        self._cursor = 0
        self._size = 0

    def __len__(self):
        return self._size

    def push(self, t: Transition) -> None:
        s, a, s2 = (np.asarray(v, dtype=np.float64) for v in (t.s, t.a, t.s_next))
        if s.shape != (self.state_dim,) or s2.shape != (self.state_dim,) or a.shape != (self.action_dim,):
            raise ShapeError("transition dimensions do not match the buffer")
        if not np.isfinite(t.r):
            raise NumericError("reward is not finite")
        i = self._cursor
        self._s[i], self._a[i], self._r[i], self._s2[i] = s, a, t.r, s2
        self._cursor = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def get(self, i: int) -> Transition:
        """The ``i``-th oldest stored transition."""
        if not 0 <= i < self._size:
            raise IndexError(i)
        j = (self._cursor - self._size + i) % self.capacity
        return Transition(self._s[j].copy(), self._a[j].copy(), float(self._r[j]), self._s2[j].copy())

    def sample(self, n: int, rng: np.random.Generator) -> Batch | None:
        """Uniform draw with replacement; ``None`` while fewer than ``n`` transitions are stored."""
        if self._size < n:
            return None
        idx = rng.integers(0, self._size, size=n)
        return Batch(self._s[idx], self._a[idx], self._r[idx], self._s2[idx])

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.integers(0, self._size, size=n)


@dataclass
class ExplorationNoise:
    sigma0: float = 0.2
    decay: float = 0.999
    sigma_min: float = 0.01
    steps: int = 0

    @property
    def sigma(self) -> float:
        return max(self.sigma0 * self.decay ** self.steps, self.sigma_min)

    def advance(self) -> None:
        self.steps += 1


@dataclass
class AgentConfig:
    hidden: tuple[int, ...] = (256, 256)
    actor_lr: float = 2e-3
    critic_lr: float = 2e-2
    tau: float = 0.05
    gamma: float = 0.1
    batch_size: int = 12
    buffer_size: int = 256
    denoise_steps: int = 5
    noise_sigma0: float = 0.2
    noise_decay: float = 0.999
    noise_sigma_min: float = 0.01
    actor_activation: str = "tanh"
    critic_activation: str = "relu"
    clamp_grad: str = "straight"
    boundary_penalty: float = 0.0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must lie in [0, 1)")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError("tau must lie in [0, 1]")
        if self.batch_size < 1 or self.buffer_size < 1 or self.denoise_steps < 1:
            raise ConfigError("batch size, buffer size and denoise steps must be >= 1")
        if self.actor_lr < 0 or self.critic_lr < 0:
            raise ConfigError("learning rates must be non-negative")
        if self.clamp_grad not in CLAMP_GRAD_MODES:
            raise ConfigError(f"clamp_grad must be one of {CLAMP_GRAD_MODES}")
        if self.boundary_penalty < 0:
            raise ConfigError("boundary_penalty must be non-negative")


class _ActorCritic:
    """Shared critic, replay, target and exploration machinery."""

    algo = ""

    def __init__(self, state_dim: int, action_dim: int, config: AgentConfig = None, seed: int = 0):
        self.config = config or AgentConfig()
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.rng = np.random.default_rng(seed)
        cfg = self.config
        self.actor = self._make_actor()
        self.critic = mlp_init((state_dim + action_dim, *cfg.hidden, 1), self.rng, cfg.critic_activation)
        self.actor_target = self._copy_actor(self.actor)
        self.critic_target = self.critic.copy()
        self.actor_opt = adam_init(self._actor_params(self.actor))
        self.critic_opt = adam_init(self.critic)
        self.buffer = ReplayBuffer(cfg.buffer_size, state_dim, action_dim)
        self.noise = ExplorationNoise(cfg.noise_sigma0, cfg.noise_decay, cfg.noise_sigma_min)
        self.train_steps = 0

    # actor-specific hooks
    def _make_actor(self):
        raise NotImplementedError

    def _copy_actor(self, actor):
        raise NotImplementedError

    def _actor_params(self, actor) -> MlpParams:
        raise NotImplementedError

    def _policy(self, actor, states: np.ndarray, rng, record=False):
        raise NotImplementedError

    def _policy_backward(self, actor, tape, grad, pre_grad) -> MlpParams:
        raise NotImplementedError

    def _pre_clamp(self, tape) -> np.ndarray:
        raise NotImplementedError

    def act(self, s, explore: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
        rng = self.rng if rng is None else rng
        s = np.asarray(s, dtype=np.float64)
        if s.shape != (self.state_dim,) or not np.isfinite(s).all():
            raise ShapeError(f"state must be a finite vector of length {self.state_dim}")
        a = self._policy(self.actor, s[None, :], rng)[0]
        if explore:
            a = np.clip(a + self.noise.sigma * rng.standard_normal(a.shape), 0.0, 1.0)
        return a

    def q_values(self, critic: MlpParams, s, a) -> np.ndarray:
        q, _ = mlp_forward(critic, np.concatenate([s, a], axis=1))
        return q[:, 0]

    def critic_target_values(self, batch: Batch) -> np.ndarray:
        a_next = self._policy(self.actor_target, batch.s_next, self.rng)
        return batch.r + self.config.gamma * self.q_values(self.critic_target, batch.s_next, a_next)

    def critic_loss_and_grads(self, batch: Batch, y: np.ndarray) -> tuple[float, MlpParams]:
        q, cache = mlp_forward(self.critic, np.concatenate([batch.s, batch.a], axis=1))
        err = q[:, 0] - y
        loss = float(np.mean(err ** 2))
        grads, _ = mlp_backward(self.critic, cache, (2.0 * err / err.size)[:, None])
        return loss, grads

    def actor_objective_and_grads(self, states: np.ndarray, x_rng=None) -> tuple[float, MlpParams]:
        """Mean Q of the current policy, and the actor-weight gradient of the loss to minimise.

        The loss is ``-mean Q`` plus ``boundary_penalty`` times the squared
        distance of the unclamped actor output from the unit box.
        """
        x_rng = self.rng if x_rng is None else x_rng
        a, tape = self._policy(self.actor, states, x_rng, record=True)
        q, cache = mlp_forward(self.critic, np.concatenate([states, a], axis=1))
        n = q.shape[0]
        _, in_grad = mlp_backward(self.critic, cache, np.full((n, 1), 1.0 / n))
        dq_da = in_grad[:, self.state_dim:]
        pre_grad = None
        if self.config.boundary_penalty > 0:
            _, pre_grad = boundary_penalty(self._pre_clamp(tape), self.config.boundary_penalty)
        grads = self._policy_backward(self.actor, tape, -dq_da, pre_grad)
        return float(q.mean()), grads

    def train_step(self, batch: Batch) -> tuple[float, float]:
        cfg = self.config
        y = self.critic_target_values(batch)
        c_loss, c_grads = self.critic_loss_and_grads(batch, y)
        if not np.isfinite(c_loss):
            raise NumericError(f"critic loss is not finite at train step {self.train_steps}")
        adam_step(self.critic, c_grads, self.critic_opt, cfg.critic_lr)
        objective, a_grads = self.actor_objective_and_grads(batch.s)
        if not np.isfinite(objective):
            raise NumericError(f"actor objective is not finite at train step {self.train_steps}")
        adam_step(self._actor_params(self.actor), a_grads, self.actor_opt, cfg.actor_lr)
        soft_update(self.critic_target, self.critic, cfg.tau)
        soft_update(self._actor_params(self.actor_target), self._actor_params(self.actor), cfg.tau)
        self.train_steps += 1
        return c_loss, objective

    def observe(self, t: Transition) -> tuple[float, float] | None:
        """Store a transition and run one training step once the buffer holds a batch."""
        self.buffer.push(t)
        self.noise.advance()
        batch = self.buffer.sample(self.config.batch_size, self.rng)
        if batch is None:
            return None
        return self.train_step(batch)

    def save(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        save_params(d / "actor.bin", self._actor_params(self.actor))
        save_params(d / "actor_target.bin", self._actor_params(self.actor_target))
        save_params(d / "critic.bin", self.critic)
        save_params(d / "critic_target.bin", self.critic_target)
        manifest = {
            "format_version": 1,
            "algo": self.algo,
            "state_dim": self.state_dim,
            "action_dim": self.action_dim,
            "train_steps": self.train_steps,
            "noise_steps": self.noise.steps,
            "agent_config": asdict(self.config),
        }
        (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
        return d

    @classmethod
    def load(cls, directory, seed: int = 0):
        d = Path(directory)
        manifest = json.loads((d / "manifest.json").read_text())
        if manifest["algo"] != cls.algo:
            raise CompatibilityError(f"checkpoint holds a {manifest['algo']} agent, not {cls.algo}")
        agent = cls(manifest["state_dim"], manifest["action_dim"], AgentConfig(**manifest["agent_config"]), seed)
        agent._set_actor_params(agent.actor, load_params(d / "actor.bin"))
        agent._set_actor_params(agent.actor_target, load_params(d / "actor_target.bin"))
        agent.critic = load_params(d / "critic.bin")
        agent.critic_target = load_params(d / "critic_target.bin")
        agent.train_steps = manifest["train_steps"]
        agent.noise.steps = manifest["noise_steps"]
        return agent

    def _set_actor_params(self, actor, params: MlpParams):
        raise NotImplementedError


class D3pgAgent(_ActorCritic):
    """Actor is a state-conditioned denoiser run deterministically from Gaussian noise."""

    algo = "d3pg"

    def __init__(self, state_dim, action_dim, config: AgentConfig = None, seed: int = 0):
        cfg = config or AgentConfig()
        self.schedule: DiffusionSchedule = vp_schedule(cfg.denoise_steps)
        super().__init__(state_dim, action_dim, cfg, seed)

    def _make_actor(self):
        cfg = self.config
        return make_denoiser(self.action_dim, self.state_dim, cfg.denoise_steps, self.rng,
                             cfg.hidden, cfg.actor_activation)

    def _copy_actor(self, actor: Denoiser):
        return actor.copy()

    def _actor_params(self, actor: Denoiser):
        return actor.net

    def _set_actor_params(self, actor: Denoiser, params):
        if not params.same_shape(actor.net):
            raise CompatibilityError("actor snapshot does not match scenario dimensions")
        actor.net = params

    def _policy(self, actor, states, rng, record=False):
        x_T = rng.standard_normal((states.shape[0], self.action_dim))
        return denoise(actor, states, x_T, self.schedule, record=record)

    def _policy_backward(self, actor, tape, grad, pre_grad):
        grads, _ = denoise_backward(actor, tape, grad, self.config.clamp_grad, pre_grad)
        return grads

    def _pre_clamp(self, tape):
        return tape.pre_clamp


class DdpgAgent(_ActorCritic):
    """Baseline: a plain MLP actor, output ``clip(0.5 + net(s), 0, 1)``."""

    algo = "ddpg"

    def _make_actor(self):
        cfg = self.config
        return mlp_init((self.state_dim, *cfg.hidden, self.action_dim), self.rng, cfg.actor_activation)

    def _copy_actor(self, actor: MlpParams):
        return actor.copy()

    def _actor_params(self, actor: MlpParams):
        return actor

    def _set_actor_params(self, actor: MlpParams, params):
        if not params.same_shape(actor):
            raise CompatibilityError("actor snapshot does not match scenario dimensions")
        for dst, src in zip(actor.arrays(), params.arrays()):
            dst[...] = src

    def _policy(self, actor, states, rng, record=False):
        z, cache = mlp_forward(actor, states)
        pre = 0.5 + z
        a = np.clip(pre, 0.0, 1.0)
        return (a, (cache, pre)) if record else a

    def _policy_backward(self, actor, tape, grad, pre_grad):
        cache, pre = tape
        g = clamp_backward(pre, grad, self.config.clamp_grad)
        if pre_grad is not None:
            g = g + pre_grad
        grads, _ = mlp_backward(actor, cache, g)
        return grads

    def _pre_clamp(self, tape):
        return tape[1]


AGENTS = {"d3pg": D3pgAgent, "ddpg": DdpgAgent}
