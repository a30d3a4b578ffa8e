"""Variance-preserving diffusion used as a conditioned policy.

Step indices run ``t = 1..T``; ``alpha_bar(0)`` is taken as 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError, RangeError, ShapeError
from .numkernel import MlpParams, mlp_backward, mlp_forward, mlp_init

BETA_MIN = 0.1
BETA_MAX = 10.0


@dataclass(frozen=True)
class DiffusionSchedule:
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def T(self) -> int:
        return self.betas.shape[0]

    def alpha_bar(self, t: int) -> float:
        return 1.0 if t == 0 else float(self.alpha_bars[t - 1])

    def beta(self, t: int) -> float:
        return float(self.betas[t - 1])

    def alpha(self, t: int) -> float:
        return float(self.alphas[t - 1])


def vp_schedule(T: int, beta_min: float = BETA_MIN, beta_max: float = BETA_MAX) -> DiffusionSchedule:
    """Discretised VP-SDE schedule: beta_t = 1 - exp(-b_min/T - (b_max-b_min)(2t-1)/(2T^2))."""
    if T < 1:
        raise ConfigError(f"need at least one denoise step, got T={T}")
    t = np.arange(1, T + 1, dtype=np.float64)
    betas = 1.0 - np.exp(-beta_min / T - (beta_max - beta_min) * (2.0 * t - 1.0) / (2.0 * T * T))
    alphas = 1.0 - betas
    return DiffusionSchedule(betas, alphas, np.cumprod(alphas))


def forward_step(x_t, beta: float, eps):
    x_t = np.asarray(x_t, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x_t.shape != eps.shape:
        raise ShapeError(f"noise shape {eps.shape} != solution shape {x_t.shape}")
    if not 0.0 <= beta <= 1.0:
        raise RangeError("beta must lie in [0, 1]")
    return np.sqrt(beta) * eps + np.sqrt(1.0 - beta) * x_t


def forward_sample(x_0, t: int, schedule: DiffusionSchedule, eps):
    if not 1 <= t <= schedule.T:
        raise RangeError(f"step {t} outside [1, {schedule.T}]")
    x_0 = np.asarray(x_0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x_0.shape != eps.shape:
        raise ShapeError(f"noise shape {eps.shape} != solution shape {x_0.shape}")
    ab = schedule.alpha_bar(t)
    return np.sqrt(1.0 - ab) * eps + np.sqrt(ab) * x_0


def posterior_coefficients(t: int, schedule: DiffusionSchedule) -> tuple[float, float, float]:
    """``(c_xt, c_x0, sigma)`` such that mean = c_xt * x_t + c_x0 * x0_hat."""
    ab_t = schedule.alpha_bar(t)
    ab_prev = schedule.alpha_bar(t - 1)
    beta = schedule.beta(t)
    c_xt = np.sqrt(schedule.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab_t)
    c_x0 = np.sqrt(ab_prev) * beta / (1.0 - ab_t)
    sigma = np.sqrt(beta * (1.0 - ab_prev) / (1.0 - ab_t))
    return float(c_xt), float(c_x0), float(sigma)


def reconstruct_x0(x_t, eps_hat, t: int, schedule: DiffusionSchedule):
    ab = schedule.alpha_bar(t)
    if ab <= 0.0:
        raise NumericError(f"alpha_bar is zero at step {t}; cannot reconstruct x0")
    return (np.asarray(x_t) - np.sqrt(1.0 - ab) * np.asarray(eps_hat)) / np.sqrt(ab)


def posterior_params(x_t, eps_hat, t: int, schedule: DiffusionSchedule):
    """Mean and standard deviation of q(x_{t-1} | x_t, x0_hat)."""
    if not 1 <= t <= schedule.T:
        raise RangeError(f"step {t} outside [1, {schedule.T}]")
    x0_hat = reconstruct_x0(x_t, eps_hat, t, schedule)
    c_xt, c_x0, sigma = posterior_coefficients(t, schedule)
    return c_xt * np.asarray(x_t) + c_x0 * x0_hat, sigma


@dataclass
class Denoiser:
    """Noise predictor conditioned on the environment state and a one-hot step."""
    net: MlpParams
    action_dim: int
    state_dim: int
    n_steps: int

    def __post_init__(self):
        expected = self.action_dim + self.state_dim + self.n_steps
        if self.net.layer_sizes[0] != expected or self.net.layer_sizes[-1] != self.action_dim:
            raise ShapeError(f"denoiser net {self.net.layer_sizes} incompatible with "
                             f"action_dim={self.action_dim}, state_dim={self.state_dim}, T={self.n_steps}")

    def copy(self) -> "Denoiser":
        return Denoiser(self.net.copy(), self.action_dim, self.state_dim, self.n_steps)

    def inputs(self, x_t: np.ndarray, t: int, state: np.ndarray) -> np.ndarray:
        onehot = np.zeros((x_t.shape[0], self.n_steps))
        onehot[:, t - 1] = 1.0
        return np.concatenate([x_t, state, onehot], axis=1)


def make_denoiser(action_dim: int, state_dim: int, n_steps: int, rng, hidden=(256, 256),
                  activation: str = "tanh") -> Denoiser:
    sizes = (action_dim + state_dim + n_steps, *hidden, action_dim)
    return Denoiser(mlp_init(sizes, rng, activation), action_dim, state_dim, n_steps)


@dataclass
class DenoiseTape:
    """What the backward pass through a deterministic denoise chain needs."""
    caches: list
    steps: list  # (t, A_t, B_t) per executed step, in execution order
    pre_clamp: np.ndarray
    batched: bool


def _as_batch(state, x_T, denoiser: Denoiser):
    state = np.asarray(state, dtype=np.float64)
    x = np.asarray(x_T, dtype=np.float64)
    batched = x.ndim == 2
    if not batched:
        x, state = x[None, :], state[None, :]
    if x.shape[1] != denoiser.action_dim:
        raise ShapeError(f"x_T has {x.shape[1]} entries, action dimension is {denoiser.action_dim}")
    if state.shape != (x.shape[0], denoiser.state_dim):
        raise ShapeError(f"state shape {state.shape} incompatible with state_dim={denoiser.state_dim}")
    return state, x, batched


def denoise(denoiser: Denoiser, state, x_T, schedule: DiffusionSchedule, mode: str = "deterministic",
            rng: np.random.Generator | None = None, record: bool = False):
    """Run the reverse chain t = T..1 and clamp the result to [0, 1].

    With ``record=True`` (deterministic mode only) also return a tape for
    :func:`denoise_backward`.
    """
    if mode not in ("deterministic", "stochastic"):
        raise ConfigError(f"unknown denoise mode {mode!r}")
    if mode == "stochastic" and rng is None:
        raise ConfigError("stochastic denoising needs an rng")
    if record and mode != "deterministic":
        raise ConfigError("gradients are only defined for the deterministic chain")
    if schedule.T != denoiser.n_steps:
        raise ShapeError(f"schedule has {schedule.T} steps, denoiser was built for {denoiser.n_steps}")
    state, x, batched = _as_batch(state, x_T, denoiser)
    caches, steps = [], []
    for t in range(schedule.T, 0, -1):
        eps_hat, cache = mlp_forward(denoiser.net, denoiser.inputs(x, t, state))
        c_xt, c_x0, sigma = posterior_coefficients(t, schedule)
        ab = schedule.alpha_bar(t)
        a_t = c_xt + c_x0 / np.sqrt(ab)
        b_t = -c_x0 * np.sqrt(1.0 - ab) / np.sqrt(ab)
        x = a_t * x + b_t * eps_hat
        if mode == "stochastic" and t > 1:
            x = x + sigma * rng.standard_normal(x.shape)
        if not np.isfinite(x).all():
            raise NumericError(f"non-finite value in reverse chain at step t={t}")
        if record:
            caches.append(cache)
            steps.append((t, a_t, b_t))
    out = np.clip(x, 0.0, 1.0)
    if not batched:
        out = out[0]
    if record:
        return out, DenoiseTape(caches, steps, x, batched)
    return out


CLAMP_GRAD_MODES = ("zero", "inward", "straight")


def clamp_backward(pre_clamp: np.ndarray, grad: np.ndarray, mode: str = "zero") -> np.ndarray:
    """Gradient through ``clip(x, 0, 1)``.

    Inside (0, 1) the clamp is the identity. Outside, ``"zero"`` gives the exact
    derivative, ``"inward"`` keeps only the component whose descent step moves
    ``x`` back towards the interior, and ``"straight"`` passes ``grad`` unchanged.
    """
    if mode not in CLAMP_GRAD_MODES:
        raise ConfigError(f"clamp gradient mode must be one of {CLAMP_GRAD_MODES}, got {mode!r}")
    if mode == "straight":
        return grad.copy()
    inside = (pre_clamp > 0.0) & (pre_clamp < 1.0)
    if mode == "inward":
        inside |= ((pre_clamp >= 1.0) & (grad > 0.0)) | ((pre_clamp <= 0.0) & (grad < 0.0))
    return grad * inside


def boundary_penalty(pre_clamp: np.ndarray, weight: float) -> tuple[float, np.ndarray]:
    """``weight * mean_rows(sum(relu(x - 1)^2 + relu(-x)^2))`` and its gradient w.r.t. ``x``.

    Zero on the unit box, so it only acts on outputs the clamp has cut off.
    """
    pre = np.atleast_2d(pre_clamp)
    excess = np.maximum(pre - 1.0, 0.0) - np.maximum(-pre, 0.0)
    n = pre.shape[0]
    value = weight * float(np.sum(excess ** 2)) / n
    return value, (2.0 * weight / n) * excess.reshape(np.shape(pre_clamp))


def denoise_backward(denoiser: Denoiser, tape: DenoiseTape, output_grad, clamp_grad: str = "zero",
                     pre_clamp_grad=None) -> tuple[MlpParams, np.ndarray]:
    """Gradient of ``sum(output * output_grad)`` w.r.t. denoiser weights and the state.

    ``output_grad`` is the gradient of a loss to be minimised; see
    :func:`clamp_backward` for how it crosses the final clamp. ``pre_clamp_grad``
    is added after the clamp, for terms defined on the unclamped chain output.
    """
    g = np.asarray(output_grad, dtype=np.float64)
    if not tape.batched:
        g = g[None, :]
    g = clamp_backward(tape.pre_clamp, g, clamp_grad)
    if pre_clamp_grad is not None:
        g = g + np.reshape(pre_clamp_grad, g.shape)
    grads = denoiser.net.zeros_like()
    state_grad = np.zeros((g.shape[0], denoiser.state_dim))
    a_dim, s_dim = denoiser.action_dim, denoiser.state_dim
    for cache, (_, a_t, b_t) in zip(reversed(tape.caches), reversed(tape.steps)):
        step_grads, in_grad = mlp_backward(denoiser.net, cache, b_t * g)
        for acc, part in zip(grads.arrays(), step_grads.arrays()):
            acc += part
        state_grad += in_grad[:, a_dim:a_dim + s_dim]
        g = a_t * g + in_grad[:, :a_dim]
    return grads, (state_grad if tape.batched else state_grad[0])


def noise_prediction_loss(denoiser: Denoiser, x0, state, schedule: DiffusionSchedule,
                          rng: np.random.Generator) -> tuple[float, MlpParams]:
    """Standard epsilon-prediction MSE on a batch of clean solutions, with gradients."""
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    state = np.atleast_2d(np.asarray(state, dtype=np.float64))
    n = x0.shape[0]
    ts = rng.integers(1, schedule.T + 1, size=n)
    eps = rng.standard_normal(x0.shape)
    ab = schedule.alpha_bars[ts - 1][:, None]
    x_t = np.sqrt(1.0 - ab) * eps + np.sqrt(ab) * x0
    onehot = np.zeros((n, schedule.T))
    onehot[np.arange(n), ts - 1] = 1.0
    pred, cache = mlp_forward(denoiser.net, np.concatenate([x_t, state, onehot], axis=1))
    diff = pred - eps
    loss = float(np.mean(diff ** 2))
    grads, _ = mlp_backward(denoiser.net, cache, 2.0 * diff / diff.size)
    return loss, grads
