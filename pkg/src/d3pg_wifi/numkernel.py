"""Small dense-network toolkit: MLP forward/backward, Adam, soft updates, snapshots.

Everything is float64 numpy. Inputs may be a single vector ``(in,)`` or a
batch ``(B, in)``; outputs follow the same convention.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError, ShapeError

ACTIVATIONS = ("relu", "tanh")
SNAPSHOT_MAGIC = b"D3MLP"
SNAPSHOT_VERSION = 1


@dataclass
class MlpParams:
    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: str = "relu"

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(self.layer_sizes, [w.copy() for w in self.weights],
                         [b.copy() for b in self.biases], self.hidden_activation)

    def zeros_like(self) -> "MlpParams":
        return MlpParams(self.layer_sizes, [np.zeros_like(w) for w in self.weights],
                         [np.zeros_like(b) for b in self.biases], self.hidden_activation)

    def same_shape(self, other: "MlpParams") -> bool:
        return tuple(self.layer_sizes) == tuple(other.layer_sizes)


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # input to each layer, shape (B, fan_in)
    pre: list[np.ndarray]  # pre-activation of each layer, shape (B, fan_out)
    batched: bool


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def mlp_init(layer_sizes, rng: np.random.Generator, hidden_activation: str = "relu") -> MlpParams:
    """Fan-in scaled uniform weights in ``±1/sqrt(fan_in)``, zero biases."""
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2 or min(sizes) < 1:
        raise ConfigError(f"layer_sizes needs >= 2 positive entries, got {list(layer_sizes)}")
    if hidden_activation not in ACTIVATIONS:
        raise ConfigError(f"unknown activation {hidden_activation!r}")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(sizes, weights, biases, hidden_activation)


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _act_grad(name, z, g):
    if name == "relu":
        return g * (z > 0.0)
    t = np.tanh(z)
    return g * (1.0 - t * t)


def mlp_forward(params: MlpParams, x) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x, dtype=np.float64)
    batched = x.ndim == 2
    h = x if batched else x[None, :]
    if h.ndim != 2 or h.shape[1] != params.layer_sizes[0]:
        raise ShapeError(f"input has shape {x.shape}, network expects {params.layer_sizes[0]} features")
    inputs, pre = [], []
    last = params.n_layers - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w.T + b
        pre.append(z)
        h = z if k == last else _act(params.hidden_activation, z)
    return (h if batched else h[0]), ForwardCache(inputs, pre, batched)


def mlp_backward(params: MlpParams, cache: ForwardCache, output_grad) -> tuple[MlpParams, np.ndarray]:
    """Reverse-mode gradients of ``sum(output * output_grad)``.

    Returns parameter gradients (as an ``MlpParams``) and the input gradient.
    """
    if len(cache.inputs) != params.n_layers:
        raise ShapeError("cache was produced by a network of different depth")
    g = np.asarray(output_grad, dtype=np.float64)
    if not cache.batched:
        g = g[None, :]
    if g.shape != cache.pre[-1].shape:
        raise ShapeError(f"output_grad shape {g.shape} does not match output {cache.pre[-1].shape}")
    grads = params.zeros_like()
    last = params.n_layers - 1
    for k in range(last, -1, -1):
        if k != last:
            g = _act_grad(params.hidden_activation, cache.pre[k], g)
        grads.weights[k] = g.T @ cache.inputs[k]
        grads.biases[k] = g.sum(axis=0)
        g = g @ params.weights[k]
    return grads, (g if cache.batched else g[0])


def adam_init(params: MlpParams, beta1=0.9, beta2=0.999, epsilon=1e-8) -> AdamState:
    return AdamState([np.zeros_like(a) for a in params.arrays()],
                     [np.zeros_like(a) for a in params.arrays()], 0, beta1, beta2, epsilon)


def adam_step(params: MlpParams, grads: MlpParams, state: AdamState, lr: float) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update, applied in place. Returns ``(params, state)``."""
    if lr < 0:
        raise ConfigError("learning rate must be non-negative")
    p_arrays, g_arrays = params.arrays(), grads.arrays()
    if len(p_arrays) != len(g_arrays) or any(p.shape != g.shape for p, g in zip(p_arrays, g_arrays)):
        raise ShapeError("gradient shapes do not match parameters")
    if not all(np.isfinite(g).all() for g in g_arrays):
        raise NumericError("non-finite gradient; Adam update aborted")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(p_arrays, g_arrays, state.first_moment, state.second_moment):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params, state


def soft_update(target: MlpParams, online: MlpParams, tau: float) -> MlpParams:
    """In-place ``target <- tau * online + (1 - tau) * target``."""
    if not target.same_shape(online):
        raise ShapeError("target and online networks differ in shape")
    if not 0.0 <= tau <= 1.0:
        raise ConfigError("tau must lie in [0, 1]")
    for t, o in zip(target.arrays(), online.arrays()):
        t[...] = tau * o + (1.0 - tau) * t
    return target


def save_params(path, params: MlpParams) -> None:
    """Binary snapshot: magic, version, activation, layer sizes, then row-major float64 weights/biases."""
    act = params.hidden_activation.encode()
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<II", SNAPSHOT_VERSION, len(act)))
        fh.write(act)
        fh.write(struct.pack("<I", len(params.layer_sizes)))
        fh.write(np.asarray(params.layer_sizes, dtype="<u8").tobytes())
        for w, b in zip(params.weights, params.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_params(path) -> MlpParams:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(SNAPSHOT_MAGIC):
        raise ConfigError(f"{path} is not a parameter snapshot")
    off = len(SNAPSHOT_MAGIC)
    version, act_len = struct.unpack_from("<II", data, off)
    if version != SNAPSHOT_VERSION:
        raise ConfigError(f"unsupported snapshot version {version}")
    off += 8
    act = data[off:off + act_len].decode()
    off += act_len
    (n_sizes,) = struct.unpack_from("<I", data, off)
    off += 4
    sizes = tuple(int(s) for s in np.frombuffer(data, dtype="<u8", count=n_sizes, offset=off))
    off += 8 * n_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = np.frombuffer(data, dtype="<f8", count=fan_in * fan_out, offset=off).reshape(fan_out, fan_in)
        off += 8 * w.size
        b = np.frombuffer(data, dtype="<f8", count=fan_out, offset=off)
        off += 8 * b.size
        weights.append(w.astype(np.float64))
        biases.append(b.astype(np.float64))
    if off != len(data):
        raise ConfigError(f"{path} has {len(data) - off} trailing bytes")
    return MlpParams(sizes, weights, biases, act)
