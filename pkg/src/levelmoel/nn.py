"""Small dense networks with closed-form gradients and Adam.

Generators map a latent batch to per-cell tile logits; the discriminator
scores one-hot (or softmax-relaxed) level grids with an unbounded scalar.
Everything runs in float64.

Fake samples reach the discriminator as a channel-wise softmax of the
generator logits, which keeps a gradient path from the discriminator score
back into the generator.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CorruptCheckpoint, NonFiniteGradient, ShapeMismatch

LEAKY_SLOPE = 0.2
Z_DIM = 128


@dataclass
class MlpParams:
    """Layer weights (out x in) and biases; leaky-ReLU between layers, identity on output.

    Also used to hold gradients, which share the exact same layout.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    slope: float = LEAKY_SLOPE

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeMismatch("need one bias per weight matrix and at least one layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ShapeMismatch(f"layer {i}: weight {w.shape} and bias {b.shape} do not match")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ShapeMismatch(f"layer {i} expects {w.shape[1]} inputs, previous layer gives {self.weights[i - 1].shape[0]}")

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    def tensors(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    @classmethod
    def from_tensors(cls, tensors: Sequence[np.ndarray], slope: float = LEAKY_SLOPE) -> "MlpParams":
        return cls(list(tensors[0::2]), list(tensors[1::2]), slope)

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.slope)

    def zeros_like(self) -> "MlpParams":
        return MlpParams([np.zeros_like(w) for w in self.weights], [np.zeros_like(b) for b in self.biases], self.slope)

    def num_params(self) -> int:
        return sum(t.size for t in self.tensors())

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(t)) for t in self.tensors())

    def equals(self, other: "MlpParams") -> bool:
        a, b = self.tensors(), other.tensors()
        return self.slope == other.slope and len(a) == len(b) and all(
            x.shape == y.shape and np.array_equal(x, y) for x, y in zip(a, b)
        )


def init_mlp(dims: Sequence[int], rng: np.random.Generator, slope: float = LEAKY_SLOPE) -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases, slope)


def generator_dims(z_dim: int, level_shape: tuple[int, int, int], hidden: Sequence[int] = (256, 256)) -> list[int]:
    h, w, v = level_shape
    return [z_dim, *hidden, h * w * v]


def discriminator_dims(level_shape: tuple[int, int, int], hidden: Sequence[int] = (256, 64)) -> list[int]:
    h, w, v = level_shape
    return [h * w * v, *hidden, 1]


def gaussian_noise_batch(b: int, z_dim: int, rng: np.random.Generator) -> np.ndarray:
    if b < 1 or z_dim < 1:
        raise ValueError("noise batch dimensions must be positive")
    return rng.standard_normal((b, z_dim))


def _forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
    """Return output, layer inputs and hidden pre-activations (for backprop)."""
    inputs, pre = [], []
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        a = h @ w.T + b
        if i < last:
            pre.append(a)
            h = np.where(a > 0, a, params.slope * a)
        else:
            h = a
    return h, inputs, pre


def _backward(params: MlpParams, inputs, pre, grad_out: np.ndarray, need_input_grad: bool = False):
    """Backprop ``grad_out`` (d loss / d output) through the net."""
    n = len(params.weights)
    gw: list = [None] * n
    gb: list = [None] * n
    g = grad_out
    for i in range(n - 1, -1, -1):
        gw[i] = g.T @ inputs[i]
        gb[i] = g.sum(axis=0)
        if i == 0 and not need_input_grad:
            break
        g = g @ params.weights[i]
        if i > 0:
            g = np.where(pre[i - 1] > 0, g, params.slope * g)
    grads = MlpParams(gw, gb, params.slope)
    return grads, (g if need_input_grad else None)


def mlp_forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    return _forward(params, x)[0]


def generator_forward(G: MlpParams, z: np.ndarray, level_shape: tuple[int, int, int]) -> np.ndarray:
    """Tile logits of shape (b, H, W, V)."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    h, w, v = level_shape
    if z.shape[1] != G.in_dim:
        raise ShapeMismatch(f"generator expects z_dim={G.in_dim}, got {z.shape[1]}")
    if G.out_dim != h * w * v:
        raise ShapeMismatch(f"generator emits {G.out_dim} values, level needs {h * w * v}")
    return mlp_forward(G, z).reshape(len(z), h, w, v)


def channel_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _flatten_levels(D: MlpParams, x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 3
    flat = x.reshape(1 if single else len(x), -1)
    if flat.shape[1] != D.in_dim:
        raise ShapeMismatch(f"discriminator expects {D.in_dim} inputs, got {flat.shape[1]}")
    return flat, single


def discriminator_forward(D: MlpParams, x: np.ndarray):
    """Raw scores: a float for one H x W x V grid, an array of shape (b,) for a batch."""
    flat, single = _flatten_levels(D, x)
    if D.out_dim != 1:
        raise ShapeMismatch("discriminator must have a single output unit")
    scores = mlp_forward(D, flat)[:, 0]
    return float(scores[0]) if single else scores


def d_hinge_loss(D: MlpParams, real: np.ndarray, fake: np.ndarray) -> float:
    sr = discriminator_forward(D, real)
    sf = discriminator_forward(D, fake)
    return float(-np.mean(np.minimum(0.0, -1.0 + sr)) - np.mean(np.minimum(0.0, -1.0 - sf)))


def d_hinge_gradients(D: MlpParams, real: np.ndarray, fake: np.ndarray) -> tuple[float, MlpParams]:
    """Hinge loss and its gradient w.r.t. the discriminator.

    Fakes are constants here. At a hinge corner the subgradient 0 is used.
    """
    real_flat, _ = _flatten_levels(D, real)
    fake_flat, _ = _flatten_levels(D, fake)
    if len(real_flat) != len(fake_flat):
        raise ShapeMismatch(f"real batch has {len(real_flat)} samples, fake batch {len(fake_flat)}")
    b = len(real_flat)
    x = np.concatenate([real_flat, fake_flat])
    out, inputs, pre = _forward(D, x)
    s = out[:, 0]
    sr, sf = s[:b], s[b:]
    loss = float(-np.mean(np.minimum(0.0, -1.0 + sr)) - np.mean(np.minimum(0.0, -1.0 - sf)))
    g = np.zeros_like(s)
    g[:b] = np.where(sr < 1.0, -1.0 / b, 0.0)
    g[b:] = np.where(sf > -1.0, 1.0 / b, 0.0)
    grads, _ = _backward(D, inputs, pre, g[:, None])
    return loss, grads


def _generator_loss_gradients(G: MlpParams, D: MlpParams, z: np.ndarray, level_shape, kind: str):
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    h, w, v = level_shape
    if z.shape[1] != G.in_dim:
        raise ShapeMismatch(f"generator expects z_dim={G.in_dim}, got {z.shape[1]}")
    if G.out_dim != h * w * v or D.in_dim != h * w * v:
        raise ShapeMismatch("generator output, level shape and discriminator input disagree")
    b = len(z)
    logits, g_inputs, g_pre = _forward(G, z)
    probs = channel_softmax(logits.reshape(b, h, w, v))
    flat = probs.reshape(b, -1)
    out, d_inputs, d_pre = _forward(D, flat)
    s = out[:, 0]
    if kind == "minmax":
        loss = float(np.mean(-s))
        gs = np.full_like(s, -1.0 / b)
    elif kind == "lsq":
        loss = float(np.mean((s - 1.0) ** 2))
        gs = 2.0 * (s - 1.0) / b
    else:
        raise ValueError(f"unknown generator loss {kind!r}")
    _, gx = _backward(D, d_inputs, d_pre, gs[:, None], need_input_grad=True)
    gx = gx.reshape(b, h, w, v)
    # softmax Jacobian-vector product, per cell
    glogits = probs * (gx - np.sum(probs * gx, axis=-1, keepdims=True))
    grads, _ = _backward(G, g_inputs, g_pre, glogits.reshape(b, -1))
    return loss, grads


def g_minmax_gradients(G: MlpParams, D: MlpParams, z: np.ndarray, level_shape) -> tuple[float, MlpParams]:
    """Gradient of mean(-D(softmax(G(z)))) w.r.t. G; D is held fixed."""
    return _generator_loss_gradients(G, D, z, level_shape, "minmax")


def g_lsq_gradients(G: MlpParams, D: MlpParams, z: np.ndarray, level_shape) -> tuple[float, MlpParams]:
    """Gradient of mean((D(softmax(G(z))) - 1)^2) w.r.t. G; D is held fixed."""
    return _generator_loss_gradients(G, D, z, level_shape, "lsq")


def generator_loss(G: MlpParams, D: MlpParams, z: np.ndarray, level_shape, kind: str) -> float:
    b = len(z)
    probs = channel_softmax(generator_forward(G, z, level_shape))
    s = discriminator_forward(D, probs.reshape(b, *level_shape))
    if kind == "minmax":
        return float(np.mean(-s))
    return float(np.mean((s - 1.0) ** 2))


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.0
    beta2: float = 0.9
    eps: float = 1e-8
    weight_decay: float = 0.0
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params: MlpParams, lr: float, beta1: float = 0.0, beta2: float = 0.9,
                   eps: float = 1e-8, weight_decay: float = 0.0) -> "AdamState":
        zeros = [np.zeros_like(t) for t in params.tensors()]
        return cls(lr, beta1, beta2, eps, weight_decay, 0, zeros, [z.copy() for z in zeros])

    def copy(self) -> "AdamState":
        return AdamState(self.lr, self.beta1, self.beta2, self.eps, self.weight_decay, self.t,
                         [a.copy() for a in self.m], [a.copy() for a in self.v])


def adam_update(params: MlpParams, grads: MlpParams, state: AdamState) -> tuple[MlpParams, AdamState]:
    """One Adam step with decoupled weight decay; inputs are left untouched.

    p <- p * (1 - lr * wd), then the bias-corrected Adam step.
    """
    g_list = grads.tensors()
    p_list = params.tensors()
    if len(g_list) != len(p_list) or any(g.shape != p.shape for g, p in zip(g_list, p_list)):
        raise ShapeMismatch("gradient layout does not match parameters")
    if not all(np.all(np.isfinite(g)) for g in g_list):
        raise NonFiniteGradient("gradient contains NaN or infinite values")
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    decay = 1.0 - state.lr * state.weight_decay
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(p_list, g_list, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        step = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_p.append(p * decay - step)
        new_m.append(m)
        new_v.append(v)
    new_state = AdamState(state.lr, b1, b2, state.eps, state.weight_decay, t, new_m, new_v)
    return MlpParams.from_tensors(new_p, params.slope), new_state


def _encode(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _decode(s: str, shape) -> np.ndarray:
    raw = base64.b64decode(s.encode("ascii"), validate=True)
    arr = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    if arr.size != int(np.prod(shape)):
        raise CorruptCheckpoint(f"array payload has {arr.size} values, expected shape {tuple(shape)}")
    return arr.reshape(shape)


def params_to_dict(params: MlpParams, **meta) -> dict:
    """JSON-ready checkpoint. Arrays are little-endian float64, base64 encoded."""
    return {
        "arch": params.dims,
        "activation": {"hidden": "leaky_relu", "slope": params.slope, "output": "identity"},
        "params": [
            {"weight": _encode(w), "bias": _encode(b)} for w, b in zip(params.weights, params.biases)
        ],
        "encoding": "base64-float64-le",
        **meta,
    }


def params_from_dict(doc: dict) -> MlpParams:
    try:
        dims = [int(d) for d in doc["arch"]]
        slope = float(doc["activation"]["slope"])
        layers = doc["params"]
        if len(layers) != len(dims) - 1:
            raise CorruptCheckpoint("layer count does not match arch")
        weights, biases = [], []
        for (fan_in, fan_out), layer in zip(zip(dims[:-1], dims[1:]), layers):
            weights.append(_decode(layer["weight"], (fan_out, fan_in)))
            biases.append(_decode(layer["bias"], (fan_out,)))
    except CorruptCheckpoint:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptCheckpoint(f"malformed checkpoint: {exc}") from exc
    return MlpParams(weights, biases, slope)


def save_params(path, params: MlpParams, **meta) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(params_to_dict(params, **meta), fh)


def load_checkpoint(path) -> tuple[MlpParams, dict]:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise CorruptCheckpoint(f"checkpoint {path} is not a JSON object")
    return params_from_dict(doc), doc
