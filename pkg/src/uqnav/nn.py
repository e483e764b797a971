"""Minimal dense-network engine.

Sequential MLPs over float64, with hand-derived reverse-mode gradients
for each supported loss, Adam, and seeded initialization.  Parameter
containers are immutable: forward/backward are pure functions, optimizer
steps return fresh params.  The per-layer matrix work is delegated to
uqnav.kernels (compiled or numpy backend).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

ACTIVATIONS = ("relu", "tanh", "identity")
ACT_CODE = {name: i for i, name in enumerate(ACTIVATIONS)}

# Raw log-variance heads are clipped to this range before exponentiation,
# both in the heteroscedastic loss and in the perception encoder.
LOGVAR_MIN = -10.0
LOGVAR_MAX = 10.0


def _frozen_array(a, shape) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.float64)
    if out.shape != shape:
        raise ValueError(f"expected shape {shape}, got {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError("parameters must be finite")
    if out is a:
        out = out.copy()
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Mlp:
    """Immutable MLP parameters.

    weights[l] has shape (out_dim, in_dim), biases[l] has shape (out_dim,),
    activations[l] names the nonlinearity applied to layer l's output.
    """

    weights: tuple
    biases: tuple
    activations: tuple

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations) >= 1):
            raise ValueError("weights, biases and activations must have equal length >= 1")
        for act in self.activations:
            if act not in ACT_CODE:
                raise ValueError(f"unknown activation {act!r}")
        ws, bs = [], []
        in_dim = np.shape(self.weights[0])[1]
        for w, b in zip(self.weights, self.biases):
            out_dim = np.shape(w)[0]
            ws.append(_frozen_array(w, (out_dim, in_dim)))
            bs.append(_frozen_array(b, (out_dim,)))
            in_dim = out_dim
        object.__setattr__(self, "weights", tuple(ws))
        object.__setattr__(self, "biases", tuple(bs))
        object.__setattr__(self, "activations", tuple(self.activations))

    @property
    def layer_dims(self) -> tuple:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


@dataclass(frozen=True)
class Grads:
    """Gradient arrays congruent with an Mlp."""

    weights: tuple
    biases: tuple


def congruent(mlp: Mlp, grads: Grads) -> bool:
    return all(
        gw.shape == w.shape and gb.shape == b.shape
        for w, b, gw, gb in zip(mlp.weights, mlp.biases, grads.weights, grads.biases)
    ) and len(grads.weights) == len(mlp.weights)


def init_mlp(layer_dims, activations, rng: np.random.Generator) -> Mlp:
    """He-uniform init for relu layers, Xavier-uniform otherwise; zero biases."""
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2 or any(d <= 0 for d in dims):
        raise ValueError(f"layer_dims must be >= 2 positive entries, got {dims}")
    acts = tuple(activations)
    if len(acts) != len(dims) - 1:
        raise ValueError("need one activation per layer")
    weights, biases = [], []
    for fan_in, fan_out, act in zip(dims[:-1], dims[1:], acts):
        if act == "relu":
            limit = np.sqrt(6.0 / fan_in)
        else:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(tuple(weights), tuple(biases), acts)


def _as_batch(x, in_dim):
    x = np.ascontiguousarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x.reshape(1, -1)
    if x.ndim != 2 or x.shape[1] != in_dim:
        raise ValueError(f"input width {x.shape[-1] if x.ndim else '?'} != layer width {in_dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input must be finite")
    return x, single


def forward(mlp: Mlp, x) -> np.ndarray:
    """Evaluate the network; accepts a single vector or a batch (rows)."""
    a, single = _as_batch(x, mlp.in_dim)
    for w, b, act in zip(mlp.weights, mlp.biases, mlp.activations):
        a = kernels.activate(kernels.affine(a, w, b), ACT_CODE[act])
    return a[0] if single else a


def forward_tape(mlp: Mlp, x):
    """Batch forward keeping per-layer outputs for the backward pass."""
    a, _ = _as_batch(x, mlp.in_dim)
    tape = [a]
    for w, b, act in zip(mlp.weights, mlp.biases, mlp.activations):
        a = kernels.activate(kernels.affine(a, w, b), ACT_CODE[act])
        tape.append(a)
    return a, tape


def backward(mlp: Mlp, tape, dy):
    """Backprop dL/d(output) through the taped forward pass.

    Returns (Grads, dL/d(input)).
    """
    da = np.ascontiguousarray(dy, dtype=np.float64)
    dws = [None] * len(mlp.weights)
    dbs = [None] * len(mlp.weights)
    for l in range(len(mlp.weights) - 1, -1, -1):
        ds = kernels.activation_grad(tape[l + 1], da, ACT_CODE[mlp.activations[l]])
        dws[l], dbs[l] = kernels.affine_grad_params(ds, tape[l])
        da = kernels.affine_grad_input(ds, mlp.weights[l])
    return Grads(tuple(dws), tuple(dbs)), da


# ---------------------------------------------------------------------------
# Losses


def mse_loss_grads(mlp: Mlp, inputs, targets):
    """Mean (over batch and dims) squared error and its parameter gradient."""
    x, _ = _as_batch(inputs, mlp.in_dim)
    t = np.asarray(targets, dtype=np.float64).reshape(x.shape[0], mlp.out_dim)
    y, tape = forward_tape(mlp, x)
    diff = y - t
    loss = float(np.mean(diff * diff))
    dy = diff * (2.0 / diff.size)
    grads, _ = backward(mlp, tape, dy)
    return loss, grads


def heteroscedastic_nll_from_outputs(outputs, targets):
    """Per-batch-mean Gaussian NLL (constant term dropped) from a raw
    [means | log-variances] output block.  Returns (loss, d loss / d outputs)."""
    half = outputs.shape[1] // 2
    mu = outputs[:, :half]
    raw = outputs[:, half:]
    s = np.clip(raw, LOGVAR_MIN, LOGVAR_MAX)
    inv_var = np.exp(-s)
    diff = mu - targets
    per_dim = 0.5 * s + 0.5 * diff * diff * inv_var
    n = per_dim.size
    loss = float(per_dim.sum() / n)
    dmu = diff * inv_var / n
    ds = (0.5 - 0.5 * diff * diff * inv_var) / n
    ds = np.where((raw >= LOGVAR_MIN) & (raw <= LOGVAR_MAX), ds, 0.0)
    return loss, np.concatenate([dmu, ds], axis=1)


def heteroscedastic_loss_grads(mlp: Mlp, inputs, targets):
    x, _ = _as_batch(inputs, mlp.in_dim)
    if mlp.out_dim % 2 != 0:
        raise ValueError("heteroscedastic net needs an even output width")
    t = np.asarray(targets, dtype=np.float64).reshape(x.shape[0], mlp.out_dim // 2)
    y, tape = forward_tape(mlp, x)
    loss, dy = heteroscedastic_nll_from_outputs(y, t)
    grads, _ = backward(mlp, tape, dy)
    return loss, grads


LOSSES = ("mse", "heteroscedastic_nll", "cmvae_composite")


def loss_and_grads(params, batch, loss: str):
    """Batch-mean loss and parameter gradient for a tagged loss.

    batch is (inputs, targets) for "mse" and "heteroscedastic_nll" (params
    is an Mlp), and (observations, poses, noise) for "cmvae_composite"
    (params is a perception.CmvaeParams; noise is the fixed
    reparameterization draw, one row per example).
    """
    if len(batch) == 0 or any(np.size(p) == 0 for p in batch):
        raise ValueError("batch must be non-empty")
    if loss == "mse":
        return mse_loss_grads(params, batch[0], batch[1])
    if loss == "heteroscedastic_nll":
        return heteroscedastic_loss_grads(params, batch[0], batch[1])
    if loss == "cmvae_composite":
        from .perception import composite_loss_grads

        obs, pose, eps = batch
        parts, grads = composite_loss_grads(params, obs, pose, eps)
        return parts.total, grads
    raise ValueError(f"unknown loss {loss!r}")


# ---------------------------------------------------------------------------
# Adam


@dataclass(frozen=True)
class AdamState:
    first_moment: Grads
    second_moment: Grads
    step_count: int
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def adam_init(mlp: Mlp, learning_rate: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    zeros = Grads(
        tuple(np.zeros_like(w) for w in mlp.weights),
        tuple(np.zeros_like(b) for b in mlp.biases),
    )
    zeros2 = Grads(
        tuple(np.zeros_like(w) for w in mlp.weights),
        tuple(np.zeros_like(b) for b in mlp.biases),
    )
    return AdamState(zeros, zeros2, 0, learning_rate, beta1, beta2, epsilon)


def _adam_update(p, g, m, v, state: AdamState, bias1, bias2):
    m_new = state.beta1 * m + (1.0 - state.beta1) * g
    v_new = state.beta2 * v + (1.0 - state.beta2) * g * g
    step = state.learning_rate * (m_new / bias1) / (np.sqrt(v_new / bias2) + state.epsilon)
    return p - step, m_new, v_new


def adam_step(params: Mlp, grads: Grads, state: AdamState):
    """One Adam update with bias correction; returns (params', state')."""
    if not congruent(params, grads):
        raise ValueError("gradient shapes do not match parameters")
    t = state.step_count + 1
    bias1 = 1.0 - state.beta1 ** t
    bias2 = 1.0 - state.beta2 ** t
    new_w, new_b, m_w, m_b, v_w, v_b = [], [], [], [], [], []
    for w, gw, mw, vw in zip(params.weights, grads.weights,
                             state.first_moment.weights, state.second_moment.weights):
        p, m, v = _adam_update(w, gw, mw, vw, state, bias1, bias2)
        new_w.append(p)
        m_w.append(m)
        v_w.append(v)
    for b, gb, mb, vb in zip(params.biases, grads.biases,
                             state.first_moment.biases, state.second_moment.biases):
        p, m, v = _adam_update(b, gb, mb, vb, state, bias1, bias2)
        new_b.append(p)
        m_b.append(m)
        v_b.append(v)
    new_params = Mlp(tuple(new_w), tuple(new_b), params.activations)
    new_state = AdamState(
        Grads(tuple(m_w), tuple(m_b)),
        Grads(tuple(v_w), tuple(v_b)),
        t,
        state.learning_rate,
        state.beta1,
        state.beta2,
        state.epsilon,
    )
    return new_params, new_state


def quantize_f32(mlp: Mlp) -> Mlp:
    """Round parameters onto the float32 lattice used by checkpoint files.

    Training loops apply this to their final result so that in-memory
    params and their saved/loaded form are bit-identical.
    """
    return Mlp(
        tuple(w.astype(np.float32).astype(np.float64) for w in mlp.weights),
        tuple(b.astype(np.float32).astype(np.float64) for b in mlp.biases),
        mlp.activations,
    )
