"""Behavior-cloned velocity policies on top of the frozen perception encoder.

Two flavors share the latent input: an ensemble of heteroscedastic members
(each predicts a per-dimension Gaussian over the command) and a
deterministic baseline trained with plain MSE.  Commands are normalized to
[-1, 1] per dimension for training and denormalized at prediction time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn, perception
from .nn import LOGVAR_MAX, LOGVAR_MIN, Mlp
from .perception import CmvaeParams

V_MAX = 3.0  # m/s, per body axis
YAW_RATE_MAX = 1.5  # rad/s
CMD_SCALE = np.array([V_MAX, V_MAX, V_MAX, YAW_RATE_MAX])

CMD_DIM = 4
MEMBER_DIMS = (perception.LATENT_DIM, 64, 64, 2 * CMD_DIM)  # means | log-vars
BASELINE_DIMS = (perception.LATENT_DIM, 64, 64, CMD_DIM)
DEFAULT_ENSEMBLE_SIZE = 5


@dataclass(frozen=True)
class VelocityCommand:
    """Body-frame velocity setpoint plus yaw rate."""

    vx: float
    vy: float
    vz: float
    yaw_rate: float

    def __post_init__(self):
        if not all(np.isfinite(v) for v in self.as_array()):
            raise ValueError("velocity command must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.vz, self.yaw_rate])

    def clamped(self) -> "VelocityCommand":
        v = np.clip(self.as_array(), -CMD_SCALE, CMD_SCALE)
        return VelocityCommand(*v)

    @staticmethod
    def from_array(a) -> "VelocityCommand":
        a = np.asarray(a, dtype=np.float64)
        if a.shape != (CMD_DIM,):
            raise ValueError(f"command must have {CMD_DIM} entries")
        return VelocityCommand(float(a[0]), float(a[1]), float(a[2]), float(a[3]))


@dataclass(frozen=True)
class GaussianPrediction:
    """Per-dimension Gaussian over a command vector."""

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        var = np.asarray(self.variance, dtype=np.float64)
        if mean.shape != var.shape or mean.ndim != 1:
            raise ValueError("mean and variance must be 1-D with equal length")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(var))):
            raise ValueError("prediction must be finite")
        if np.any(var <= 0.0):
            raise ValueError("variance entries must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", var)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)


@dataclass(frozen=True)
class EnsembleParams:
    members: tuple

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ValueError("ensemble needs at least one member")
        dims = members[0].layer_dims
        for m in members:
            if not isinstance(m, Mlp) or m.layer_dims != dims:
                raise ValueError("ensemble members must share one architecture")
        if dims[-1] % 2 != 0:
            raise ValueError("member output width must be even (means | log-vars)")
        object.__setattr__(self, "members", members)

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def cmd_dim(self) -> int:
        return self.members[0].out_dim // 2


def _relu_stack(dims) -> tuple:
    return ("relu",) * (len(dims) - 2) + ("identity",)


def init_member(rng: np.random.Generator) -> Mlp:
    return nn.init_mlp(MEMBER_DIMS, _relu_stack(MEMBER_DIMS), rng)


def init_baseline(rng: np.random.Generator) -> Mlp:
    return nn.init_mlp(BASELINE_DIMS, _relu_stack(BASELINE_DIMS), rng)


def _forward_heads(member: Mlp, z: np.ndarray):
    out = nn.forward(member, z)
    d = member.out_dim // 2
    mu = out[..., :d]
    s = np.clip(out[..., d:], LOGVAR_MIN, LOGVAR_MAX)
    return mu, np.exp(s)


def policy_forward(member: Mlp, z) -> GaussianPrediction:
    """One member's command Gaussian (normalized units) for one latent."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (member.in_dim,):
        raise ValueError(f"latent must have shape ({member.in_dim},)")
    mu, var = _forward_heads(member, z.reshape(1, -1))
    return GaussianPrediction(mu[0], var[0])


def policy_forward_batch(member: Mlp, z: np.ndarray):
    """(means, variances) for a batch of latents, normalized units."""
    return _forward_heads(member, z)


def denormalize(pred: GaussianPrediction) -> GaussianPrediction:
    """Map a normalized prediction to physical units (mean*s, var*s^2)."""
    return GaussianPrediction(pred.mean * CMD_SCALE, pred.variance * CMD_SCALE ** 2)


def normalize_command(cmd: VelocityCommand) -> np.ndarray:
    return cmd.as_array() / CMD_SCALE


def heteroscedastic_nll(pred: GaussianPrediction, target: VelocityCommand) -> float:
    """Mean-per-dimension Gaussian NLL, additive constant omitted."""
    y = target.as_array()
    diff = y - pred.mean
    return float(np.mean(0.5 * np.log(pred.variance) + diff * diff / (2.0 * pred.variance)))


def baseline_forward(net: Mlp, z) -> VelocityCommand:
    """Deterministic baseline command (physical units) for one latent."""
    if net.out_dim != CMD_DIM:
        raise ValueError(f"baseline net must emit {CMD_DIM} values, got {net.out_dim}")
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (net.in_dim,):
        raise ValueError(f"latent must have shape ({net.in_dim},)")
    out = nn.forward(net, z.reshape(1, -1))[0]
    return VelocityCommand.from_array(out * CMD_SCALE)


# ---------------------------------------------------------------------------
# Training


@dataclass(frozen=True)
class PolicyTrainConfig:
    epochs: int = 40
    batch_size: int = 64
    learning_rate: float = 1e-3
    ensemble_size: int = DEFAULT_ENSEMBLE_SIZE
    min_records: int = 1000


@dataclass(frozen=True)
class TrainReport:
    """Per-epoch train losses plus held-out loss before/after training."""

    epoch_loss: tuple
    heldout_initial: float
    heldout_final: float


def _encode_cached(encoder: CmvaeParams, obs: np.ndarray):
    # The encoder is frozen, so its outputs per record are constants of the
    # run; computing them once keeps z ~ mu + sigma*eps semantics while
    # skipping the 256-wide forward in every epoch.
    return perception.encode_batch(encoder, np.asarray(obs, dtype=np.float64))


def _validate_policy_dataset(obs, cmd, min_records: int):
    obs = np.asarray(obs, dtype=np.float64)
    cmd = np.asarray(cmd, dtype=np.float64)
    if obs.ndim != 2 or cmd.shape != (obs.shape[0], CMD_DIM):
        raise ValueError("dataset must pair observations with 4-wide commands")
    if obs.shape[0] < min_records:
        raise ValueError(
            f"policy training needs >= {min_records} records, got {obs.shape[0]}: "
            "behavior cloning from fewer expert labels does not generalize"
        )
    return obs, cmd


def _heldout_loss(net: Mlp, mu, sig, y, loss: str, rng: np.random.Generator) -> float:
    z = mu + sig * rng.standard_normal(mu.shape)
    value, _ = nn.loss_and_grads(net, (z, y), loss)
    return value


def _train_single(net: Mlp, mu, sig, y, loss: str, config: PolicyTrainConfig,
                  rng: np.random.Generator):
    train_idx = np.flatnonzero(~perception.heldout_mask(mu.shape[0]))
    held_idx = np.flatnonzero(perception.heldout_mask(mu.shape[0]))
    state = nn.adam_init(net, config.learning_rate)
    heldout_initial = _heldout_loss(net, mu[held_idx], sig[held_idx], y[held_idx], loss, rng)

    epoch_rows = []
    for epoch in range(config.epochs):
        order = train_idx[rng.permutation(train_idx.size)]
        total = 0.0
        n_batches = 0
        for start in range(0, order.size, config.batch_size):
            batch = order[start:start + config.batch_size]
            eps = rng.standard_normal((batch.size, mu.shape[1]))
            z = mu[batch] + sig[batch] * eps
            value, grads = nn.loss_and_grads(net, (z, y[batch]), loss)
            net, state = nn.adam_step(net, grads, state)
            total += value
            n_batches += 1
        epoch_rows.append((epoch, total / n_batches))

    net = nn.quantize_f32(net)
    heldout_final = _heldout_loss(net, mu[held_idx], sig[held_idx], y[held_idx], loss, rng)
    return net, TrainReport(tuple(epoch_rows), heldout_initial, heldout_final)


def train_ensemble(encoder: CmvaeParams, dataset, m: int, config: PolicyTrainConfig,
                   rng: np.random.Generator):
    """Train M heteroscedastic members independently; encoder stays frozen.

    Each member gets its own child rng stream (initialization, shuffles,
    latent noise), so the result does not depend on training order.
    Returns (EnsembleParams, tuple of TrainReport).
    """
    if m < 1:
        raise ValueError("ensemble size must be >= 1")
    obs, cmd = dataset
    obs, cmd = _validate_policy_dataset(obs, cmd, config.min_records)
    mu, sig = _encode_cached(encoder, obs)
    y = cmd / CMD_SCALE

    members = []
    reports = []
    for child in rng.spawn(m):
        net = init_member(child)
        net, report = _train_single(net, mu, sig, y, "heteroscedastic_nll", config, child)
        members.append(net)
        reports.append(report)
    return EnsembleParams(tuple(members)), tuple(reports)


def train_baseline_bc(encoder: CmvaeParams, dataset, config: PolicyTrainConfig,
                      rng: np.random.Generator):
    """Train the deterministic baseline (MSE on the mean); encoder frozen."""
    obs, cmd = dataset
    obs, cmd = _validate_policy_dataset(obs, cmd, config.min_records)
    mu, sig = _encode_cached(encoder, obs)
    y = cmd / CMD_SCALE
    # One latent sample per example per epoch, same as the ensemble members.
    net = init_baseline(rng)
    return _train_single(net, mu, sig, y, "mse", config, rng)
