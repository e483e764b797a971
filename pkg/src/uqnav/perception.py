"""Cross-modal VAE perception.

One encoder maps a 16x16 gate-camera frame to a diagonal-Gaussian latent;
two heads recover the modalities from latent samples: an image decoder
(logistic output) and a gate-pose regressor (softplus range, scaled-tanh
angles).  Training minimizes image MSE + pose MSE + a small KL pull
toward the standard-normal prior, with one reparameterized sample per
example per batch.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

from . import nn
from .geometry import GateRelativePose
from .nn import LOGVAR_MAX, LOGVAR_MIN, Mlp

OBS_DIM = 256  # 16x16 grayscale, flattened row-major
LATENT_DIM = 10
POSE_DIM = 4

ENCODER_DIMS = (OBS_DIM, 128, 64, 2 * LATENT_DIM)
DECODER_DIMS = (LATENT_DIM, 64, 128, OBS_DIM)
POSE_HEAD_DIMS = (LATENT_DIM, 32, POSE_DIM)
def _relu_stack(dims) -> tuple:
    return ("relu",) * (len(dims) - 2) + ("identity",)

POSE_ANGLE_SCALES = np.array([math.pi, math.pi / 2, math.pi])  # theta, phi, psi

W_POSE = 1.0
KL_WEIGHT = 1e-3


def validate_observation(obs, obs_dim: int = OBS_DIM) -> np.ndarray:
    x = np.asarray(obs, dtype=np.float64)
    if x.shape != (obs_dim,):
        raise ValueError(f"observation must have shape ({obs_dim},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("observation has non-finite pixels")
    if x.min() < 0.0 or x.max() > 1.0:
        raise ValueError("observation pixels must lie in [0, 1]")
    return x


@dataclass(frozen=True)
class LatentDistribution:
    """Diagonal Gaussian over the latent space."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.shape != std.shape or mean.ndim != 1:
            raise ValueError("mean and std must be 1-D with equal length")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(std))):
            raise ValueError("latent distribution must be finite")
        if np.any(std < 0.0):
            raise ValueError("std entries must be non-negative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


@dataclass(frozen=True)
class CmvaeParams:
    """Encoder + image decoder + pose head parameter bundle.

    The encoder emits [mean | raw log-variance] halves; the latent width
    is encoder.out_dim // 2 and must match both heads' input width.
    """

    encoder: Mlp
    image_decoder: Mlp
    pose_head: Mlp

    def __post_init__(self):
        latent = self.encoder.out_dim // 2
        if self.encoder.out_dim != 2 * latent or latent == 0:
            raise ValueError("encoder output width must be even and positive")
        if self.image_decoder.in_dim != latent or self.pose_head.in_dim != latent:
            raise ValueError("head input widths must equal the latent width")
        if self.image_decoder.out_dim != self.encoder.in_dim:
            raise ValueError("image decoder must reconstruct the observation width")
        if self.pose_head.out_dim != POSE_DIM:
            raise ValueError(f"pose head must emit {POSE_DIM} values")

    @property
    def latent_dim(self) -> int:
        return self.encoder.out_dim // 2

    @property
    def obs_dim(self) -> int:
        return self.encoder.in_dim


def init_cmvae(rng: np.random.Generator) -> CmvaeParams:
    return CmvaeParams(
        encoder=nn.init_mlp(ENCODER_DIMS, _relu_stack(ENCODER_DIMS), rng),
        image_decoder=nn.init_mlp(DECODER_DIMS, _relu_stack(DECODER_DIMS), rng),
        pose_head=nn.init_mlp(POSE_HEAD_DIMS, _relu_stack(POSE_HEAD_DIMS), rng),
    )


def encode_batch(params: CmvaeParams, obs: np.ndarray):
    """Encode a batch of observations; returns (means, stds) arrays."""
    h = nn.forward(params.encoder, obs)
    latent = params.latent_dim
    mu = h[:, :latent]
    s = np.clip(h[:, latent:], LOGVAR_MIN, LOGVAR_MAX)
    return mu, np.exp(0.5 * s)


def encode(params: CmvaeParams, obs) -> LatentDistribution:
    x = validate_observation(obs, params.obs_dim)
    mu, std = encode_batch(params, x.reshape(1, -1))
    return LatentDistribution(mu[0], std[0])


def reparameterize_batch(dist: LatentDistribution, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw n latent samples z = mean + std * eps, eps ~ N(0, I)."""
    if n < 1:
        raise ValueError("need at least one sample")
    eps = rng.standard_normal((n, dist.mean.shape[0]))
    return dist.mean + dist.std * eps


def reparameterize_sample(dist: LatentDistribution, rng: np.random.Generator) -> np.ndarray:
    return reparameterize_batch(dist, rng, 1)[0]


def kl_to_standard_normal(dist: LatentDistribution) -> float:
    """KL(N(mean, std^2) || N(0, I)) for a diagonal Gaussian."""
    if np.any(dist.std <= 0.0):
        raise ValueError("KL needs strictly positive std")
    log_var = 2.0 * np.log(dist.std)
    kl = 0.5 * float(np.sum(dist.mean ** 2 + dist.std ** 2 - log_var - 1.0))
    return max(kl, 0.0)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def decode_image(params: CmvaeParams, z) -> np.ndarray:
    """Reconstruct an observation from a latent sample; pixels in [0, 1]."""
    return _sigmoid(nn.forward(params.image_decoder, z))


def _squash_pose(q: np.ndarray) -> np.ndarray:
    out = np.empty_like(q)
    out[..., 0] = np.logaddexp(0.0, q[..., 0])  # softplus keeps r >= 0
    out[..., 1:] = POSE_ANGLE_SCALES * np.tanh(q[..., 1:])
    return out


def estimate_gate_pose(params: CmvaeParams, z) -> GateRelativePose:
    p = _squash_pose(nn.forward(params.pose_head, z))
    return GateRelativePose(r=float(p[0]), theta=float(p[1]), phi=float(p[2]), psi=float(p[3]))


@dataclass(frozen=True)
class LossParts:
    total: float
    image_mse: float
    pose_mse: float
    kl: float


@dataclass(frozen=True)
class CmvaeGrads:
    encoder: nn.Grads
    image_decoder: nn.Grads
    pose_head: nn.Grads


def _composite_forward(params: CmvaeParams, obs, pose, eps):
    x = np.asarray(obs, dtype=np.float64)
    p_true = np.asarray(pose, dtype=np.float64)
    e = np.asarray(eps, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("batch must be non-empty and 2-D")
    if p_true.shape != (x.shape[0], POSE_DIM) or e.shape != (x.shape[0], params.latent_dim):
        raise ValueError("pose/noise batch shapes do not match observations")

    h, enc_tape = nn.forward_tape(params.encoder, x)
    latent = params.latent_dim
    mu = h[:, :latent]
    raw = h[:, latent:]
    s = np.clip(raw, LOGVAR_MIN, LOGVAR_MAX)
    sig = np.exp(0.5 * s)
    z = mu + sig * e

    g, dec_tape = nn.forward_tape(params.image_decoder, z)
    img = _sigmoid(g)
    img_diff = img - x
    image_mse = float(np.mean(img_diff * img_diff))

    q, pose_tape = nn.forward_tape(params.pose_head, z)
    p_hat = _squash_pose(q)
    pose_diff = p_hat - p_true
    pose_mse = float(np.mean(pose_diff * pose_diff))

    kl = float(np.mean(0.5 * np.sum(mu * mu + sig * sig - s - 1.0, axis=1)))
    total = image_mse + W_POSE * pose_mse + KL_WEIGHT * kl
    parts = LossParts(total, image_mse, pose_mse, kl)
    state = (x, e, enc_tape, mu, raw, s, sig, z, dec_tape, img, img_diff,
             pose_tape, q, p_hat, pose_diff)
    return parts, state


def composite_loss(params: CmvaeParams, obs, pose, eps) -> LossParts:
    parts, _ = _composite_forward(params, obs, pose, eps)
    return parts


def cmvae_loss(params: CmvaeParams, obs, pose, rng: np.random.Generator) -> LossParts:
    """Composite loss with one fresh reparameterized sample per example."""
    x = np.asarray(obs, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("batch must be non-empty and 2-D")
    eps = rng.standard_normal((x.shape[0], params.latent_dim))
    return composite_loss(params, x, pose, eps)


def composite_loss_grads(params: CmvaeParams, obs, pose, eps):
    """Loss parts plus gradients for all three networks (noise held fixed)."""
    parts, state = _composite_forward(params, obs, pose, eps)
    (x, e, enc_tape, mu, raw, s, sig, z, dec_tape, img, img_diff,
     pose_tape, q, p_hat, pose_diff) = state
    batch = x.shape[0]

    dg = (2.0 / img_diff.size) * img_diff * img * (1.0 - img)
    dec_grads, dz_dec = nn.backward(params.image_decoder, dec_tape, dg)

    dp = (2.0 * W_POSE / pose_diff.size) * pose_diff
    dq = np.empty_like(dp)
    dq[:, 0] = dp[:, 0] * _sigmoid(q[:, 0])
    t = p_hat[:, 1:] / POSE_ANGLE_SCALES  # tanh(q) for the angle heads
    dq[:, 1:] = dp[:, 1:] * POSE_ANGLE_SCALES * (1.0 - t * t)
    pose_grads, dz_pose = nn.backward(params.pose_head, pose_tape, dq)

    dz = dz_dec + dz_pose
    dmu = dz + (KL_WEIGHT / batch) * mu
    ds = dz * e * 0.5 * sig + (KL_WEIGHT / batch) * 0.5 * (sig * sig - 1.0)
    ds = np.where((raw >= LOGVAR_MIN) & (raw <= LOGVAR_MAX), ds, 0.0)
    dh = np.concatenate([dmu, ds], axis=1)
    enc_grads, _ = nn.backward(params.encoder, enc_tape, dh)

    return parts, CmvaeGrads(enc_grads, dec_grads, pose_grads)


# ---------------------------------------------------------------------------
# Training


def heldout_mask(n: int) -> np.ndarray:
    """Deterministic ~10% held-out split keyed on the record index."""
    return np.array(
        [zlib.crc32(i.to_bytes(8, "little")) % 10 == 0 for i in range(n)], dtype=bool
    )


@dataclass(frozen=True)
class CmvaeTrainConfig:
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 1e-3
    min_records: int = 1000


def train_cmvae(dataset, config: CmvaeTrainConfig, rng: np.random.Generator):
    """Train on (observations, poses); returns (CmvaeParams, loss log rows).

    Log rows are (epoch, total, image_mse, pose_mse, kl) epoch means over
    the training split.  Deterministic for a fixed rng stream; the
    returned params sit on the float32 checkpoint lattice.
    """
    obs, pose = dataset
    obs = np.asarray(obs, dtype=np.float64)
    pose = np.asarray(pose, dtype=np.float64)
    n = obs.shape[0]
    if n < config.min_records:
        raise ValueError(
            f"cm-vae training needs >= {config.min_records} records, got {n}: "
            "smaller sets overfit the pose head before the latent is usable"
        )

    params = init_cmvae(rng)
    train_idx = np.flatnonzero(~heldout_mask(n))
    states = {
        "encoder": nn.adam_init(params.encoder, config.learning_rate),
        "image_decoder": nn.adam_init(params.image_decoder, config.learning_rate),
        "pose_head": nn.adam_init(params.pose_head, config.learning_rate),
    }

    log_rows = []
    for epoch in range(config.epochs):
        order = train_idx[rng.permutation(train_idx.size)]
        sums = np.zeros(4)
        n_batches = 0
        for start in range(0, order.size, config.batch_size):
            batch = order[start:start + config.batch_size]
            eps = rng.standard_normal((batch.size, params.latent_dim))
            parts, grads = composite_loss_grads(params, obs[batch], pose[batch], eps)
            enc, states["encoder"] = nn.adam_step(params.encoder, grads.encoder, states["encoder"])
            dec, states["image_decoder"] = nn.adam_step(
                params.image_decoder, grads.image_decoder, states["image_decoder"])
            head, states["pose_head"] = nn.adam_step(
                params.pose_head, grads.pose_head, states["pose_head"])
            params = CmvaeParams(enc, dec, head)
            sums += (parts.total, parts.image_mse, parts.pose_mse, parts.kl)
            n_batches += 1
        mean = sums / n_batches
        log_rows.append((epoch, mean[0], mean[1], mean[2], mean[3]))

    params = CmvaeParams(
        nn.quantize_f32(params.encoder),
        nn.quantize_f32(params.image_decoder),
        nn.quantize_f32(params.pose_head),
    )
    return params, log_rows


def pose_error_metrics(params: CmvaeParams, obs: np.ndarray, pose: np.ndarray):
    """Mean 3-D gate-position error of the pose head vs. mean gate distance.

    The (r, theta, phi) triplets on both sides are converted to body-frame
    points; psi is ignored by this metric.
    """
    mu, _ = encode_batch(params, np.asarray(obs, dtype=np.float64))
    q = nn.forward(params.pose_head, mu)
    p_hat = _squash_pose(q)
    true = np.asarray(pose, dtype=np.float64)

    def to_xyz(p):
        cp = np.cos(p[:, 2])
        return p[:, 0:1] * np.stack(
            [cp * np.cos(p[:, 1]), cp * np.sin(p[:, 1]), np.sin(p[:, 2])], axis=1)

    err = np.linalg.norm(to_xyz(p_hat) - to_xyz(true), axis=1)
    return float(err.mean()), float(true[:, 0].mean())


def write_loss_log(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("epoch,total,image_mse,pose_mse,kl\n")
        for epoch, total, image, pose, kl in rows:
            f.write(f"{epoch},{total:.9g},{image:.9g},{pose:.9g},{kl:.9g}\n")
