"""Predictive command distribution of an ensemble under a stochastic latent.

The input image induces a Gaussian over the latent; each ensemble member
maps a latent sample to a command Gaussian.  Sampling N latents and
evaluating all M members yields a uniform mixture of N*M Gaussians, which
is collapsed by moment matching: first per latent sample across members,
then across latent samples.  Because moment matching is exact for uniform
mixtures, the two-stage collapse equals the flat one, and the total
variance splits into aleatoric (mean member variance) and epistemic
(variance of member means) parts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import perception, policy
from .perception import CmvaeParams
from .policy import CMD_SCALE, EnsembleParams, GaussianPrediction, VelocityCommand


def _stack_components(components):
    comps = list(components)
    if not comps:
        raise ValueError("mixture needs at least one component")
    means = np.stack([c.mean for c in comps])
    variances = np.stack([c.variance for c in comps])
    return means, variances


def _moments(means: np.ndarray, variances: np.ndarray, axis: int = 0):
    """Exact mean/variance of a uniform Gaussian mixture along one axis.

    The centered spread term equals mean(mu^2) - mean(mu)^2 but does not
    cancel catastrophically, so the variance is non-negative by
    construction (floored at 0 against rounding anyway).
    """
    mu = means.mean(axis=axis)
    spread = ((means - np.expand_dims(mu, axis)) ** 2).mean(axis=axis)
    var = np.maximum(variances.mean(axis=axis) + spread, 0.0)
    return mu, var


def mixture_moments(components) -> GaussianPrediction:
    """Collapse uniformly weighted Gaussian components to one Gaussian."""
    means, variances = _stack_components(components)
    mu, var = _moments(means, variances)
    return GaussianPrediction(mu, var)


def decompose_uncertainty(components):
    """(aleatoric_var, epistemic_var) over a flat component set.

    Aleatoric is the mean of member variances, epistemic the variance of
    member means; their sum is the total mixture variance.
    """
    means, variances = _stack_components(components)
    mu = means.mean(axis=0)
    aleatoric = variances.mean(axis=0)
    epistemic = ((means - mu) ** 2).mean(axis=0)
    return aleatoric, epistemic


@dataclass(frozen=True)
class PredictiveResult:
    """Moment-matched command distribution with its uncertainty split."""

    mean: np.ndarray
    std: np.ndarray
    aleatoric_var: np.ndarray
    epistemic_var: np.ndarray
    n_latent: int
    n_members: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        alea = np.asarray(self.aleatoric_var, dtype=np.float64)
        epi = np.asarray(self.epistemic_var, dtype=np.float64)
        if not (mean.shape == std.shape == alea.shape == epi.shape) or mean.ndim != 1:
            raise ValueError("result fields must be 1-D with equal length")
        for a in (mean, std, alea, epi):
            if not np.all(np.isfinite(a)):
                raise ValueError("result fields must be finite")
        if np.any(std < 0.0) or np.any(alea < 0.0) or np.any(epi < 0.0):
            raise ValueError("uncertainties must be non-negative")
        if np.max(np.abs(std ** 2 - (alea + epi))) > 1e-9:
            raise ValueError("total variance must equal aleatoric + epistemic")
        if self.n_latent < 1 or self.n_members < 1:
            raise ValueError("sample and member counts must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)
        object.__setattr__(self, "aleatoric_var", alea)
        object.__setattr__(self, "epistemic_var", epi)

    def command(self) -> VelocityCommand:
        return VelocityCommand.from_array(self.mean)


def predict_stochastic_input(encoder: CmvaeParams, ensemble: EnsembleParams, obs,
                             n_latent: int, rng: np.random.Generator) -> PredictiveResult:
    """Aggregate member predictions over n_latent samples of the latent.

    Physical-unit components: member outputs are denormalized before any
    aggregation so means scale by the command limits and variances by
    their squares.
    """
    if n_latent < 1:
        raise ValueError("need at least one latent sample")
    dist = perception.encode(encoder, obs)
    zs = perception.reparameterize_batch(dist, rng, n_latent)

    # (M, N, D) member outputs; one batched forward per member.
    member_means = np.empty((ensemble.size, n_latent, ensemble.cmd_dim))
    member_vars = np.empty_like(member_means)
    for k, member in enumerate(ensemble.members):
        mu, var = policy.policy_forward_batch(member, zs)
        member_means[k] = mu * CMD_SCALE
        member_vars[k] = var * CMD_SCALE ** 2

    # Inner collapse across members for each latent, then outer collapse
    # across latents; exact for uniform mixtures, so this equals the flat
    # N*M collapse.
    inner_mu, inner_var = _moments(member_means, member_vars, axis=0)
    total_mu, total_var = _moments(inner_mu, inner_var, axis=0)

    flat_means = member_means.reshape(-1, ensemble.cmd_dim)
    flat_vars = member_vars.reshape(-1, ensemble.cmd_dim)
    aleatoric = flat_vars.mean(axis=0)
    epistemic = ((flat_means - flat_means.mean(axis=0)) ** 2).mean(axis=0)

    return PredictiveResult(
        mean=total_mu,
        std=np.sqrt(np.maximum(aleatoric + epistemic, 0.0)),
        aleatoric_var=aleatoric,
        epistemic_var=epistemic,
        n_latent=n_latent,
        n_members=ensemble.size,
    )


def baseline_predict(encoder: CmvaeParams, net, obs, rng: np.random.Generator) -> VelocityCommand:
    """Deterministic-baseline command from a single latent sample."""
    dist = perception.encode(encoder, obs)
    z = perception.reparameterize_batch(dist, rng, 1)[0]
    return policy.baseline_forward(net, z)
