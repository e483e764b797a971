"""Input-uncertainty-aware gate navigation at desk scale.

A cross-modal VAE compresses synthetic gate-camera frames into a latent
Gaussian; an ensemble of heteroscedastic behavior-cloned policies maps
latent samples to velocity commands; nested Monte-Carlo aggregation
turns both sources of randomness into one predictive command
distribution with an aleatoric/epistemic split.  A small gate-track
simulator closes the loop and a CLI reproduces the gates-traversed
table.
"""

from .geometry import GateRelativePose
from .nn import Mlp
from .perception import CmvaeParams, LatentDistribution
from .policy import EnsembleParams, GaussianPrediction, VelocityCommand
from .predictive import PredictiveResult, mixture_moments, predict_stochastic_input
from .rng import stream
from .sim import DroneState, EpisodeResult, Gate, TrackConfig

__version__ = "0.1.0"

__all__ = [
    "CmvaeParams",
    "DroneState",
    "EnsembleParams",
    "EpisodeResult",
    "Gate",
    "GateRelativePose",
    "GaussianPrediction",
    "LatentDistribution",
    "Mlp",
    "PredictiveResult",
    "TrackConfig",
    "VelocityCommand",
    "mixture_moments",
    "predict_stochastic_input",
    "stream",
    "__version__",
]
