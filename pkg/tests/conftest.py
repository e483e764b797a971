"""Shared numeric helpers for the test suite."""

from __future__ import annotations

import numpy as np

from uqnav import kernels, nn

FD_EPS = 1e-5
FD_TOL = 1e-5

ACCEPTANCE_LINES = []


def acceptance_line(line: str) -> None:
    """Collect a one-line criterion result for the terminal summary."""
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Worst-case relative disagreement with a small absolute floor."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    f = np.asarray(numeric, dtype=np.float64).ravel()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-4)
    return float(np.max(np.abs(a - f) / denom))


def flatten_mlp(mlp: nn.Mlp) -> np.ndarray:
    parts = [w.ravel() for w in mlp.weights] + [b.ravel() for b in mlp.biases]
    return np.concatenate(parts)


def unflatten_mlp(vec: np.ndarray, template: nn.Mlp) -> nn.Mlp:
    weights = []
    biases = []
    at = 0
    for w in template.weights:
        weights.append(vec[at:at + w.size].reshape(w.shape))
        at += w.size
    for b in template.biases:
        biases.append(vec[at:at + b.size].copy())
        at += b.size
    return nn.Mlp(tuple(weights), tuple(biases), template.activations)


def fd_gradient(f, x: np.ndarray, eps: float = FD_EPS) -> np.ndarray:
    """Central differences of a scalar function over a flat vector."""
    g = np.empty_like(x)
    for i in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi[i] += eps
        lo[i] -= eps
        g[i] = (f(hi) - f(lo)) / (2.0 * eps)
    return g


def grads_to_vec(grads: nn.Grads) -> np.ndarray:
    parts = [w.ravel() for w in grads.weights] + [b.ravel() for b in grads.biases]
    return np.concatenate(parts)


def min_preactivation(mlp: nn.Mlp, x: np.ndarray) -> float:
    """Smallest |pre-activation| over all relu units for the given batch.

    Finite differencing near a relu kink flips the active side and breaks
    the comparison even though the analytic gradient is fine; callers
    redraw networks until every relu unit sits clear of zero.
    """
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    worst = np.inf
    for w, b, act in zip(mlp.weights, mlp.biases, mlp.activations):
        pre = kernels.affine(a, w, b)
        if act == "relu":
            worst = min(worst, float(np.min(np.abs(pre))))
        a = kernels.activate(pre, nn.ACT_CODE[act])
    return worst


def draw_safe_mlp(dims, acts, rng: np.random.Generator, probe: np.ndarray,
                  margin: float = 1e-3, tries: int = 200) -> nn.Mlp:
    for _ in range(tries):
        mlp = nn.init_mlp(dims, acts, rng)
        if min_preactivation(mlp, probe) >= margin:
            return mlp
    raise AssertionError("could not draw a relu-safe network")
