"""Timing comparison of the compiled and pure-python kernel backends.

Times four workloads that dominate the pipeline: a full training step of
the perception model, small-batch policy inference, one aggregated
prediction from pixels, and a complete closed-loop episode.  Run with

    python3 benchmarks/compare_backends.py [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from uqnav import kernels, nn, perception, policy, predictive, sim
from uqnav.rng import stream


def _median_time(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def bench_cmvae_step():
    rng = stream(0, "bench", "cmvae")
    params = perception.init_cmvae(rng)
    obs = rng.random((64, perception.OBS_DIM))
    pose = rng.standard_normal((64, perception.POSE_DIM))
    eps = rng.standard_normal((64, perception.LATENT_DIM))

    def step():
        perception.composite_loss_grads(params, obs, pose, eps)

    return step


def bench_policy_inference():
    rng = stream(0, "bench", "policy")
    member = policy.init_member(rng)
    z = rng.standard_normal((8, perception.LATENT_DIM))

    def step():
        policy.policy_forward_batch(member, z)

    return step


def bench_policy_single():
    rng = stream(0, "bench", "single")
    member = policy.init_member(rng)
    z = rng.standard_normal(perception.LATENT_DIM)

    def step():
        policy.policy_forward(member, z)

    return step


def bench_predict():
    rng = stream(0, "bench", "predict")
    encoder = perception.init_cmvae(rng)
    members = tuple(policy.init_member(rng) for _ in range(5))
    ensemble = policy.EnsembleParams(members)
    obs = stream(0, "bench", "obs").uniform(0.0, 1.0, perception.OBS_DIM)

    def step():
        predictive.predict_stochastic_input(encoder, ensemble, obs, 5,
                                            stream(0, "bench", "z"))

    return step


def bench_episode():
    track = sim.generate_track(sim.TrackConfig(), stream(0, "bench", "track"))
    config = sim.EpisodeConfig(max_gates=8)

    def step():
        sim.run_episode(sim.expert_policy, track, config,
                        stream(0, "bench", "noise"))

    return step


WORKLOADS = (
    ("cm-vae train step (batch 64)", bench_cmvae_step),
    ("policy batch inference (8 latents)", bench_policy_inference),
    ("policy single-latent forward", bench_policy_single),
    ("predict from pixels (N=5, M=5)", bench_predict),
    ("expert episode (8 gates)", bench_episode),
)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=30,
                        help="timing repeats per workload (median reported)")
    args = parser.parse_args()

    backends = kernels.AVAILABLE
    if "compiled" not in backends:
        print("note: compiled extension not built; timing python only")

    print(f"{'workload':<38} " + " ".join(f"{b:>12}" for b in backends)
          + ("      speedup" if len(backends) == 2 else ""))
    for label, make in WORKLOADS:
        row = [f"{label:<38} "]
        results = {}
        for backend in backends:
            kernels.use(backend)
            fn = make()  # rebuild per backend so setup stays comparable
            fn()  # warm up
            results[backend] = _median_time(fn, args.repeats)
            row.append(f"{results[backend] * 1e3:>10.3f}ms")
        if len(backends) == 2:
            row.append(f"{results['python'] / results['compiled']:>10.2f}x")
        print(" ".join(row))
    kernels.use("compiled" if "compiled" in backends else "python")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
