"""Pipeline orchestration and the results table.

Stages write their artifacts into one output directory: datasets
(cmvae.uqd, policy.uqd), checkpoints (cmvae.uqp, member_<i>.uqp,
baseline.uqp), loss logs, evaluation CSVs, and manifest.json with SHA-256
checksums per stage.  Everything is keyed off one run seed, and a fixed
seed reproduces every artifact byte for byte.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint, dataset, perception, policy, predictive
from .perception import CmvaeParams, CmvaeTrainConfig
from .policy import PolicyTrainConfig
from .rng import stream
from .sim import EpisodeConfig, TrackConfig, generate_track, run_episode

DATASET_CMVAE = "cmvae.uqd"
DATASET_POLICY = "policy.uqd"
CKPT_CMVAE = "cmvae.uqp"
CKPT_BASELINE = "baseline.uqp"
LOG_CMVAE = "cmvae_loss.csv"
LOG_POLICY = "policy_loss.csv"
LOG_BASELINE = "baseline_loss.csv"
RESULTS_CSV = "results.csv"
EPISODES_CSV = "episodes.csv"
MANIFEST = "manifest.json"

DEFAULT_MODELS = ("BC", "BCE-UI1", "BCE-UI3", "BCE-UI5")
DEFAULT_NOISE_LEVELS = ((0.0, 0.0), (1.0, 2.0), (1.5, 2.5))
VERDICT_CELL = (1.5, 2.5)

_UI_PATTERN = re.compile(r"^BCE-UI([1-9]\d*)$")


class ConfigError(ValueError):
    """Invalid run configuration (bad JSON, unknown keys, bad values)."""


class ArtifactMissingError(FileNotFoundError):
    """A required dataset or checkpoint has not been produced yet."""


def member_checkpoint(i: int) -> str:
    return f"member_{i}.uqp"


def _latent_samples(model: str):
    """None for the baseline, N for BCE-UI<N>."""
    if model == "BC":
        return None
    m = _UI_PATTERN.match(model)
    if m is None:
        raise ConfigError(f"unknown model name {model!r} (expected BC or BCE-UI<n>)")
    return int(m.group(1))


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    cmvae_records: int = 20000
    policy_records: int = 8000
    cmvae: CmvaeTrainConfig = CmvaeTrainConfig()
    policy: PolicyTrainConfig = PolicyTrainConfig()
    noise_levels: tuple = DEFAULT_NOISE_LEVELS
    episodes_per_cell: int = 20
    models: tuple = DEFAULT_MODELS

    def __post_init__(self):
        if self.cmvae_records < 1 or self.policy_records < 1 or self.episodes_per_cell < 1:
            raise ConfigError("record and episode counts must be positive")
        levels = tuple((float(r), float(h)) for r, h in self.noise_levels)
        if not levels or any(r < 0 or h < 0 for r, h in levels):
            raise ConfigError("noise levels must be non-negative (radius, height) pairs")
        models = tuple(self.models)
        if not models:
            raise ConfigError("model roster must not be empty")
        for name in models:
            _latent_samples(name)
        object.__setattr__(self, "noise_levels", levels)
        object.__setattr__(self, "models", models)


_NESTED = {"cmvae": CmvaeTrainConfig, "policy": PolicyTrainConfig}


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - fields
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in _NESTED:
            cls = _NESTED[key]
            sub_fields = {f.name for f in dataclasses.fields(cls)}
            if not isinstance(value, dict):
                raise ConfigError(f"config section {key!r} must be an object")
            bad = set(value) - sub_fields
            if bad:
                raise ConfigError(f"unknown keys in {key!r}: {sorted(bad)}")
            kwargs[key] = cls(**value)
        elif key in ("noise_levels", "models"):
            kwargs[key] = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        else:
            kwargs[key] = value
    try:
        return RunConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(data)


# ---------------------------------------------------------------------------
# Artifact plumbing


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def read_manifest(out: Path) -> dict:
    path = Path(out) / MANIFEST
    if not path.exists():
        return {}
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _update_manifest(out: Path, seed: int, stage: str, entries: dict) -> None:
    manifest = read_manifest(out)
    manifest["seed"] = seed
    manifest.setdefault("stages", {})[stage] = entries
    with open(Path(out) / MANIFEST, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _require(path: Path, what: str, produced_by: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise ArtifactMissingError(
            f"{what} missing at {path}; run `uqnav {produced_by}` first")
    return path


# ---------------------------------------------------------------------------
# Stages


def stage_gen_data(config: RunConfig, out: Path) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = (
        (DATASET_CMVAE, config.cmvae_records, "cmvae"),
        (DATASET_POLICY, config.policy_records, "policy"),
    )
    shas = {}
    for name, count, tag in jobs:
        obs, pose, cmd = dataset.generate_records(count, stream(config.seed, "data", tag))
        dataset.write_dataset(out / name, obs, pose, cmd)
        shas[name] = _sha256(out / name)
        print(f"[gen-data] wrote {out / name} ({count} records)", flush=True)
    _update_manifest(out, config.seed, "gen-data", shas)


def stage_train_cmvae(config: RunConfig, out: Path) -> CmvaeParams:
    out = Path(out)
    obs, pose, _ = dataset.read_dataset(
        _require(out / DATASET_CMVAE, "cm-vae dataset", "gen-data"))
    params, log = perception.train_cmvae(
        (obs, pose), config.cmvae, stream(config.seed, "train", "cmvae"))
    checkpoint.save_mlps(
        out / CKPT_CMVAE, [params.encoder, params.image_decoder, params.pose_head])
    perception.write_loss_log(out / LOG_CMVAE, log)
    _update_manifest(out, config.seed, "train-cmvae",
                     {CKPT_CMVAE: _sha256(out / CKPT_CMVAE)})
    print(f"[train-cmvae] final losses total={log[-1][1]:.4f} "
          f"image={log[-1][2]:.4f} pose={log[-1][3]:.4f} kl={log[-1][4]:.4f}", flush=True)
    return params


def load_cmvae(out: Path) -> CmvaeParams:
    nets = checkpoint.load_mlps(
        _require(Path(out) / CKPT_CMVAE, "cm-vae checkpoint", "train-cmvae"),
        expected_count=3)
    return CmvaeParams(encoder=nets[0], image_decoder=nets[1], pose_head=nets[2])


def _policy_dataset(out: Path):
    obs, _, cmd = dataset.read_dataset(
        _require(Path(out) / DATASET_POLICY, "policy dataset", "gen-data"))
    return obs, cmd


def stage_train_policy(config: RunConfig, out: Path):
    out = Path(out)
    cmvae_path = _require(out / CKPT_CMVAE, "cm-vae checkpoint", "train-cmvae")
    encoder_sha_before = _sha256(cmvae_path)
    encoder = load_cmvae(out)
    data = _policy_dataset(out)
    ensemble, reports = policy.train_ensemble(
        encoder, data, config.policy.ensemble_size, config.policy,
        stream(config.seed, "train", "policy"))

    member_shas = {}
    for i, member in enumerate(ensemble.members):
        checkpoint.save_mlps(out / member_checkpoint(i), [member])
        member_shas[member_checkpoint(i)] = _sha256(out / member_checkpoint(i))
    with open(out / LOG_POLICY, "w", encoding="utf-8", newline="") as f:
        f.write("member,epoch,train_nll\n")
        for i, report in enumerate(reports):
            for epoch, value in report.epoch_loss:
                f.write(f"{i},{epoch},{value:.9g}\n")

    _update_manifest(out, config.seed, "train-policy", {
        "encoder_sha_before": encoder_sha_before,
        "encoder_sha_after": _sha256(cmvae_path),
        "members": member_shas,
        "heldout_nll_initial": [r.heldout_initial for r in reports],
        "heldout_nll_final": [r.heldout_final for r in reports],
    })
    for i, report in enumerate(reports):
        print(f"[train-policy] member {i}: held-out NLL "
              f"{report.heldout_initial:.4f} -> {report.heldout_final:.4f}", flush=True)
    return ensemble, reports


def stage_train_baseline(config: RunConfig, out: Path):
    out = Path(out)
    cmvae_path = _require(out / CKPT_CMVAE, "cm-vae checkpoint", "train-cmvae")
    encoder_sha_before = _sha256(cmvae_path)
    encoder = load_cmvae(out)
    data = _policy_dataset(out)
    net, report = policy.train_baseline_bc(
        encoder, data, config.policy, stream(config.seed, "train", "baseline"))
    checkpoint.save_mlps(out / CKPT_BASELINE, [net])
    with open(out / LOG_BASELINE, "w", encoding="utf-8", newline="") as f:
        f.write("epoch,train_mse\n")
        for epoch, value in report.epoch_loss:
            f.write(f"{epoch},{value:.9g}\n")
    _update_manifest(out, config.seed, "train-baseline", {
        "encoder_sha_before": encoder_sha_before,
        "encoder_sha_after": _sha256(cmvae_path),
        CKPT_BASELINE: _sha256(out / CKPT_BASELINE),
        "heldout_mse_initial": report.heldout_initial,
        "heldout_mse_final": report.heldout_final,
    })
    print(f"[train-baseline] held-out MSE "
          f"{report.heldout_initial:.4f} -> {report.heldout_final:.4f}", flush=True)
    return net, report


def load_models(config: RunConfig, out: Path):
    out = Path(out)
    encoder = load_cmvae(out)
    members = []
    for i in range(config.policy.ensemble_size):
        nets = checkpoint.load_mlps(
            _require(out / member_checkpoint(i), f"ensemble member {i}", "train-policy"),
            expected_count=1)
        members.append(nets[0])
    baseline = checkpoint.load_mlps(
        _require(out / CKPT_BASELINE, "baseline checkpoint", "train-baseline"),
        expected_count=1)[0]
    return encoder, policy.EnsembleParams(tuple(members)), baseline


# ---------------------------------------------------------------------------
# Evaluation


@dataclass(frozen=True)
class ResultRow:
    model: str
    radius_noise: float
    height_noise: float
    mean_gates: float
    std_gates: float
    episodes: int
    aborted: int = 0


@dataclass(frozen=True)
class EpisodeRow:
    model: str
    radius_noise: float
    height_noise: float
    episode: int
    gates: int
    termination: str
    error: str = ""


def _policy_fn(model: str, encoder, ensemble, baseline, seed: int,
               cell_index: int, episode: int):
    n_latent = _latent_samples(model)

    def fn(step, state, obs, target):
        rng = stream(seed, "eval", "predict", model, cell_index, episode, step)
        if n_latent is None:
            return predictive.baseline_predict(encoder, baseline, obs, rng)
        result = predictive.predict_stochastic_input(encoder, ensemble, obs, n_latent, rng)
        return result.command(), result

    return fn


def evaluate_models(encoder, ensemble, baseline, config: RunConfig):
    """Closed-loop grid sweep; returns (result rows, per-episode rows).

    Tracks are derived from (seed, cell, episode) only, so every model
    flies the identical set of tracks within a cell.
    """
    episode_config = EpisodeConfig()
    tracks = {}
    for cell_index, (rn, hn) in enumerate(config.noise_levels):
        track_config = TrackConfig(radius_noise=rn, height_noise=hn)
        tracks[cell_index] = [
            generate_track(track_config, stream(config.seed, "eval", "track", cell_index, ep))
            for ep in range(config.episodes_per_cell)
        ]

    rows = []
    episode_rows = []
    for model in config.models:
        for cell_index, (rn, hn) in enumerate(config.noise_levels):
            gates = []
            aborted = 0
            for ep in range(config.episodes_per_cell):
                fn = _policy_fn(model, encoder, ensemble, baseline,
                                config.seed, cell_index, ep)
                render_rng = stream(config.seed, "eval", "render", model, cell_index, ep)
                result = run_episode(fn, tracks[cell_index][ep], episode_config, render_rng)
                gates.append(result.gates_traversed)
                aborted += result.termination == "aborted"
                episode_rows.append(EpisodeRow(
                    model, rn, hn, ep, result.gates_traversed,
                    result.termination, result.error or ""))
            rows.append(ResultRow(model, rn, hn, float(np.mean(gates)),
                                  float(np.std(gates)), len(gates), aborted))
            print(f"[evaluate] {model} noise=({rn:g},{hn:g}) "
                  f"mean_gates={rows[-1].mean_gates:.2f}", flush=True)
    return rows, episode_rows


def results_to_csv(rows) -> str:
    lines = ["model,radius_noise,height_noise,mean_gates,std_gates,episodes"]
    for r in rows:
        lines.append(f"{r.model},{r.radius_noise:g},{r.height_noise:g},"
                     f"{r.mean_gates:.6f},{r.std_gates:.6f},{r.episodes}")
    return "\n".join(lines) + "\n"


def episodes_to_csv(rows) -> str:
    lines = ["model,radius_noise,height_noise,episode,gates,termination,error"]
    for r in rows:
        error = r.error.replace("\n", " ").replace(",", ";")
        lines.append(f"{r.model},{r.radius_noise:g},{r.height_noise:g},"
                     f"{r.episode},{r.gates},{r.termination},{error}")
    return "\n".join(lines) + "\n"


def parse_results_csv(text: str):
    lines = [ln for ln in text.strip().splitlines() if ln]
    header = "model,radius_noise,height_noise,mean_gates,std_gates,episodes"
    if not lines or lines[0] != header:
        raise ValueError("unrecognized results CSV header")
    rows = []
    for ln in lines[1:]:
        model, rn, hn, mean, std, eps = ln.split(",")
        rows.append(ResultRow(model, float(rn), float(hn),
                              float(mean), float(std), int(eps)))
    return rows


def stage_evaluate(config: RunConfig, out: Path):
    out = Path(out)
    encoder, ensemble, baseline = load_models(config, out)
    rows, episode_rows = evaluate_models(encoder, ensemble, baseline, config)
    (out / RESULTS_CSV).write_text(results_to_csv(rows), encoding="utf-8")
    (out / EPISODES_CSV).write_text(episodes_to_csv(episode_rows), encoding="utf-8")
    _update_manifest(out, config.seed, "evaluate",
                     {RESULTS_CSV: _sha256(out / RESULTS_CSV),
                      EPISODES_CSV: _sha256(out / EPISODES_CSV)})
    return rows


def _cell_mean(rows, model: str, cell) -> float:
    for r in rows:
        if r.model == model and (r.radius_noise, r.height_noise) == cell:
            return r.mean_gates
    raise ConfigError(f"results lack model {model!r} at noise {cell}")


def trend_verdict(rows, cell=VERDICT_CELL):
    """PASS iff mean gates are ordered BC <= UI1 <= UI5 at the worst cell
    and UI5 beats BC by at least 2 gates."""
    bc = _cell_mean(rows, "BC", cell)
    ui1 = _cell_mean(rows, "BCE-UI1", cell)
    ui5 = _cell_mean(rows, "BCE-UI5", cell)
    passed = ui5 >= ui1 >= bc and ui5 >= bc + 2.0
    detail = (f"at noise ({cell[0]:g},{cell[1]:g}): "
              f"BC={bc:.2f} UI1={ui1:.2f} UI5={ui5:.2f}")
    word = "PASS" if passed else "FAIL"
    return passed, f"VERDICT: {word} ({detail})"


def format_table(rows) -> str:
    header = f"{'model':<10} {'radius':>6} {'height':>6} {'mean_gates':>10} {'std_gates':>9} {'episodes':>8}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(f"{r.model:<10} {r.radius_noise:>6g} {r.height_noise:>6g} "
                     f"{r.mean_gates:>10.2f} {r.std_gates:>9.2f} {r.episodes:>8}")
    return "\n".join(lines)


def run_pipeline(config: RunConfig, out: Path):
    stage_gen_data(config, out)
    stage_train_cmvae(config, out)
    stage_train_policy(config, out)
    stage_train_baseline(config, out)
    return stage_evaluate(config, out)


def reproduce_table(config: RunConfig, out: Path, full: bool = False) -> int:
    """Evaluate (training first under --full), print the table + verdict.

    Returns a process exit code: 0 on PASS, 3 on verdict failure.
    """
    if full:
        rows = run_pipeline(config, out)
    else:
        rows = stage_evaluate(config, out)
    print(format_table(rows))
    passed, line = trend_verdict(rows)
    print(line)
    return 0 if passed else 3
