"""Expert-labeled training records and their binary file format.

A record is (observation, gate pose, expert command): a rendered 16x16
frame of the next gate, its ground-truth relative pose, and the expert's
velocity command from the same drone pose.  Records are sampled from the
approach corridor of gates on mildly randomized tracks, so the training
distribution covers what a closed-loop policy actually sees.

File layout ("UQD1", little-endian): magic, u32 version, u32
record_count, u32 obs_dim, u32 pose_dim, u32 cmd_dim, then record_count
contiguous float32 records of obs | pose | cmd.
"""

from __future__ import annotations

import math
import struct

import numpy as np

from .sim import (PIXEL_NOISE_STD, DroneState, TrackConfig, expert_command,
                  generate_track, relative_gate_pose, render_observation)

MAGIC = b"UQD1"
VERSION = 1
OBS_DIM = 256
POSE_DIM = 4
CMD_DIM = 4

_HEADER = struct.Struct("<4sIIIII")

# Pose-sampling envelope: distance behind the target gate, lateral cone
# around its approach axis, vertical offset (shrunk when close so the
# gate stays well inside the vertical field of view), and yaw error
# around the bearing to the gate.  The cone and yaw error also shrink
# with distance: a closed-loop approach is nearly centered and aligned
# by the time it is close, and off-axis close states would teach the
# policy to stall and spin at the gate mouth instead of flying through.
# Training tracks carry only mild noise; the evaluation grid's larger
# amplitudes are deliberately outside the training distribution.
TRAIN_RADIUS_NOISE = 0.3
TRAIN_HEIGHT_NOISE = 0.3
MIN_DISTANCE = 0.3
MAX_DISTANCE = 8.5
ALIGN_DISTANCE = 3.0
LATERAL_CONE = math.radians(60.0)
MAX_DZ = 4.0
DZ_SLOPE = 0.9
YAW_ERROR = math.radians(35.0)
YAW_ERROR_FLOOR = 0.4
MIN_ALTITUDE = 0.05

# Blank frames arise two ways and the policy cannot tell them apart: the
# gate slipped out of view (recovery), or a centered crossing is in its
# last 0.75 m where every gate edge projects outside the 45 deg cone.
# The learned blank-frame response is the label mean over both, so the
# two pools are ratio-balanced: recovery states (gate 35-85 deg left of
# heading, at range; gates run counterclockwise so a lost gate exits
# left) pull toward a left turn, and oversampled centered close states
# pull toward slow-and-straight.  The blend drifts gently left, enough
# to reacquire a lost gate within the per-gate time budget without
# veering off during the blind end of a crossing.
RECOVERY_PROB = 0.05
RECOVERY_MIN_DISTANCE = 1.5
RECOVERY_MAX_DISTANCE = 8.5
RECOVERY_YAW_MIN = math.radians(35.0)
RECOVERY_YAW_MAX = math.radians(85.0)
CLOSE_PROB = 0.26
CLOSE_MAX_DISTANCE = 0.85


class DatasetError(Exception):
    """Raised when a dataset file is malformed or mismatched."""


def write_dataset(path, obs: np.ndarray, pose: np.ndarray, cmd: np.ndarray) -> None:
    obs = np.ascontiguousarray(obs, dtype=np.float32)
    pose = np.ascontiguousarray(pose, dtype=np.float32)
    cmd = np.ascontiguousarray(cmd, dtype=np.float32)
    n = obs.shape[0]
    if obs.shape != (n, OBS_DIM) or pose.shape != (n, POSE_DIM) or cmd.shape != (n, CMD_DIM):
        raise ValueError("record arrays disagree on count or widths")
    payload = np.concatenate([obs, pose, cmd], axis=1)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, n, OBS_DIM, POSE_DIM, CMD_DIM))
        f.write(payload.tobytes())


def read_dataset(path):
    """Returns (obs, pose, cmd) float64 arrays; values sit on the f32 grid."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise DatasetError("dataset header truncated")
    magic, version, n, obs_dim, pose_dim, cmd_dim = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DatasetError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise DatasetError(f"unsupported dataset version {version}")
    if (obs_dim, pose_dim, cmd_dim) != (OBS_DIM, POSE_DIM, CMD_DIM):
        raise DatasetError(
            f"record widths ({obs_dim},{pose_dim},{cmd_dim}) do not match "
            f"({OBS_DIM},{POSE_DIM},{CMD_DIM})")
    width = obs_dim + pose_dim + cmd_dim
    expected = _HEADER.size + n * width * 4
    if len(raw) != expected:
        raise DatasetError(f"payload is {len(raw)} bytes, expected {expected}")
    flat = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(n, width)
    data = flat.astype(np.float64)
    return (data[:, :obs_dim],
            data[:, obs_dim:obs_dim + pose_dim],
            data[:, obs_dim + pose_dim:])


def _sample_state(gate, rng: np.random.Generator) -> DroneState:
    draw = rng.random()
    recovery = draw < RECOVERY_PROB
    if recovery:
        d = rng.uniform(RECOVERY_MIN_DISTANCE, RECOVERY_MAX_DISTANCE)
    elif draw < RECOVERY_PROB + CLOSE_PROB:
        d = rng.uniform(MIN_DISTANCE, CLOSE_MAX_DISTANCE)
    else:
        d = rng.uniform(MIN_DISTANCE, MAX_DISTANCE)
    near = min(1.0, d / ALIGN_DISTANCE)
    cone = rng.uniform(-1.0, 1.0) * LATERAL_CONE * near
    dz_span = min(MAX_DZ, DZ_SLOPE * d)
    dz = rng.uniform(-dz_span, dz_span)
    back = gate.yaw + math.pi + cone  # direction from gate out to the drone
    position = np.array([
        gate.center[0] + d * math.cos(back),
        gate.center[1] + d * math.sin(back),
        max(gate.center[2] + dz, MIN_ALTITUDE),
    ])
    bearing = math.atan2(gate.center[1] - position[1], gate.center[0] - position[0])
    if recovery:
        yaw = bearing - rng.uniform(RECOVERY_YAW_MIN, RECOVERY_YAW_MAX)
    else:
        yaw = bearing + rng.uniform(-1.0, 1.0) * YAW_ERROR * max(YAW_ERROR_FLOOR, near)
    return DroneState(position, yaw, np.zeros(3), 0.0, 0.0)


def generate_records(n: int, rng: np.random.Generator,
                     pixel_noise_std: float = PIXEL_NOISE_STD):
    """Sample n (obs, pose, cmd) records; deterministic per rng stream."""
    if n < 1:
        raise ValueError("record count must be positive")
    obs = np.empty((n, OBS_DIM))
    pose = np.empty((n, POSE_DIM))
    cmd = np.empty((n, CMD_DIM))
    for i in range(n):
        track_config = TrackConfig(
            radius_noise=rng.uniform(0.0, TRAIN_RADIUS_NOISE),
            height_noise=rng.uniform(0.0, TRAIN_HEIGHT_NOISE),
        )
        track = generate_track(track_config, rng)
        gate = track[rng.integers(len(track))]
        state = _sample_state(gate, rng)
        obs[i] = render_observation(state, gate, pixel_noise_std, rng)
        pose[i] = relative_gate_pose(state, gate).as_array()
        cmd[i] = expert_command(state, gate).as_array()
    return obs, pose, cmd
