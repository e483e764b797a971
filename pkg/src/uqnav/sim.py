"""Desk-scale gate-racing environment.

A circular track of square gates, a point-mass drone with first-order
velocity lag, a 16x16 pinhole wireframe camera, a privileged expert
pilot, plane-crossing gate detection, and a closed-loop episode runner.
Distances in meters, angles in radians, time in seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import GateRelativePose, rot_z, world_to_body, wrap_angle
from .policy import V_MAX, YAW_RATE_MAX, VelocityCommand

GATE_HALF_APERTURE = 0.75
MIN_GATE_HEIGHT = 0.5  # keeps noisy gates clear of the ground plane

IMG_SIZE = 16
FOCAL_PX = 8.0  # 90 degree horizontal field of view at 16 px
NEAR_PLANE = 0.05
PIXEL_NOISE_STD = 0.05

DT = 0.05
TAU = 0.3  # velocity and yaw-rate lag time constant

EXPERT_SLOW_RADIUS = 3.0
EXPERT_YAW_GAIN = 1.5


@dataclass(frozen=True)
class Gate:
    """Square aperture standing in a vertical plane.

    yaw is the direction of the gate normal (direction of travel); the
    aperture spans +-half_aperture along the in-plane horizontal and
    vertical axes.
    """

    center: np.ndarray
    yaw: float
    half_aperture: float = GATE_HALF_APERTURE

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64)
        if center.shape != (3,) or not np.all(np.isfinite(center)):
            raise ValueError("gate center must be a finite 3-vector")
        if not (math.isfinite(self.yaw) and self.half_aperture > 0):
            raise ValueError("gate needs finite yaw and positive aperture")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "yaw", float(self.yaw))

    def normal(self) -> np.ndarray:
        return np.array([math.cos(self.yaw), math.sin(self.yaw), 0.0])

    def in_plane_axes(self):
        """(horizontal, vertical) unit vectors spanning the gate plane."""
        u = np.array([-math.sin(self.yaw), math.cos(self.yaw), 0.0])
        w = np.array([0.0, 0.0, 1.0])
        return u, w

    def corners(self) -> np.ndarray:
        """4x3 aperture corners in drawing order (closed loop)."""
        u, w = self.in_plane_axes()
        h = self.half_aperture
        return np.stack([
            self.center + h * u + h * w,
            self.center - h * u + h * w,
            self.center - h * u - h * w,
            self.center + h * u - h * w,
        ])


@dataclass(frozen=True)
class TrackConfig:
    n_gates: int = 8
    radius: float = 8.0
    base_height: float = 2.0
    radius_noise: float = 0.0
    height_noise: float = 0.0

    def __post_init__(self):
        if self.n_gates < 3:
            raise ValueError("a track needs at least 3 gates")
        if not (self.radius > 0):
            raise ValueError("track radius must be positive")
        if self.radius_noise < 0 or self.height_noise < 0:
            raise ValueError("noise amplitudes must be non-negative")


def generate_track(config: TrackConfig, rng: np.random.Generator):
    """Gates equally spaced in angle, radius/height jittered uniformly."""
    gates = []
    for i in range(config.n_gates):
        angle = 2.0 * math.pi * i / config.n_gates
        radius = config.radius + rng.uniform(-config.radius_noise, config.radius_noise)
        height = config.base_height + rng.uniform(-config.height_noise, config.height_noise)
        height = max(height, MIN_GATE_HEIGHT)
        center = np.array([radius * math.cos(angle), radius * math.sin(angle), height])
        gates.append(Gate(center=center, yaw=wrap_angle(angle + math.pi / 2)))
    return tuple(gates)


@dataclass(frozen=True)
class DroneState:
    position: np.ndarray
    yaw: float
    velocity: np.ndarray
    yaw_rate: float
    time: float = 0.0

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64)
        vel = np.asarray(self.velocity, dtype=np.float64)
        if pos.shape != (3,) or vel.shape != (3,):
            raise ValueError("position and velocity must be 3-vectors")
        scalars = (self.yaw, self.yaw_rate, self.time)
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel))
                and all(math.isfinite(s) for s in scalars)):
            raise ValueError("drone state must be finite")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "velocity", vel)
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))


_PHI_LIMIT = math.pi / 2 - 1e-12


def relative_gate_pose(state: DroneState, gate: Gate) -> GateRelativePose:
    """Body-frame spherical offset to the gate center plus relative yaw."""
    body = world_to_body(gate.center - state.position, state.yaw)
    r = float(np.linalg.norm(body))
    psi = wrap_angle(gate.yaw - state.yaw)
    if r == 0.0:
        return GateRelativePose(r=0.0, theta=0.0, phi=0.0, psi=psi)
    theta = math.atan2(body[1], body[0])
    phi = math.asin(min(max(body[2] / r, -1.0), 1.0))
    phi = min(max(phi, -_PHI_LIMIT), _PHI_LIMIT)
    return GateRelativePose(r=r, theta=theta, phi=phi, psi=psi)


def _clip_segment(p0, p1, lo: float, hi: float):
    """Liang-Barsky clip of a 2-D segment to the square [lo, hi]^2."""
    d = (p1[0] - p0[0], p1[1] - p0[1])
    t0, t1 = 0.0, 1.0
    for p, q in (
        (-d[0], p0[0] - lo),
        (d[0], hi - p0[0]),
        (-d[1], p0[1] - lo),
        (d[1], hi - p0[1]),
    ):
        if p == 0.0:
            if q < 0.0:
                return None
            continue
        t = q / p
        if p < 0.0:
            if t > t1:
                return None
            t0 = max(t0, t)
        else:
            if t < t0:
                return None
            t1 = min(t1, t)
    return (
        (p0[0] + t0 * d[0], p0[1] + t0 * d[1]),
        (p0[0] + t1 * d[0], p0[1] + t1 * d[1]),
    )


def _draw_line(img: np.ndarray, a, b) -> None:
    """Integer line rasterization; endpoints in pixel coordinates."""
    last = IMG_SIZE - 1
    x0 = min(max(int(round(a[0])), 0), last)
    y0 = min(max(int(round(a[1])), 0), last)
    x1 = min(max(int(round(b[0])), 0), last)
    y1 = min(max(int(round(b[1])), 0), last)
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    while True:
        img[y0, x0] = 1.0
        if x0 == x1 and y0 == y1:
            return
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def render_observation(state: DroneState, gate: Gate,
                       pixel_noise_std: float = PIXEL_NOISE_STD,
                       rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """16x16 wireframe view of the next gate, flattened row-major.

    Pinhole camera at the drone position looking along body x (y left,
    z up).  The four aperture edges are drawn at intensity 1.0; a gate
    whose center sits behind the image plane yields a noise-only frame.
    Gaussian pixel noise is added and the result clamped to [0, 1].
    """
    img = np.zeros((IMG_SIZE, IMG_SIZE))
    half = IMG_SIZE / 2.0 - 0.5  # principal point at pixel (7.5, 7.5)

    center_body = world_to_body(gate.center - state.position, state.yaw)
    if center_body[0] >= NEAR_PLANE:
        corners = gate.corners() - state.position
        body = corners @ rot_z(state.yaw)  # rows become R(-yaw) @ corner
        for i in range(4):
            p0 = body[i]
            p1 = body[(i + 1) % 4]
            f0, f1 = p0[0], p1[0]
            if f0 < NEAR_PLANE and f1 < NEAR_PLANE:
                continue
            if f0 < NEAR_PLANE or f1 < NEAR_PLANE:
                t = (NEAR_PLANE - f0) / (f1 - f0)
                cut = p0 + t * (p1 - p0)
                if f0 < NEAR_PLANE:
                    p0 = cut
                else:
                    p1 = cut
            a = (half - FOCAL_PX * p0[1] / p0[0], half - FOCAL_PX * p0[2] / p0[0])
            b = (half - FOCAL_PX * p1[1] / p1[0], half - FOCAL_PX * p1[2] / p1[0])
            clipped = _clip_segment(a, b, -0.5, IMG_SIZE - 0.5)
            if clipped is not None:
                _draw_line(img, clipped[0], clipped[1])

    if pixel_noise_std > 0.0:
        if rng is None:
            raise ValueError("pixel noise requires an rng")
        img += rng.normal(0.0, pixel_noise_std, img.shape)
    return np.clip(img, 0.0, 1.0).reshape(-1)


def expert_command(state: DroneState, gate: Gate) -> VelocityCommand:
    """Privileged pilot: fly at the gate center, yaw toward it.

    Speed ramps down linearly inside EXPERT_SLOW_RADIUS so the drone does
    not overshoot the aperture plane sideways.
    """
    offset = gate.center - state.position
    r = float(np.linalg.norm(offset))
    if r == 0.0:
        return VelocityCommand(0.0, 0.0, 0.0, 0.0)
    direction = world_to_body(offset / r, state.yaw)
    speed = V_MAX * min(1.0, r / EXPERT_SLOW_RADIUS)
    theta = math.atan2(direction[1], direction[0])
    yaw_rate = min(max(EXPERT_YAW_GAIN * theta, -YAW_RATE_MAX), YAW_RATE_MAX)
    v = speed * direction
    return VelocityCommand(float(v[0]), float(v[1]), float(v[2]), yaw_rate)


def step_dynamics(state: DroneState, cmd: VelocityCommand, dt: float = DT) -> DroneState:
    """First-order lag toward the commanded body-frame velocity."""
    if not (math.isfinite(dt) and dt > 0):
        raise ValueError("dt must be positive and finite")
    c = cmd.clamped()
    alpha = dt / TAU
    target = rot_z(state.yaw) @ np.array([c.vx, c.vy, c.vz])
    velocity = state.velocity + alpha * (target - state.velocity)
    position = state.position + velocity * dt
    yaw_rate = state.yaw_rate + alpha * (c.yaw_rate - state.yaw_rate)
    yaw = wrap_angle(state.yaw + yaw_rate * dt)
    return DroneState(position, yaw, velocity, yaw_rate, state.time + dt)


GATE_EVENTS = ("none", "traversed", "missed")


def check_gate_event(prev: DroneState, cur: DroneState, gate: Gate) -> str:
    """Classify the motion segment against the gate plane.

    A crossing happens when the signed distance along the gate normal
    goes from negative to non-negative; it is a traversal when the
    crossing point lies inside the square aperture, a miss otherwise.
    """
    n = gate.normal()
    d0 = float((prev.position - gate.center) @ n)
    d1 = float((cur.position - gate.center) @ n)
    if not (d0 < 0.0 <= d1):
        return "none"
    t = d0 / (d0 - d1)
    point = prev.position + t * (cur.position - prev.position) - gate.center
    u_axis, w_axis = gate.in_plane_axes()
    u = abs(float(point @ u_axis))
    w = abs(float(point @ w_axis))
    if u <= gate.half_aperture and w <= gate.half_aperture:
        return "traversed"
    return "missed"


TERMINATIONS = ("completed", "missed_gate", "timeout_gate", "max_steps", "aborted")

START_BACKOFF = 2.0  # launch distance behind gate 0 along its axis


@dataclass(frozen=True)
class EpisodeConfig:
    max_gates: int = 32
    gate_time_limit: float = 15.0
    dt: float = DT
    max_steps: int = 12000
    pixel_noise_std: float = PIXEL_NOISE_STD
    start_height: float = 2.0

    def __post_init__(self):
        if self.max_gates < 1 or self.max_steps < 1:
            raise ValueError("gate and step budgets must be positive")
        if self.gate_time_limit <= 0 or self.dt <= 0:
            raise ValueError("time limits must be positive")


@dataclass(frozen=True)
class EpisodeResult:
    gates_traversed: int
    termination: str
    trajectory: tuple
    final_state: DroneState
    error: Optional[str] = None

    def __post_init__(self):
        if self.termination not in TERMINATIONS:
            raise ValueError(f"unknown termination {self.termination!r}")
        if self.gates_traversed < 0:
            raise ValueError("gate count cannot be negative")


def start_state(track, config: EpisodeConfig) -> DroneState:
    """Launch pose: on gate 0's axis, START_BACKOFF behind it, facing it."""
    first = track[0]
    position = first.center - START_BACKOFF * first.normal()
    position = np.array([position[0], position[1], config.start_height])
    return DroneState(position, first.yaw, np.zeros(3), 0.0, 0.0)


def run_episode(policy_fn, track, config: EpisodeConfig,
                rng: np.random.Generator) -> EpisodeResult:
    """Closed-loop rollout until completion, miss, timeout, or step cap.

    policy_fn(step, state, obs, target_gate) returns a VelocityCommand or
    a (VelocityCommand, aux) pair; aux is kept opaquely in the trajectory.
    A policy exception aborts the episode with the error recorded.
    """
    track = tuple(track)
    if not track:
        raise ValueError("track must contain at least one gate")
    state = start_state(track, config)
    trajectory = []
    gates = 0
    last_pass_time = 0.0

    for step in range(config.max_steps):
        target = track[gates % len(track)]
        obs = render_observation(state, target, config.pixel_noise_std, rng)
        try:
            out = policy_fn(step, state, obs, target)
            cmd, aux = out if isinstance(out, tuple) else (out, None)
            new_state = step_dynamics(state, cmd, config.dt)
        except Exception as exc:  # abort recorded, never raised
            return EpisodeResult(gates, "aborted", tuple(trajectory), state,
                                 error=f"{type(exc).__name__}: {exc}")
        trajectory.append((state.time, state, cmd, aux))
        event = check_gate_event(state, new_state, target)
        state = new_state
        if event == "missed":
            return EpisodeResult(gates, "missed_gate", tuple(trajectory), state)
        if event == "traversed":
            gates += 1
            last_pass_time = state.time
            if gates >= config.max_gates:
                return EpisodeResult(gates, "completed", tuple(trajectory), state)
        if state.time - last_pass_time > config.gate_time_limit:
            return EpisodeResult(gates, "timeout_gate", tuple(trajectory), state)
    return EpisodeResult(gates, "max_steps", tuple(trajectory), state)


def expert_policy(step: int, state: DroneState, obs: np.ndarray,
                  target: Gate) -> VelocityCommand:
    """run_episode adapter for the privileged expert (ignores the image)."""
    return expert_command(state, target)


def write_trajectory_csv(path, result: EpisodeResult) -> None:
    """One row per step: time, pose, command, and predictive stds if any."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("time,x,y,z,yaw,cmd_vx,cmd_vy,cmd_vz,cmd_yaw_rate,"
                "std_vx,std_vy,std_vz,std_yaw_rate\n")
        for t, state, cmd, aux in result.trajectory:
            stds = ",".join(f"{s:.6f}" for s in aux.std) if aux is not None else ",,,"
            p = state.position
            f.write(f"{t:.2f},{p[0]:.6f},{p[1]:.6f},{p[2]:.6f},{state.yaw:.6f},"
                    f"{cmd.vx:.6f},{cmd.vy:.6f},{cmd.vz:.6f},{cmd.yaw_rate:.6f},{stds}\n")
