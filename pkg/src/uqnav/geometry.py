"""Shared frame conventions and angle helpers.

World frame: x/y horizontal, z up.  Body frame: x forward, y left, z up,
obtained from world by rotating -yaw about z.  Angles are radians wrapped
to (-pi, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.remainder(a, TWO_PI)
    if w <= -math.pi:
        w += TWO_PI
    return w


def rot_z(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def world_to_body(offset: np.ndarray, yaw: float) -> np.ndarray:
    """Rotate a world-frame offset into the body frame of a pose with yaw."""
    return rot_z(-yaw) @ offset


def body_to_world(vec: np.ndarray, yaw: float) -> np.ndarray:
    return rot_z(yaw) @ vec


@dataclass(frozen=True)
class GateRelativePose:
    """Next-gate pose in the drone body frame.

    r: distance to the gate center (m, >= 0); theta: azimuth (rad,
    (-pi, pi]); phi: elevation (rad, (-pi/2, pi/2)); psi: relative gate
    yaw (rad, (-pi, pi]).
    """

    r: float
    theta: float
    phi: float
    psi: float

    def __post_init__(self):
        if not (math.isfinite(self.r) and self.r >= 0.0):
            raise ValueError(f"r must be finite and >= 0, got {self.r}")
        if not (-math.pi < self.theta <= math.pi):
            raise ValueError(f"theta out of (-pi, pi]: {self.theta}")
        if not (-math.pi / 2 < self.phi < math.pi / 2):
            raise ValueError(f"phi out of (-pi/2, pi/2): {self.phi}")
        if not (-math.pi < self.psi <= math.pi):
            raise ValueError(f"psi out of (-pi, pi]: {self.psi}")

    def as_array(self) -> np.ndarray:
        return np.array([self.r, self.theta, self.phi, self.psi])

    def offset_xyz(self) -> np.ndarray:
        """Body-frame offset of the gate center implied by (r, theta, phi)."""
        cp = math.cos(self.phi)
        return self.r * np.array(
            [cp * math.cos(self.theta), cp * math.sin(self.theta), math.sin(self.phi)]
        )
