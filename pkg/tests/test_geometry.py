"""Angle wrapping and frame conversion sanity."""

import math

import numpy as np
import pytest

from uqnav import geometry
from uqnav.geometry import (GateRelativePose, body_to_world, rot_z,
                            world_to_body, wrap_angle)
from uqnav.rng import stream


def test_wrap_angle_edges():
    assert wrap_angle(0.0) == 0.0
    assert wrap_angle(math.pi) == math.pi
    assert wrap_angle(-math.pi) == math.pi  # half-open on the negative side
    assert abs(wrap_angle(3 * math.pi) - math.pi) < 1e-15
    assert abs(wrap_angle(2 * math.pi)) < 1e-15
    for k in range(-5, 6):
        a = 0.7 + k * 2 * math.pi
        assert abs(wrap_angle(a) - 0.7) < 1e-12


def test_rot_z_is_orthonormal_and_additive():
    for seed in range(20):
        rng = stream(seed, "geo", "rot")
        a, b = rng.uniform(-4, 4, 2)
        ra, rb = rot_z(a), rot_z(b)
        assert np.allclose(ra @ ra.T, np.eye(3), atol=1e-12)
        assert np.allclose(ra @ rb, rot_z(a + b), atol=1e-12)
    assert np.allclose(rot_z(math.pi / 2) @ [1.0, 0.0, 0.0], [0.0, 1.0, 0.0])


def test_world_body_round_trip():
    for seed in range(20):
        rng = stream(seed, "geo", "rt")
        v = rng.standard_normal(3)
        yaw = rng.uniform(-4, 4)
        assert np.allclose(body_to_world(world_to_body(v, yaw), yaw), v, atol=1e-12)
    # Heading +90 deg: world +y is straight ahead in the body frame.
    body = world_to_body(np.array([0.0, 2.0, 1.0]), math.pi / 2)
    assert np.allclose(body, [2.0, 0.0, 1.0], atol=1e-12)


def test_gate_pose_validation_and_xyz():
    with pytest.raises(ValueError):
        GateRelativePose(r=-0.1, theta=0.0, phi=0.0, psi=0.0)
    with pytest.raises(ValueError):
        GateRelativePose(r=1.0, theta=4.0, phi=0.0, psi=0.0)
    with pytest.raises(ValueError):
        GateRelativePose(r=1.0, theta=0.0, phi=math.pi / 2, psi=0.0)
    pose = GateRelativePose(r=2.0, theta=math.pi / 2, phi=0.0, psi=0.3)
    assert np.allclose(pose.offset_xyz(), [0.0, 2.0, 0.0], atol=1e-12)
    assert np.allclose(pose.as_array(), [2.0, math.pi / 2, 0.0, 0.3])
    up = GateRelativePose(r=3.0, theta=0.0, phi=math.pi / 4, psi=0.0)
    s = 3.0 / math.sqrt(2.0)
    assert np.allclose(up.offset_xyz(), [s, 0.0, s], atol=1e-12)
