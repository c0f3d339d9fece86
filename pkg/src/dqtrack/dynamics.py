"""Rigid-body equations of motion in dual quaternion form.

Covers a single body relative to an inertial frame and the relative motion
of a target frame observed from a camera frame, with fixed-step RK4
propagation followed by pose renormalization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dualquat as dq
from . import quat as qt


@dataclass
class MassMatrix:
    """Mass and inertia assembled into the 8x8 dual quaternion operator.

    The operator swaps real and dual parts: applied to a dual velocity it
    returns the linear momentum in the real slot and the angular momentum in
    the dual slot, which is what the gyroscopic cross-product term needs.
    """

    mass: float
    inertia: np.ndarray
    matrix: np.ndarray = field(init=False, repr=False)
    inverse: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float)
        if self.mass <= 0.0:
            raise ValueError("mass must be positive")
        if self.inertia.shape != (3, 3):
            raise ValueError("inertia must be a 3x3 matrix")
        if not np.allclose(self.inertia, self.inertia.T, atol=1e-12):
            raise ValueError("inertia must be symmetric")
        if np.any(np.linalg.eigvalsh(self.inertia) <= 0.0):
            raise ValueError("inertia must be positive definite")
        a = np.zeros((4, 4))
        a[0, 0] = 1.0
        a[1:, 1:] = self.mass * np.eye(3)
        b = np.zeros((4, 4))
        b[0, 0] = 1.0
        b[1:, 1:] = self.inertia
        m = np.zeros((8, 8))
        m[:4, 4:] = a
        m[4:, :4] = b
        m_inv = np.zeros((8, 8))
        m_inv[:4, 4:] = np.linalg.inv(b)
        m_inv[4:, :4] = np.linalg.inv(a)
        self.matrix = m
        self.inverse = m_inv


@dataclass
class Wrench:
    """Body-frame force and torque packed as a vector dual quaternion."""

    force: np.ndarray
    torque: np.ndarray
    _dual: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.force = np.asarray(self.force, dtype=float).reshape(3)
        self.torque = np.asarray(self.torque, dtype=float).reshape(3)
        self._dual = dq.dual(qt.vector_quat(self.force), qt.vector_quat(self.torque))

    def as_dual(self):
        return self._dual


@dataclass
class BodyState:
    """Dual pose plus dual velocity; arrays may carry leading batch dims."""

    pose: np.ndarray
    vel: np.ndarray


def inertial_accel(state, mass, wrench):
    """Dual velocity rate of a body under a body-frame wrench.

    Evaluates M^-1 (f - w x M w) with the dual cross product, so the
    gyroscopic coupling falls out of the algebra rather than being coded
    separately for the rotational and translational halves.
    """
    vel = np.asarray(state.vel, dtype=float)
    momentum = vel @ mass.matrix.T
    rhs = wrench.as_dual() - dq.dcross(vel, momentum)
    return rhs @ mass.inverse.T


def relative_accel(rel, target_accel, camera_vel, camera_accel):
    """Dual velocity rate of the target frame relative to the camera frame.

    `rel` holds the target pose/velocity with respect to the camera in camera
    coordinates; `target_accel` is the target's inertial rate expressed in the
    target frame, and the camera quantities are in the camera frame.
    """
    carried = dq.transform_vector(rel.pose, target_accel)
    coupling = dq.dcross(rel.vel, camera_vel)
    return carried + coupling - camera_accel


def _pose_rate(pose, vel, frame):
    if frame == "body":
        return 0.5 * dq.dmul(pose, vel)
    if frame == "parent":
        return 0.5 * dq.dmul(vel, pose)
    raise ValueError("frame must be 'body' or 'parent'")


def rk4_step(state, accel_fn, dt, frame="body"):
    """One fixed-step RK4 integration of a BodyState, then renormalization.

    `frame` selects which side the dual velocity multiplies the pose on:
    "body" for a velocity expressed in the moving frame, "parent" for a
    velocity expressed in the reference frame.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")

    def deriv(pose, vel):
        return _pose_rate(pose, vel, frame), accel_fn(BodyState(pose, vel))

    p0, v0 = np.asarray(state.pose, dtype=float), np.asarray(state.vel, dtype=float)
    k1p, k1v = deriv(p0, v0)
    k2p, k2v = deriv(p0 + 0.5 * dt * k1p, v0 + 0.5 * dt * k1v)
    k3p, k3v = deriv(p0 + 0.5 * dt * k2p, v0 + 0.5 * dt * k2v)
    k4p, k4v = deriv(p0 + dt * k3p, v0 + dt * k3v)
    pose = p0 + (dt / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
    vel = v0 + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    return BodyState(dq.normalize_pose(pose), vel)


def propagate_bodies(states, masses, wrenches, dt, substeps=1):
    """Substep-integrate several independently forced bodies as one batch.

    Equivalent to running rk4_step per body and substep, with the mass
    operators stacked so a whole ensemble advances through each RK4 stage in
    single array operations.
    """
    if substeps < 1:
        raise ValueError("substeps must be at least 1")
    pose = np.stack([np.asarray(s.pose, dtype=float) for s in states])
    vel = np.stack([np.asarray(s.vel, dtype=float) for s in states])
    m_op = np.stack([m.matrix for m in masses])
    m_inv = np.stack([m.inverse for m in masses])
    force = np.stack([w.as_dual() for w in wrenches])

    def accel(v):
        momentum = np.einsum("bij,bj->bi", m_op, v)
        return np.einsum("bij,bj->bi", m_inv, force - dq.dcross(v, momentum))

    h = dt / substeps
    for _ in range(substeps):
        k1p, k1v = 0.5 * dq.dmul(pose, vel), accel(vel)
        p2, v2 = pose + 0.5 * h * k1p, vel + 0.5 * h * k1v
        k2p, k2v = 0.5 * dq.dmul(p2, v2), accel(v2)
        p3, v3 = pose + 0.5 * h * k2p, vel + 0.5 * h * k2v
        k3p, k3v = 0.5 * dq.dmul(p3, v3), accel(v3)
        p4, v4 = pose + h * k3p, vel + h * k3v
        k4p, k4v = 0.5 * dq.dmul(p4, v4), accel(v4)
        pose = pose + (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        vel = vel + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        pose = dq.normalize_pose(pose)
    return [BodyState(pose[i], vel[i]) for i in range(len(states))]
