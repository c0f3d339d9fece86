"""Unscented Kalman filter on the dual quaternion pose/velocity manifold.

The estimate lives on the unit dual quaternion group times the twist space;
uncertainty lives in a 12-dimensional tangent error ordered as
[rotation vector, position, angular rate, linear rate]. `retract` applies a
tangent perturbation multiplicatively to the pose and additively to the
unpacked velocity components; `lift` is its exact inverse built from the
group error conj(base) * perturbed, so the pair round-trips to machine
precision and the pose error is invariant to a common left multiplication.

All state arguments accept leading batch dimensions, which is how sigma
point sets are propagated without Python-level loops.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dualquat as dq
from . import quat as qt
from .errors import (CovarianceConditioningError, DegenerateStateError,
                     InnovationConditioningError)

N_ERR = 12


@dataclass(frozen=True)
class UkfParams:
    """Scaled sigma-point parameters and their derived weights."""

    alpha: float = 1.0
    beta: float = 2.0
    kappa: float = 0.0
    canonicalize_error_quat: bool = False
    lam: float = field(init=False)
    w_mean: np.ndarray = field(init=False, repr=False)
    w_cov: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = N_ERR
        lam = self.alpha ** 2 * (n + self.kappa) - n
        if n + lam <= 0.0:
            raise ValueError("alpha/kappa give a non-positive scaling n + lambda")
        w_mean = np.full(2 * n + 1, 1.0 / (2.0 * (n + lam)))
        w_cov = w_mean.copy()
        w_mean[0] = lam / (n + lam)
        w_cov[0] = lam / (n + lam) + (1.0 - self.alpha ** 2 + self.beta)
        assert abs(w_mean.sum() - 1.0) < 1e-9
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "w_mean", w_mean)
        object.__setattr__(self, "w_cov", w_cov)


@dataclass
class FilterState:
    """Manifold estimate (pose, velocity) with its tangent-space covariance."""

    pose: np.ndarray
    vel: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        self.pose = np.asarray(self.pose, dtype=float)
        self.vel = np.asarray(self.vel, dtype=float)
        self.P = np.asarray(self.P, dtype=float)
        if self.P.shape != (N_ERR, N_ERR):
            raise ValueError("covariance must be 12x12")


def normalize(pose, vel):
    """Restore the unit pose constraints and zero the velocity scalar slots."""
    pose = dq.normalize_pose(pose)
    vel = np.asarray(vel, dtype=float).copy()
    vel[..., 0] = 0.0
    vel[..., 4] = 0.0
    return pose, vel


def _unpack_velocity(pose, vel):
    r = dq.pose_translation_parent(pose)
    w = vel[..., 1:4]
    v = vel[..., 5:8] + qt.cross3(w, r)
    return r, w, v


def _pack_velocity(w, v, r):
    return dq.dual(qt.vector_quat(w), qt.vector_quat(v - qt.cross3(w, r)))


def retract(pose, vel, delta):
    """Apply tangent perturbations to a manifold state.

    The pose perturbation composes on the right as a dual pose built from the
    rotation-vector and position components; velocity components perturb
    additively after the rate coupling term is unpacked, then the dual part
    is reassembled against the perturbed translation.
    """
    pose = np.asarray(pose, dtype=float)
    vel = np.asarray(vel, dtype=float)
    delta = np.asarray(delta, dtype=float)
    q_step = qt.from_rotation_vector(delta[..., 0:3])
    step = dq.dual(q_step, 0.5 * qt.qmul(qt.vector_quat(delta[..., 3:6]), q_step))
    pose2 = dq.dmul(pose, step)
    _, w, v = _unpack_velocity(pose, vel)
    r2 = dq.pose_translation_parent(pose2)
    w2 = w + delta[..., 6:9]
    v2 = v + delta[..., 9:12]
    return pose2, _pack_velocity(w2, v2, r2)


def _log_rotation(q, canonicalize):
    if canonicalize:
        q = q * np.where(q[..., 0:1] < 0.0, -1.0, 1.0)
    s = q[..., 0]
    v = q[..., 1:]
    n = np.linalg.norm(v, axis=-1)
    ang = 2.0 * np.arctan2(n, s)
    safe = np.where(n < 1e-12, 1.0, n)
    phi = v * (ang / safe)[..., np.newaxis]
    return np.where(n[..., np.newaxis] < 1e-12, 0.0, phi)


def lift(pose, vel, pose2, vel2, canonicalize=False):
    """Tangent coordinates of one manifold state relative to another.

    Exact inverse of `retract`: the rotation vector and position come from
    the group error conj(pose) * pose2, the rates from componentwise
    differences after unpacking each state's coupling term.
    """
    err = dq.dmul(dq.dconj(pose), pose2)
    phi = _log_rotation(err[..., :4], canonicalize)
    r_delta = dq.pose_translation_parent(err)
    _, w, v = _unpack_velocity(pose, vel)
    _, w2, v2 = _unpack_velocity(pose2, vel2)
    return np.concatenate([phi, r_delta, w2 - w, v2 - v], axis=-1)


def sigma_points(P, params):
    """Symmetric scaled sigma set in the tangent space, shape (2n+1, n).

    Cholesky of (n + lambda) P; on failure the diagonal is inflated once by
    1e-9 * trace(P) / n before giving up.
    """
    P = np.asarray(P, dtype=float)
    n = N_ERR
    scaled = (n + params.lam) * P
    try:
        root = np.linalg.cholesky(scaled)
    except np.linalg.LinAlgError:
        # One retry with an inflated diagonal. Only roundoff-level negatives
        # (the covariance hygiene band) and legitimately collapsed noise-free
        # covariances are repairable; anything indefinite beyond that is an
        # upstream failure.
        ev_min = float(np.linalg.eigvalsh(scaled).min())
        if ev_min < -1e-8:
            raise CovarianceConditioningError(
                f"covariance is indefinite (min eigenvalue {ev_min:.3e})")
        bump = max(1e-9 * np.trace(P) / n * (n + params.lam),
                   2.0 * max(0.0, -ev_min), 1e-14)
        try:
            root = np.linalg.cholesky(scaled + bump * np.eye(n))
        except np.linalg.LinAlgError as exc:
            raise CovarianceConditioningError(
                "covariance is not positive definite") from exc
    pts = np.zeros((2 * n + 1, n))
    pts[1:n + 1] = root.T
    pts[n + 1:] = -root.T
    return pts


def predict(fs, process_model, Q, dt, params):
    """Propagate the estimate through the process model.

    `process_model(poses, vels, dt)` must propagate a batch of manifold
    states. The propagated mean is the zero-perturbation sigma point; the
    covariance is rebuilt from lifted deviations plus Q and re-symmetrized.
    """
    chi = sigma_points(fs.P, params)
    poses, vels = retract(fs.pose[np.newaxis, :], fs.vel[np.newaxis, :], chi)
    poses, vels = process_model(poses, vels, dt)
    poses, vels = normalize(poses, vels)
    mean_pose, mean_vel = poses[0], vels[0]
    dev = lift(mean_pose[np.newaxis, :], mean_vel[np.newaxis, :], poses, vels,
               canonicalize=params.canonicalize_error_quat)
    P = (params.w_cov[:, np.newaxis] * dev).T @ dev + Q
    P = 0.5 * (P + P.T)
    return FilterState(mean_pose, mean_vel, P)


def update(fs, y, meas_model, R, params):
    """Measurement update in a Euclidean innovation space.

    `meas_model(poses, vels)` maps a batch of states to predicted
    measurements. An empty measurement vector is a no-op. The state update is
    applied through `retract`; the covariance is re-symmetrized.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size == 0:
        return fs
    chi = sigma_points(fs.P, params)
    poses, vels = retract(fs.pose[np.newaxis, :], fs.vel[np.newaxis, :], chi)
    gamma = np.asarray(meas_model(poses, vels), dtype=float)
    if gamma.shape != (chi.shape[0], y.size):
        raise ValueError("measurement model returned the wrong shape")
    y_hat = params.w_mean @ gamma
    dy = gamma - y_hat
    S = (params.w_cov[:, np.newaxis] * dy).T @ dy + R
    P_xy = (params.w_cov[:, np.newaxis] * chi).T @ dy
    try:
        gain = np.linalg.solve(S.T, P_xy.T).T
    except np.linalg.LinAlgError as exc:
        raise InnovationConditioningError("innovation covariance is singular") from exc
    delta = gain @ (y - y_hat)
    pose, vel = retract(fs.pose, fs.vel, delta)
    pose, vel = normalize(pose, vel)
    P = fs.P - gain @ S @ gain.T
    P = 0.5 * (P + P.T)
    return FilterState(pose, vel, P)
