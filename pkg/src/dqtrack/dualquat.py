"""Dual quaternion algebra: SE(3) poses and twists on (..., 8) arrays.

A dual quaternion stacks a real quaternion and a dual quaternion part as
[real(4), dual(4)]. Unit dual quaternions ("dual poses") encode a rotation
in the real part and a translation in the dual part via dual = 0.5 * r * q
with r the parent-frame translation lifted to a vector quaternion. Vector
dual quaternions ("dual velocities") pack an angular rate in the real part
and a coupled linear rate in the dual part.

Conventions mirror quat.py: scalar-first coefficients, broadcasting over
leading dimensions, plain float64 arrays.
"""

from __future__ import annotations

import numpy as np

from . import quat as qt
from .errors import DegenerateStateError

DZERO = np.zeros(8)
DZERO.setflags(write=False)
DONE = np.concatenate([qt.QONE, qt.QZERO])
DONE.setflags(write=False)

# Tolerances for the unit dual quaternion constraints: |norm(real) - 1| and
# |real . dual| after construction or any exported operation.
UNIT_TOL = 1e-9
UNIT_REJECT_TOL = 1e-6


def dual(real, dual_part):
    """Assemble dual quaternions from real and dual quaternion parts."""
    real = np.asarray(real, dtype=float)
    dual_part = np.asarray(dual_part, dtype=float)
    if not (np.all(np.isfinite(real)) and np.all(np.isfinite(dual_part))):
        raise ValueError("dual quaternion coefficients must be finite")
    return np.concatenate(np.broadcast_arrays(real, dual_part), axis=-1)


def real_part(a):
    return np.asarray(a)[..., :4]


def dual_part(a):
    return np.asarray(a)[..., 4:]


def _build_product_tensor():
    # T[i, j, k] with (a b)_i = T[i, j, k] a_j b_k; the dual part collects the
    # two mixed real/dual products and the nilpotent dual*dual term drops.
    t = np.zeros((8, 8, 8))
    q = qt._PRODUCT
    t[:4, :4, :4] = q
    t[4:, 4:, :4] = q
    t[4:, :4, 4:] = q
    return t


_PRODUCT8 = _build_product_tensor()
_PRODUCT8.setflags(write=False)
_CROSS_PRODUCT8 = _PRODUCT8.copy()
_CROSS_PRODUCT8[0] = 0.0
_CROSS_PRODUCT8[4] = 0.0
_CROSS_PRODUCT8.setflags(write=False)


def dmul(a, b):
    """Dual quaternion product; the nilpotent dual*dual term is dropped."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.einsum("ijk,...j,...k->...i", _PRODUCT8, a, b)


def dconj(a):
    """Conjugate both quaternion parts."""
    a = np.asarray(a, dtype=float)
    out = a.copy()
    out[..., 1:4] *= -1.0
    out[..., 5:8] *= -1.0
    return out


def dcross(a, b):
    """Dual quaternion cross product."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.einsum("ijk,...j,...k->...i", _CROSS_PRODUCT8, a, b)


def dnorm(a):
    """Euclidean norm of the eight coefficients."""
    return np.linalg.norm(np.asarray(a, dtype=float), axis=-1)


def _block_lower(top_left, bottom_left):
    shape = top_left.shape[:-2]
    out = np.zeros(shape + (8, 8))
    out[..., :4, :4] = top_left
    out[..., 4:, :4] = bottom_left
    out[..., 4:, 4:] = top_left
    return out


def left_matrix(a):
    """8x8 matrix L such that L(a) @ b equals dmul(a, b)."""
    a = np.asarray(a, dtype=float)
    return _block_lower(qt.left_matrix(a[..., :4]), qt.left_matrix(a[..., 4:]))


def right_matrix(a):
    """8x8 matrix R such that R(b) @ a equals dmul(a, b)."""
    a = np.asarray(a, dtype=float)
    return _block_lower(qt.right_matrix(a[..., :4]), qt.right_matrix(a[..., 4:]))


def cross_matrix(a):
    """8x8 matrix C such that C(a) @ b equals dcross(a, b)."""
    a = np.asarray(a, dtype=float)
    return _block_lower(qt.cross_matrix(a[..., :4]), qt.cross_matrix(a[..., 4:]))


def conj_matrix():
    """blkdiag of two 4x4 conjugation matrices."""
    out = np.zeros((8, 8))
    out[:4, :4] = qt.conj_matrix()
    out[4:, 4:] = qt.conj_matrix()
    return out


def pose_from(q, r_parent):
    """Dual pose from a unit rotation quaternion and a parent-frame translation."""
    q = qt.as_unit(q)
    r = qt.vector_quat(r_parent)
    return dual(q, 0.5 * qt.qmul(r, q))


def pose_rotation(p):
    """Rotation quaternion of a dual pose."""
    return np.asarray(p)[..., :4]


def pose_translation_parent(p):
    """Translation of the child frame origin, in parent-frame coordinates."""
    p = np.asarray(p, dtype=float)
    return qt.vec(2.0 * qt.qmul(p[..., 4:], qt.qconj(p[..., :4])))


def pose_translation_body(p):
    """Translation of the child frame origin, in child-frame coordinates."""
    p = np.asarray(p, dtype=float)
    return qt.vec(2.0 * qt.qmul(qt.qconj(p[..., :4]), p[..., 4:]))


def normalize_pose(p):
    """Project a dual quaternion onto the unit dual quaternion set.

    The real part is rescaled to unit norm and the component of the dual part
    along the real part is removed.
    """
    p = np.asarray(p, dtype=float)
    n = qt.qnorm(p[..., :4])
    if np.any(n < 1e-12):
        raise DegenerateStateError("rotation part has zero norm")
    real = p[..., :4] / n[..., np.newaxis]
    d = p[..., 4:]
    d = d - real * np.sum(d * real, axis=-1, keepdims=True)
    return np.concatenate([real, d], axis=-1)


def as_unit_pose(p):
    """Validate a dual pose, renormalizing small constraint violations."""
    p = np.asarray(p, dtype=float)
    n = qt.qnorm(p[..., :4])
    ortho = np.sum(p[..., :4] * p[..., 4:], axis=-1)
    if np.any(np.abs(n - 1.0) > UNIT_REJECT_TOL) or np.any(np.abs(ortho) > UNIT_REJECT_TOL):
        raise ValueError("dual quaternion too far from the unit set")
    return normalize_pose(p)


def velocity_from(omega, v, r):
    """Dual velocity from rates in one frame.

    `omega` and `v` are the angular and linear rates; `r` is the position of
    the expression-frame origin relative to the moving frame, in expression
    frame coordinates. The dual part carries the coupling term omega x r.
    """
    omega = np.asarray(omega, dtype=float)
    v = np.asarray(v, dtype=float)
    r = np.asarray(r, dtype=float)
    return dual(qt.vector_quat(omega), qt.vector_quat(v + qt.cross3(omega, r)))


def velocity_omega(w):
    """Angular rate embedded in a dual velocity."""
    return np.asarray(w)[..., 1:4]


def velocity_linear(w, r):
    """Invert velocity_from: recover the plain linear rate given the same r."""
    w = np.asarray(w, dtype=float)
    r = np.asarray(r, dtype=float)
    return w[..., 5:8] - qt.cross3(w[..., 1:4], r)


def chain(p_yz, p_xz):
    """Pose of frame x with respect to frame y from two poses sharing frame z."""
    return dmul(dconj(p_yz), p_xz)


def transform_vector(p, w):
    """Re-express a vector dual quaternion from child to parent coordinates.

    The sandwich p w p* maps twists and wrenches between the frames related
    by the dual pose p, including the moment-arm shift of the dual part.
    """
    return dmul(dmul(p, w), dconj(p))


def _point_conj(p):
    # Conjugate used by the point sandwich: real part conjugated, dual part
    # conjugated and negated.
    p = np.asarray(p, dtype=float)
    out = dconj(p)
    out[..., 4:] *= -1.0
    return out


def transform_point(p, point):
    """Map 3-D points from child to parent coordinates through a dual pose.

    Points embed as 1 + eps * point and transform with the sign-flipped dual
    conjugate, which reproduces R @ point + t.
    """
    point = np.asarray(point, dtype=float)
    pt = dual(np.broadcast_to(qt.QONE, point.shape[:-1] + (4,)),
              qt.vector_quat(point))
    out = dmul(dmul(p, pt), _point_conj(p))
    return out[..., 5:8]


def pose_derivative(p, w):
    """Time derivative of a dual pose under a parent-frame dual velocity."""
    return 0.5 * dmul(w, p)
