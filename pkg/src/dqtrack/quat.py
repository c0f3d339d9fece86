"""Scalar-first quaternion algebra on plain float64 arrays.

A quaternion is an array of shape (..., 4) holding [w, x, y, z] with the
scalar component first. Vector quaternions carry a zero scalar slot and embed
3-vectors for rotation and kinematics work. Every operation broadcasts over
leading dimensions so batches of quaternions (e.g. sigma points) go through
the same code path as single values.
"""

from __future__ import annotations

import numpy as np

# Unit-norm slack accepted on outputs; constructors renormalize up to the
# looser tolerance and reject anything further from the unit sphere.
UNIT_TOL = 1e-9
UNIT_REJECT_TOL = 1e-6

QZERO = np.zeros(4)
QZERO.setflags(write=False)
QONE = np.array([1.0, 0.0, 0.0, 0.0])
QONE.setflags(write=False)

_CONJ = np.diag([1.0, -1.0, -1.0, -1.0])
_CONJ.setflags(write=False)


def quat(w, x, y, z):
    """Build a quaternion from four scalar coefficients."""
    q = np.array([w, x, y, z], dtype=float)
    if not np.all(np.isfinite(q)):
        raise ValueError("quaternion coefficients must be finite")
    return q


def from_parts(s, v):
    """Assemble quaternions from scalar parts (...,) and vector parts (..., 3)."""
    s = np.asarray(s, dtype=float)
    v = np.asarray(v, dtype=float)
    shape = v.shape[:-1] if s.shape == v.shape[:-1] else np.broadcast_shapes(s.shape, v.shape[:-1])
    out = np.empty(shape + (4,))
    out[..., 0] = s
    out[..., 1:] = v
    return out


def vector_quat(v):
    """Embed 3-vectors as vector quaternions with an exactly zero scalar slot."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("vector coefficients must be finite")
    return from_parts(np.zeros(v.shape[:-1]), v)


def scalar(q):
    return np.asarray(q)[..., 0]


def cross3(a, b):
    """Componentwise 3-vector cross product; faster than np.cross for small arrays."""
    shape = a.shape if a.shape == b.shape else np.broadcast_shapes(a.shape, b.shape)
    out = np.empty(shape)
    out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return out


def vec(q):
    return np.asarray(q)[..., 1:]


def _qmul_formula(a, b):
    aw, av = a[..., :1], a[..., 1:]
    bw, bv = b[..., :1], b[..., 1:]
    w = aw * bw - np.sum(av * bv, axis=-1, keepdims=True)
    v = aw * bv + bw * av + cross3(av, bv)
    return np.concatenate([w, v], axis=-1)


def _build_product_tensor():
    # T[i, j, k] with (a b)_i = T[i, j, k] a_j b_k, from the basis products.
    t = np.zeros((4, 4, 4))
    basis = np.eye(4)
    for j in range(4):
        for k in range(4):
            t[:, j, k] = _qmul_formula(basis[j], basis[k])
    return t


_PRODUCT = _build_product_tensor()
_PRODUCT.setflags(write=False)
# The cross product drops the scalar row of the full product.
_CROSS_PRODUCT = _PRODUCT.copy()
_CROSS_PRODUCT[0] = 0.0
_CROSS_PRODUCT.setflags(write=False)


def qmul(a, b):
    """Hamilton product, broadcasting over leading dimensions."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.einsum("ijk,...j,...k->...i", _PRODUCT, a, b)


def qconj(a):
    """Conjugate: negate the vector part."""
    a = np.asarray(a, dtype=float)
    out = a.copy()
    out[..., 1:] *= -1.0
    return out


def qdot(a, b):
    """Quaternion dot product, returned as a scalar quaternion."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    s = np.sum(a * b, axis=-1)
    return from_parts(s, np.zeros(s.shape + (3,)))


def qcross(a, b):
    """Quaternion cross product; the scalar slot of the result is zero."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.einsum("ijk,...j,...k->...i", _CROSS_PRODUCT, a, b)


def qnorm(a):
    """Euclidean norm of the four coefficients."""
    return np.linalg.norm(np.asarray(a, dtype=float), axis=-1)


def as_unit(q):
    """Validate and renormalize a quaternion expected to be unit norm.

    Inputs within UNIT_REJECT_TOL of the unit sphere are renormalized;
    anything further out is rejected.
    """
    q = np.asarray(q, dtype=float)
    n = qnorm(q)
    if np.any(np.abs(n - 1.0) > UNIT_REJECT_TOL):
        raise ValueError("quaternion norm too far from 1 to renormalize")
    return q / n[..., np.newaxis]


def normalized(q):
    """Rescale arbitrary nonzero quaternions to unit norm."""
    q = np.asarray(q, dtype=float)
    n = qnorm(q)
    if np.any(n < 1e-12):
        raise ValueError("cannot normalize a zero quaternion")
    return q / n[..., np.newaxis]


def skew(v):
    """Skew-symmetric cross-product matrices for 3-vectors, shape (..., 3, 3)."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def left_matrix(q):
    """4x4 matrix L such that L(a) @ b equals qmul(a, b)."""
    q = np.asarray(q, dtype=float)
    out = np.zeros(q.shape[:-1] + (4, 4))
    w, v = q[..., 0], q[..., 1:]
    out[..., 0, 0] = w
    out[..., 0, 1:] = -v
    out[..., 1:, 0] = v
    out[..., 1:, 1:] = w[..., np.newaxis, np.newaxis] * np.eye(3) + skew(v)
    return out


def right_matrix(q):
    """4x4 matrix R such that R(b) @ a equals qmul(a, b)."""
    q = np.asarray(q, dtype=float)
    out = np.zeros(q.shape[:-1] + (4, 4))
    w, v = q[..., 0], q[..., 1:]
    out[..., 0, 0] = w
    out[..., 0, 1:] = -v
    out[..., 1:, 0] = v
    out[..., 1:, 1:] = w[..., np.newaxis, np.newaxis] * np.eye(3) - skew(v)
    return out


def cross_matrix(q):
    """4x4 matrix C such that C(a) @ b equals qcross(a, b)."""
    q = np.asarray(q, dtype=float)
    out = np.zeros(q.shape[:-1] + (4, 4))
    w, v = q[..., 0], q[..., 1:]
    out[..., 1:, 0] = v
    out[..., 1:, 1:] = w[..., np.newaxis, np.newaxis] * np.eye(3) + skew(v)
    return out


def conj_matrix():
    """diag(1, -1, -1, -1); conj_matrix() @ q equals qconj(q)."""
    return _CONJ


def from_axis_angle(axis, angle):
    """Unit quaternion for a rotation of `angle` radians about a unit axis."""
    axis = np.asarray(axis, dtype=float)
    if abs(np.linalg.norm(axis) - 1.0) > UNIT_TOL:
        raise ValueError("rotation axis must be a unit vector")
    half = 0.5 * float(angle)
    return from_parts(np.cos(half), np.sin(half) * axis)


def from_rotation_vector(phi):
    """Exponential map: rotation vectors (..., 3) to unit quaternions.

    Zero-angle inputs map to the identity without dividing by zero.
    """
    phi = np.asarray(phi, dtype=float)
    ang = np.linalg.norm(phi, axis=-1)
    small = ang < 1e-12
    safe = np.where(small, 1.0, ang)
    s = np.sin(0.5 * ang) / safe
    out = from_parts(np.cos(0.5 * ang), phi * s[..., np.newaxis])
    out[small] = QONE
    return out


def rotate_vector(q, v):
    """Rotate 3-vectors by unit quaternions via the sandwich product q v q*."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    qw, qv = q[..., :1], q[..., 1:]
    t = 2.0 * cross3(qv, v)
    return v + qw * t + cross3(qv, t)


def to_rotation_matrix(q):
    """3x3 rotation matrices equivalent to unit quaternions (test/PnP helper)."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    out = np.empty(q.shape[:-1] + (3, 3))
    out[..., 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    out[..., 0, 1] = 2.0 * (x * y - w * z)
    out[..., 0, 2] = 2.0 * (x * z + w * y)
    out[..., 1, 0] = 2.0 * (x * y + w * z)
    out[..., 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    out[..., 1, 2] = 2.0 * (y * z - w * x)
    out[..., 2, 0] = 2.0 * (x * z - w * y)
    out[..., 2, 1] = 2.0 * (y * z + w * x)
    out[..., 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return out


def from_rotation_matrix(R):
    """Unit quaternion from a single 3x3 rotation matrix (Shepperd branches)."""
    R = np.asarray(R, dtype=float)
    t = np.trace(R)
    if t > 0.0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s,
                      (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] >= R[1, 1] and R[0, 0] >= R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array([(R[2, 1] - R[1, 2]) / s,
                      0.25 * s,
                      (R[0, 1] + R[1, 0]) / s,
                      (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] >= R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q = np.array([(R[0, 2] - R[2, 0]) / s,
                      (R[0, 1] + R[1, 0]) / s,
                      0.25 * s,
                      (R[1, 2] + R[2, 1]) / s])
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q = np.array([(R[1, 0] - R[0, 1]) / s,
                      (R[0, 2] + R[2, 0]) / s,
                      (R[1, 2] + R[2, 1]) / s,
                      0.25 * s])
    return q / np.linalg.norm(q)
