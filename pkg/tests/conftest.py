import numpy as np
import pytest

from dqtrack import dualquat as dq
from dqtrack import quat as qt
from dqtrack.observability import DecomposedState


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def random_unit_quat(rng):
    return qt.normalized(rng.normal(size=4))


def random_pose(rng, span=3.0):
    return dq.pose_from(random_unit_quat(rng), rng.uniform(-span, span, 3))


def random_manifold_state(rng, span=3.0):
    """Random (pose, velocity) pair satisfying the manifold constraints."""
    pose = random_pose(rng, span)
    r = dq.pose_translation_parent(pose)
    vel = dq.velocity_from(rng.normal(size=3), rng.normal(size=3), -r)
    return pose, vel


def random_front_state(rng, depth=(5.0, 14.0), lateral=2.0, tilt=0.6):
    """Random decomposed state keeping nearby target-plane markers in range.

    The rotation is bounded so marker points a couple of meters around the
    target origin stay at positive depth from the camera.
    """
    axis = qt.normalized(rng.normal(size=3))
    q = qt.from_axis_angle(axis, rng.uniform(-tilt, tilt))
    r = np.array([rng.uniform(-lateral, lateral),
                  rng.uniform(-lateral, lateral),
                  rng.uniform(*depth)])
    pose = dq.pose_from(q, r)
    vel = dq.velocity_from(rng.normal(size=3), rng.normal(size=3), -r)
    return DecomposedState.from_pose_velocity(pose, vel)


# Independent oracle: quaternion to rotation matrix, coded from the
# outer-product expansion rather than the package's formula.
def rotation_matrix_oracle(q):
    w, x, y, z = q
    return np.array([
        [w * w + x * x - y * y - z * z, 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), w * w - x * x + y * y - z * z, 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), w * w - x * x - y * y + z * z],
    ])


def homogeneous_oracle(q, r):
    out = np.eye(4)
    out[:3, :3] = rotation_matrix_oracle(q)
    out[:3, 3] = r
    return out


def central_difference(fn, x, h=1e-6):
    """Dense central-difference Jacobian of fn at x."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        d = np.zeros(x.size)
        d[i] = h
        cols.append((fn(x + d) - fn(x - d)) / (2.0 * h))
    return np.column_stack(cols)
