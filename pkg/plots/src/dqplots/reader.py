"""Trial CSV loading and derived series.

The reader is a pure consumer of the dqtrack-trial-v1 schema: it checks the
schema line, exposes the columns as numpy arrays, and derives plotting series
(signed error channels, 3-sigma bands) from logged values only. Nothing here
reruns any filtering; the covariance enters solely through the square root of
its logged diagonal.
"""

from __future__ import annotations

import numpy as np

SCHEMA = "dqtrack-trial-v1"

STATE_COLS = ["qw", "qx", "qy", "qz", "rx", "ry", "rz",
              "wx", "wy", "wz", "vx", "vy", "vz"]


class SchemaError(Exception):
    """Input file does not carry the expected trial schema."""


def load_trial(path):
    """Read a trial CSV into a dict of named numpy columns."""
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().strip()
        if first != f"# {SCHEMA}":
            raise SchemaError(
                f"{path}: expected schema line '# {SCHEMA}', found '{first}'")
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[1] != len(header):
        raise SchemaError(f"{path}: {data.shape[1]} columns, header names "
                          f"{len(header)}")
    return {name: data[:, i] for i, name in enumerate(header)}


def stack(trial, prefix):
    """Collect the 13 state columns with a given prefix into an (n, 13) array."""
    return np.column_stack([trial[f"{prefix}_{c}"] for c in STATE_COLS])


def three_sigma_bands(trial):
    """(n, 12) array of 3 * sqrt(P_diag_i) for the logged covariance diagonal."""
    diag = np.column_stack([trial[f"P_diag_{i}"] for i in range(12)])
    return 3.0 * np.sqrt(diag)


def _qmul(a, b):
    aw, av = a[..., :1], a[..., 1:]
    bw, bv = b[..., :1], b[..., 1:]
    w = aw * bw - np.sum(av * bv, axis=-1, keepdims=True)
    v = aw * bv + bw * av + np.cross(av, bv)
    return np.concatenate([w, v], axis=-1)


def _qconj(a):
    out = a.copy()
    out[..., 1:] *= -1.0
    return out


def _rotation_log(q):
    # fold onto the short arc so plotted errors stay near zero
    q = q * np.where(q[..., :1] < 0.0, -1.0, 1.0)
    n = np.linalg.norm(q[..., 1:], axis=-1)
    ang = 2.0 * np.arctan2(n, q[..., 0])
    safe = np.where(n < 1e-12, 1.0, n)
    return q[..., 1:] * (ang / safe)[..., np.newaxis]


def signed_errors(trial):
    """(n, 12) signed error channels [rotation, position, rate, velocity].

    Derived from the logged truth and estimate states: rotation via the log
    of the relative quaternion, the rest as componentwise differences in the
    camera frame, matching the covariance ordering.
    """
    truth = stack(trial, "truth")
    est = stack(trial, "est")
    rot = _rotation_log(_qmul(_qconj(truth[:, 0:4]), est[:, 0:4]))
    return np.hstack([rot, est[:, 4:] - truth[:, 4:]])
