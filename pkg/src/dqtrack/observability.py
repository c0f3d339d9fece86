"""Observability codistribution builders and numerical rank tests.

The relative pose/velocity state is analyzed through its componentwise
decomposition (rotation quaternion, pose dual part, angular rate, velocity
dual part). Stacked measurement Jacobians for position-vector and unit-vector
marker measurements are assembled into codistribution matrices whose column
rank certifies local observability; rank decisions use SVD with a scaled
threshold. Collinear marker layouts are the degenerate case both builders
must flag.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import dualquat as dq
from . import quat as qt
from .errors import InsufficientMarkersError, PositiveDepthError

DEPTH_TOL = 1e-6     # minimum marker range for a valid unit-vector map
COLLINEAR_TOL = 1e-9  # cross-product margin below which markers are a line
RANK_RTOL = 1e-10    # relative SVD threshold for numerical rank


@dataclass
class DecomposedState:
    """Relative state split into its four quaternion components.

    `q` is the target-to-camera rotation, `pose_dual` the dual part of the
    pose (0.5 * translation * q), `ang_vel` the angular rate and `vel_dual`
    the dual part of the velocity (linear rate minus the rate coupling term),
    each as a 4-coefficient quaternion.
    """

    q: np.ndarray
    pose_dual: np.ndarray
    ang_vel: np.ndarray
    vel_dual: np.ndarray

    def __post_init__(self):
        self.q = qt.as_unit(np.asarray(self.q, dtype=float).reshape(4))
        self.pose_dual = np.asarray(self.pose_dual, dtype=float).reshape(4)
        self.ang_vel = np.asarray(self.ang_vel, dtype=float).reshape(4)
        self.vel_dual = np.asarray(self.vel_dual, dtype=float).reshape(4)
        # The pose dual part must encode a real translation: the scalar slot
        # of 2 * pose_dual * conj(q) has to vanish.
        s = qt.scalar(2.0 * qt.qmul(self.pose_dual, qt.qconj(self.q)))
        if abs(float(s)) > 1e-9:
            raise ValueError("pose dual part is inconsistent with a 3-D translation")

    @classmethod
    def from_pose_velocity(cls, pose, vel):
        pose = np.asarray(pose, dtype=float).reshape(8)
        vel = np.asarray(vel, dtype=float).reshape(8)
        return cls(pose[:4], pose[4:], vel[:4], vel[4:])

    def pose(self):
        return dq.dual(self.q, self.pose_dual)

    def rates(self):
        """Kinematic rates (q_dot, pose_dual_dot) of the pose components."""
        q_dot = 0.5 * qt.qmul(self.ang_vel, self.q)
        mu_dot = 0.5 * (qt.qmul(self.vel_dual, self.q)
                        + qt.qmul(self.ang_vel, self.pose_dual))
        return q_dot, mu_dot


@dataclass
class CodistributionReport:
    """Numerical rank analysis of one codistribution matrix."""

    rows: int
    cols: int
    singular_values: np.ndarray
    threshold: float
    rank: int = field(init=False)
    observable: bool = field(init=False)
    deficiency: list = field(init=False)

    def __post_init__(self):
        sv = np.asarray(self.singular_values, dtype=float)
        self.singular_values = sv
        self.rank = int(np.sum(sv > self.threshold))
        self.observable = self.rank == self.cols
        self.deficiency = [int(i) for i, s in enumerate(sv) if s <= self.threshold]

    @property
    def verdict(self):
        return "observable" if self.observable else "deficient"

    def to_dict(self):
        return {
            "rows": self.rows,
            "cols": self.cols,
            "singular_values": [float(s) for s in self.singular_values],
            "threshold": float(self.threshold),
            "rank": self.rank,
            "verdict": self.verdict,
            "deficiency": self.deficiency,
        }


def numerical_rank_report(matrix, rank_rtol=RANK_RTOL):
    """SVD rank decision with a dimension- and scale-aware threshold."""
    matrix = np.asarray(matrix, dtype=float)
    sv = np.linalg.svd(matrix, compute_uv=False)
    top = float(sv[0]) if sv.size else 0.0
    threshold = max(matrix.shape) * top * rank_rtol
    return CodistributionReport(matrix.shape[0], matrix.shape[1], sv, threshold)


def _marker_array(markers):
    pts = getattr(markers, "points", markers)
    pts = np.asarray(pts, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("markers must be an (n, 3) array of target-frame points")
    return pts


def conjugation_jacobian(b):
    """Jacobian kernel of q -> q a q* expressed through the product b = q a.

    The full derivative of the sandwich with respect to q equals twice this
    matrix. Rank is 3 for any nonzero product and 0 at b = 0.
    """
    b = np.asarray(b, dtype=float)
    out = np.zeros(b.shape[:-1] + (4, 4))
    s, v = b[..., 0], b[..., 1:]
    out[..., 1:, 0] = v
    out[..., 1:, 1:] = -(s[..., np.newaxis, np.newaxis] * np.eye(3) + qt.skew(v))
    return out


def _constraint_half(q):
    # First row q, remaining rows zero; half the unit-constraint Jacobian.
    q = np.asarray(q, dtype=float).reshape(4)
    out = np.zeros((4, 4))
    out[0] = q
    return out


def unit_constraint_jacobian(q):
    """Jacobian of a -> conj(a) a: first row 2a, remaining rows zero."""
    return 2.0 * _constraint_half(q)


def normalize_jacobian(r, depth_tol=DEPTH_TOL):
    """Jacobian of the normalization map r -> r / ||r|| on quaternion slots.

    Equals (I - u u^T) / ||r|| with u = r / ||r||; its nullspace is exactly
    the ray through r, which is what makes range unobservable from a single
    direction measurement.
    """
    r = np.asarray(r, dtype=float).reshape(4)
    n = float(np.linalg.norm(r))
    if n <= depth_tol:
        raise PositiveDepthError("unit-vector map undefined at zero range")
    u = r / n
    return (np.eye(4) - np.outer(u, u)) / n


def marker_position(state, marker):
    """Camera-frame marker position as a quaternion, from the decomposed state."""
    p = qt.vector_quat(np.asarray(marker, dtype=float))
    qc = qt.qconj(state.q)
    return 2.0 * qt.qmul(state.pose_dual, qc) + qt.qmul(qt.qmul(state.q, p), qc)


def position_measurement(state, markers):
    """Stacked position-vector measurement (4 slots per marker)."""
    pts = _marker_array(markers)
    return np.concatenate([marker_position(state, p) for p in pts])


def unitvector_measurement(state, markers, depth_tol=DEPTH_TOL):
    """Unit-norm pseudo-measurement followed by one unit vector per marker."""
    pts = _marker_array(markers)
    rows = [qt.qmul(qt.qconj(state.q), state.q) - qt.QONE]
    for p in pts:
        r = marker_position(state, p)
        n = float(np.linalg.norm(r))
        if n <= depth_tol:
            raise PositiveDepthError("marker at zero range")
        rows.append(r / n)
    return np.concatenate(rows)


def _position_blocks(state, pts):
    lmu_c = qt.left_matrix(state.pose_dual) @ qt.conj_matrix()
    right_conj = qt.right_matrix(qt.qconj(state.q))
    rows = []
    for p in pts:
        k = conjugation_jacobian(qt.qmul(state.q, qt.vector_quat(p)))
        rows.append(np.hstack([k + lmu_c, right_conj]))
    return np.vstack(rows)


def position_block_matrix(state, markers):
    """Stacked measurement blocks for exactly three position measurements.

    The Jacobian of the stacked position measurement with respect to the
    (rotation, pose-dual) components is twice this 12x8 matrix.
    """
    pts = _marker_array(markers)
    if pts.shape[0] != 3:
        raise InsufficientMarkersError("exactly 3 markers required")
    return _position_blocks(state, pts)


def constrained_block_matrix(state, markers):
    """Position blocks extended with an identity row for the unit constraint."""
    pts = _marker_array(markers)
    if pts.shape[0] != 3:
        raise InsufficientMarkersError("exactly 3 markers required")
    top = np.hstack([np.eye(4), np.zeros((4, 4))])
    return np.vstack([top, _position_blocks(state, pts)])


def projector_block_diag(state, markers, depth_tol=DEPTH_TOL):
    """Block diagonal of the constraint row and per-marker normalization Jacobians."""
    pts = _marker_array(markers)
    if pts.shape[0] != 3:
        raise InsufficientMarkersError("exactly 3 markers required")
    blocks = [_constraint_half(state.q)]
    for p in pts:
        blocks.append(normalize_jacobian(marker_position(state, p), depth_tol))
    n = len(blocks)
    out = np.zeros((4 * n, 4 * n))
    for i, blk in enumerate(blocks):
        out[4 * i:4 * i + 4, 4 * i:4 * i + 4] = blk
    return out


def unitvector_block_matrix(state, markers, depth_tol=DEPTH_TOL):
    """Product of the projector blocks and the constrained position blocks."""
    return (projector_block_diag(state, markers, depth_tol)
            @ constrained_block_matrix(state, markers))


def _fd_first_order(state, jac_fn, h=1e-6):
    # Central-difference Jacobian of the first-order stacked derivative with
    # respect to the (q, pose_dual) coordinates; diagnostic only.
    def lie1(x):
        q_dot, mu_dot = x.rates()
        return jac_fn(x) @ np.concatenate([q_dot, mu_dot])

    base = np.concatenate([state.q, state.pose_dual])
    cols = []
    for i in range(8):
        delta = np.zeros(8)
        delta[i] = h
        xp, xm = base + delta, base - delta
        sp = _raw_state(xp[:4], xp[4:], state.ang_vel, state.vel_dual)
        sm = _raw_state(xm[:4], xm[4:], state.ang_vel, state.vel_dual)
        cols.append((lie1(sp) - lie1(sm)) / (2.0 * h))
    return np.column_stack(cols)


def _raw_state(q, mu, omega, beta):
    # Bypass constructor validation for finite-difference probes off the manifold.
    st = DecomposedState.__new__(DecomposedState)
    st.q = np.asarray(q, dtype=float)
    st.pose_dual = np.asarray(mu, dtype=float)
    st.ang_vel = np.asarray(omega, dtype=float)
    st.vel_dual = np.asarray(beta, dtype=float)
    return st


def position_codistribution(state, markers, fill_star=False, rank_rtol=RANK_RTOL):
    """Rank report for the position-measurement codistribution (24x16).

    The omitted lower-left derivative block is zeroed by default: the rank
    argument rests on the retained diagonal blocks, and the right
    multiplication operator of a dual pose is invertible, so the verdict is
    unchanged. `fill_star` switches in a finite-difference fill for
    diagnostics.
    """
    blocks = position_block_matrix(state, markers)
    lower_right = blocks @ dq.right_matrix(state.pose())
    o = np.zeros((24, 16))
    o[:12, :8] = 2.0 * blocks
    o[12:, 8:] = lower_right
    if fill_star:
        o[12:, :8] = _fd_first_order(
            state, lambda x: 2.0 * position_block_matrix(x, markers))
    return numerical_rank_report(o, rank_rtol)


def unit_vector_codistribution(state, markers, fill_star=False,
                               depth_tol=DEPTH_TOL, rank_rtol=RANK_RTOL):
    """Rank report for the unit-vector-measurement codistribution (32x16)."""
    blocks = unitvector_block_matrix(state, markers, depth_tol)
    lower_right = blocks @ dq.right_matrix(state.pose())
    o = np.zeros((32, 16))
    o[:16, :8] = 2.0 * blocks
    o[16:, 8:] = lower_right
    if fill_star:
        o[16:, :8] = _fd_first_order(
            state, lambda x: 2.0 * unitvector_block_matrix(x, markers, depth_tol))
    return numerical_rank_report(o, rank_rtol)


def collinearity_check(markers, col_tol=COLLINEAR_TOL):
    """Whether the markers lie on a line, plus the cross-product margin.

    The margin is the largest ||(p2 - p1) x (p3 - p1)|| over marker triples;
    a layout counts as collinear when no triple spans a plane.
    """
    pts = _marker_array(markers)
    if pts.shape[0] < 3:
        raise InsufficientMarkersError("collinearity needs at least 3 markers")
    margin = 0.0
    for i, j, k in itertools.combinations(range(pts.shape[0]), 3):
        m = float(np.linalg.norm(np.cross(pts[j] - pts[i], pts[k] - pts[i])))
        margin = max(margin, m)
    return margin <= col_tol, margin


def _stacked_position_blocks(state, pts):
    return _position_blocks(state, pts)


def _stacked_codistribution(state, pts, mode, depth_tol, rank_rtol):
    if mode == "positions":
        blocks = _stacked_position_blocks(state, pts)
    elif mode == "unit_vectors":
        diag = [_constraint_half(state.q)]
        for p in pts:
            diag.append(normalize_jacobian(marker_position(state, p), depth_tol))
        n = len(diag)
        proj = np.zeros((4 * n, 4 * n))
        for i, blk in enumerate(diag):
            proj[4 * i:4 * i + 4, 4 * i:4 * i + 4] = blk
        ext = np.vstack([np.hstack([np.eye(4), np.zeros((4, 4))]),
                         _stacked_position_blocks(state, pts)])
        blocks = proj @ ext
    else:
        raise ValueError("mode must be 'positions' or 'unit_vectors'")
    rows = blocks.shape[0]
    o = np.zeros((2 * rows, 16))
    o[:rows, :8] = 2.0 * blocks
    o[rows:, 8:] = blocks @ dq.right_matrix(state.pose())
    return numerical_rank_report(o, rank_rtol)


def best_triple(markers):
    """Indices of the marker triple with the largest collinearity margin."""
    pts = _marker_array(markers)
    if pts.shape[0] < 3:
        raise InsufficientMarkersError("need at least 3 markers")
    best, best_margin = None, -1.0
    for combo in itertools.combinations(range(pts.shape[0]), 3):
        i, j, k = combo
        m = float(np.linalg.norm(np.cross(pts[j] - pts[i], pts[k] - pts[i])))
        if m > best_margin:
            best, best_margin = combo, m
    return list(best), best_margin


def observability_audit(state, markers, mode="unit_vectors",
                        col_tol=COLLINEAR_TOL, depth_tol=DEPTH_TOL,
                        rank_rtol=RANK_RTOL):
    """Full report: best-conditioned triple plus the all-marker stacked variant."""
    pts = _marker_array(markers)
    collinear, margin = collinearity_check(pts, col_tol)
    triple, triple_margin = best_triple(pts)
    if mode == "positions":
        triple_report = position_codistribution(state, pts[triple], rank_rtol=rank_rtol)
    else:
        triple_report = unit_vector_codistribution(
            state, pts[triple], depth_tol=depth_tol, rank_rtol=rank_rtol)
    stacked_report = _stacked_codistribution(state, pts, mode, depth_tol, rank_rtol)
    return {
        "mode": mode,
        "n_markers": int(pts.shape[0]),
        "collinear": bool(collinear),
        "collinearity_margin": float(margin),
        "best_triple": {
            "indices": triple,
            "margin": float(triple_margin),
            "report": triple_report.to_dict(),
        },
        "stacked": {"report": stacked_report.to_dict()},
        "verdict": stacked_report.verdict,
    }
