"""Memoryless planar pose solver used as the per-frame baseline.

Markers are assumed coplanar in the target frame. With four or more points
the pose is initialized from a plane-to-image homography (normalized DLT and
orthonormalization); with exactly three points a weak-perspective fit
provides the two candidate initializations of the planar ambiguity. Either
way the result is polished by a damped Gauss-Newton pass on pixel
reprojection error, and the lowest-error candidate wins.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dualquat as dq
from . import quat as qt
from .errors import DegenerateConfigurationError, InsufficientPointsError

MAX_ITERS = 50
STEP_TOL = 1e-10
COLLINEAR_RTOL = 1e-9
COPLANAR_RTOL = 1e-6


@dataclass
class PnpSolution:
    """Recovered target pose with reprojection diagnostics."""

    pose: np.ndarray
    reproj_rms: float
    iterations: int
    converged: bool
    rms_history: list = field(default_factory=list)


def _has_collinear_triple(plane_2d):
    n = plane_2d.shape[0]
    scale = max(np.abs(plane_2d).max(), 1e-12)
    for i in range(n - 2):
        for j in range(i + 1, n - 1):
            d1 = plane_2d[j] - plane_2d[i]
            for k in range(j + 1, n):
                d2 = plane_2d[k] - plane_2d[i]
                if abs(d1[0] * d2[1] - d1[1] * d2[0]) <= 1e-9 * scale ** 2:
                    return True
    return False


def _hartley_normalize(pts):
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    scale = np.sqrt(2.0) / max(np.mean(np.linalg.norm(centered, axis=1)), 1e-12)
    T = np.array([[scale, 0.0, -scale * centroid[0]],
                  [0.0, scale, -scale * centroid[1]],
                  [0.0, 0.0, 1.0]])
    return centered * scale, T

def _homography(plane_2d, image_2d):
    src, t_src = _hartley_normalize(plane_2d)
    dst, t_dst = _hartley_normalize(image_2d)
    n = src.shape[0]
    a = np.zeros((2 * n, 9))
    for i in range(n):
        x, y = src[i]
        u, v = dst[i]
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u]
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, -v]
    _, _, vt = np.linalg.svd(a)
    h = vt[-1].reshape(3, 3)
    return np.linalg.inv(t_dst) @ h @ t_src


def _pose_from_homography(h):
    h1, h2, h3 = h[:, 0], h[:, 1], h[:, 2]
    lam = 2.0 / (np.linalg.norm(h1) + np.linalg.norm(h2))
    if (lam * h3)[2] < 0.0:
        lam = -lam
    r0 = np.column_stack([lam * h1, lam * h2, np.cross(lam * h1, lam * h2)])
    u, _, vt = np.linalg.svd(r0)
    rot = u @ np.diag([1.0, 1.0, np.linalg.det(u @ vt)]) @ vt
    return rot, lam * h3


def _weak_perspective_candidates(plane_2d, image_norm):
    # Exact affine fit on three points, then the two planar sign choices for
    # the out-of-plane rotation components.
    n = plane_2d.shape[0]
    a_mat = np.zeros((2 * n, 6))
    rhs = image_norm.reshape(-1)
    for i in range(n):
        x, y = plane_2d[i]
        a_mat[2 * i, 0:3] = [x, y, 1.0]
        a_mat[2 * i + 1, 3:6] = [x, y, 1.0]
    sol, *_ = np.linalg.lstsq(a_mat, rhs, rcond=None)
    amat = np.array([[sol[0], sol[1]], [sol[3], sol[4]]])
    b = np.array([sol[2], sol[5]])
    c1, c2 = amat[:, 0], amat[:, 1]
    aa, bb, cc = c1 @ c1, c2 @ c2, c1 @ c2
    disc = max((aa + bb) ** 2 - 4.0 * (aa * bb - cc * cc), 0.0)
    s2 = 0.5 * ((aa + bb) + np.sqrt(disc))
    if s2 <= 0.0:
        raise DegenerateConfigurationError("weak-perspective scale collapsed")
    s = np.sqrt(s2)
    r31 = np.sqrt(max(1.0 - aa / s2, 0.0))
    r32 = np.sqrt(max(1.0 - bb / s2, 0.0))
    sign = -1.0 if cc > 0.0 else 1.0  # r31 * r32 must equal -cc / s2
    cands = []
    for flip in (1.0, -1.0):
        col1 = np.array([c1[0] / s, c1[1] / s, flip * r31])
        col2 = np.array([c2[0] / s, c2[1] / s, flip * sign * r32])
        r0 = np.column_stack([col1, col2, np.cross(col1, col2)])
        u, _, vt = np.linalg.svd(r0)
        rot = u @ np.diag([1.0, 1.0, np.linalg.det(u @ vt)]) @ vt
        t = np.array([b[0] / s, b[1] / s, 1.0 / s])
        cands.append((rot, t))
    return cands


def _reproject(cam, rot, t, pts):
    p = pts @ rot.T + t
    if np.any(p[:, 2] <= 1e-9):
        return None
    u = cam.fx * p[:, 0] / p[:, 2] + cam.cx
    v = cam.fy * p[:, 1] / p[:, 2] + cam.cy
    return np.column_stack([u, v])


def _rms(cam, rot, t, pts, pixels):
    proj = _reproject(cam, rot, t, pts)
    if proj is None:
        return np.inf
    return float(np.sqrt(np.mean((proj - pixels) ** 2)))


def _refine(cam, rot, t, pts, pixels, max_iters, step_tol):
    proj = _reproject(cam, rot, t, pts)
    rms = np.inf if proj is None else float(np.sqrt(np.mean((proj - pixels) ** 2)))
    history = [rms]
    converged = False
    iters = 0
    for iters in range(1, max_iters + 1):
        if proj is None:
            break
        p = pts @ rot.T + t
        res = (proj - pixels).reshape(-1)
        z = p[:, 2]
        j_proj = np.zeros((len(pts), 2, 3))
        j_proj[:, 0, 0] = cam.fx / z
        j_proj[:, 0, 2] = -cam.fx * p[:, 0] / z ** 2
        j_proj[:, 1, 1] = cam.fy / z
        j_proj[:, 1, 2] = -cam.fy * p[:, 1] / z ** 2
        jac = np.concatenate(
            [np.einsum("nij,njk->nik", j_proj, -qt.skew(p - t)), j_proj],
            axis=2).reshape(2 * len(pts), 6)
        try:
            step = -np.linalg.solve(jac.T @ jac, jac.T @ res)
        except np.linalg.LinAlgError:
            break
        # Backtrack until the reprojection error does not increase.
        scale = 1.0
        accepted = False
        for _ in range(12):
            rot_try = qt.to_rotation_matrix(
                qt.from_rotation_vector(scale * step[0:3])) @ rot
            t_try = t + scale * step[3:6]
            proj_try = _reproject(cam, rot_try, t_try, pts)
            rms_try = (np.inf if proj_try is None
                       else float(np.sqrt(np.mean((proj_try - pixels) ** 2))))
            if rms_try <= rms + 1e-15:
                rot, t, rms, proj = rot_try, t_try, rms_try, proj_try
                history.append(rms)
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            break
        if np.linalg.norm(scale * step) < step_tol:
            converged = True
            break
    return rot, t, rms, iters, converged, history


def solve_pnp(cam, markers, pixels, min_points=4, max_iters=MAX_ITERS,
              step_tol=STEP_TOL):
    """Pose of the target frame relative to the camera from one pixel frame.

    `markers` are target-frame points (coplanar, not all on a line) matched
    one-to-one with `pixels`. Raises InsufficientPointsError below
    `min_points` and DegenerateConfigurationError for collinear or
    non-coplanar layouts.
    """
    pts = np.asarray(getattr(markers, "points", markers), dtype=float)
    pixels = np.asarray(pixels, dtype=float)
    if pts.shape[0] != pixels.shape[0]:
        raise ValueError("markers and pixels must pair up")
    if pts.shape[0] < max(min_points, 3):
        raise InsufficientPointsError(
            f"{pts.shape[0]} correspondences, need {max(min_points, 3)}")

    centroid = pts.mean(axis=0)
    centered = pts - centroid
    _, sv, vt = np.linalg.svd(centered, full_matrices=True)
    scale = max(sv[0], 1e-12)
    if sv[1] <= COLLINEAR_RTOL * scale:
        raise DegenerateConfigurationError("markers are collinear")
    if len(sv) > 2 and sv[2] > COPLANAR_RTOL * scale:
        raise DegenerateConfigurationError("markers are not coplanar")
    e1, e2 = vt[0], vt[1]
    frame = np.column_stack([e1, e2, np.cross(e1, e2)])
    plane_2d = centered @ frame[:, :2]

    norm_img = np.column_stack([(pixels[:, 0] - cam.cx) / cam.fx,
                                (pixels[:, 1] - cam.cy) / cam.fy])
    # The homography initialization degenerates when a collinear triple sits
    # inside a small point set; the weak-perspective pair covers that case
    # (and the three-point case, where the flip ambiguity is intrinsic). The
    # lowest refined reprojection error picks the winner.
    candidates = []
    if pts.shape[0] >= 4:
        candidates.append(_pose_from_homography(_homography(plane_2d, norm_img)))
    if pts.shape[0] == 3 or _has_collinear_triple(plane_2d):
        candidates.extend(_weak_perspective_candidates(plane_2d, norm_img))

    best = None
    for rot_pc, t_pc in candidates:
        # Compose the plane frame back into the target frame.
        rot = rot_pc @ frame.T
        t = t_pc - rot @ centroid
        rot, t, rms, iters, conv, hist = _refine(
            cam, rot, t, pts, pixels, max_iters, step_tol)
        if best is None or rms < best[2]:
            best = (rot, t, rms, iters, conv, hist)
    rot, t, rms, iters, conv, hist = best
    pose = dq.pose_from(qt.from_rotation_matrix(rot), t)
    return PnpSolution(pose=pose, reproj_rms=rms, iterations=iters,
                       converged=conv, rms_history=hist)
