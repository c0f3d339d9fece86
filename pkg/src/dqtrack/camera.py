"""Pinhole camera measurement generation over a fiducial marker set.

Supports three measurement maps over the same geometry: raw pixel
projections (with optional Gaussian sensor noise), camera-frame position
vectors, and unit direction vectors. An occlusion schedule decides which
markers are active at a given time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dualquat as dq
from . import quat as qt
from .errors import PositiveDepthError

DEPTH_TOL = 1e-6

MODES = ("pixels", "positions", "unit_vectors")


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus the pixel noise level.

    `image_size` enables optional field-of-view culling when `clip` is set;
    by default points project regardless of image bounds.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    pixel_noise_sigma: float = 0.0
    image_size: tuple | None = None
    clip: bool = False

    def __post_init__(self):
        if self.fx <= 0.0 or self.fy <= 0.0:
            raise ValueError("focal lengths must be positive")
        if self.pixel_noise_sigma < 0.0:
            raise ValueError("pixel noise sigma must be non-negative")
        if self.clip and self.image_size is None:
            raise ValueError("clipping requires image_size")

    @property
    def k_matrix(self):
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class MarkerSet:
    """Marker positions in the target frame, shape (n, 3)."""

    points: np.ndarray
    has_duplicates: bool = field(init=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise ValueError("markers must be an (n, 3) array with n >= 1")
        if not np.all(np.isfinite(pts)):
            raise ValueError("marker coordinates must be finite")
        object.__setattr__(self, "points", pts)
        dup = len({tuple(p) for p in pts}) < pts.shape[0]
        object.__setattr__(self, "has_duplicates", dup)

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class OcclusionSchedule:
    """Ordered visibility segments (t_start, t_end, marker ids) covering [0, T].

    Segments are half-open on the right except the final one, which includes
    its endpoint.
    """

    segments: tuple

    def __post_init__(self):
        segs = []
        for seg in self.segments:
            t0, t1, ids = seg
            segs.append((float(t0), float(t1), tuple(int(i) for i in ids)))
        if not segs:
            raise ValueError("schedule needs at least one segment")
        for t0, t1, _ in segs:
            if not t1 > t0:
                raise ValueError("segment end must exceed its start")
        for (a0, a1, _), (b0, b1, _) in zip(segs, segs[1:]):
            if abs(a1 - b0) > 1e-12:
                raise ValueError("segments must be contiguous and ordered")
        object.__setattr__(self, "segments", tuple(segs))

    @property
    def t_start(self):
        return self.segments[0][0]

    @property
    def t_end(self):
        return self.segments[-1][1]

    def covers(self, t0, t1):
        return self.t_start <= t0 + 1e-12 and self.t_end >= t1 - 1e-12

    def visible_ids(self, t):
        if t < self.t_start - 1e-12 or t > self.t_end + 1e-12:
            raise ValueError(f"time {t} outside schedule [{self.t_start}, {self.t_end}]")
        for t0, t1, ids in self.segments:
            if t0 - 1e-12 <= t < t1:
                return ids
        return self.segments[-1][2]


@dataclass
class MeasurementFrame:
    """Per-timestep measurements for whichever markers were observable."""

    t: float
    mode: str
    marker_ids: list
    values: np.ndarray  # (m, 2) pixels or (m, 3) positions / unit vectors

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    @property
    def n_markers(self):
        return len(self.marker_ids)

    def stacked(self):
        return self.values.reshape(-1)


def marker_position_camera(rel_pose, marker):
    """Camera-frame position of target-frame marker points.

    Broadcasts over markers: an (m, 3) input yields an (m, 3) output.
    """
    q = dq.pose_rotation(rel_pose)
    t = dq.pose_translation_parent(rel_pose)
    return qt.rotate_vector(q, np.asarray(marker, dtype=float)) + t


def unit_vector_measure(rel_pose, marker, depth_tol=DEPTH_TOL):
    """Unit direction from the camera to a marker."""
    r = marker_position_camera(rel_pose, marker)
    n = np.linalg.norm(r, axis=-1)
    if np.any(n <= depth_tol):
        raise PositiveDepthError("marker at zero range")
    return r / n[..., np.newaxis]


def project(cam, rel_pose, marker, rng=None, depth_tol=DEPTH_TOL):
    """Pixel coordinates of markers, with optional Gaussian sensor noise.

    Raises when any requested marker sits at or behind the camera plane.
    """
    r = marker_position_camera(rel_pose, marker)
    z = r[..., 2]
    if np.any(z <= depth_tol):
        raise PositiveDepthError("marker behind the camera")
    u = cam.fx * r[..., 0] / z + cam.cx
    v = cam.fy * r[..., 1] / z + cam.cy
    px = np.stack([u, v], axis=-1)
    if rng is not None and cam.pixel_noise_sigma > 0.0:
        px = px + rng.normal(0.0, cam.pixel_noise_sigma, size=px.shape)
    return px


def measure_frame(cam, rel_pose, markers, schedule, t, rng=None, mode="pixels",
                  depth_tol=DEPTH_TOL):
    """One measurement frame: scheduled, in-range markers in id order.

    Pixel mode draws noise per marker in ascending id order, u before v, so a
    fixed generator reproduces frames exactly. Position and unit-vector modes
    are noise free.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    pts = markers.points if isinstance(markers, MarkerSet) else np.asarray(markers, dtype=float)
    ids = []
    values = []
    for mid in schedule.visible_ids(t):
        r = marker_position_camera(rel_pose, pts[mid])
        if mode == "pixels":
            if r[2] <= depth_tol:
                continue
            px = project(cam, rel_pose, pts[mid], rng=rng, depth_tol=depth_tol)
            if cam.clip and cam.image_size is not None:
                w, h = cam.image_size
                if not (0.0 <= px[0] < w and 0.0 <= px[1] < h):
                    continue
            values.append(px)
        else:
            n = np.linalg.norm(r)
            if n <= depth_tol:
                continue
            values.append(r if mode == "positions" else r / n)
        ids.append(mid)
    arr = np.array(values) if values else np.zeros((0, 2 if mode == "pixels" else 3))
    return MeasurementFrame(t=float(t), mode=mode, marker_ids=ids, values=arr)


def frames_to_csv(frames, path):
    """Dump pixel frames to a debug CSV with columns t, marker_id, u, v."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,marker_id,u,v\n")
        for frame in frames:
            for mid, val in zip(frame.marker_ids, frame.values):
                fh.write(f"{frame.t:.9f},{mid},{val[0]:.17g},{val[1]:.17g}\n")
