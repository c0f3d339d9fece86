"""Scenario execution: truth propagation, filtering, baseline, metrics, I/O.

A trial runs the camera and target as independently forced rigid bodies,
produces pixel measurements of scheduled markers through the pinhole model,
and drives the manifold filter and the memoryless pose solver side by side.
Rows land in a TrialRecord whose CSV schema is versioned and consumed by the
plotting package; Monte Carlo batches aggregate per-phase errors and filter
consistency statistics.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import camera as cam_mod
from . import dualquat as dq
from . import observability as obs
from . import pnp as pnp_mod
from . import quat as qt
from . import ukf
from .config import TRIAL_SCHEMA, ScenarioConfig
from .dynamics import (BodyState, inertial_accel, propagate_bodies,
                       relative_accel, rk4_step)
from .errors import (DqtrackError, InitializationError,
                     InnovationConditioningError)

STATE_COLS = ["qw", "qx", "qy", "qz", "rx", "ry", "rz",
              "wx", "wy", "wz", "vx", "vy", "vz"]

CSV_COLUMNS = (
    ["t"]
    + [f"truth_{c}" for c in STATE_COLS]
    + [f"est_{c}" for c in STATE_COLS]
    + [f"P_diag_{i}" for i in range(12)]
    + ["err_rot", "err_pos", "err_w", "err_v",
       "pnp_err_rot", "pnp_err_pos", "pnp_available", "n_markers"]
)


@dataclass
class TrialRecord:
    """Per-step truth, estimate, covariance diagonal, and error metrics."""

    t: np.ndarray
    truth: np.ndarray        # (n, 13) quaternion, position, omega, velocity
    est: np.ndarray          # (n, 13)
    p_diag: np.ndarray       # (n, 12)
    err: np.ndarray          # (n, 4) rot, pos, omega, velocity
    pnp_err: np.ndarray      # (n, 2) rot, pos (NaN when unavailable)
    pnp_available: np.ndarray
    n_markers: np.ndarray
    nees: np.ndarray = field(repr=False, default=None)
    p_full: np.ndarray = field(repr=False, default=None)  # (n, 12, 12)

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"# {TRIAL_SCHEMA}\n")
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for i in range(len(self.t)):
                vals = ([self.t[i]] + list(self.truth[i]) + list(self.est[i])
                        + list(self.p_diag[i]) + list(self.err[i])
                        + list(self.pnp_err[i]))
                text = ",".join(f"{v:.17g}" for v in vals)
                fh.write(f"{text},{int(self.pnp_available[i])},"
                         f"{int(self.n_markers[i])}\n")


def trial_rng(seed, index):
    """Counter-style per-trial generator: independent, reproducible streams."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def relative_truth(cam_state, targ_state):
    """Target pose and dual velocity relative to the camera, camera frame."""
    pose = dq.chain(cam_state.pose, targ_state.pose)
    vel = dq.transform_vector(pose, targ_state.vel) - cam_state.vel
    return pose, vel


def state_components(pose, vel):
    """Unpack (pose, vel) into quaternion, position, omega, velocity arrays."""
    q = dq.pose_rotation(pose)
    r = dq.pose_translation_parent(pose)
    w = vel[..., 1:4]
    v = vel[..., 5:8] + qt.cross3(w, r)
    return q, r, w, v


def error_metrics(truth, estimate):
    """Rotation angle, position, angular rate, and velocity error magnitudes.

    The rotation error is 2*arccos(|scalar(q_truth* q_est)|), which folds the
    quaternion double cover so q and -q measure as identical attitudes.
    """
    qt_, rt, wt, vt_ = state_components(truth.pose, truth.vel)
    qe, re, we, ve = state_components(estimate.pose, estimate.vel)
    inner = qt.scalar(qt.qmul(qt.qconj(qt_), qe))
    rot = 2.0 * np.arccos(np.clip(np.abs(inner), 0.0, 1.0))
    return (float(rot), float(np.linalg.norm(rt - re)),
            float(np.linalg.norm(wt - we)), float(np.linalg.norm(vt_ - ve)))


def make_meas_model(camera, marker_pts):
    """Batched pixel measurement map over manifold states."""
    pts = np.asarray(marker_pts, dtype=float)

    def h(poses, vels):
        q = poses[..., :4]
        t = dq.pose_translation_parent(poses)
        p = qt.rotate_vector(q[:, np.newaxis, :], pts[np.newaxis, :, :])
        p = p + t[:, np.newaxis, :]
        u = camera.fx * p[..., 0] / p[..., 2] + camera.cx
        v = camera.fy * p[..., 1] / p[..., 2] + camera.cy
        return np.stack([u, v], axis=-1).reshape(poses.shape[0], -1)

    return h


def make_process_model(targ_accel, cam_vel, cam_accel):
    """Relative-motion propagation with inputs held across the step."""

    def process(poses, vels, dt):
        def accel(state):
            return relative_accel(state, targ_accel, cam_vel, cam_accel)

        out = rk4_step(BodyState(poses, vels), accel, dt, frame="parent")
        return out.pose, out.vel

    return process


def _target_accel_from_estimate(fs, cam_vel, cfg):
    # Target inertial velocity in the target frame, reconstructed from the
    # relative estimate and the known camera motion.
    tvel_c = fs.vel + cam_vel
    tvel_t = dq.transform_vector(dq.dconj(fs.pose), tvel_c)
    body = BodyState(pose=None, vel=tvel_t)
    return inertial_accel(body, cfg.target_body.mass_matrix(),
                          cfg.target_body.wrench())


def init_estimate(cfg, frame, rng):
    """Initial filter state: pose from the frame's pixels, sampled velocity.

    The pose comes from the memoryless solver on the first frame; the
    velocity is the true relative velocity perturbed by draws at the
    configured initial standard deviations (angular axes first).
    """
    cam_state = cfg.camera_body.initial_state()
    targ_state = cfg.target_body.initial_state()
    rel_pose, rel_vel = relative_truth(cam_state, targ_state)
    pts = cfg.markers.points[list(frame.marker_ids)]
    try:
        sol = pnp_mod.solve_pnp(cfg.camera, pts, frame.values,
                                min_points=cfg.pnp_min_points)
    except DqtrackError as exc:
        raise InitializationError(f"pose solve failed on the first frame: {exc}")
    _, r_est, _, _ = state_components(sol.pose, rel_vel)
    _, _, w_true, v_true = state_components(rel_pose, rel_vel)
    w0, v0 = w_true, v_true
    if cfg.init_sigma["sample"]:
        w0 = w_true + rng.normal(0.0, cfg.init_sigma["angular_velocity"], 3)
        v0 = v_true + rng.normal(0.0, cfg.init_sigma["velocity"], 3)
    vel0 = dq.velocity_from(w0, v0, -r_est)
    return ukf.FilterState(sol.pose, vel0, cfg.initial_covariance())


def _solve_pnp_row(cfg, frame, truth_pose):
    if frame.n_markers < cfg.pnp_min_points:
        return np.nan, np.nan, False
    pts = cfg.markers.points[list(frame.marker_ids)]
    try:
        sol = pnp_mod.solve_pnp(cfg.camera, pts, frame.values,
                                min_points=cfg.pnp_min_points)
    except DqtrackError:
        return np.nan, np.nan, False
    q_t = dq.pose_rotation(truth_pose)
    q_e = dq.pose_rotation(sol.pose)
    inner = qt.scalar(qt.qmul(qt.qconj(q_t), q_e))
    rot = 2.0 * np.arccos(np.clip(np.abs(inner), 0.0, 1.0))
    pos = np.linalg.norm(dq.pose_translation_parent(truth_pose)
                         - dq.pose_translation_parent(sol.pose))
    return float(rot), float(pos), True


def _pack_row(pose, vel):
    q, r, w, v = state_components(pose, vel)
    return np.concatenate([q, r, w, v])


def run_scenario(cfg: ScenarioConfig, trial_index=0) -> TrialRecord:
    """Run one full trial; deterministic for a given (config, trial_index)."""
    rng = trial_rng(cfg.seed, trial_index)
    n = cfg.n_steps
    dt = cfg.dt

    cam_state = cfg.camera_body.initial_state()
    targ_state = cfg.target_body.initial_state()
    cam_mass = cfg.camera_body.mass_matrix()
    cam_wrench = cfg.camera_body.wrench()
    targ_mass = cfg.target_body.mass_matrix()
    targ_wrench = cfg.target_body.wrench()

    params = cfg.ukf
    Q = cfg.process_noise()
    meas_model = None
    meas_ids = None

    rec = TrialRecord(
        t=np.zeros(n), truth=np.zeros((n, 13)), est=np.zeros((n, 13)),
        p_diag=np.zeros((n, 12)), err=np.zeros((n, 4)),
        pnp_err=np.zeros((n, 2)), pnp_available=np.zeros(n, dtype=bool),
        n_markers=np.zeros(n, dtype=int), nees=np.zeros(n),
        p_full=np.zeros((n, 12, 12)),
    )

    rel_pose, rel_vel = relative_truth(cam_state, targ_state)
    frame = cam_mod.measure_frame(cfg.camera, rel_pose, cfg.markers,
                                  cfg.schedule, 0.0, rng, "pixels")
    fs = init_estimate(cfg, frame, rng)

    for k in range(n):
        t = k * dt
        if k > 0:
            # Filter prediction with camera state and accelerations held at
            # the values from the start of the interval.
            cam_vel = cam_state.vel
            cam_accel = inertial_accel(cam_state, cam_mass, cam_wrench)
            targ_accel = _target_accel_from_estimate(fs, cam_vel, cfg)
            process = make_process_model(targ_accel, cam_vel, cam_accel)
            fs = ukf.predict(fs, process, Q, dt, params)

            # Truth: substep integration with wrenches re-evaluated per stage.
            cam_state, targ_state = propagate_bodies(
                [cam_state, targ_state], [cam_mass, targ_mass],
                [cam_wrench, targ_wrench], dt, cfg.truth_substeps)
            if cfg.truth_noise["enabled"]:
                dw = rng.normal(0.0, cfg.truth_noise["angular_velocity"]
                                * np.sqrt(dt), 3)
                dv = rng.normal(0.0, cfg.truth_noise["velocity"]
                                * np.sqrt(dt), 3)
                vel = targ_state.vel.copy()
                vel[1:4] += dw
                vel[5:8] += dv
                targ_state = BodyState(targ_state.pose, vel)

            rel_pose, rel_vel = relative_truth(cam_state, targ_state)
            frame = cam_mod.measure_frame(cfg.camera, rel_pose, cfg.markers,
                                          cfg.schedule, t, rng, "pixels")
            if frame.n_markers > 0:
                if frame.marker_ids != meas_ids:
                    meas_ids = list(frame.marker_ids)
                    meas_model = make_meas_model(
                        cfg.camera, cfg.markers.points[meas_ids])
                R = (cfg.camera.pixel_noise_sigma ** 2
                     * np.eye(2 * frame.n_markers))
                try:
                    fs = ukf.update(fs, frame.stacked(), meas_model, R, params)
                except InnovationConditioningError:
                    # Degenerate innovation covariance (fully collapsed
                    # noise-free runs): skip the update, keep predicting.
                    pass

        truth = BodyState(rel_pose, rel_vel)
        est = BodyState(fs.pose, fs.vel)
        rec.t[k] = t
        rec.truth[k] = _pack_row(rel_pose, rel_vel)
        rec.est[k] = _pack_row(fs.pose, fs.vel)
        rec.p_diag[k] = np.diag(fs.P)
        rec.p_full[k] = fs.P
        rec.err[k] = error_metrics(truth, est)
        rot, pos, ok = _solve_pnp_row(cfg, frame, rel_pose)
        rec.pnp_err[k] = (rot, pos)
        rec.pnp_available[k] = ok
        rec.n_markers[k] = frame.n_markers
        eps = ukf.lift(rel_pose, rel_vel, fs.pose, fs.vel,
                       canonicalize=params.canonicalize_error_quat)
        try:
            rec.nees[k] = float(eps @ np.linalg.solve(fs.P, eps))
        except np.linalg.LinAlgError:
            # Degenerate covariance (noise-free configurations); report the
            # consistency statistic through the pseudo-inverse instead.
            rec.nees[k] = float(eps @ np.linalg.pinv(fs.P) @ eps)
    return rec


def _phase_masks(cfg, t):
    phases = []
    for t0, t1, ids in cfg.schedule.segments:
        mask = (t >= t0 - 1e-12) & (t < t1 - 1e-12)
        if abs(t1 - cfg.schedule.t_end) < 1e-12:
            mask |= np.abs(t - t1) < 1e-12
        phases.append({"t_start": t0, "t_end": t1, "n_markers": len(ids),
                       "mask": mask})
    return phases


def summarize(cfg, rec):
    """Per-phase means, consistency statistics, and observability verdicts."""
    phases = []
    for ph in _phase_masks(cfg, rec.t):
        m = ph["mask"]
        entry = {
            "t_start": ph["t_start"], "t_end": ph["t_end"],
            "n_markers": ph["n_markers"],
            "ukf": {k: float(np.mean(rec.err[m, i]))
                    for i, k in enumerate(["rot", "pos", "omega", "vel"])},
            "mean_nees": float(np.mean(rec.nees[m])),
            "pnp_available_fraction": float(np.mean(rec.pnp_available[m])),
        }
        if np.any(rec.pnp_available[m]):
            ok = m & rec.pnp_available
            entry["pnp"] = {"rot": float(np.mean(rec.pnp_err[ok, 0])),
                            "pos": float(np.mean(rec.pnp_err[ok, 1]))}
        else:
            entry["pnp"] = None
        phases.append(entry)

    growth = _covariance_growth(cfg, rec)
    audits = _observability_audits(cfg)
    return {
        "schema": "dqtrack-summary-v1",
        "seed": cfg.seed,
        "phases": phases,
        "covariance_growth": growth,
        "observability": audits,
    }


def _covariance_growth(cfg, rec):
    """Pose-covariance change across each deficient (< 3 marker) phase.

    Diagonal entries are reported for plotting, but the information split is
    judged on the pose-block eigenvalues: the weakly observed directions
    balloon while the subspace the remaining measurements still pin keeps its
    pre-occlusion scale.
    """
    out = []
    for ph in _phase_masks(cfg, rec.t):
        if ph["n_markers"] >= 3 or not np.any(ph["mask"]):
            continue
        idx = np.where(ph["mask"])[0]
        i_before = idx[0] - 1 if idx[0] > 0 else idx[0]
        i_after = idx[-1]
        before = rec.p_diag[i_before, :6]
        after = rec.p_diag[i_after, :6]
        grew = after > before
        ev_before = np.linalg.eigvalsh(rec.p_full[i_before][:6, :6])
        ev_after = np.linalg.eigvalsh(rec.p_full[i_after][:6, :6])
        out.append({
            "t_start": ph["t_start"], "t_end": ph["t_end"],
            "pose_diag_before": [float(x) for x in before],
            "pose_diag_after": [float(x) for x in after],
            "grew": [bool(g) for g in grew],
            "any_grew": bool(np.any(grew)),
            "all_grew": bool(np.all(grew)),
            "pose_eig_min_ratio": float(ev_after[0] / ev_before[0]),
            "pose_eig_max_ratio": float(ev_after[-1] / ev_before[-1]),
        })
    return out


def _observability_audits(cfg):
    cam_state = cfg.camera_body.initial_state()
    targ_state = cfg.target_body.initial_state()
    rel_pose, rel_vel = relative_truth(cam_state, targ_state)
    state = obs.DecomposedState.from_pose_velocity(rel_pose, rel_vel)
    audits = {}
    for mode in ("positions", "unit_vectors"):
        audits[mode] = obs.observability_audit(state, cfg.markers, mode=mode)
    per_phase = []
    for t0, t1, ids in cfg.schedule.segments:
        if len(ids) < 3:
            per_phase.append({"t_start": t0, "t_end": t1, "n_markers": len(ids),
                              "verdict": "deficient",
                              "reason": "fewer than 3 markers"})
        else:
            audit = obs.observability_audit(
                state, cfg.markers.points[list(ids)], mode="unit_vectors")
            per_phase.append({"t_start": t0, "t_end": t1, "n_markers": len(ids),
                              "verdict": audit["verdict"]})
    audits["per_phase"] = per_phase
    return audits


def _run_trial(args):
    cfg, index = args
    return run_scenario(cfg, trial_index=index)


def run_monte_carlo(cfg, n_trials, jobs=1):
    """Independent seeded trials plus the aggregate consistency report."""
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_trial,
                                    [(cfg, i) for i in range(n_trials)]))
    else:
        records = [run_scenario(cfg, trial_index=i) for i in range(n_trials)]
    return aggregate(cfg, records), records


def aggregate(cfg, records):
    """Phase-mean errors, NEES consistency, and 3-sigma containment rates."""
    n_trials = len(records)
    t = records[0].t
    err = np.stack([r.err for r in records])          # (n_trials, n, 4)
    nees = np.stack([r.nees for r in records])        # (n_trials, n)
    pnp_err = np.stack([r.pnp_err for r in records])
    pnp_ok = np.stack([r.pnp_available for r in records])
    p_diag = np.stack([r.p_diag for r in records])

    phases = []
    for ph in _phase_masks(cfg, t):
        m = ph["mask"]
        entry = {
            "t_start": ph["t_start"], "t_end": ph["t_end"],
            "n_markers": ph["n_markers"],
            "ukf": {k: float(np.mean(err[:, m, i]))
                    for i, k in enumerate(["rot", "pos", "omega", "vel"])},
            "mean_nees": float(np.mean(nees[:, m])),
            "pnp_available_fraction": float(np.mean(pnp_ok[:, m])),
        }
        sel = pnp_ok[:, m]
        if np.any(sel):
            entry["pnp"] = {
                "rot": float(np.mean(pnp_err[:, m, 0][sel])),
                "pos": float(np.mean(pnp_err[:, m, 1][sel])),
            }
        else:
            entry["pnp"] = None
        phases.append(entry)

    # Two consistency bands: the 95% chi-square interval for the error
    # dimension itself, and the tighter interval for a per-step average of
    # n_trials independent draws.
    dof_lo = float(stats.chi2.ppf(0.025, 12))
    dof_hi = float(stats.chi2.ppf(0.975, 12))
    lo = float(stats.chi2.ppf(0.025, 12 * n_trials) / n_trials)
    hi = float(stats.chi2.ppf(0.975, 12 * n_trials) / n_trials)
    per_step_mean = np.mean(nees, axis=0)
    full_mask = np.zeros(len(t), dtype=bool)
    for ph in _phase_masks(cfg, t):
        if ph["n_markers"] >= 4:
            full_mask |= ph["mask"]
    four_marker_mean = float(np.mean(per_step_mean[full_mask])) if np.any(full_mask) else float("nan")

    # Block containment of error magnitudes inside 3x the root sum of the
    # matching covariance diagonal entries.
    blocks = {"rot": (0, 0), "pos": (1, 3), "omega": (2, 6), "vel": (3, 9)}
    containment = {}
    for name, (err_i, p_i) in blocks.items():
        bound = 3.0 * np.sqrt(np.sum(p_diag[:, :, p_i:p_i + 3], axis=-1))
        containment[name] = float(np.mean(err[:, :, err_i] <= bound))

    comparison = {}
    ge3 = [ph for ph in phases if ph["n_markers"] >= 3 and ph["pnp"] is not None]
    if ge3:
        comparison = {
            "ukf_mean_rot": float(np.mean([p["ukf"]["rot"] for p in ge3])),
            "pnp_mean_rot": float(np.mean([p["pnp"]["rot"] for p in ge3])),
            "ukf_mean_pos": float(np.mean([p["ukf"]["pos"] for p in ge3])),
            "pnp_mean_pos": float(np.mean([p["pnp"]["pos"] for p in ge3])),
        }
        comparison["ukf_below_pnp_rot"] = (
            comparison["ukf_mean_rot"] < comparison["pnp_mean_rot"])
        comparison["ukf_below_pnp_pos"] = (
            comparison["ukf_mean_pos"] < comparison["pnp_mean_pos"])

    return {
        "schema": "dqtrack-montecarlo-v1",
        "n_trials": n_trials,
        "seed": cfg.seed,
        "phases": phases,
        "nees": {
            "per_step_mean": [float(x) for x in per_step_mean],
            "dof_interval95": [dof_lo, dof_hi],
            "trial_mean_interval95": [lo, hi],
            "four_marker_phase_mean": four_marker_mean,
            "within_dof_interval": bool(dof_lo <= four_marker_mean <= dof_hi),
            "within_trial_mean_interval": bool(lo <= four_marker_mean <= hi),
        },
        "containment_3sigma": containment,
        "comparison": comparison,
    }


def write_outputs(cfg, rec, outdir):
    """Write trial.csv and summary.json under outdir; returns their paths."""
    import os

    os.makedirs(outdir, exist_ok=True)
    csv_path = os.path.join(outdir, "trial.csv")
    json_path = os.path.join(outdir, "summary.json")
    rec.to_csv(csv_path)
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(summarize(cfg, rec), fh, indent=2)
    return csv_path, json_path
