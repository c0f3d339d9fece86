"""Figure rendering for the three standard views of a trial run."""

from __future__ import annotations

from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .reader import load_trial, signed_errors, stack, three_sigma_bands

KINDS = ("truth", "errors3sigma", "compare")

GROUPS = [
    ("rotation error (rad)", 0),
    ("position error (m)", 3),
    ("angular rate error (rad/s)", 6),
    ("velocity error (m/s)", 9),
]

AXES = "xyz"


@dataclass(frozen=True)
class PlotSpec:
    """One render request: which view of which trial file goes where."""

    input_path: str
    kind: str
    output_path: str
    dpi: int = 150

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")


def render(spec: PlotSpec):
    """Render one figure; returns the output path."""
    trial = load_trial(spec.input_path)
    if spec.kind == "truth":
        fig = _render_truth(trial)
    elif spec.kind == "errors3sigma":
        fig = _render_errors(trial)
    else:
        fig = _render_compare(trial)
    fig.savefig(spec.output_path, dpi=spec.dpi)
    plt.close(fig)
    return spec.output_path


def _render_truth(trial):
    t = trial["t"]
    truth = stack(trial, "truth")
    fig, axes = plt.subplots(4, 1, figsize=(8, 10), sharex=True)
    for i, lbl in enumerate("wxyz"):
        axes[0].plot(t, truth[:, i], label=f"q{lbl}")
    axes[0].set_ylabel("attitude quaternion")
    blocks = [("position (m)", 4), ("angular rate (rad/s)", 7),
              ("velocity (m/s)", 10)]
    for ax, (ylabel, col) in zip(axes[1:], blocks):
        for i in range(3):
            ax.plot(t, truth[:, col + i], label=AXES[i])
        ax.set_ylabel(ylabel)
    for ax in axes:
        ax.legend(loc="upper right", fontsize=8)
        ax.grid(True, alpha=0.3)
    axes[-1].set_xlabel("time (s)")
    fig.suptitle("relative state truth")
    fig.tight_layout()
    return fig


def _render_errors(trial):
    t = trial["t"]
    err = signed_errors(trial)
    bands = three_sigma_bands(trial)
    fig, axes = plt.subplots(4, 1, figsize=(8, 10), sharex=True)
    for ax, (ylabel, col) in zip(axes, GROUPS):
        for i in range(3):
            line, = ax.plot(t, err[:, col + i], label=AXES[i])
            ax.fill_between(t, -bands[:, col + i], bands[:, col + i],
                            color=line.get_color(), alpha=0.15)
        ax.set_ylabel(ylabel)
        ax.legend(loc="upper right", fontsize=8)
        ax.grid(True, alpha=0.3)
    axes[-1].set_xlabel("time (s)")
    fig.suptitle("estimate errors with 3-sigma bounds")
    fig.tight_layout()
    return fig


def _render_compare(trial):
    t = trial["t"]
    available = trial["pnp_available"] > 0.5
    fig, axes = plt.subplots(3, 1, figsize=(8, 8), sharex=True)
    axes[0].plot(t, trial["err_rot"], label="filter")
    axes[0].plot(t[available], trial["pnp_err_rot"][available], ".",
                 markersize=3, label="pose solver")
    axes[0].set_ylabel("orientation error (rad)")
    axes[1].plot(t, trial["err_pos"], label="filter")
    axes[1].plot(t[available], trial["pnp_err_pos"][available], ".",
                 markersize=3, label="pose solver")
    axes[1].set_ylabel("position error (m)")
    axes[2].step(t, trial["n_markers"], where="post")
    axes[2].set_ylabel("measured markers")
    axes[2].set_yticks(sorted(set(int(n) for n in trial["n_markers"])))
    for ax in axes[:2]:
        ax.legend(loc="upper right", fontsize=8)
    for ax in axes:
        ax.grid(True, alpha=0.3)
    axes[-1].set_xlabel("time (s)")
    fig.suptitle("filter vs per-frame pose solver")
    fig.tight_layout()
    return fig
