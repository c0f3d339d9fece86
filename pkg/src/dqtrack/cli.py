"""Command line entry points.

Subcommands: run (single trial to CSV + summary JSON), montecarlo
(aggregate report), observability (marker-layout rank audit as JSON), and
validate-config. Exit codes: 0 success, 1 validation or usage error,
2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import observability as obs
from . import scenario as scn
from .config import ConfigError, default_config, from_toml
from .errors import DqtrackError


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser():
    parser = _Parser(prog="dqtrack", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario trial")
    run.add_argument("--config", help="scenario TOML; defaults when omitted")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--out", default=".", help="output directory")

    mc = sub.add_parser("montecarlo", help="run seed-controlled trials")
    mc.add_argument("--config")
    mc.add_argument("--seed", type=int)
    mc.add_argument("--trials", type=int, default=50)
    mc.add_argument("--jobs", type=int, default=1)
    mc.add_argument("--out", default=".")

    ob = sub.add_parser("observability", help="rank audit of the marker layout")
    ob.add_argument("--config")
    ob.add_argument("--mode", choices=["positions", "unit_vectors"],
                    default="unit_vectors")
    ob.add_argument("--out", help="JSON file; stdout when omitted")

    val = sub.add_parser("validate-config", help="check a scenario file")
    val.add_argument("--config", required=True)
    return parser


def _load(args):
    cfg = from_toml(args.config) if args.config else default_config()
    seed = getattr(args, "seed", None)
    if seed is not None:
        if seed < 0:
            raise ConfigError("scenario.seed", "must be a non-negative integer")
        cfg.seed = seed
    return cfg


def _cmd_run(args):
    cfg = _load(args)
    rec = scn.run_scenario(cfg)
    csv_path, json_path = scn.write_outputs(cfg, rec, args.out)
    print(f"wrote {csv_path} and {json_path}")
    return 0


def _cmd_montecarlo(args):
    cfg = _load(args)
    report, _ = scn.run_monte_carlo(cfg, args.trials, jobs=args.jobs)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "montecarlo.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
    nees = report["nees"]
    print(f"wrote {path}")
    print(f"nees four-marker mean {nees['four_marker_phase_mean']:.3f} "
          f"in {nees['dof_interval95']}: {nees['within_dof_interval']}")
    return 0


def _cmd_observability(args):
    cfg = _load(args)
    cam_state = cfg.camera_body.initial_state()
    targ_state = cfg.target_body.initial_state()
    rel_pose, rel_vel = scn.relative_truth(cam_state, targ_state)
    state = obs.DecomposedState.from_pose_velocity(rel_pose, rel_vel)
    audit = obs.observability_audit(state, cfg.markers, mode=args.mode)
    text = json.dumps(audit, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def _cmd_validate(args):
    from_toml(args.config)
    print("configuration ok")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "montecarlo": _cmd_montecarlo,
    "observability": _cmd_observability,
    "validate-config": _cmd_validate,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 1
    except (DqtrackError, OSError, np.linalg.LinAlgError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
