"""Command line entry point (``vitac``).

Exit codes: 0 ok, 2 configuration error, 3 protocol error, 4 replay divergence.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .config import EnvConfig, resolve_config
from .errors import ConfigError, ProtocolError, ReplayRefusedError, VitacError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROTOCOL = 3
EXIT_DIVERGENCE = 4


def _add_config_flags(p):
    p.add_argument("--config", help="environment config file (default: $VITAC_CONFIG)")
    p.add_argument("--marker-rows", type=int)
    p.add_argument("--marker-cols", type=int)
    p.add_argument("--marker-spacing-mm", type=float)
    p.add_argument("--gel-mesh", help="tetmesh v1 file replacing the box gel")


def _config_from_args(args, task=None) -> EnvConfig:
    overrides = {}
    if task:
        overrides["task"] = task
        overrides["max_steps"] = None  # re-resolve the per-task default
    for flag, key in (
        ("marker_rows", "marker_rows"),
        ("marker_cols", "marker_cols"),
        ("marker_spacing_mm", "marker_spacing_mm"),
        ("gel_mesh", "gel_mesh_path"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    return resolve_config(args.config, overrides)


def cmd_serve(args) -> int:
    from .server import serve

    config = _config_from_args(args)
    if args.stdio:
        serve(stdio=True, config=config, privileged=args.privileged)
        return EXIT_OK
    host, _, port = args.addr.rpartition(":")
    serve(
        address=(host or "127.0.0.1", int(port)),
        config=config,
        privileged=args.privileged,
        max_sessions=args.max_sessions,
        ready_callback=lambda a: print(f"listening on {a[0]}:{a[1]}", flush=True),
    )
    return EXIT_OK


def cmd_run_episode(args) -> int:
    from .agents import Policy
    from .envs import make_env
    from .episode_log import EpisodeRecorder

    config = _config_from_args(args, task=args.task)
    env = make_env(config)
    stepper = EpisodeRecorder(env, args.log) if args.log else env
    policy = Policy(args.policy, args.task, config.max_action, seed=args.seed)
    obs, diag = stepper.reset(args.seed)
    total = 0.0
    while True:
        action = policy(obs, diag)
        result = stepper.step(action)
        total += result.reward
        obs, diag = result.observation, result.diagnostics
        print(
            f"t={env.t:3d} action={np.round(np.asarray(action), 3).tolist()} "
            f"reward={result.reward:+.4f} status={result.status}"
        )
        if result.done:
            break
    print(f"episode finished: status={result.status} steps={env.t} return={total:+.4f}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .evaluate import evaluate

    config = _config_from_args(args, task=args.task)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    summary = evaluate(
        args.policy,
        args.task,
        args.episodes,
        seeds=seeds,
        config=config,
        log_dir=args.log_dir,
        workers=args.workers,
    )
    print(summary.table())
    return EXIT_OK


def cmd_replay(args) -> int:
    from .episode_log import replay

    report = replay(args.log)
    if report.ok:
        print(f"replay ok: {report.steps_checked} steps, zero divergence")
        return EXIT_OK
    print(f"replay DIVERGED at step {report.divergence_step}: field {report.field}")
    return EXIT_DIVERGENCE


def cmd_gen_gel(args) -> int:
    from .geometry import GelSpec, generate_gel_mesh, save_tet_mesh

    spec = GelSpec(
        base_x=args.base_x_mm * 1e-3,
        base_y=args.base_y_mm * 1e-3,
        thickness=args.thickness_mm * 1e-3,
        subdivisions=tuple(int(v) for v in args.subdivisions.split(",")),
    )
    mesh = generate_gel_mesh(spec)
    save_tet_mesh(mesh, args.out)
    print(
        f"wrote {args.out}: {mesh.n_vertices} vertices, {len(mesh.tets)} tets, "
        f"{len(mesh.constrained_set)} constrained"
    )
    return EXIT_OK


def cmd_render_markers(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .config import EnvConfig
    from .envs import make_env
    from .episode_log import read_log

    header, steps, _ = read_log(args.log)
    config = EnvConfig.from_dict(header["config"])
    env = make_env(config)
    obs, _ = env.reset(header["seed"])
    for rec in steps[: args.step]:
        obs = env.step(rec["action"]).observation
    fig, axes = plt.subplots(1, 2, figsize=(10, 4.2))
    for ax, flow, name in (
        (axes[0], obs.marker_flow_left, "left"),
        (axes[1], obs.marker_flow_right, "right"),
    ):
        ax.scatter(flow.initial[:, 0], flow.initial[:, 1], s=12, c="silver", label="initial")
        ok = flow.valid
        ax.scatter(flow.current[ok, 0], flow.current[ok, 1], s=12, c="crimson", label="current")
        for a, b, v in zip(flow.initial, flow.current, flow.valid):
            if v:
                ax.plot([a[0], b[0]], [a[1], b[1]], lw=0.6, c="gray")
        ax.set_xlim(0, 320)
        ax.set_ylim(240, 0)
        ax.set_title(f"{name} sensor, step {args.step}")
        ax.set_aspect("equal")
    axes[0].legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vitac", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the environment service")
    p.add_argument("--addr", default="127.0.0.1:7481", help="host:port to listen on")
    p.add_argument("--stdio", action="store_true", help="serve one session on stdin/stdout")
    p.add_argument("--privileged", action="store_true", help="expose ground-truth diagnostics")
    p.add_argument("--max-sessions", type=int, default=8)
    _add_config_flags(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("run-episode", help="run one policy episode locally")
    p.add_argument("--task", required=True, choices=("peg", "lock", "fusion"))
    p.add_argument("--policy", default="oracle", choices=("oracle", "tactile", "random"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log", help="write an episode log to this path")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run_episode)

    p = sub.add_parser("evaluate", help="run seeded episodes and summarize")
    p.add_argument("--task", required=True, choices=("peg", "lock", "fusion"))
    p.add_argument("--policy", default="oracle", choices=("oracle", "tactile", "random"))
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--seeds", help="comma-separated seeds (default 0..episodes-1)")
    p.add_argument("--log-dir", help="write per-episode logs here")
    p.add_argument("--workers", type=int, default=1, help="parallel episode workers")
    _add_config_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("replay", help="verify an episode log reproduces exactly")
    p.add_argument("--log", required=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("gen-gel", help="generate a box gel mesh file")
    p.add_argument("--out", required=True)
    p.add_argument("--base-x-mm", type=float, default=25.25)
    p.add_argument("--base-y-mm", type=float, default=20.75)
    p.add_argument("--thickness-mm", type=float, default=4.0)
    p.add_argument("--subdivisions", default="8,6,2")
    p.set_defaults(func=cmd_gen_gel)

    p = sub.add_parser("render-markers", help="render marker flow of a logged step to PNG")
    p.add_argument("--log", required=True)
    p.add_argument("--step", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render_markers)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ReplayRefusedError as exc:
        print(f"replay refused: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except ProtocolError as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except VitacError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
