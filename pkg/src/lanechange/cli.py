"""Command-line entry point wiring configs to every pipeline.

Subcommands: fit, train, eval, compare, serve, replay. Every run that
produces outputs writes a manifest first; validation failures exit nonzero
with a machine-readable JSON error on stderr.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import dil, qnet
from .agent import TrainingConfig, run_training
from .evaluation import (
    agreement,
    benchmark_policy,
    export_results,
    mae,
    reference_driver_policy,
    rl_policy,
    run_rollouts,
    sample_states,
)
from .indicators import (
    BUILTIN_STYLE_NAMES,
    cluster_styles,
    fit_profile_ols,
    load_profile,
    read_decision_records,
    save_profile,
)
from .reward import RewardParams
from .simulation import (
    Action,
    ScenarioConfig,
    read_trace,
    replay_episode,
    split_episodes,
    write_trace,
)

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
               "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    level = os.environ.get("LANECHANGE_LOG_LEVEL", "warn").lower()
    if level not in _LOG_LEVELS:
        raise ValueError(f"LANECHANGE_LOG_LEVEL must be one of {sorted(_LOG_LEVELS)}")
    logging.basicConfig(level=_LOG_LEVELS[level],
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_manifest(out_dir: Path, command: str, config: dict,
                   config_path: Optional[str], seed: Optional[int]) -> Path:
    """Record what is about to run; written before any other output."""
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config_path": config_path,
        "seed": seed,
        "config_hash": config_hash(config),
        "config": config,
        "out_dir": str(out_dir),
        "created_at": time.time(),
    }
    path = out_dir / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _load_scenario(path: Optional[str]) -> ScenarioConfig:
    if path is None:
        return ScenarioConfig()
    with open(path, "r", encoding="utf-8") as fh:
        return ScenarioConfig.from_dict(json.load(fh))


# --- subcommands ---


def cmd_fit(args: argparse.Namespace) -> int:
    records, _ = read_decision_records(args.records)
    out = Path(args.out)
    if args.cluster is None:
        profile = fit_profile_ols(records, name=args.name)
        save_profile(profile, out)
        print(f"fitted profile written to {out}")
        return 0

    by_driver: dict[str, list] = {}
    for record in records:
        by_driver.setdefault(record.driver_id, []).append(record)
    drivers = sorted(by_driver)
    features = []
    for driver in drivers:
        changes = [r.indicators.as_array() for r in by_driver[driver]
                   if r.decision == Action.CHANGE and r.indicators.t_nf != -1.0]
        if not changes:
            raise ValueError(f"driver {driver!r} has no usable lane-change records")
        features.append(np.mean(changes, axis=0))
    result = cluster_styles(features, k=args.cluster,
                            rng=np.random.default_rng(np.random.SeedSequence(args.seed)))
    assignment = dict(zip(drivers, result.labels))
    clusters = []
    for name in result.names:
        members = [d for d in drivers if assignment[d] == name]
        member_records = [r for d in members for r in by_driver[d]]
        profile = fit_profile_ols(member_records, name=name)
        clusters.append({**profile.to_dict(), "drivers": members})
    with open(out, "w", encoding="utf-8") as fh:
        json.dump({"clusters": clusters, "assignment": assignment}, fh, indent=2)
        fh.write("\n")
    print(f"{args.cluster} clustered profiles written to {out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    if args.config is not None:
        with open(args.config, "r", encoding="utf-8") as fh:
            config = TrainingConfig.from_dict(json.load(fh))
    else:
        config = TrainingConfig()
    overrides = {}
    if args.style is not None:
        overrides["style"] = args.style
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.episodes is not None:
        overrides["episodes"] = args.episodes
    if overrides:
        config = dataclasses.replace(config, **overrides)
    config.validate()
    load_profile(config.style)

    out_dir = Path(args.out)
    write_manifest(out_dir, "train", config.to_dict(), args.config, config.seed)
    result = run_training(config, out_dir=out_dir)
    print(f"trained {config.episodes} episodes -> {result.checkpoint_path}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    scenario = _load_scenario(args.scenario)
    profile = load_profile(args.style)
    reward_params = RewardParams()
    net, _ = qnet.load_checkpoint(args.checkpoint)

    out_dir = Path(args.out)
    write_manifest(out_dir, "eval", {
        "checkpoint": str(args.checkpoint), "style": args.style,
        "episodes": args.episodes, "scenario": scenario.to_dict(),
    }, args.scenario, args.seed)

    rl = run_rollouts(rl_policy(net, scenario), scenario, args.episodes, args.seed,
                      agent_kind="rl", collect_traces=args.export_traces)
    bench = run_rollouts(benchmark_policy(profile, reward_params, scenario), scenario,
                         args.episodes, args.seed, agent_kind="benchmark")

    def maybe_mae(points, indicator):
        try:
            return mae(points, profile, indicator, scenario.reference_speed_scale)
        except ValueError:
            return None

    summary = {
        "style": profile.name,
        "n": len(rl.points),
        "mae": {
            "tf": maybe_mae(rl.points, "t_f"),
            "tnf": maybe_mae(rl.points, "t_nf"),
            "dvnb": maybe_mae(rl.points, "dv_nb"),
        },
        "benchmark_mae": {
            "tf": maybe_mae(bench.points, "t_f"),
            "tnf": maybe_mae(bench.points, "t_nf"),
            "dvnb": maybe_mae(bench.points, "dv_nb"),
        },
        "accuracy": None,
    }
    export_results(list(rl.points) + list(bench.points), summary, out_dir, profile.name)
    if args.export_traces:
        write_trace(out_dir / "traces.jsonl",
                    (row for trace in rl.traces for row in trace))
    print(f"eval: {len(rl.points)} RL points, {len(bench.points)} benchmark points "
          f"-> {out_dir}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    scenario = _load_scenario(args.scenario)
    profile = load_profile(args.style)
    reward_params = RewardParams()
    net, _ = qnet.load_checkpoint(args.checkpoint)

    states = sample_states(scenario, args.states, args.seed)
    rl = rl_policy(net, scenario)
    bench = benchmark_policy(profile, reward_params, scenario)
    ref = reference_driver_policy(profile, scenario)

    def report_dict(report):
        return {
            "total": report.total,
            "agree": report.agree,
            "accuracy": report.accuracy,
            "disagreements": [
                {
                    "expected": d.expected.name,
                    "actual": d.actual.name,
                    "d_nb": d.behind_gap,
                    "target_front_present": d.target_front_present,
                    "v_e": d.state.ego.v,
                }
                for d in report.disagreements
            ],
        }

    reports = {
        "rl_vs_reference": report_dict(agreement(rl, ref, states)),
        "benchmark_vs_reference": report_dict(agreement(bench, ref, states)),
        "rl_vs_benchmark": report_dict(agreement(rl, bench, states)),
    }
    payload = {"style": profile.name, "states": args.states, "reports": reports}
    if args.out is not None:
        out_dir = Path(args.out)
        write_manifest(out_dir, "compare", {
            "checkpoint": str(args.checkpoint), "style": args.style,
            "states": args.states, "scenario": scenario.to_dict(),
        }, args.scenario, args.seed)
        with open(out_dir / "agreement.json", "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    for name, rep in reports.items():
        print(f"{name}: accuracy {rep['accuracy']:.3f} "
              f"({rep['agree']}/{rep['total']})")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    scenario = _load_scenario(args.scenario)
    log_dir = Path(args.log)
    write_manifest(log_dir, "serve", {
        "port": args.port, "tick_hz": args.tick_hz, "episodes": args.episodes,
        "scenario": scenario.to_dict(),
    }, args.scenario, None)
    print(f"DIL session server listening on port {args.port} "
          f"(tick rate {args.tick_hz} Hz); Ctrl-C stops it")
    dil.serve(port=args.port, scenario=scenario, log_dir=log_dir,
              tick_hz=args.tick_hz, default_episodes=args.episodes)
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    scenario = _load_scenario(args.scenario)
    records = read_trace(args.trace)
    if not records:
        raise ValueError(f"trace {args.trace} is empty")
    episodes = list(split_episodes(records))
    mismatches = []
    for i, episode in enumerate(episodes):
        for problem in replay_episode(episode, scenario):
            mismatches.append(f"episode {i}: {problem}")
    if mismatches:
        raise ValueError("; ".join(mismatches))
    print(f"replayed {len(episodes)} episode(s), 0 mismatches")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lanechange",
        description="Personalized lane-change decision lab",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit style reference lines from decision records")
    p.add_argument("records", help="DecisionRecord JSON Lines file")
    p.add_argument("--out", required=True, help="output profile JSON path")
    p.add_argument("--cluster", type=int, default=None, metavar="K",
                   help="cluster drivers into K styles before fitting")
    p.add_argument("--name", default="fitted")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("train", help="train a style-conditioned DQN agent")
    p.add_argument("--config", default=None, help="training config JSON (omit to use the builtin default hyperparameters)")
    p.add_argument("--style", default=None,
                   help=f"builtin style {BUILTIN_STYLE_NAMES} or profile JSON path")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="roll out a checkpoint and score MAE")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--style", required=True)
    p.add_argument("--episodes", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenario", default=None, help="scenario config JSON")
    p.add_argument("--export-traces", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="agreement of RL vs benchmark vs reference driver")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--style", required=True)
    p.add_argument("--states", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenario", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("serve", help="run the driver-in-the-loop session server")
    p.add_argument("--port", type=int, default=8710)
    p.add_argument("--scenario", default=None)
    p.add_argument("--log", required=True, help="directory for session logs")
    p.add_argument("--tick-hz", type=float, default=10.0)
    p.add_argument("--episodes", type=int, default=50,
                   help="default episodes per session")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="re-step a logged trace and verify it")
    p.add_argument("trace", help="episode trace JSON Lines file")
    p.add_argument("--scenario", default=None)
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    try:
        _setup_logging()
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (ValueError, RuntimeError, OSError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
