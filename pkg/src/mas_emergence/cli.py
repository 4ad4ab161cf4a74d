"""Command-line entry point: ``run``, ``sweep``, ``train`` and ``render``.

Exit codes: 0 on success, 1 on invalid input, 2 on file-system errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .a2c import TrainConfig, save_agents, train
from .harness import (ExperimentConfig, SweepConfig, remediated_observation, replay_trace, run_experiment,
                      summary_text, sweep_coin_settings)
from .scenarios import MAX_COINS, MIN_COINS, ScenarioError, resolve_scenario

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mas-emergence", description="Two-agent gridworld emergence experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--scenario", required=True, help="coin_quadrant, two_rooms or a scenario file")
        sp.add_argument("--agent", choices=("tsp", "rl"), default="tsp")
        sp.add_argument("--remediation", choices=("on", "off"), default="off")
        sp.add_argument("--seed", type=int, action="append", dest="seeds")
        sp.add_argument("--out", type=Path)
        sp.add_argument("--agent-file", type=Path)
        sp.add_argument("--ties", choices=("auto", "fixed", "random"), default="auto")

    common(sub.add_parser("run", help="run one configuration over seeds"))
    sw = sub.add_parser("sweep", help="randomized coin-quadrant settings, baseline vs remediated")
    common(sw)
    sw.add_argument("--settings", type=int, default=20)
    sw.add_argument("--coins-min", type=int, default=MIN_COINS)
    sw.add_argument("--coins-max", type=int, default=MAX_COINS)

    tr = sub.add_parser("train", help="train actor-critic agents solo")
    tr.add_argument("--scenario", required=True)
    tr.add_argument("--seeds", type=int, default=1, help="train seeds 0..N-1")
    tr.add_argument("--episodes", type=int, default=TrainConfig.episodes)
    tr.add_argument("--remediation", choices=("on", "off"), default="on")
    tr.add_argument("--out", type=Path, required=True, help="agent file to write")

    rd = sub.add_parser("render", help="replay a stored trace as ASCII frames")
    rd.add_argument("trace", type=Path)
    return p


def _experiment(args) -> ExperimentConfig:
    return ExperimentConfig(
        scenario=args.scenario, agent_type=args.agent, remediation=args.remediation,
        seeds=args.seeds if args.seeds is not None else [0], out_dir=args.out,
        agent_file=args.agent_file, ties=args.ties,
    )


def _cmd_run(args) -> None:
    records, _ = run_experiment(_experiment(args))
    if records:
        print(summary_text(records), end="")
    else:
        print("no records (empty seed list or no converged agents)")


def _cmd_sweep(args) -> None:
    cfg = _experiment(args)
    if not MIN_COINS <= args.coins_min <= args.coins_max <= MAX_COINS:
        raise ValueError(f"coin range must satisfy {MIN_COINS} <= min <= max <= {MAX_COINS}")
    if args.settings < 1:
        raise ValueError("--settings must be positive")
    cfg.sweep = SweepConfig(args.settings, (args.coins_min, args.coins_max))
    summary = sweep_coin_settings(cfg)
    print("seed n_coins baseline remediated emergent_baseline emergent_remediated")
    for r in summary.rows:
        print(f"{r.seed} {r.n_coins} {r.baseline_steps} {r.remediated_steps} "
              f"{str(r.baseline_emergent).lower()} {str(r.remediated_emergent).lower()}")
    print(f"emergent baselines: {summary.emergent_baselines}/{len(summary.rows)}")
    print(f"mean step reduction: {summary.mean_reduction:.2f}")


def _cmd_train(args) -> None:
    spec = resolve_scenario(args.scenario)
    mode = remediated_observation(spec, args.remediation)
    agents = []
    for seed in range(args.seeds):
        pair = train(spec, TrainConfig(seed=seed, episodes=args.episodes, observation_mode=mode))
        print(f"seed {seed}: converged={all(a.converged for a in pair)}")
        agents.extend(pair)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_agents(agents, args.out)


def _cmd_render(args) -> None:
    for t, frame in enumerate(replay_trace(args.trace)):
        print(f"t={t}")
        print(frame)
        print()


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "train": _cmd_train, "render": _cmd_render}


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        COMMANDS[args.command](args)
    except (ScenarioError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
