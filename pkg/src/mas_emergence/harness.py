"""Experiment orchestration: runs, the randomized coin sweep, statistics, CSV."""

from __future__ import annotations

import csv
import json
import logging
import math
import random
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .a2c import RLPolicy, TrainConfig, TrainedAgent, load_agents, train
from .emergence import EmergenceReport, Pattern, detect_emergence
from .env import Action, EpisodeTrace, render_ascii, step
from .observation import AUXILIARY_TARGET, INTERSECTION_AWARE, MANHATTAN
from .planner import TSPAgent
from .rewards import RewardMode, RewardModel
from .scenarios import (MAX_COINS, MIN_COINS, ScenarioSpec, gen_random_quarter_circle, parse_scenario,
                        resolve_scenario, serialize_scenario)

log = logging.getLogger(__name__)

CSV_HEADER = ("run_id", "scenario", "agent_type", "remediation", "seed", "steps_total",
              "coins_agent1", "coins_agent2", "emergent", "chasing", "blocking", "terminal")
Z_95 = 1.96


@dataclass
class SweepConfig:
    n_settings: int = 20
    coin_range: tuple[int, int] = (MIN_COINS, MAX_COINS)


@dataclass
class ExperimentConfig:
    scenario: str
    agent_type: str = "tsp"
    remediation: str = "off"
    seeds: list[int] = field(default_factory=lambda: [0])
    sweep: SweepConfig | None = None
    out_dir: Path | None = None
    agent_file: Path | None = None
    # "auto": random tie-breaking on two-rooms, fixed elsewhere
    ties: str = "auto"
    train_config: TrainConfig | None = None

    def __post_init__(self):
        if self.agent_type not in ("tsp", "rl"):
            raise ValueError(f"agent type must be 'tsp' or 'rl', got {self.agent_type!r}")
        if self.remediation not in ("on", "off"):
            raise ValueError(f"remediation must be 'on' or 'off', got {self.remediation!r}")
        if self.ties not in ("auto", "fixed", "random"):
            raise ValueError(f"ties must be auto, fixed or random, got {self.ties!r}")


@dataclass
class RunRecord:
    run_id: str
    scenario: str
    agent_type: str
    remediation: str
    seed: int
    steps_total: int
    coins_agent1: int
    coins_agent2: int
    emergent: bool
    chasing: bool
    blocking: bool
    terminal: str

    @classmethod
    def from_report(cls, scenario: str, agent_type: str, remediation: str, seed: int,
                    report: EmergenceReport) -> "RunRecord":
        tr = report.joint_trace
        return cls(
            run_id=f"{scenario}-{agent_type}-{remediation}-s{seed}",
            scenario=scenario, agent_type=agent_type, remediation=remediation, seed=seed,
            steps_total=len(tr),
            coins_agent1=len(tr.final.collected[0]),
            coins_agent2=len(tr.final.collected[1]) if tr.final.n_agents > 1 else 0,
            emergent=report.emergent,
            chasing=Pattern.CHASING in report.detectors,
            blocking=Pattern.BLOCKING in report.detectors,
            terminal=tr.terminal.value,
        )


# -- statistics --------------------------------------------------------------

@dataclass(frozen=True)
class Stats:
    mean: float
    stddev: float
    ci95: tuple[float, float]
    n: int

    @property
    def ci_width(self) -> float:
        return self.ci95[1] - self.ci95[0]


def stats(values: Sequence[float]) -> Stats:
    """Mean, sample standard deviation and the normal-approximation 95% CI."""
    if not values:
        raise ValueError("stats() needs at least one value")
    mean = statistics.fmean(values)
    sd = statistics.stdev(values) if len(values) > 1 else 0.0
    half = Z_95 * sd / math.sqrt(len(values))
    return Stats(mean, sd, (mean - half, mean + half), len(values))


# -- policies ----------------------------------------------------------------

def remediated_reward(spec: ScenarioSpec, remediation: str) -> RewardModel:
    if remediation == "off":
        return RewardModel(RewardMode.BASE)
    return RewardModel(RewardMode.TWO_ROOMS_CONTORTION if spec.kind == "two_rooms" else RewardMode.COIN_GRADIENT)


def remediated_observation(spec: ScenarioSpec, remediation: str) -> str:
    if remediation == "off":
        return MANHATTAN
    return AUXILIARY_TARGET if spec.kind == "two_rooms" else INTERSECTION_AWARE


def tsp_policies(spec: ScenarioSpec, rewards: RewardModel, seed: int, random_ties: bool) -> list[TSPAgent]:
    """Planner pair; agent 1 breaks its first tie towards the right in coin rooms."""
    out = []
    for i in range(spec.n_agents):
        rng = random.Random(seed * spec.n_agents + i) if random_ties else None
        out.append(TSPAgent(i, rewards, rng=rng, prefer_right_first=(i == 0 and spec.kind != "two_rooms")))
    return out


def _random_ties(spec: ScenarioSpec, ties: str) -> bool:
    if ties == "auto":
        return spec.kind == "two_rooms"
    return ties == "random"


def _rl_agents(cfg: ExperimentConfig, spec: ScenarioSpec, seed: int) -> list[TrainedAgent] | None:
    if cfg.agent_file is not None:
        pool = load_agents(cfg.agent_file)
        agents = sorted((a for a in pool if a.config.seed == seed), key=lambda a: a.agent)
        if len(agents) != spec.n_agents:
            raise ValueError(f"{cfg.agent_file} holds no trained pair for seed {seed}")
    else:
        base = cfg.train_config or TrainConfig()
        tc = TrainConfig(**{**base.__dict__, "seed": seed,
                            "observation_mode": remediated_observation(spec, cfg.remediation)})
        agents = train(spec, tc)
    if not all(a.converged for a in agents):
        log.info("seed %d did not converge; excluded", seed)
        return None
    return agents


# -- runs --------------------------------------------------------------------

def run_experiment(cfg: ExperimentConfig) -> tuple[list[RunRecord], list[EpisodeTrace]]:
    """One record per seed (non-converged RL seeds are skipped)."""
    spec = resolve_scenario(cfg.scenario)
    records, traces = [], []
    for seed in sorted(cfg.seeds):
        if cfg.agent_type == "tsp":
            rewards = remediated_reward(spec, cfg.remediation)
            policies = tsp_policies(spec, rewards, seed, _random_ties(spec, cfg.ties))
        else:
            rewards = RewardModel(RewardMode.BASE)
            agents = _rl_agents(cfg, spec, seed)
            if agents is None:
                continue
            mode = remediated_observation(spec, cfg.remediation)
            policies = [RLPolicy(a, mode, spec.auxiliary_target) for a in agents]
        report = detect_emergence(spec, policies, rewards)
        records.append(RunRecord.from_report(spec.name, cfg.agent_type, cfg.remediation, seed, report))
        traces.append(report.joint_trace)
    if cfg.out_dir is not None and records:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(records, out / "runs.csv")
        (out / "summary.txt").write_text(summary_text(records), encoding="utf-8")
        for rec, tr in zip(records, traces):
            save_trace(spec, remediated_reward(spec, cfg.remediation) if cfg.agent_type == "tsp"
                       else RewardModel(RewardMode.BASE), tr, out / "traces" / f"{rec.run_id}.json")
    return records, traces


@dataclass
class SweepRow:
    seed: int
    n_coins: int
    baseline_steps: int
    remediated_steps: int
    baseline_emergent: bool
    remediated_emergent: bool


@dataclass
class SweepSummary:
    rows: list[SweepRow]

    @property
    def emergent_baselines(self) -> int:
        return sum(r.baseline_emergent for r in self.rows)

    @property
    def emergent_remediated(self) -> int:
        return sum(r.remediated_emergent for r in self.rows)

    @property
    def mean_reduction(self) -> float:
        base = stats([r.baseline_steps for r in self.rows]).mean
        rem = stats([r.remediated_steps for r in self.rows]).mean
        return base - rem


def sweep_settings(n_settings: int, coin_range: tuple[int, int], first_seed: int = 0) -> list[tuple[int, int]]:
    """``(seed, n_coins)`` per setting: setting ``k`` uses seed ``first_seed + k``
    for both its coin count and its coin placement."""
    lo, hi = coin_range
    return [(s, random.Random(s).randint(lo, hi)) for s in range(first_seed, first_seed + n_settings)]


def sweep_coin_settings(cfg: ExperimentConfig) -> SweepSummary:
    if cfg.sweep is None:
        raise ValueError("sweep_coin_settings needs a sweep configuration")
    if cfg.agent_type != "tsp":
        raise ValueError("the coin sweep is implemented for planning agents only")
    first = min(cfg.seeds) if cfg.seeds else 0
    rows = []
    for seed, n in sweep_settings(cfg.sweep.n_settings, cfg.sweep.coin_range, first):
        spec = gen_random_quarter_circle(seed, n)
        res = {}
        for rem in ("off", "on"):
            rewards = remediated_reward(spec, rem)
            res[rem] = detect_emergence(spec, tsp_policies(spec, rewards, seed, _random_ties(spec, cfg.ties)), rewards)
        rows.append(SweepRow(seed, n, len(res["off"].joint_trace), len(res["on"].joint_trace),
                             res["off"].emergent, res["on"].emergent))
    summary = SweepSummary(rows)
    if cfg.out_dir is not None:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_sweep_csv(summary, out / "sweep.csv")
    return summary


# -- persistence -------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def write_csv(records: Sequence[RunRecord], path) -> None:
    rows = sorted(records, key=lambda r: r.seed)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([_fmt(getattr(r, k)) for k in CSV_HEADER])


def read_csv(path) -> list[RunRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        out = []
        for row in reader:
            out.append(RunRecord(
                run_id=row["run_id"], scenario=row["scenario"], agent_type=row["agent_type"],
                remediation=row["remediation"], seed=int(row["seed"]), steps_total=int(row["steps_total"]),
                coins_agent1=int(row["coins_agent1"]), coins_agent2=int(row["coins_agent2"]),
                emergent=row["emergent"] == "true", chasing=row["chasing"] == "true",
                blocking=row["blocking"] == "true", terminal=row["terminal"],
            ))
    return out


def write_sweep_csv(summary: SweepSummary, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "n_coins", "baseline_steps", "remediated_steps", "baseline_emergent", "remediated_emergent"])
        for r in summary.rows:
            w.writerow([r.seed, r.n_coins, r.baseline_steps, r.remediated_steps,
                        _fmt(r.baseline_emergent), _fmt(r.remediated_emergent)])


def summary_text(records: Sequence[RunRecord]) -> str:
    """Whisker-style summary: one block per (scenario, agent, remediation)."""
    groups: dict[tuple[str, str, str], list[RunRecord]] = {}
    for r in records:
        groups.setdefault((r.scenario, r.agent_type, r.remediation), []).append(r)
    lines = []
    for (sc, ag, rem), rs in sorted(groups.items()):
        s = stats([r.steps_total for r in rs])
        lines.append(f"{sc} {ag} remediation={rem} n={s.n}")
        lines.append(f"  steps mean={s.mean:.2f} sd={s.stddev:.2f} ci95=({s.ci95[0]:.2f}, {s.ci95[1]:.2f})"
                     f" min={min(r.steps_total for r in rs)} max={max(r.steps_total for r in rs)}")
        lines.append(f"  emergent={sum(r.emergent for r in rs)}/{len(rs)}"
                     f" chasing={sum(r.chasing for r in rs)} blocking={sum(r.blocking for r in rs)}")
    return "\n".join(lines) + "\n"


def save_trace(spec: ScenarioSpec, rewards: RewardModel, trace: EpisodeTrace, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "scenario": serialize_scenario(spec),
        "reward_mode": rewards.mode.value,
        "actions": [[int(a) for a in joint] for joint in trace.actions],
        "terminal": trace.terminal.value,
    }
    path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def replay_trace(path) -> list[str]:
    """ASCII frames of a stored trace, re-simulated through the engine."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    spec = parse_scenario(doc["scenario"])
    rewards = RewardModel(RewardMode(doc["reward_mode"]))
    state = spec.initial_state()
    frames = [render_ascii(state)]
    for joint in doc["actions"]:
        state = step(state, [Action(a) for a in joint], rewards).next_state
        frames.append(render_ascii(state))
    return frames
