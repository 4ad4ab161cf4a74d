"""Global and local success predicates and the emergence verdict.

A system is emergent with respect to a predicate ``F`` when ``F`` on the
joint rollout differs from the conjunction of the per-agent predicates, each
evaluated on a solo rollout of that agent. Two pattern detectors (chasing,
blocking) name what went wrong in a joint trace.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .env import EpisodeTrace, Event, Terminal
from .rewards import RewardModel
from .rollout import Policy, run_episode
from .scenarios import ScenarioSpec

CHASE_WINDOW = 5
CHASE_RADIUS = 2
BLOCK_WINDOW = 3


class Pattern(enum.Enum):
    CHASING = "chasing"
    BLOCKING = "blocking"


@dataclass(frozen=True)
class SpecPredicate:
    kind: str  # "global" or "local"
    predicate: Callable[[EpisodeTrace], bool]
    description: str
    agent: int | None = None

    def __call__(self, trace: EpisodeTrace) -> bool:
        return bool(self.predicate(trace))


def global_spec(scenario: ScenarioSpec) -> SpecPredicate:
    """Every target collected within the budget, and no agent left idle.

    The second clause only applies when there are at least as many targets
    as agents: each agent must then collect at least one of them.
    """
    n_targets = len(scenario.targets)

    def pred(trace: EpisodeTrace) -> bool:
        final = trace.final
        if final.targets:
            return False
        if n_targets >= scenario.n_agents:
            return all(len(final.collected[i]) >= 1 for i in range(scenario.n_agents))
        return True

    return SpecPredicate("global", pred, "all targets collected within budget, every agent contributes")


def local_spec(scenario: ScenarioSpec, agent: int) -> SpecPredicate:
    """The agent alone collects everything it may collect within the budget."""

    def pred(trace: EpisodeTrace) -> bool:
        final = trace.final
        if final.agents[agent] is None:
            return False
        return not final.targets_for(agent)

    return SpecPredicate("local", pred, f"agent {agent + 1} reaches all its targets solo", agent)


@dataclass(frozen=True)
class Detection:
    found: bool
    steps: tuple[int, ...] = ()
    agents: tuple[int, ...] = ()


def _collected_count(trace: EpisodeTrace, agent: int, t: int) -> int:
    return len(trace.states[t].collected[agent])


def detect_chasing(trace: EpisodeTrace, window: int = CHASE_WINDOW, radius: int = CHASE_RADIUS) -> Detection:
    """An agent that never collects stays close behind one that does.

    Looks for ``window`` consecutive steps, each ending with the chaser
    within Manhattan ``radius`` of another agent that collects at least one
    target during those steps.
    """
    final = trace.final
    n = final.n_agents
    for i in range(n):
        if final.agents[i] is None or final.collected[i]:
            continue
        for j in range(n):
            if j == i or final.agents[j] is None:
                continue
            run: list[int] = []
            for t in range(1, len(trace.states)):
                a, b = trace.states[t].agents[i], trace.states[t].agents[j]
                if abs(a[0] - b[0]) + abs(a[1] - b[1]) <= radius:
                    run.append(t)
                else:
                    run = []
                if len(run) >= window:
                    first, last = run[-window], run[-1]
                    if _collected_count(trace, j, last) > _collected_count(trace, j, first - 1):
                        # extend to the full close-range stretch for the evidence
                        end = t
                        while end + 1 < len(trace.states):
                            a2, b2 = trace.states[end + 1].agents[i], trace.states[end + 1].agents[j]
                            if abs(a2[0] - b2[0]) + abs(a2[1] - b2[1]) > radius:
                                break
                            end += 1
                        start = run[0]
                        return Detection(True, tuple(range(start, end + 1)), (i, j))
    return Detection(False)


def detect_blocking(trace: EpisodeTrace, window: int = BLOCK_WINDOW) -> Detection:
    """The last ``window`` steps: every active agent blocked by another, standing still."""
    if trace.terminal is Terminal.ALL_TARGETS_COLLECTED or not trace.final.targets:
        return Detection(False)
    if len(trace) < window:
        return Detection(False)
    steps = range(len(trace) - window, len(trace))
    active = [i for i in range(trace.final.n_agents) if not trace.final.is_done(i)]
    if len(active) < 2:
        return Detection(False)
    for t in steps:
        for i in active:
            if Event.BLOCKED_BY_AGENT not in trace.events[t][i]:
                return Detection(False)
            if trace.states[t + 1].agents[i] != trace.states[t].agents[i]:
                return Detection(False)
    return Detection(True, tuple(t + 1 for t in steps), tuple(active))


@dataclass
class EmergenceReport:
    local_results: tuple[bool, ...]
    joint_global: bool
    joint_local_conjunction: bool
    emergent: bool
    detectors: frozenset[Pattern] = frozenset()
    evidence: dict[Pattern, tuple[int, ...]] = field(default_factory=dict)
    joint_trace: EpisodeTrace | None = None
    solo_traces: tuple[EpisodeTrace, ...] = ()

    def __post_init__(self):
        if self.emergent != (self.joint_global != all(self.local_results)):
            raise AssertionError("emergent flag disagrees with the joint/solo predicate comparison")


def evaluate_emergence(scenario: ScenarioSpec, joint: EpisodeTrace, solos: Sequence[EpisodeTrace]) -> EmergenceReport:
    locals_ = tuple(local_spec(scenario, i)(tr) for i, tr in enumerate(solos))
    joint_ok = global_spec(scenario)(joint)
    conj = all(locals_)
    detectors, evidence = set(), {}
    if joint.final.n_agents > 1:
        for pattern, found in ((Pattern.CHASING, detect_chasing(joint)), (Pattern.BLOCKING, detect_blocking(joint))):
            if found.found:
                detectors.add(pattern)
                evidence[pattern] = found.steps
    return EmergenceReport(locals_, joint_ok, conj, joint_ok != conj, frozenset(detectors), evidence,
                           joint, tuple(solos))


def detect_emergence(scenario: ScenarioSpec, policies: Sequence[Policy],
                     rewards: RewardModel | None = None) -> EmergenceReport:
    """Solo rollout per agent, one joint rollout, then the comparison."""
    solos = []
    for i in range(scenario.n_agents):
        only: list[Policy | None] = [None] * scenario.n_agents
        only[i] = policies[i]
        solos.append(run_episode(scenario, only, rewards, present=[i]))
    joint = run_episode(scenario, policies, rewards)
    return evaluate_emergence(scenario, joint, solos)
