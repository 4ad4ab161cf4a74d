"""Deterministic Markov-game engine for the two-agent gridworlds.

Coordinates are 1-based ``(x, y)``: ``x`` is the column counted from the
left, ``y`` the row counted from the top, so ``Up`` decreases ``y``.

All moves are resolved simultaneously. An agent stays in place when it

- walks into a wall or off the grid,
- proposes the same cell as another agent (all proposers stay),
- tries to swap cells with another agent,
- proposes a cell held by an agent that does not leave it this step.

Every moving agent pays the step particle, blocked or not. Agents that have
no collectable target left (and agents absent from a solo rollout) are
frozen: they hold their cell, ignore their action and receive no reward.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

Position = tuple[int, int]


class Action(enum.IntEnum):
    UP = 0
    RIGHT = 1
    DOWN = 2
    LEFT = 3

    @property
    def delta(self) -> Position:
        return _DELTAS[self]


_DELTAS = {
    Action.UP: (0, -1),
    Action.RIGHT: (1, 0),
    Action.DOWN: (0, 1),
    Action.LEFT: (-1, 0),
}


class Event(enum.Enum):
    MOVED = "moved"
    BLOCKED_BY_WALL = "blocked_by_wall"
    BLOCKED_BY_AGENT = "blocked_by_agent"
    COLLECTED_TARGET = "collected_target"


class Terminal(enum.Enum):
    NOT_TERMINAL = "not_terminal"
    ALL_TARGETS_COLLECTED = "all_targets_collected"
    STEP_BUDGET_EXHAUSTED = "step_budget_exhausted"


class EngineError(RuntimeError):
    """Raised when the engine is driven outside its contract."""


@dataclass(frozen=True, order=True)
class Target:
    pos: Position
    owner: int | None = None  # None: any agent may collect it

    def collectable_by(self, agent: int) -> bool:
        return self.owner is None or self.owner == agent


@dataclass(frozen=True)
class GridState:
    width: int
    height: int
    walls: frozenset[Position]
    agents: tuple[Position | None, ...]
    targets: frozenset[Target]
    step: int = 0
    collected: tuple[tuple[Position, ...], ...] = ()

    def __post_init__(self):
        if not self.collected:
            object.__setattr__(self, "collected", tuple(() for _ in self.agents))

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    def in_bounds(self, pos: Position) -> bool:
        x, y = pos
        return 1 <= x <= self.width and 1 <= y <= self.height

    def is_field(self, pos: Position) -> bool:
        return self.in_bounds(pos) and pos not in self.walls

    def present(self, agent: int) -> bool:
        return self.agents[agent] is not None

    def targets_for(self, agent: int) -> list[Target]:
        """Uncollected targets the agent may collect, sorted by position."""
        return sorted(t for t in self.targets if t.collectable_by(agent))

    def is_done(self, agent: int) -> bool:
        return not self.present(agent) or not self.targets_for(agent)

    def agent_at(self, pos: Position) -> int | None:
        for i, p in enumerate(self.agents):
            if p == pos:
                return i
        return None

    def without_agents(self, keep: Iterable[int]) -> "GridState":
        """Copy with every agent not in ``keep`` removed (solo rollouts)."""
        keep = set(keep)
        agents = tuple(p if i in keep else None for i, p in enumerate(self.agents))
        return replace(self, agents=agents)

    def check(self) -> None:
        """Validate the state invariants, raising ``ValueError``."""
        seen: set[Position] = set()
        for i, pos in enumerate(self.agents):
            if pos is None:
                continue
            if not self.is_field(pos):
                raise ValueError(f"agent {i + 1} at {pos} is not on a field cell")
            if pos in seen:
                raise ValueError(f"two agents share cell {pos}")
            seen.add(pos)
        for t in self.targets:
            if not self.is_field(t.pos):
                raise ValueError(f"target at {t.pos} is not on a field cell")
        done = {p for per_agent in self.collected for p in per_agent}
        if done & {t.pos for t in self.targets}:
            raise ValueError("collected and remaining targets overlap")


@dataclass
class StepOutcome:
    next_state: GridState
    rewards: list[float]
    events: list[set[Event]]


@dataclass
class EpisodeTrace:
    """States ``s_0 .. s_T`` with the joint actions and rewards between them."""

    states: list[GridState]
    actions: list[tuple[Action, ...]] = field(default_factory=list)
    rewards: list[list[float]] = field(default_factory=list)
    events: list[list[set[Event]]] = field(default_factory=list)
    terminal: Terminal = Terminal.NOT_TERMINAL

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def final(self) -> GridState:
        return self.states[-1]

    def agent_rewards(self, agent: int) -> list[float]:
        return [r[agent] for r in self.rewards]


def is_terminal(state: GridState, budget: int | None = None) -> Terminal:
    if all(state.is_done(i) for i in range(state.n_agents)):
        return Terminal.ALL_TARGETS_COLLECTED
    if budget is not None and state.step >= budget:
        return Terminal.STEP_BUDGET_EXHAUSTED
    return Terminal.NOT_TERMINAL


def step(state: GridState, actions: Sequence[Action], rewards, budget: int | None = None) -> StepOutcome:
    """Advance one joint step. ``rewards`` is a :class:`RewardModel`."""
    n = state.n_agents
    if len(actions) != n:
        raise EngineError(f"expected {n} actions, got {len(actions)}")
    if is_terminal(state, budget) is not Terminal.NOT_TERMINAL:
        raise EngineError("step() called on a terminal state")

    active = [not state.is_done(i) for i in range(n)]
    events: list[set[Event]] = [set() for _ in range(n)]
    proposal: list[Position | None] = list(state.agents)
    for i in range(n):
        if not active[i]:
            continue
        x, y = state.agents[i]
        dx, dy = Action(actions[i]).delta
        cand = (x + dx, y + dy)
        if state.is_field(cand):
            proposal[i] = cand
        else:
            events[i].add(Event.BLOCKED_BY_WALL)

    _resolve_collisions(state.agents, proposal, events)

    targets = set(state.targets)
    collected = [list(c) for c in state.collected]
    out_rewards = [0.0] * n
    for i in range(n):
        if not active[i]:
            continue
        pos = proposal[i]
        if pos != state.agents[i]:
            events[i].add(Event.MOVED)
        got = 0
        for t in list(targets):
            if t.pos == pos and t.collectable_by(i):
                targets.remove(t)
                collected[i].append(pos)
                events[i].add(Event.COLLECTED_TARGET)
                got = 1
        out_rewards[i] = rewards.reward(pos, got)

    nxt = GridState(
        width=state.width,
        height=state.height,
        walls=state.walls,
        agents=tuple(proposal),
        targets=frozenset(targets),
        step=state.step + 1,
        collected=tuple(tuple(c) for c in collected),
    )
    return StepOutcome(nxt, out_rewards, events)


def _resolve_collisions(current, proposal, events) -> None:
    # iterate to a fixpoint: every rollback can create a new blocker
    n = len(proposal)
    changed = True
    while changed:
        changed = False
        claims: dict[Position, list[int]] = {}
        for i, p in enumerate(proposal):
            if p is not None:
                claims.setdefault(p, []).append(i)
        # decide every rollback of this pass before applying any of them
        stays = []
        for i in range(n):
            p = proposal[i]
            if p is None or p == current[i]:
                continue
            if len(claims[p]) > 1:
                stays.append(i)
                continue
            j = next((k for k, c in enumerate(current) if c == p and k != i), None)
            if j is not None and (proposal[j] == current[j] or proposal[j] == current[i]):
                stays.append(i)
        for i in stays:
            proposal[i] = current[i]
            events[i].add(Event.BLOCKED_BY_AGENT)
            changed = True


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    total = 0.0
    for r in reversed(rewards):
        total = r + gamma * total
    return total


def returns_to_go(rewards: Sequence[float], gamma: float) -> list[float]:
    """``G_t`` for every ``t`` of an episode (Monte-Carlo returns)."""
    out = [0.0] * len(rewards)
    g = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        g = rewards[t] + gamma * g
        out[t] = g
    return out


AGENT_GLYPHS = "123456789"


def render_ascii(state: GridState) -> str:
    rows = []
    for y in range(1, state.height + 1):
        row = []
        for x in range(1, state.width + 1):
            pos = (x, y)
            agent = state.agent_at(pos)
            if agent is not None:
                row.append(AGENT_GLYPHS[agent])
            elif pos in state.walls:
                row.append("#")
            elif any(t.pos == pos for t in state.targets):
                row.append("$")
            else:
                row.append(".")
        rows.append("".join(row))
    return "\n".join(rows)


def parse_ascii(text: str) -> GridState:
    """Inverse of :func:`render_ascii` (targets come back unowned)."""
    lines = [ln for ln in text.splitlines() if ln]
    if not lines:
        raise ValueError("empty grid")
    width = len(lines[0])
    walls, targets, agents = set(), set(), {}
    for y, line in enumerate(lines, start=1):
        if len(line) != width:
            raise ValueError(f"row {y} has width {len(line)}, expected {width}")
        for x, ch in enumerate(line, start=1):
            if ch == "#":
                walls.add((x, y))
            elif ch == "$":
                targets.add(Target((x, y)))
            elif ch in AGENT_GLYPHS:
                agents[AGENT_GLYPHS.index(ch)] = (x, y)
            elif ch != ".":
                raise ValueError(f"unknown cell symbol {ch!r} at row {y}, column {x}")
    n = max(agents) + 1 if agents else 0
    return GridState(
        width=width,
        height=len(lines),
        walls=frozenset(walls),
        agents=tuple(agents.get(i) for i in range(n)),
        targets=frozenset(targets),
    )
