"""Scenario definitions, the scenario text format and the shipped layouts.

A scenario file is a few ``key: value`` header lines, a blank line and an
ASCII map::

    name: two_rooms
    budget: 30
    reward_mode: base
    observation_mode: manhattan
    aux: 1,1

    ....#
    ...

Map symbols: ``#`` wall, ``.`` field, ``1``/``2`` agent spawns, ``$`` shared
target, ``a``/``b`` flags owned by agent 1/2. Cells beyond the map edge act as
walls, so ``(1, 1)`` is the top-left map cell.
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, field, replace
from importlib import resources

from .env import GridState, Position, Target
from .rewards import RewardMode

COIN_BUDGET = 100
TWO_ROOMS_BUDGET = 30
MIN_COINS, MAX_COINS = 2, 12
OBSERVATION_MODES = ("manhattan", "intersection_aware", "auxiliary_target")

# coin-quadrant arc: cells whose rounded Euclidean distance to the arc centre
# (agent 1's spawn) equals ARC_RADIUS, in the quadrant up and to the right
ARC_RADIUS = 8

_OWNER_SYMBOLS = "ab"
_SPAWN_SYMBOLS = "12"


class ScenarioError(ValueError):
    """Invalid scenario; ``line``/``column`` locate parse errors (1-based)."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)
        self.line = line
        self.column = column


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    width: int
    height: int
    walls: frozenset[Position]
    agent_spawns: tuple[Position, ...]
    targets: tuple[Target, ...]
    step_budget: int
    reward_mode: RewardMode = RewardMode.BASE
    observation_mode: str = "manhattan"
    auxiliary_target: Position | None = None
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def n_agents(self) -> int:
        return len(self.agent_spawns)

    @property
    def kind(self) -> str:
        return "two_rooms" if any(t.owner is not None for t in self.targets) else "coin_quadrant"

    def is_field(self, pos: Position) -> bool:
        x, y = pos
        return 1 <= x <= self.width and 1 <= y <= self.height and pos not in self.walls

    def target_positions(self) -> list[Position]:
        return sorted(t.pos for t in self.targets)

    def targets_for(self, agent: int) -> list[Target]:
        return sorted(t for t in self.targets if t.collectable_by(agent))

    def with_modes(self, reward_mode=None, observation_mode=None) -> "ScenarioSpec":
        return replace(
            self,
            reward_mode=RewardMode(reward_mode) if reward_mode is not None else self.reward_mode,
            observation_mode=observation_mode or self.observation_mode,
        )

    def initial_state(self) -> GridState:
        return GridState(
            width=self.width,
            height=self.height,
            walls=self.walls,
            agents=tuple(self.agent_spawns),
            targets=frozenset(self.targets),
        )


def neighbours4(grid, pos: Position):
    x, y = pos
    for nxt in ((x, y - 1), (x + 1, y), (x, y + 1), (x - 1, y)):
        if 1 <= nxt[0] <= grid.width and 1 <= nxt[1] <= grid.height and nxt not in grid.walls:
            yield nxt


def bfs_distances(grid, src: Position, blocked: frozenset[Position] = frozenset()) -> dict[Position, int]:
    """Hop counts over field cells from ``src``, treating ``blocked`` as walls."""
    dist = {src: 0}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for v in neighbours4(grid, u):
            if v not in dist and v not in blocked:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def bfs_distance(grid, a: Position, b: Position) -> int | None:
    return bfs_distances(grid, a).get(b)


def door_cells(spec: ScenarioSpec) -> list[Position]:
    """Field cells whose removal disconnects agent 1's spawn from agent 2's."""
    a, b = spec.agent_spawns[0], spec.agent_spawns[1]
    if b not in bfs_distances(spec, a):
        return []
    cuts = []
    for y in range(1, spec.height + 1):
        for x in range(1, spec.width + 1):
            c = (x, y)
            if c in (a, b) or not spec.is_field(c):
                continue
            if b not in bfs_distances(spec, a, blocked=frozenset({c})):
                cuts.append(c)
    return cuts


def validate(spec: ScenarioSpec) -> ScenarioSpec:
    if spec.step_budget < 1:
        raise ScenarioError(f"step budget must be positive, got {spec.step_budget}")
    if spec.observation_mode not in OBSERVATION_MODES:
        raise ScenarioError(f"unknown observation mode {spec.observation_mode!r}")
    if not spec.agent_spawns:
        raise ScenarioError("scenario has no agents")
    for i, p in enumerate(spec.agent_spawns):
        if not spec.is_field(p):
            raise ScenarioError(f"agent {i + 1} spawns on non-field cell {p}")
    if len(set(spec.agent_spawns)) != len(spec.agent_spawns):
        raise ScenarioError("two agents share a spawn cell")
    spawn_set = set(spec.agent_spawns)
    for t in spec.targets:
        if not spec.is_field(t.pos):
            raise ScenarioError(f"target at {t.pos} is not on a field cell")
        if t.pos in spawn_set:
            raise ScenarioError(f"target at {t.pos} sits on a spawn cell")
        if t.owner is not None and t.owner >= spec.n_agents:
            raise ScenarioError(f"target at {t.pos} belongs to missing agent {t.owner + 1}")
        collectors = [t.owner] if t.owner is not None else range(spec.n_agents)
        if not any(t.pos in bfs_distances(spec, spec.agent_spawns[i]) for i in collectors):
            raise ScenarioError(f"target at {t.pos} is unreachable from its collector's spawn")
    if spec.auxiliary_target is not None and not spec.is_field(spec.auxiliary_target):
        raise ScenarioError(f"auxiliary target {spec.auxiliary_target} is not a field cell")
    if spec.kind == "two_rooms" and spec.n_agents == 2:
        doors = door_cells(spec)
        if len(doors) != 1:
            raise ScenarioError(f"two-rooms map needs exactly one door cell, found {len(doors)}")
    return spec


# -- text format -----------------------------------------------------------

_HEADER_KEYS = ("name", "budget", "reward_mode", "observation_mode", "aux")


def parse_scenario(text: str) -> ScenarioSpec:
    lines = text.split("\n")
    header: dict[str, str] = {}
    i = 0
    while i < len(lines) and lines[i].strip():
        line = lines[i]
        if ":" not in line:
            raise ScenarioError(f"expected 'key: value', got {line!r}", line=i + 1)
        key, value = (s.strip() for s in line.split(":", 1))
        if key not in _HEADER_KEYS:
            raise ScenarioError(f"unknown header key {key!r}", line=i + 1)
        header[key] = value
        i += 1
    map_start = i + 1
    rows = [ln for ln in lines[map_start:]]
    while rows and not rows[-1].strip():
        rows.pop()
    if not rows:
        raise ScenarioError("missing map", line=map_start + 1)
    width = len(rows[0])
    walls, spawns, targets = set(), {}, []
    for r, row in enumerate(rows):
        lineno = map_start + r + 1
        if len(row) != width:
            raise ScenarioError(f"row has width {len(row)}, expected {width}", line=lineno)
        for c, ch in enumerate(row):
            pos = (c + 1, r + 1)
            if ch == "#":
                walls.add(pos)
            elif ch == ".":
                pass
            elif ch in _SPAWN_SYMBOLS:
                if ch in spawns:
                    raise ScenarioError(f"duplicate spawn {ch!r}", line=lineno, column=c + 1)
                spawns[ch] = pos
            elif ch == "$":
                targets.append(Target(pos))
            elif ch in _OWNER_SYMBOLS:
                targets.append(Target(pos, _OWNER_SYMBOLS.index(ch)))
            else:
                raise ScenarioError(f"unknown map symbol {ch!r}", line=lineno, column=c + 1)
    order = sorted(spawns)
    if order != list(_SPAWN_SYMBOLS[: len(order)]):
        raise ScenarioError(f"agent spawns must be numbered from 1, got {order}")
    kind_owned = any(t.owner is not None for t in targets)
    try:
        budget = int(header["budget"]) if "budget" in header else (TWO_ROOMS_BUDGET if kind_owned else COIN_BUDGET)
        reward_mode = RewardMode(header.get("reward_mode", "base"))
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
    aux = None
    if header.get("aux"):
        try:
            ax, ay = (int(v) for v in header["aux"].split(","))
        except ValueError:
            raise ScenarioError(f"aux must be 'x,y', got {header['aux']!r}") from None
        aux = (ax, ay)
    spec = ScenarioSpec(
        name=header.get("name", "unnamed"),
        width=width,
        height=len(rows),
        walls=frozenset(walls),
        agent_spawns=tuple(spawns[s] for s in order),
        targets=tuple(sorted(targets)),
        step_budget=budget,
        reward_mode=reward_mode,
        observation_mode=header.get("observation_mode", "manhattan"),
        auxiliary_target=aux,
    )
    return validate(spec)


def serialize_scenario(spec: ScenarioSpec) -> str:
    out = [
        f"name: {spec.name}",
        f"budget: {spec.step_budget}",
        f"reward_mode: {spec.reward_mode.value}",
        f"observation_mode: {spec.observation_mode}",
    ]
    if spec.auxiliary_target is not None:
        out.append(f"aux: {spec.auxiliary_target[0]},{spec.auxiliary_target[1]}")
    out.append("")
    cells = {}
    for t in spec.targets:
        cells[t.pos] = "$" if t.owner is None else _OWNER_SYMBOLS[t.owner]
    for i, p in enumerate(spec.agent_spawns):
        cells[p] = _SPAWN_SYMBOLS[i]
    for y in range(1, spec.height + 1):
        out.append("".join(
            "#" if (x, y) in spec.walls else cells.get((x, y), ".")
            for x in range(1, spec.width + 1)
        ))
    return "\n".join(out) + "\n"


def load_scenario(path) -> ScenarioSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def _layout(name: str) -> ScenarioSpec:
    text = resources.files("mas_emergence").joinpath("layouts", f"{name}.txt").read_text(encoding="utf-8")
    return parse_scenario(text)


# -- builders --------------------------------------------------------------

def quarter_circle_arc(spec: ScenarioSpec, radius: int = ARC_RADIUS) -> list[Position]:
    """Arc cells ordered from the top end to the right end."""
    cx, cy = spec.agent_spawns[0]
    cells = []
    for y in range(1, spec.height + 1):
        for x in range(1, spec.width + 1):
            dx, dy = x - cx, cy - y
            if dx < 0 or dy < 0 or not spec.is_field((x, y)):
                continue
            if round((dx * dx + dy * dy) ** 0.5) == radius:
                cells.append((x, y))
    return sorted(cells, key=lambda p: (-math.atan2(cy - p[1], p[0] - cx), p))


def _check_coin_count(n_coins: int) -> None:
    if not MIN_COINS <= n_coins <= MAX_COINS:
        raise ValueError(f"n_coins must lie in [{MIN_COINS}, {MAX_COINS}], got {n_coins}")


def build_coin_quadrant(n_coins: int = 5) -> ScenarioSpec:
    """Coin-quadrant room; ``n_coins=5`` is the canonical fixture.

    Other counts spread the coins evenly over the arc, ends included.
    """
    _check_coin_count(n_coins)
    spec = _layout("coin_quadrant")
    if n_coins == len(spec.targets):
        return spec
    arc = quarter_circle_arc(spec)
    idx = sorted({round(k * (len(arc) - 1) / (n_coins - 1)) for k in range(n_coins)})
    coins = tuple(sorted(Target(arc[k]) for k in idx))
    return validate(replace(spec, targets=coins, name=f"coin_quadrant_{n_coins}"))


def gen_random_quarter_circle(seed: int, n_coins: int) -> ScenarioSpec:
    _check_coin_count(n_coins)
    base = _layout("coin_quadrant")
    arc = quarter_circle_arc(base)
    if len(arc) < n_coins:
        raise ValueError(f"arc holds {len(arc)} cells, cannot place {n_coins} coins")
    rng = random.Random(seed)
    cells = rng.sample(arc, n_coins)
    coins = tuple(sorted(Target(c) for c in cells))
    return validate(replace(base, targets=coins, name=f"coin_quadrant_seed{seed}_n{n_coins}"))


def build_two_rooms() -> ScenarioSpec:
    return _layout("two_rooms")


SCENARIOS = {
    "coin_quadrant": build_coin_quadrant,
    "two_rooms": build_two_rooms,
}


def resolve_scenario(name_or_path: str) -> ScenarioSpec:
    if name_or_path in SCENARIOS:
        return SCENARIOS[name_or_path]()
    return load_scenario(name_or_path)
