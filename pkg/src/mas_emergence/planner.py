"""Greedy travelling-salesperson planning agent.

The agent reduces the grid to a complete graph over its waypoints (its start
cell plus every target it may collect). Edge weights are minimal accumulated
non-negative step costs, found by Dijkstra over the cell lattice with the
cost of a move priced at the entered cell. A nearest-neighbour pass then
fixes the visit order. There is no return leg.

Cost ties are compared after rounding to ``COST_DECIMALS``; equal-cost routes
are ranked by hop count. Whatever is still tied is resolved either
deterministically or, when an ``rng`` is supplied, uniformly at random.
"""

from __future__ import annotations

import functools
import heapq
import itertools
import random
from dataclasses import dataclass, field

from .env import Action, GridState, Position
from .rewards import RewardModel

COST_DECIMALS = 9
MAX_BRUTE_FORCE_TARGETS = 8

# horizontal moves first: a route closes its column offset before its row offset
ROUTE_ORDER = (Action.RIGHT, Action.LEFT, Action.UP, Action.DOWN)


class PlannerError(RuntimeError):
    pass


class ReachabilityError(PlannerError):
    pass


@dataclass(frozen=True)
class _Map:
    width: int
    height: int
    walls: frozenset


def _key(cost: float, hops: int) -> tuple[float, int]:
    return round(cost, COST_DECIMALS), hops


def _neighbours(grid, pos: Position):
    x, y = pos
    for a in ROUTE_ORDER:
        dx, dy = a.delta
        nxt = (x + dx, y + dy)
        if 1 <= nxt[0] <= grid.width and 1 <= nxt[1] <= grid.height and nxt not in grid.walls:
            yield a, nxt


def cost_to_go(grid, rewards: RewardModel, goal: Position, clamp: bool = True) -> dict[Position, tuple[float, int]]:
    """Dijkstra towards ``goal``: minimal ``(cost, hops)`` from every cell.

    The result depends only on the static map, so it is memoized; callers
    must treat the returned dict as read-only.
    """
    return _cost_to_go(grid.width, grid.height, frozenset(grid.walls), rewards, goal, clamp)


@functools.lru_cache(maxsize=4096)
def _cost_to_go(width, height, walls, rewards, goal, clamp):
    grid = _Map(width, height, walls)
    dist = {goal: (0.0, 0)}
    heap = [(0.0, 0, goal)]
    while heap:
        c, h, v = heapq.heappop(heap)
        if _key(c, h) > _key(*dist[v]):
            continue
        enter_v = rewards.step_cost(v, clamp)
        for _, u in _neighbours(grid, v):
            cand = (c + enter_v, h + 1)
            if u not in dist or _key(*cand) < _key(*dist[u]):
                dist[u] = cand
                heapq.heappush(heap, (cand[0], cand[1], u))
    return dist


def shortest_route(grid, rewards: RewardModel, src: Position, dst: Position,
                   rng: random.Random | None = None, clamp: bool = True,
                   ctg: dict | None = None) -> tuple[float, list[Position]]:
    """Cost-minimal cell route from ``src`` to ``dst`` (both included).

    Without ``rng`` the route is the fewest-hop cost-minimal one, ties
    following ``ROUTE_ORDER``. With ``rng`` it is a random simple route of
    minimal cost, which may be longer where zero-cost cells make detours
    free.
    """
    ctg = ctg if ctg is not None else cost_to_go(grid, rewards, dst, clamp)
    if src not in ctg:
        raise ReachabilityError(f"{dst} is unreachable from {src}")
    if rng is not None:
        return ctg[src][0], _random_tight_walk(grid, rewards, src, dst, rng, clamp, ctg)
    route = [src]
    pos = src
    while pos != dst:
        here = _key(*ctg[pos])
        tight = [
            nxt for _, nxt in _neighbours(grid, pos)
            if nxt in ctg and _key(ctg[nxt][0] + rewards.step_cost(nxt, clamp), ctg[nxt][1] + 1) == here
        ]
        pos = tight[0]
        route.append(pos)
    return ctg[src][0], route


def _cost_tight(grid, rewards, ctg, clamp, pos):
    here = round(ctg[pos][0], COST_DECIMALS)
    return [n for _, n in _neighbours(grid, pos)
            if n in ctg and round(ctg[n][0] + rewards.step_cost(n, clamp), COST_DECIMALS) == here]


def _random_tight_walk(grid, rewards, src, dst, rng, clamp, ctg) -> list[Position]:
    # self-avoiding walk over cost-tight moves; a step is only taken if dst
    # stays reachable without revisiting cells, so the walk always finishes
    route, seen = [src], {src}
    pos = src
    while pos != dst:
        options = [n for n in _cost_tight(grid, rewards, ctg, clamp, pos)
                   if n not in seen and _tight_reachable(grid, rewards, ctg, clamp, n, dst, seen)]
        pos = rng.choice(options)
        route.append(pos)
        seen.add(pos)
    return route


def _tight_reachable(grid, rewards, ctg, clamp, start, dst, seen) -> bool:
    stack, visited = [start], {start}
    while stack:
        v = stack.pop()
        if v == dst:
            return True
        for n in _cost_tight(grid, rewards, ctg, clamp, v):
            if n not in seen and n not in visited:
                visited.add(n)
                stack.append(n)
    return False


@dataclass
class CostGraph:
    nodes: list[Position]
    edge_cost: dict[tuple[Position, Position], float]
    edge_path: dict[tuple[Position, Position], list[Position]]
    edge_hops: dict[tuple[Position, Position], int] = field(default_factory=dict)

    def cost(self, a: Position, b: Position) -> float:
        return self.edge_cost[(a, b)]


def build_cost_graph(grid, rewards: RewardModel, start: Position, targets=None,
                     rng: random.Random | None = None, clamp: bool = True) -> CostGraph:
    """Complete waypoint graph over ``start`` and ``targets``.

    ``grid`` is anything exposing ``width``, ``height`` and ``walls``;
    ``targets`` defaults to every target on ``grid``.
    """
    if start in grid.walls:
        raise PlannerError(f"start {start} is a wall")
    if targets is None:
        targets = [t.pos for t in grid.targets]
    nodes = [start] + sorted(set(targets) - {start})
    edge_cost, edge_path, edge_hops = {}, {}, {}
    for b in nodes:
        ctg = cost_to_go(grid, rewards, b, clamp)
        for a in nodes:
            if a == b:
                continue
            if a not in ctg:
                raise ReachabilityError(f"{b} is unreachable from {a}")
            c, path = shortest_route(grid, rewards, a, b, rng=rng, clamp=clamp, ctg=ctg)
            edge_cost[(a, b)] = c
            edge_path[(a, b)] = path
            edge_hops[(a, b)] = len(path) - 1
    return CostGraph(nodes, edge_cost, edge_path, edge_hops)


@dataclass
class VisitPlan:
    order: list[Position]
    route: list[Position]
    total_cost: float


def _plan_from_order(graph: CostGraph, start: Position, order) -> VisitPlan:
    route = [start]
    total = 0.0
    prev = start
    for t in order:
        total += graph.cost(prev, t)
        route.extend(graph.edge_path[(prev, t)][1:])
        prev = t
    return VisitPlan(list(order), route, total)


def greedy_hamiltonian(graph: CostGraph, start: Position, rng: random.Random | None = None,
                       first: Position | None = None, prefer_right_first: bool = False) -> VisitPlan:
    """Nearest-neighbour visit order starting at ``start``.

    Ties go to the lexicographically smallest ``(x, y)``, or to a random
    candidate when ``rng`` is given. ``prefer_right_first`` resolves a tie at
    the very first pick towards the right-most (then lowest) candidate;
    ``first`` forces the first target outright.
    """
    remaining = [n for n in graph.nodes if n != start]
    order: list[Position] = []
    cur = start
    while remaining:
        if first is not None and not order:
            nxt = first
        else:
            best = min(_key(graph.cost(cur, n), graph.edge_hops[(cur, n)]) for n in remaining)
            tied = sorted(n for n in remaining
                          if _key(graph.cost(cur, n), graph.edge_hops[(cur, n)]) == best)
            if prefer_right_first and not order:
                nxt = max(tied, key=lambda p: (p[0], p[1]))
            elif rng is not None:
                nxt = rng.choice(tied)
            else:
                nxt = tied[0]
        order.append(nxt)
        remaining.remove(nxt)
        cur = nxt
    return _plan_from_order(graph, start, order)


def brute_force_hamiltonian(graph: CostGraph, start: Position) -> VisitPlan:
    """Exact minimum-cost open path over all targets (test oracle)."""
    targets = [n for n in graph.nodes if n != start]
    if len(targets) > MAX_BRUTE_FORCE_TARGETS:
        raise PlannerError(f"brute force limited to {MAX_BRUTE_FORCE_TARGETS} targets, got {len(targets)}")
    best = None
    for perm in itertools.permutations(targets):
        total, prev = 0.0, start
        for t in perm:
            total += graph.cost(prev, t)
            prev = t
        if best is None or total < best[0] - 1e-12:
            best = (total, perm)
    if best is None:
        return VisitPlan([], [start], 0.0)
    return _plan_from_order(graph, start, best[1])


def direction(src: Position, dst: Position) -> Action:
    delta = (dst[0] - src[0], dst[1] - src[1])
    for a in Action:
        if a.delta == delta:
            return a
    raise PlannerError(f"{src} -> {dst} is not a single move")


class TSPAgent:
    """Step-level policy following a greedy visit plan.

    The plan is computed from the full map at the first call. When the
    current head target disappears (collected by someone else) the agent
    replans over what is left from where it stands. A blocked move is simply
    retried on the next step.
    """

    def __init__(self, agent: int, rewards: RewardModel, rng: random.Random | None = None,
                 prefer_right_first: bool = False, clamp: bool = True):
        self.agent = agent
        self.rewards = rewards
        self.rng = rng
        self.prefer_right_first = prefer_right_first
        self.clamp = clamp
        self.plan: VisitPlan | None = None
        self.segments: list[list[Position]] = []
        self.replans = 0

    def reset(self) -> None:
        self.plan = None
        self.segments = []
        self.replans = 0

    def _make_plan(self, state: GridState, initial: bool) -> None:
        pos = state.agents[self.agent]
        targets = [t.pos for t in state.targets_for(self.agent)]
        graph = build_cost_graph(state, self.rewards, pos, targets, rng=self.rng, clamp=self.clamp)
        self.plan = greedy_hamiltonian(graph, pos, rng=self.rng,
                                       prefer_right_first=self.prefer_right_first and initial)
        prev = pos
        self.segments = []
        for t in self.plan.order:
            self.segments.append(graph.edge_path[(prev, t)])
            prev = t

    def act(self, state: GridState) -> Action:
        pos = state.agents[self.agent]
        remaining = {t.pos for t in state.targets_for(self.agent)}
        if self.plan is None:
            self._make_plan(state, initial=True)
        while self.segments and self.segments[0][-1] not in remaining:
            if pos != self.segments[0][-1]:
                # head taken by another agent
                self.replans += 1
                self._make_plan(state, initial=False)
                break
            self.segments.pop(0)
        if not self.segments:
            if remaining:
                self._make_plan(state, initial=False)
            else:
                return Action.UP  # finished agents are frozen by the engine
        seg = self.segments[0]
        idx = seg.index(pos) if pos in seg else None
        if idx is None or idx + 1 >= len(seg):
            raise PlannerError(f"agent {self.agent + 1} at {pos} lost its route {seg}")
        return direction(pos, seg[idx + 1])
