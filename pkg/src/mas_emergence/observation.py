"""Local observations: own position plus the position of the immediate target.

Three ways of picking the target are supported:

``manhattan``
    nearest collectable target by L1 distance.
``intersection_aware``
    nearest target under :func:`adapted_distance`, which penalises a
    straight line that runs through another agent.
``auxiliary_target``
    Manhattan targeting, except that a designated detour agent first heads
    for an auxiliary cell when both agents' target distances are equal.

Ties are always resolved towards the lexicographically smallest ``(x, y)``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .env import GridState, Position

MANHATTAN = "manhattan"
INTERSECTION_AWARE = "intersection_aware"
AUXILIARY_TARGET = "auxiliary_target"

DETOUR_AGENT = 0


class ObservationError(ValueError):
    pass


@dataclass(frozen=True)
class Observation:
    agent_x: int
    agent_y: int
    target_x: int
    target_y: int

    @property
    def agent(self) -> Position:
        return self.agent_x, self.agent_y

    @property
    def target(self) -> Position:
        return self.target_x, self.target_y

    def as_array(self, width: int, height: int) -> np.ndarray:
        """Coordinates scaled to ``[0, 1]`` for the networks."""
        sx = 1.0 / max(width - 1, 1)
        sy = 1.0 / max(height - 1, 1)
        return np.array([
            (self.agent_x - 1) * sx, (self.agent_y - 1) * sy,
            (self.target_x - 1) * sx, (self.target_y - 1) * sy,
        ])


def manhattan(a: Position, b: Position) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def bresenham_path(src: Position, dst: Position) -> list[Position]:
    """Integer line rasterisation from ``src`` to ``dst``, both included."""
    x0, y0 = src
    x1, y1 = dst
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    cells = [(x0, y0)]
    while (x0, y0) != (x1, y1):
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy
        cells.append((x0, y0))
    return cells


def path_length(path: list[Position]) -> int:
    return len(path) - 1


def adapted_distance(state: GridState, agent: int, target: Position) -> int:
    """Line length to ``target``, plus the line length to the first agent on it.

    Walls on the line are ignored; the rasterisation is purely geometric.
    """
    pos = state.agents[agent]
    path = bresenham_path(pos, target)
    others = {p: j for j, p in enumerate(state.agents) if j != agent and p is not None}
    for k, cell in enumerate(path[1:], start=1):
        if cell in others:
            return path_length(path) + k
    return path_length(path)


def _nearest(state: GridState, agent: int, metric: str) -> Position:
    targets = [t.pos for t in state.targets_for(agent)]
    if not targets:
        raise ObservationError(f"agent {agent + 1} has no target left to observe")
    pos = state.agents[agent]
    if metric == INTERSECTION_AWARE:
        return min(targets, key=lambda t: (adapted_distance(state, agent, t), t))
    return min(targets, key=lambda t: (manhattan(pos, t), t))


def _distance(state: GridState, agent: int, target: Position, metric: str) -> int:
    if metric == INTERSECTION_AWARE:
        return adapted_distance(state, agent, target)
    return manhattan(state.agents[agent], target)


def observe(state: GridState, agent: int, metric: str = MANHATTAN, aux: Position | None = None) -> Observation:
    """Observation without any auxiliary-target memory (see :class:`AuxLatch`)."""
    pos = state.agents[agent]
    if pos is None:
        raise ObservationError(f"agent {agent + 1} is not on the map")
    if metric == AUXILIARY_TARGET:
        obs, _ = with_auxiliary_target(state, agent, aux, AuxLatch())
        return obs
    if metric not in (MANHATTAN, INTERSECTION_AWARE):
        raise ObservationError(f"unknown metric {metric!r}")
    if not state.targets_for(agent) and aux is not None:
        return Observation(*pos, *aux)
    return Observation(*pos, *_nearest(state, agent, metric))


@dataclass(frozen=True)
class AuxLatch:
    """Per-agent, per-episode detour memory.

    ``armed`` is set when the equal-distance condition fires (or up front
    for solo training), ``reached`` once the agent has stood on the
    auxiliary cell. After that the agent targets normally for the rest of
    the episode.
    """

    armed: bool = False
    reached: bool = False


def distances_equal(state: GridState, metric: str = MANHATTAN) -> bool:
    """Whether every present agent is equally far from its own nearest target."""
    dists = []
    for i in range(state.n_agents):
        if state.is_done(i):
            continue
        dists.append(_distance(state, i, _nearest(state, i, metric), metric))
    return len(dists) >= 2 and len(set(dists)) == 1


def with_auxiliary_target(state: GridState, agent: int, aux: Position | None,
                          latch: AuxLatch, metric: str = MANHATTAN) -> tuple[Observation, AuxLatch]:
    if aux is None:
        raise ObservationError("auxiliary-target observation needs an auxiliary cell")
    if not state.is_field(aux):
        raise ObservationError(f"auxiliary target {aux} is not a field cell")
    pos = state.agents[agent]
    if agent != DETOUR_AGENT or latch.reached:
        return Observation(*pos, *_nearest(state, agent, metric)), latch
    if not latch.armed and distances_equal(state, metric):
        latch = replace(latch, armed=True)
    if latch.armed and pos == aux:
        latch = replace(latch, reached=True)
    if latch.armed and not latch.reached:
        return Observation(*pos, *aux), latch
    return Observation(*pos, *_nearest(state, agent, metric)), latch


class Observer:
    """Stateful wrapper used by policies: holds the latch for one episode."""

    def __init__(self, agent: int, mode: str = MANHATTAN, aux: Position | None = None,
                 latch: AuxLatch | None = None):
        if mode == AUXILIARY_TARGET and aux is None:
            raise ObservationError("auxiliary_target mode needs an auxiliary cell")
        self.agent = agent
        self.mode = mode
        self.aux = aux
        self.initial_latch = latch or AuxLatch()
        self.latch = self.initial_latch

    def reset(self) -> None:
        self.latch = self.initial_latch

    def __call__(self, state: GridState) -> Observation:
        if self.mode == AUXILIARY_TARGET:
            obs, self.latch = with_auxiliary_target(state, self.agent, self.aux, self.latch)
            return obs
        return observe(state, self.agent, self.mode)


def solo_latch(spec, agent: int) -> AuxLatch:
    """Latch for training ``agent`` alone in ``spec``.

    The trigger compares both agents' distances, which cannot be evaluated
    with the other agent absent, so it is decided once on the joint initial
    state.
    """
    if spec.auxiliary_target is None or agent != DETOUR_AGENT:
        return AuxLatch()
    return AuxLatch(armed=distances_equal(spec.initial_state()))
