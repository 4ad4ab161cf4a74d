"""Reward parameterizations: weight vectors over the step and goal particles.

The reward for one agent and one step is ``cost(x, y) * R_s + goal * R_g``
where ``R_s = 1`` for every step and ``R_g = 1`` when a target is collected.
The cost weight is priced at the cell the agent ends the step on.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

BASE_COST = -1.0
GOAL_WEIGHT = 50.0


class RewardMode(enum.Enum):
    BASE = "base"
    COIN_GRADIENT = "coin_gradient"
    TWO_ROOMS_CONTORTION = "two_rooms_contortion"


def base_weights() -> tuple[float, float]:
    return BASE_COST, GOAL_WEIGHT


def coin_gradient_cost(x: int, y: int) -> float:
    """Linear gradient along the rows: cheaper towards the top."""
    if y < 1:
        raise ValueError(f"row must be >= 1, got {y}")
    return -0.55 - 0.05 * y


def two_rooms_contortion_cost(x: int, y: int) -> float:
    """Cube-root contortion along both axes; neutral (-1) on column 4."""
    if x < 1 or y < 1:
        raise ValueError(f"cell must satisfy x, y >= 1, got ({x}, {y})")
    return (5.0 / y) * _cbrt(x / 4.0 - 1.0) - 1.0


def _cbrt(v: float) -> float:
    # real, sign-preserving cube root (v ** (1/3) is complex for v < 0)
    return math.copysign(abs(v) ** (1.0 / 3.0), v)


_COST_FNS = {
    RewardMode.BASE: lambda x, y: BASE_COST,
    RewardMode.COIN_GRADIENT: coin_gradient_cost,
    RewardMode.TWO_ROOMS_CONTORTION: two_rooms_contortion_cost,
}


@dataclass(frozen=True)
class RewardModel:
    mode: RewardMode = RewardMode.BASE
    goal_weight: float = GOAL_WEIGHT

    def cost_weight(self, pos) -> float:
        return _COST_FNS[self.mode](*pos)

    def reward(self, pos, collected: int) -> float:
        return self.cost_weight(pos) * 1 + self.goal_weight * collected

    def step_cost(self, pos, clamp: bool = True) -> float:
        """Non-negative planning cost of entering ``pos``.

        Cells whose cost weight is positive (only possible under the
        contortion) are clamped to zero when ``clamp`` is set.
        """
        w = self.cost_weight(pos)
        if w > 0 and clamp:
            return 0.0
        return abs(w)


def reward_model(mode: RewardMode | str) -> RewardModel:
    return RewardModel(RewardMode(mode))
