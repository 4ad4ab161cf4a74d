"""Episode execution: joint rollouts and solo rollouts of agent policies."""

from __future__ import annotations

from typing import Protocol, Sequence

from .env import Action, EpisodeTrace, GridState, Terminal, is_terminal, step
from .rewards import RewardModel
from .scenarios import ScenarioSpec


class Policy(Protocol):
    def reset(self) -> None: ...

    def act(self, state: GridState) -> Action: ...


def run_episode(spec: ScenarioSpec, policies: Sequence[Policy | None], rewards: RewardModel | None = None,
                present: Sequence[int] | None = None, budget: int | None = None) -> EpisodeTrace:
    """Roll out until every target is collected or the budget runs out.

    ``present`` restricts the rollout to a subset of agents (the others are
    removed from the map); ``policies`` is indexed by agent and may hold
    ``None`` for absent agents.
    """
    rewards = rewards or RewardModel(spec.reward_mode)
    budget = spec.step_budget if budget is None else budget
    state = spec.initial_state()
    if present is not None:
        state = state.without_agents(present)
    for i, p in enumerate(policies):
        if p is not None and state.present(i):
            p.reset()
    trace = EpisodeTrace(states=[state])
    while (term := is_terminal(state, budget)) is Terminal.NOT_TERMINAL:
        actions = tuple(
            policies[i].act(state) if not state.is_done(i) else Action.UP
            for i in range(state.n_agents)
        )
        out = step(state, actions, rewards, budget)
        trace.actions.append(actions)
        trace.rewards.append(out.rewards)
        trace.events.append(out.events)
        trace.states.append(out.next_state)
        state = out.next_state
    trace.terminal = term
    return trace


def solo_rollout(spec: ScenarioSpec, policy: Policy, agent: int, rewards: RewardModel | None = None) -> EpisodeTrace:
    policies: list[Policy | None] = [None] * spec.n_agents
    policies[agent] = policy
    return run_episode(spec, policies, rewards, present=[agent])
