"""Advantage actor-critic on the 4-integer local observation, in plain numpy.

Policy and value are separate tanh MLPs. Each update consumes one complete
solo episode: Monte-Carlo returns ``G_t``, advantages ``A_t = G_t - V(z_t)``,
one gradient step on

    mean_t[ A_t * log pi(a_t | z_t) + c_ent * H(pi(. | z_t)) ]     (ascent)
    mean_t[ 0.5 * (G_t - V(z_t))^2 ]                                 (descent)

Backpropagation is written out by hand; ``tests/test_a2c.py`` checks it
against central finite differences.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .env import Action, GridState, Terminal, is_terminal, returns_to_go, step
from .planner import shortest_route
from .observation import AUXILIARY_TARGET, MANHATTAN, Observation, Observer, solo_latch
from .rewards import RewardModel
from .scenarios import ScenarioSpec, bfs_distances

N_ACTIONS = len(Action)
OBS_DIM = 4
FORMAT_TAG = "mas-emergence-a2c"
FORMAT_VERSION = 1


class NumericError(ArithmeticError):
    """Non-finite loss or gradient during training."""


# -- networks --------------------------------------------------------------

@dataclass
class MLP:
    """Fully connected net, tanh on hidden layers, linear output."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """``x`` has shape ``(batch, in)``; returns the output and the layer inputs."""
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if k < last:
                h = np.tanh(h)
            acts.append(h)
        return h, acts

    def backward(self, acts: list[np.ndarray], grad_out: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
        gw = [np.zeros_like(w) for w in self.weights]
        gb = [np.zeros_like(b) for b in self.biases]
        g = grad_out
        for k in range(len(self.weights) - 1, -1, -1):
            gw[k] = acts[k].T @ g
            gb[k] = g.sum(axis=0)
            if k > 0:
                g = (g @ self.weights[k].T) * (1.0 - acts[k] ** 2)
        return gw, gb

    def copy(self) -> "MLP":
        return MLP([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])

    def set_flat(self, vec: np.ndarray) -> None:
        i = 0
        for w, b in zip(self.weights, self.biases):
            for a in (w, b):
                a[...] = vec[i:i + a.size].reshape(a.shape)
                i += a.size


def init_mlp(sizes: list[int], rng: np.random.Generator, out_scale: float = 1.0) -> MLP:
    weights, biases = [], []
    for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        if k == len(sizes) - 2:
            w *= out_scale
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return MLP(weights, biases)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _as_batch(obs) -> np.ndarray:
    x = np.asarray(obs, dtype=float)
    return x[None, :] if x.ndim == 1 else x


def policy_forward(params: MLP, obs) -> np.ndarray:
    x = _as_batch(obs)
    if x.shape[1] != params.sizes[0]:
        raise ValueError(f"observation has {x.shape[1]} features, network expects {params.sizes[0]}")
    probs = softmax(params.forward(x)[0])
    return probs[0] if np.ndim(obs) == 1 else probs


def value_forward(params: MLP, obs) -> float | np.ndarray:
    x = _as_batch(obs)
    if x.shape[1] != params.sizes[0]:
        raise ValueError(f"observation has {x.shape[1]} features, network expects {params.sizes[0]}")
    v = params.forward(x)[0][:, 0]
    return float(v[0]) if np.ndim(obs) == 1 else v


# -- losses ----------------------------------------------------------------

@dataclass
class LossStats:
    policy_objective: float
    entropy: float
    value_loss: float


def a2c_gradients(policy: MLP, value: MLP, x: np.ndarray, actions: np.ndarray, returns: np.ndarray,
                  entropy_coeff: float):
    """Gradients of the two losses to be *minimised*.

    The policy loss is ``-(mean A*log p + c_ent * mean H)`` with ``A`` held
    constant; the value loss is ``0.5 * mean (G - V)^2``.
    """
    t = len(actions)
    logits, p_acts = policy.forward(x)
    probs = softmax(logits)
    v, v_acts = value.forward(x)
    v = v[:, 0]
    adv = returns - v
    logp = np.log(probs + 1e-300)
    onehot = np.zeros_like(probs)
    onehot[np.arange(t), actions] = 1.0
    ent = -(probs * logp).sum(axis=1)

    # d/dz [A log p_a] = A (onehot - p);  dH/dz = -p (log p + H)
    d_obj = adv[:, None] * (onehot - probs) - entropy_coeff * probs * (logp + ent[:, None])
    gp = policy.backward(p_acts, -d_obj / t)
    gv = value.backward(v_acts, (-(adv) / t)[:, None])

    stats = LossStats(
        policy_objective=float((adv * logp[np.arange(t), actions]).mean()),
        entropy=float(ent.mean()),
        value_loss=float(0.5 * (adv ** 2).mean()),
    )
    return gp, gv, stats


def policy_loss(policy: MLP, value: MLP, x, actions, returns, entropy_coeff) -> float:
    """Scalar the policy gradient descends on (advantages frozen)."""
    probs = softmax(policy.forward(x)[0])
    adv = returns - value.forward(x)[0][:, 0]
    logp = np.log(probs + 1e-300)
    ent = -(probs * logp).sum(axis=1)
    return float(-(adv * logp[np.arange(len(actions)), actions]).mean() - entropy_coeff * ent.mean())


def value_loss(value: MLP, x, returns) -> float:
    v = value.forward(x)[0][:, 0]
    return float(0.5 * ((returns - v) ** 2).mean())


class Adam:
    def __init__(self, net: MLP, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.m = [np.zeros_like(a) for a in net.weights + net.biases]
        self.v = [np.zeros_like(a) for a in net.weights + net.biases]
        self.t = 0

    def step(self, net: MLP, grads_w, grads_b) -> None:
        self.t += 1
        params = net.weights + net.biases
        grads = list(grads_w) + list(grads_b)
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SGD:
    def __init__(self, net: MLP, lr: float):
        self.lr = lr

    def step(self, net: MLP, grads_w, grads_b) -> None:
        for p, g in zip(net.weights + net.biases, list(grads_w) + list(grads_b)):
            p -= self.lr * g


# -- agents ----------------------------------------------------------------

@dataclass
class TrainConfig:
    gamma: float = 0.99
    learning_rate: float = 1e-3
    hidden_sizes: list[int] = field(default_factory=lambda: [64, 64])
    entropy_coeff: float = 0.01
    episodes: int = 15000
    eval_interval: int = 25
    seed: int = 0
    convergence_window: int = 4
    # None: the optimal solo return minus ``convergence_slack``
    return_threshold: float | None = None
    convergence_slack: float = 0.5
    optimizer: str = "adam"
    train_budget: int = 200
    observation_mode: str = MANHATTAN

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainedAgent:
    agent: int
    policy: MLP
    value: MLP
    width: int
    height: int
    converged: bool = False
    config: TrainConfig = field(default_factory=TrainConfig)
    history: list[tuple[int, float]] = field(default_factory=list)

    def features(self, obs: Observation) -> np.ndarray:
        return obs.as_array(self.width, self.height)


def new_agent(agent: int, width: int, height: int, cfg: TrainConfig, rng: np.random.Generator) -> TrainedAgent:
    sizes = [OBS_DIM, *cfg.hidden_sizes]
    policy = init_mlp(sizes + [N_ACTIONS], rng, out_scale=0.01)
    value = init_mlp(sizes + [1], rng)
    return TrainedAgent(agent, policy, value, width, height, config=cfg)


def act_greedy(agent: TrainedAgent, obs: Observation) -> Action:
    probs = policy_forward(agent.policy, agent.features(obs))
    # np.argmax keeps the first maximum, i.e. the Up, Right, Down, Left order
    return Action(int(np.argmax(probs)))


def a2c_episode_update(agent: TrainedAgent, x: np.ndarray, actions, rewards, cfg: TrainConfig,
                       optimizers=None) -> LossStats:
    """One gradient step on a complete episode; returns the pre-update losses."""
    actions = np.asarray(actions, dtype=int)
    returns = np.asarray(returns_to_go(list(rewards), cfg.gamma))
    gp, gv, stats = a2c_gradients(agent.policy, agent.value, np.asarray(x, dtype=float), actions,
                                  returns, cfg.entropy_coeff)
    for g in gp[0] + gp[1] + gv[0] + gv[1]:
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient")
    if optimizers is None:
        optimizers = (SGD(agent.policy, cfg.learning_rate), SGD(agent.value, cfg.learning_rate))
    optimizers[0].step(agent.policy, *gp)
    optimizers[1].step(agent.value, *gv)
    return stats


# -- solo environment --------------------------------------------------------

class SoloEnv:
    """One agent alone in a scenario; the others are removed from the map.

    In ``auxiliary_target`` mode the detour agent also earns the goal weight
    when it first reaches the auxiliary cell, so the detour is learnable.
    """

    def __init__(self, spec: ScenarioSpec, agent: int, mode: str, budget: int,
                 rewards: RewardModel | None = None):
        self.spec = spec
        self.agent = agent
        self.mode = mode
        self.budget = budget
        self.rewards = rewards or RewardModel(spec.reward_mode)
        latch = solo_latch(spec, agent) if mode == AUXILIARY_TARGET else None
        self.observer = Observer(agent, mode, spec.auxiliary_target, latch)
        self.state: GridState | None = None

    def reset(self) -> Observation:
        self.observer.reset()
        self.state = self.spec.initial_state().without_agents([self.agent])
        return self.observer(self.state)

    def step(self, action: Action) -> tuple[Observation | None, float, bool]:
        actions = [Action.UP] * self.state.n_agents
        actions[self.agent] = action
        before = self.observer.latch
        out = step(self.state, actions, self.rewards, self.budget)
        self.state = out.next_state
        r = out.rewards[self.agent]
        done = is_terminal(self.state, self.budget) is not Terminal.NOT_TERMINAL
        obs = None if done else self.observer(self.state)
        if self.mode == AUXILIARY_TARGET and not before.reached and (
                self.observer.latch.reached or (done and self.state.agents[self.agent] == self.spec.auxiliary_target)):
            r += self.rewards.goal_weight
        return obs, r, done


def optimal_solo_return(spec: ScenarioSpec, agent: int, mode: str, gamma: float,
                        rewards: RewardModel | None = None) -> float:
    """Discounted return of a shortest solo route (aux detour included when armed).

    Used as the convergence reference. Targets are visited in nearest-first
    order, which is optimal for single-flag layouts and the canonical coins.
    """
    rewards = rewards or RewardModel(spec.reward_mode)
    waypoints = []
    if mode == AUXILIARY_TARGET and solo_latch(spec, agent).armed:
        waypoints.append(spec.auxiliary_target)
    left = [t.pos for t in spec.targets_for(agent)]
    cur = spec.agent_spawns[agent]
    while left:
        d = bfs_distances(spec, cur)
        nxt = min(left, key=lambda p: (d[p], p))
        waypoints.append(nxt)
        left.remove(nxt)
        cur = nxt
    state = spec.initial_state()
    total, k, cur = 0.0, 0, spec.agent_spawns[agent]
    for wp in waypoints:
        _, route = shortest_route(state, rewards, cur, wp)
        for j, cell in enumerate(route[1:], start=1):
            got = 1 if j == len(route) - 1 else 0
            total += gamma ** k * rewards.reward(cell, got)
            k += 1
        cur = wp
    return total


def greedy_solo_return(agent: TrainedAgent, env: SoloEnv) -> tuple[float, int, bool]:
    obs = env.reset()
    rewards, done = [], False
    while not done:
        obs, r, done = env.step(act_greedy(agent, obs))
        rewards.append(r)
    g = sum(agent.config.gamma ** k * r for k, r in enumerate(rewards))
    return g, len(rewards), env.state.is_done(env.agent)


def train_agent(spec: ScenarioSpec, agent: int, cfg: TrainConfig) -> TrainedAgent:
    """Train one agent alone; stops early once the greedy policy has converged."""
    rng = np.random.default_rng([cfg.seed, agent])
    trained = new_agent(agent, spec.width, spec.height, cfg, rng)
    env = SoloEnv(spec, agent, cfg.observation_mode, cfg.train_budget)
    eval_env = SoloEnv(spec, agent, cfg.observation_mode, spec.step_budget)
    threshold = cfg.return_threshold
    if threshold is None:
        threshold = optimal_solo_return(spec, agent, cfg.observation_mode, cfg.gamma) - cfg.convergence_slack
    make = Adam if cfg.optimizer == "adam" else SGD
    optimizers = (make(trained.policy, cfg.learning_rate), make(trained.value, cfg.learning_rate))
    window: list[float] = []
    for episode in range(1, cfg.episodes + 1):
        obs = env.reset()
        xs, acts, rews, done = [], [], [], False
        while not done:
            x = trained.features(obs)
            probs = policy_forward(trained.policy, x)
            a = int(rng.choice(N_ACTIONS, p=probs))
            obs, r, done = env.step(Action(a))
            xs.append(x)
            acts.append(a)
            rews.append(r)
        try:
            a2c_episode_update(trained, np.array(xs), acts, rews, cfg, optimizers)
        except NumericError:
            trained.converged = False
            return trained
        if episode % cfg.eval_interval == 0:
            g, _, _ = greedy_solo_return(trained, eval_env)
            trained.history.append((episode, g))
            window = (window + [g])[-cfg.convergence_window:]
            if len(window) == cfg.convergence_window and min(window) >= threshold:
                trained.converged = True
                break
    return trained


def train(spec: ScenarioSpec, cfg: TrainConfig) -> list[TrainedAgent]:
    return [train_agent(spec, i, cfg) for i in range(spec.n_agents)]


class RLPolicy:
    """Greedy step policy for joint execution."""

    def __init__(self, trained: TrainedAgent, mode: str, aux=None):
        self.trained = trained
        self.observer = Observer(trained.agent, mode, aux)

    def reset(self) -> None:
        self.observer.reset()

    def act(self, state: GridState) -> Action:
        return act_greedy(self.trained, self.observer(state))


# -- persistence -------------------------------------------------------------

def _write_net(lines: list[str], name: str, net: MLP) -> None:
    lines.append(f"{name} {' '.join(str(s) for s in net.sizes)}")
    for w, b in zip(net.weights, net.biases):
        lines.append(" ".join(repr(float(v)) for v in w.ravel()))
        lines.append(" ".join(repr(float(v)) for v in b.ravel()))


def _read_net(lines: list[str], i: int, name: str) -> tuple[MLP, int]:
    head = lines[i].split()
    if head[0] != name:
        raise ValueError(f"expected network {name!r}, found {head[0]!r}")
    sizes = [int(s) for s in head[1:]]
    i += 1
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(np.array([float(v) for v in lines[i].split()]).reshape(fan_in, fan_out))
        biases.append(np.array([float(v) for v in lines[i + 1].split()]))
        i += 2
    return MLP(weights, biases), i


def dumps_agents(agents: list[TrainedAgent]) -> str:
    lines = [f"{FORMAT_TAG} {FORMAT_VERSION}", str(len(agents))]
    for a in agents:
        meta = {"agent": a.agent, "width": a.width, "height": a.height,
                "converged": a.converged, "config": asdict(a.config)}
        lines.append(json.dumps(meta, sort_keys=True))
        _write_net(lines, "policy", a.policy)
        _write_net(lines, "value", a.value)
    return "\n".join(lines) + "\n"


def loads_agents(text: str) -> list[TrainedAgent]:
    lines = text.splitlines()
    tag = lines[0].split()
    if tag != [FORMAT_TAG, str(FORMAT_VERSION)]:
        raise ValueError(f"not a version {FORMAT_VERSION} agent file: {lines[0]!r}")
    n = int(lines[1])
    i = 2
    out = []
    for _ in range(n):
        meta = json.loads(lines[i])
        policy, i = _read_net(lines, i + 1, "policy")
        value, i = _read_net(lines, i, "value")
        out.append(TrainedAgent(meta["agent"], policy, value, meta["width"], meta["height"],
                                meta["converged"], TrainConfig(**meta["config"])))
    return out


def save_agents(agents: list[TrainedAgent], path) -> None:
    Path(path).write_text(dumps_agents(agents), encoding="utf-8")


def load_agents(path) -> list[TrainedAgent]:
    return loads_agents(Path(path).read_text(encoding="utf-8"))
