"""The search agent: top-K state, exploration, replay, and actor-critic training.

The critic sees only the action (no state input) and is fitted with the
check loss, so it tracks an upper quantile of the reward. The actor is
pushed up the critic's surface by backpropagating ``-mean Q(mu(s))``
through the frozen critic into the actor parameters.
"""

from __future__ import annotations

import collections
import dataclasses
import json
import math
from pathlib import Path
from typing import Callable

import numpy as np

from .neural import IDENTITY, SIGMOID, AdamState, Mlp, adam_step, check_loss
from .oracle import Oracle, RewardMode
from .space import (
    DiscreteArch,
    SearchSpaceSpec,
    discretize,
    flatten,
    parse_arch_key,
    random_action,
    unflatten,
)

CHECKPOINT_MAGIC = "L2NAS-CKPT"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class Exploration:
    kind: str = "eps_greedy"  # "eps_greedy" | "warmup"
    eps0: float = 1.0
    eps_min: float = 0.05
    anneal_end: int = 175
    warmup_steps: int = 0

    def __post_init__(self):
        if self.kind not in ("eps_greedy", "warmup"):
            raise ValueError(f"unknown exploration kind {self.kind!r}")


@dataclasses.dataclass(frozen=True)
class AgentConfig:
    K: int = 64
    tau: float = 0.9
    batch_size: int = 8
    xi: float = 1e-4
    c_max: int = 10
    exploration: Exploration = Exploration()
    hidden: int = 128
    actor_lr: float = 1e-8
    critic_lr: float = 1e-4
    buffer_capacity: int | None = None
    steps: int = 1000
    reward: RewardMode = RewardMode()
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must be in (0, 1), got {self.tau}")
        if self.batch_size < 1 or self.c_max < 1 or self.K < 1:
            raise ValueError("batch_size, c_max and K must be >= 1")
        if self.xi < 0:
            raise ValueError("xi must be >= 0")
        if self.buffer_capacity is not None and self.buffer_capacity < 1:
            raise ValueError("buffer_capacity must be >= 1 or None")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AgentConfig":
        d = dict(d)
        if isinstance(d.get("exploration"), dict):
            d["exploration"] = Exploration(**d["exploration"])
        if isinstance(d.get("reward"), dict):
            d["reward"] = RewardMode(**d["reward"])
        return cls(**d)

    def replace(self, **changes) -> "AgentConfig":
        return dataclasses.replace(self, **changes)


def epsilon_at(t: float, eps0: float = 1.0, eps_min: float = 0.05, anneal_end: int = 175) -> float:
    """Cosine-annealed exploration probability, flat at ``eps_min`` after ``anneal_end``."""
    if t >= anneal_end:
        return eps_min
    return eps_min + 0.5 * (eps0 - eps_min) * (1.0 + math.cos(math.pi * t / anneal_end))


def batches_per_step(buffer_size: int, batch_size: int, c_max: int) -> int:
    return min(buffer_size // batch_size, c_max)


class TopKTracker:
    """Best K distinct architectures seen, sorted by accuracy desc then key asc."""

    def __init__(self, K: int):
        self.K = K
        self.entries: list[tuple[DiscreteArch, float]] = []
        self._keys: set[str] = set()
        self._counts: list[np.ndarray] | None = None

    def __len__(self):
        return len(self.entries)

    def offer(self, arch: DiscreteArch, acc: float) -> bool:
        if arch.key in self._keys:
            return False
        if len(self.entries) >= self.K and not acc > self.entries[-1][1]:
            return False
        if self._counts is None:
            self._counts = [np.zeros(b.shape, dtype=np.int64) for b in arch.blocks]
        if len(self.entries) >= self.K:
            old, _ = self.entries.pop()
            self._keys.discard(old.key)
            for c, b in zip(self._counts, old.blocks):
                c -= b
        self.entries.append((arch, acc))
        self.entries.sort(key=lambda e: (-e[1], e[0].key))
        self._keys.add(arch.key)
        for c, b in zip(self._counts, arch.blocks):
            c += b
        return True

    @property
    def min_acc(self) -> float | None:
        return self.entries[-1][1] if self.entries else None

    def mean(self, space: SearchSpaceSpec) -> tuple[np.ndarray, ...]:
        """Elementwise mean of the tracked binary matrices; uniform prior when empty."""
        if not self.entries:
            return tuple(np.full(b.shape, 1.0 / b.cols) for b in space.blocks)
        n = len(self.entries)
        return tuple(c / n for c in self._counts)


def state_from_tracker(space: SearchSpaceSpec, tracker: TopKTracker) -> tuple[np.ndarray, ...]:
    return tracker.mean(space)


class ReplayBuffer:
    """FIFO store of flattened (state, action, reward) triplets."""

    def __init__(self, capacity: int | None = None):
        self.capacity = capacity
        self._items: collections.deque = collections.deque(maxlen=capacity)

    def __len__(self):
        return len(self._items)

    def push(self, s: np.ndarray, a: np.ndarray, r: float) -> None:
        self._items.append((s, a, float(r)))

    def batch(self, idx) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        items = [self._items[i] for i in idx]
        return (
            np.stack([it[0] for it in items]),
            np.stack([it[1] for it in items]),
            np.array([it[2] for it in items]),
        )

    def __iter__(self):
        return iter(self._items)


@dataclasses.dataclass
class TrainStats:
    C: int
    critic_loss: float | None = None
    mean_q: float | None = None


class Agent:
    def __init__(self, space: SearchSpaceSpec, config: AgentConfig, _init_networks: bool = True):
        self.space = space
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        d, h = space.total_dim, config.hidden
        if _init_networks:
            self.actor = Mlp.init([d, h, h, h, d], SIGMOID, self.rng)
            self.critic = Mlp.init([d, h, h, h, 1], IDENTITY, self.rng)
            self.actor_opt = AdamState.zeros_like([self.actor.flat], config.actor_lr)
            self.critic_opt = AdamState.zeros_like([self.critic.flat], config.critic_lr)
        self.buffer = ReplayBuffer(config.buffer_capacity)
        self.tracker = TopKTracker(config.K)
        self.t = 0
        self.best: tuple[str, float, int] | None = None  # (key, acc, step), earliest on ties

    @property
    def state(self) -> tuple[np.ndarray, ...]:
        return self.tracker.mean(self.space)

    def epsilon(self) -> float:
        ex = self.config.exploration
        return epsilon_at(self.t, ex.eps0, ex.eps_min, ex.anneal_end)

    def phase(self):
        """Logged exploration indicator: epsilon, or 'warmup' / 'policy'."""
        ex = self.config.exploration
        if ex.kind == "eps_greedy":
            return self.epsilon()
        return "warmup" if self.t < ex.warmup_steps else "policy"

    def select_action(self, s=None) -> tuple[np.ndarray, ...]:
        s = self.state if s is None else s
        ex = self.config.exploration
        if ex.kind == "eps_greedy":
            explore = self.rng.random() < self.epsilon()
        else:
            explore = self.t < ex.warmup_steps
        if explore:
            return random_action(self.space, self.rng)
        mu = self.actor(flatten(s)[None, :])[0]
        xi = self.config.xi
        z = self.rng.uniform(-xi, xi, size=mu.shape) if xi > 0 else 0.0
        return unflatten(self.space, np.clip(mu + z, 0.0, 1.0))

    def record(self, s, a, arch: DiscreteArch, r: float, acc: float) -> None:
        self.buffer.push(flatten(s), flatten(a), r)
        self.tracker.offer(arch, acc)
        if self.best is None or acc > self.best[1]:
            self.best = (arch.key, acc, self.t)
        self.t += 1

    def train_step(self) -> TrainStats:
        cfg = self.config
        C = batches_per_step(len(self.buffer), cfg.batch_size, cfg.c_max)
        if C == 0:
            return TrainStats(0)
        B = cfg.batch_size
        losses, qs = [], []
        for _ in range(C):
            idx = self.rng.integers(0, len(self.buffer), size=B)
            S, A, R = self.buffer.batch(idx)

            q, cache = self.critic.forward(A)
            loss, dq = check_loss(R, q[:, 0], cfg.tau)
            grad, _ = self.critic.backward_flat(cache, (dq / B)[:, None])
            adam_step([self.critic.flat], [grad], self.critic_opt)

            # ascend mean Q(mu(s)); critic params are read but not stepped
            mu, acache = self.actor.forward(S)
            qa, ccache = self.critic.forward(mu)
            _, dmu = self.critic.backward_flat(ccache, np.full_like(qa, -1.0 / B))
            agrad, _ = self.actor.backward_flat(acache, dmu)
            adam_step([self.actor.flat], [agrad], self.actor_opt)

            losses.append(loss.mean())
            qs.append(qa.mean())
        return TrainStats(C, float(np.mean(losses)), float(np.mean(qs)))


@dataclasses.dataclass
class SearchResult:
    best_key: str | None
    best_valid: float | None
    best_test: float | None
    best_step: int | None
    curve: list[float]
    final_state: tuple[np.ndarray, ...]
    tracker: list[tuple[str, float]]
    log: list[dict]
    agent: Agent | None = dataclasses.field(default=None, repr=False)


def run_search(space: SearchSpaceSpec, oracle: Oracle, config: AgentConfig | None = None,
               agent: Agent | None = None, steps: int | None = None,
               on_step: Callable[[dict], None] | None = None) -> SearchResult:
    """Run ``steps`` select -> discretize -> query -> reward -> record -> train iterations.

    ``on_step`` receives each log record as soon as it is produced, so a
    caller writing to disk keeps the partial log if the oracle raises.
    """
    if agent is None:
        agent = Agent(space, config or AgentConfig())
    cfg = agent.config
    steps = cfg.steps if steps is None else steps
    reward = cfg.reward
    log, curve = [], []
    for _ in range(steps):
        phase = agent.phase()
        s = agent.state
        a = agent.select_action(s)
        arch = discretize(space, a)
        acc = oracle.query(arch, "valid")
        r = reward(acc)
        step = agent.t
        agent.record(s, a, arch, r, acc)
        stats = agent.train_step()
        rec = {
            "step": step,
            "arch_key": arch.key,
            "valid_acc": acc,
            "reward": r,
            "epsilon_or_phase": phase,
            "C": stats.C,
            "critic_loss": stats.critic_loss,
            "mean_q": stats.mean_q,
            "best_so_far": agent.best[1],
        }
        log.append(rec)
        curve.append(agent.best[1])
        if on_step is not None:
            on_step(rec)
    return _result(space, oracle, agent, log, curve)


def _result(space, oracle, agent, log, curve) -> SearchResult:
    best_key = best_valid = best_test = best_step = None
    if agent.best is not None:
        best_key, best_valid, best_step = agent.best
        best_test = oracle.query(parse_arch_key(space, best_key), "test")
    return SearchResult(
        best_key, best_valid, best_test, best_step, curve, agent.state,
        [(a.key, acc) for a, acc in agent.tracker.entries], log, agent,
    )


# --- checkpoints -------------------------------------------------------------


def checkpoint_dict(agent: Agent, include_buffer: bool = False) -> dict:
    return {
        "magic": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "config": agent.config.to_dict(),
        "space": agent.space.to_dict(),
        "actor": agent.actor.to_dict(),
        "critic": agent.critic.to_dict(),
        "actor_opt": agent.actor_opt.to_dict(),
        "critic_opt": agent.critic_opt.to_dict(),
        "rng": agent.rng.bit_generator.state,
        "tracker": [[a.key, acc] for a, acc in agent.tracker.entries],
        "t": agent.t,
        "best": list(agent.best) if agent.best is not None else None,
        "buffer": (
            [[s.tolist(), a.tolist(), r] for s, a, r in agent.buffer] if include_buffer else None
        ),
    }


def save_checkpoint(agent: Agent, path, include_buffer: bool = False) -> None:
    text = json.dumps(checkpoint_dict(agent, include_buffer), sort_keys=True, separators=(",", ":"))
    Path(path).write_text(text, encoding="utf-8")


def agent_from_dict(d: dict) -> Agent:
    if not isinstance(d, dict) or d.get("magic") != CHECKPOINT_MAGIC:
        raise CheckpointError("not an L2NAS checkpoint")
    if d.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {d.get('version')!r}")
    try:
        space = SearchSpaceSpec.from_dict(d["space"])
        agent = Agent(space, AgentConfig.from_dict(d["config"]), _init_networks=False)
        agent.actor = Mlp.from_dict(d["actor"])
        agent.critic = Mlp.from_dict(d["critic"])
        agent.actor_opt = AdamState.from_dict(d["actor_opt"], [agent.actor.flat])
        agent.critic_opt = AdamState.from_dict(d["critic_opt"], [agent.critic.flat])
        agent.rng.bit_generator.state = d["rng"]
        for key, acc in d["tracker"]:
            agent.tracker.offer(parse_arch_key(space, key), acc)
        agent.t = d["t"]
        agent.best = tuple(d["best"]) if d["best"] is not None else None
        for s, a, r in d["buffer"] or ():
            agent.buffer.push(np.array(s, dtype=np.float64), np.array(a, dtype=np.float64), r)
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"corrupt checkpoint: {e}") from None
    return agent


def load_checkpoint(path) -> Agent:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise CheckpointError(f"corrupt checkpoint: {e}") from None
    return agent_from_dict(d)


# --- transfer ----------------------------------------------------------------


def same_shape(a: SearchSpaceSpec, b: SearchSpaceSpec) -> bool:
    return [(x.shape, x.discretizer, x.node_count) for x in a.blocks] == [
        (y.shape, y.discretizer, y.node_count) for y in b.blocks
    ]


def fine_tune(checkpoint, oracle: Oracle, K: int = 100, steps: int = 1000, W: int = 500,
              reward: RewardMode | None = None, seed: int | None = None,
              on_step=None) -> SearchResult:
    """Warm-start from ``checkpoint`` (an Agent or a path) and search a new environment.

    Networks and optimizer moments carry over; the tracker, replay buffer,
    step counter and best-so-far start empty. The reward defaults to the
    rescaled form with the new oracle's ``acc_env``.
    """
    agent = checkpoint if isinstance(checkpoint, Agent) else load_checkpoint(checkpoint)
    if not same_shape(agent.space, oracle.space):
        raise ValueError(
            f"action space mismatch: checkpoint {agent.space.shapes} vs environment {oracle.space.shapes}"
        )
    if reward is None:
        if oracle.acc_env is None:
            raise ValueError("environment has no acc_env; pass a reward mode explicitly")
        reward = RewardMode("rescaled", oracle.acc_env)
    config = agent.config.replace(
        K=K, steps=steps, reward=reward,
        exploration=Exploration(kind="warmup", warmup_steps=W),
        seed=agent.config.seed if seed is None else seed,
    )
    agent.config = config
    agent.space = oracle.space
    agent.tracker = TopKTracker(K)
    agent.buffer = ReplayBuffer(config.buffer_capacity)
    agent.t = 0
    agent.best = None
    if seed is not None:
        agent.rng = np.random.default_rng(seed)
    return run_search(oracle.space, oracle, agent=agent, steps=steps, on_step=on_step)
