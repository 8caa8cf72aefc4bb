"""
Deep Q-network edge controller.

Online and target networks, a bounded FIFO replay memory, feasibility-masked
epsilon-greedy action selection, soft target updates every tau steps and an
exportable greedy policy snapshot.

Example:
    agent = DQNAgent(topo, DEFAULT_LOAD, AgentConfig(), horizon=300_000, rngs=streams)
    action = agent.decide(ctx)
    loss = agent.observe(ctx, action, reward, next_ctx, terminal=False)
"""

from __future__ import annotations

import logging
from collections import deque
from collections.abc import Iterator, Sequence
from dataclasses import asdict, dataclass

import numpy as np

from app.errors import ConfigurationError
from app.services.cluster import ClusterState, ClusterTopology
from app.services.environment import LoadDistribution, TaskRequest
from app.services.mdp import (
    Action,
    DecisionContext,
    Normalization,
    StateVector,
    Transition,
    encode_state,
)
from app.services.neural import (
    LayerSpec,
    NetworkWeights,
    OptimizerState,
    dump_weights,
    forward,
    init_weights,
    parse_weights,
    soft_update,
    train_step,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AgentConfig:
    """DQN hyperparameters."""

    gamma: float = 0.9
    epsilon_start: float = 1.0
    epsilon_hold_fraction: float = 0.1
    epsilon_decay: float = 0.9995
    epsilon_min: float = 1e-3
    batch_size: int = 32
    target_update_interval: int = 1000
    target_update_rate: float = 0.2
    replay_capacity: int = 2000
    hidden_layers: tuple[int, ...] = (64, 24)
    learning_rate: float = 0.01
    learning_rate_decay: float = 1e-4
    momentum: float = 0.9
    rms_rho: float = 0.9
    huber_delta: float = 1.0
    normalize_inputs: bool = True
    stop_on_convergence: bool = True
    convergence_window: int = 10_000
    convergence_tolerance: float = 0.01

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must be in [0, 1], got {self.gamma}")
        if not 0.0 < self.target_update_rate <= 1.0:
            raise ConfigurationError(
                f"target_update_rate must be in (0, 1], got {self.target_update_rate}"
            )
        if not 1 <= self.batch_size <= self.replay_capacity:
            raise ConfigurationError(
                f"batch_size must be in 1..replay_capacity ({self.replay_capacity}), "
                f"got {self.batch_size}"
            )
        if self.target_update_interval < 1:
            raise ConfigurationError("target_update_interval must be >= 1")
        if self.convergence_window < 1 or self.convergence_tolerance < 0.0:
            raise ConfigurationError(
                f"convergence_window must be >= 1 and convergence_tolerance >= 0, got "
                f"{self.convergence_window}, {self.convergence_tolerance}"
            )
        if not 0.0 <= self.epsilon_min <= self.epsilon_start <= 1.0:
            raise ConfigurationError(
                f"Need 0 <= epsilon_min <= epsilon_start <= 1, got "
                f"{self.epsilon_min}, {self.epsilon_start}"
            )


class ReplayMemory:
    """Bounded FIFO of transitions; the oldest is evicted first."""

    def __init__(self, capacity: int) -> None:
        if capacity < 1:
            raise ConfigurationError(f"Replay capacity must be >= 1, got {capacity}")
        self._items: deque[Transition] = deque(maxlen=capacity)

    @property
    def capacity(self) -> int:
        return self._items.maxlen or 0

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[Transition]:
        return iter(self._items)

    def append(self, transition: Transition) -> None:
        self._items.append(transition)

    def sample(self, n: int, rng: np.random.Generator) -> list[Transition]:
        """n distinct transitions drawn uniformly."""
        picks = rng.choice(len(self._items), size=n, replace=False)
        return [self._items[int(i)] for i in picks]


class EpsilonSchedule:
    """Hold epsilon_start for the first steps, then decay multiplicatively to a floor."""

    def __init__(self, config: AgentConfig, horizon: int) -> None:
        self._decay = config.epsilon_decay
        self._floor = config.epsilon_min
        self._hold = int(config.epsilon_hold_fraction * horizon)
        self._value = config.epsilon_start
        self._t = 0

    @property
    def value(self) -> float:
        return self._value

    @property
    def at_floor(self) -> bool:
        return self._value <= self._floor

    def advance(self) -> float:
        self._t += 1
        if self._t >= self._hold:
            self._value = max(self._floor, self._value * self._decay)
        return self._value

    def boost(self, value: float) -> None:
        """Raise epsilon for renewed exploration; decay resumes immediately."""
        self._value = max(self._value, value)
        self._hold = min(self._hold, self._t)


class ConvergenceMonitor:
    """Flags convergence when consecutive window means of reward differ by < tolerance."""

    def __init__(self, window: int = 10_000, tolerance: float = 0.01) -> None:
        self._window = window
        self._tolerance = tolerance
        self._sum = 0.0
        self._count = 0
        self._previous: float | None = None

    def reset(self) -> None:
        self._sum = 0.0
        self._count = 0
        self._previous = None

    def add(self, reward: float) -> bool:
        self._sum += reward
        self._count += 1
        if self._count < self._window:
            return False
        mean = self._sum / self._count
        self._sum = 0.0
        self._count = 0
        previous, self._previous = self._previous, mean
        if previous is None:
            return False
        return abs(mean - previous) < self._tolerance * max(abs(previous), 1e-12)


def masked_argmax(q: np.ndarray, allowed: Sequence[int]) -> Action:
    """Highest-Q action among allowed (1-based); ties go to the lowest index."""
    masked = np.full(q.shape, -np.inf)
    idx = np.asarray(allowed, dtype=np.intp) - 1
    masked[idx] = q[idx]
    return int(np.argmax(masked)) + 1


def allowed_actions(feasible: Sequence[int], k: int) -> tuple[int, ...]:
    """Feasible serve actions plus the cloud action, ascending."""
    return (*sorted(set(feasible)), k + 1)


@dataclass(frozen=True)
class PolicySnapshot:
    """Frozen greedy policy: weights, normalization and topology."""

    weights: NetworkWeights
    normalization: Normalization
    topology: ClusterTopology
    config_digest: str = ""
    name: str = "dqn-snapshot"

    def q_values(self, state: StateVector) -> np.ndarray:
        return forward(self.weights, state)

    def act(self, cluster: ClusterState, req: TaskRequest, feasible: Sequence[int]) -> Action:
        if not feasible:
            return self.topology.reject_action
        state = encode_state(cluster, req, self.normalization)
        return masked_argmax(self.q_values(state), allowed_actions(feasible, self.topology.k))

    def decide(self, ctx: DecisionContext) -> Action:
        return self.act(ctx.cluster, ctx.request, ctx.feasible)

    def observe(
        self,
        ctx: DecisionContext,
        action: Action,
        reward: float,
        next_ctx: DecisionContext,
        terminal: bool,
    ) -> float | None:
        return None

    def to_bytes(self) -> bytes:
        return dump_weights(
            self.weights,
            {
                "config_digest": self.config_digest,
                "normalization": asdict(self.normalization),
                "topology": asdict(self.topology),
            },
        )

    @classmethod
    def from_bytes(cls, payload: bytes) -> PolicySnapshot:
        weights, meta = parse_weights(payload)
        topo = meta["topology"]
        norm = meta["normalization"]
        return cls(
            weights=weights.frozen(),
            normalization=Normalization(
                enabled=norm["enabled"],
                capacities=tuple(norm["capacities"]),
                c_max=norm["c_max"],
                h_max=norm["h_max"],
                u_max=norm["u_max"],
            ),
            topology=ClusterTopology(
                k=topo["k"],
                capacities=tuple(topo["capacities"]),
                neighbors=tuple(tuple(n) for n in topo["neighbors"]),
                ec_index=topo["ec_index"],
            ),
            config_digest=meta.get("config_digest", ""),
        )


@dataclass
class AgentRandomness:
    """Independent random sources for initialization, exploration and replay sampling."""

    init: np.random.Generator
    exploration: np.random.Generator
    replay: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> AgentRandomness:
        init, exploration, replay = np.random.SeedSequence(seed).spawn(3)
        return cls(
            init=np.random.default_rng(init),
            exploration=np.random.default_rng(exploration),
            replay=np.random.default_rng(replay),
        )


class DQNAgent:
    """Edge-controller agent learning the serve/refer policy online."""

    name = "dqn"

    def __init__(
        self,
        topology: ClusterTopology,
        load: LoadDistribution,
        config: AgentConfig,
        horizon: int,
        rngs: AgentRandomness,
        config_digest: str = "",
    ) -> None:
        self.topology = topology
        self.config = config
        self.normalization = Normalization.for_cluster(
            topology, load, enabled=config.normalize_inputs
        )
        self._rngs = rngs
        self._config_digest = config_digest
        spec = LayerSpec.for_cluster(topology.k, config.hidden_layers)
        self.online = init_weights(spec, rngs.init)
        self.target = self.online.copy()
        self.optimizer = OptimizerState.for_weights(
            self.online,
            learning_rate=config.learning_rate,
            decay=config.learning_rate_decay,
            momentum=config.momentum,
            rho=config.rms_rho,
        )
        self.memory = ReplayMemory(config.replay_capacity)
        self.epsilon = EpsilonSchedule(config, horizon)
        self._monitor = ConvergenceMonitor(config.convergence_window, config.convergence_tolerance)
        self.frozen = False
        self.converged_at: int | None = None
        self.train_steps = 0
        self._cached: tuple[int, StateVector] | None = None

    @property
    def k(self) -> int:
        return self.topology.k

    @property
    def current_epsilon(self) -> float:
        return 0.0 if self.frozen else self.epsilon.value

    def encode(self, cluster: ClusterState, req: TaskRequest) -> StateVector:
        return encode_state(cluster, req, self.normalization)

    def q_values(self, state: StateVector) -> np.ndarray:
        return forward(self.online, state)

    def select_action(
        self,
        state: StateVector,
        feasible: Sequence[int],
        epsilon: float,
        rng: np.random.Generator | None = None,
    ) -> Action:
        """Epsilon-greedy over feasible serve actions plus the cloud action.

        An empty feasible set forces the cloud action. Exploration never picks
        an infeasible serve; the greedy choice is the masked argmax.
        """
        if not feasible:
            return self.topology.reject_action
        rng = rng or self._rngs.exploration
        allowed = allowed_actions(feasible, self.k)
        if rng.random() < epsilon:
            return allowed[int(rng.integers(len(allowed)))]
        return masked_argmax(self.q_values(state), allowed)

    def compute_targets(self, batch: Sequence[Transition]) -> tuple[np.ndarray, np.ndarray]:
        """Inputs and target Q-vectors for a minibatch.

        Targets start from the target network's prediction for s_j; only the
        taken action's entry is replaced, by r_j when terminal and otherwise by
        r_j + gamma * max_a' Q_target(s'_j, a').
        """
        states = np.stack([tr.state for tr in batch])
        next_states = np.stack([tr.next_state for tr in batch])
        both = forward(self.target, np.concatenate((states, next_states)))
        targets = both[: len(batch)].copy()
        next_q = both[len(batch) :]
        for j, tr in enumerate(batch):
            if tr.terminal:
                value = tr.reward
            else:
                value = tr.reward + self.config.gamma * float(np.max(next_q[j]))
            targets[j, tr.action - 1] = value
        return states, targets

    def learn_step(self, transition: Transition, t: int) -> float | None:
        """Store the transition, fit one minibatch and periodically blend the target net.

        Raises:
            TrainingFaultError: If the gradient step yields a non-finite loss.
        """
        self.memory.append(transition)
        loss: float | None = None
        if len(self.memory) >= self.config.batch_size:
            batch = self.memory.sample(self.config.batch_size, self._rngs.replay)
            states, targets = self.compute_targets(batch)
            loss = train_step(
                self.online, self.optimizer, states, targets, self.config.huber_delta
            )
            self.train_steps += 1
        if t % self.config.target_update_interval == 0:
            self.target = soft_update(self.target, self.online, self.config.target_update_rate)
        return loss

    def decide(self, ctx: DecisionContext) -> Action:
        state = self.encode(ctx.cluster, ctx.request)
        self._cached = (ctx.t, state)
        return self.select_action(state, ctx.feasible, self.current_epsilon)

    def observe(
        self,
        ctx: DecisionContext,
        action: Action,
        reward: float,
        next_ctx: DecisionContext,
        terminal: bool,
    ) -> float | None:
        if self._cached is not None and self._cached[0] == ctx.t:
            state = self._cached[1]
        else:
            state = self.encode(ctx.cluster, ctx.request)
        if self.frozen:
            return None
        transition = Transition(
            state=state,
            action=action,
            reward=reward,
            next_state=self.encode(next_ctx.cluster, next_ctx.request),
            terminal=terminal,
        )
        loss = self.learn_step(transition, ctx.t)
        self.epsilon.advance()
        if (
            self.config.stop_on_convergence
            and self.epsilon.at_floor
            and self._monitor.add(reward)
        ):
            self.frozen = True
            self.converged_at = ctx.t
            logger.info(f"DQN weights converged at t={ctx.t}; acting greedily from now on")
        return loss

    def on_drift(self, t: int, epsilon: float) -> None:
        """Resume learning with boosted exploration after a traffic change."""
        if self.frozen:
            logger.info(f"Unfreezing converged weights at t={t} after drift")
        self.frozen = False
        self._monitor.reset()
        self.epsilon.boost(epsilon)

    def load_weights(self, weights: NetworkWeights) -> None:
        """Install banked weights into both networks."""
        self.online = weights.copy()
        self.target = weights.copy()
        self.optimizer = OptimizerState.for_weights(
            self.online,
            learning_rate=self.config.learning_rate,
            decay=self.config.learning_rate_decay,
            momentum=self.config.momentum,
            rho=self.config.rms_rho,
        )
        self._monitor.reset()

    def export_policy(self) -> PolicySnapshot:
        return PolicySnapshot(
            weights=self.online.frozen(),
            normalization=self.normalization,
            topology=self.topology,
            config_digest=self._config_digest,
        )
