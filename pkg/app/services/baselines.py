"""
Reference controllers.

- SAU: serve every request on the first FN with room.
- SHU: serve only high-utility requests, otherwise refer to the cloud.
- QL-NEC: one tabular Q-learner per FN, no edge controller and no hand-over;
  each FN sees only its own occupancy and the requests it receives.
- Random: uniform over the allowed actions.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from app.errors import ConfigurationError
from app.services.cluster import ClusterTopology, feasible_serve_set
from app.services.dqn_agent import AgentConfig, EpsilonSchedule, allowed_actions
from app.services.environment import TaskRequest
from app.services.mdp import Action, DecisionContext, RewardSystem, compute_reward

logger = logging.getLogger(__name__)

SERVE = 0
REJECT = 1

LocalState = tuple[int, int, int, int]


def sau_decide(req: TaskRequest, feasible: Sequence[int], k: int) -> Action:
    """First feasible FN in preference order; the cloud when none is."""
    return feasible[0] if feasible else k + 1


def shu_decide(req: TaskRequest, feasible: Sequence[int], k: int, u_h: int) -> Action:
    """Like SAU for high-utility requests; everything else goes to the cloud."""
    if req.u < u_h:
        return k + 1
    return sau_decide(req, feasible, k)


class _StatelessPolicy:
    name = "stateless"

    def __init__(self, preference: str = "ordered") -> None:
        if preference not in ("ordered", "most_free"):
            raise ConfigurationError(f"Unknown serve preference {preference!r}")
        self.preference = preference

    def _ordered(self, ctx: DecisionContext) -> tuple[int, ...]:
        if self.preference == "ordered":
            return ctx.feasible
        return feasible_serve_set(ctx.cluster, ctx.topology, ctx.request, self.preference)

    def observe(
        self,
        ctx: DecisionContext,
        action: Action,
        reward: float,
        next_ctx: DecisionContext,
        terminal: bool,
    ) -> float | None:
        return None


class ServeAllPolicy(_StatelessPolicy):
    name = "sau"

    def decide(self, ctx: DecisionContext) -> Action:
        return sau_decide(ctx.request, self._ordered(ctx), ctx.topology.k)


class ServeHighPolicy(_StatelessPolicy):
    name = "shu"

    def __init__(self, u_h: int = 8, preference: str = "ordered") -> None:
        super().__init__(preference)
        self.u_h = u_h

    def decide(self, ctx: DecisionContext) -> Action:
        return shu_decide(ctx.request, self._ordered(ctx), ctx.topology.k, self.u_h)


class RandomPolicy(_StatelessPolicy):
    name = "random"

    def __init__(self, rng: np.random.Generator) -> None:
        super().__init__()
        self._rng = rng

    def decide(self, ctx: DecisionContext) -> Action:
        allowed = allowed_actions(ctx.feasible, ctx.topology.k)
        return allowed[int(self._rng.integers(len(allowed)))]


@dataclass(frozen=True)
class TabularConfig:
    """Per-node Q-learning settings; exploration follows the DQN schedule."""

    alpha: float = 0.01
    gamma: float = 0.9
    epsilon_start: float = 1.0
    epsilon_hold_fraction: float = 0.1
    epsilon_decay: float = 0.9995
    epsilon_min: float = 1e-3

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigurationError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must be in [0, 1], got {self.gamma}")

    def epsilon_schedule(self, horizon: int) -> EpsilonSchedule:
        return EpsilonSchedule(
            AgentConfig(
                gamma=self.gamma,
                epsilon_start=self.epsilon_start,
                epsilon_hold_fraction=self.epsilon_hold_fraction,
                epsilon_decay=self.epsilon_decay,
                epsilon_min=self.epsilon_min,
            ),
            horizon,
        )


class NodeQLearner:
    """Tabular Q-learner owned by one FN.

    The local state is (b, u, c, h): the FN's own busy blocks and the request.
    A transition completes when the FN's next request arrives, which supplies
    the local next state.
    """

    def __init__(self, fn: int, config: TabularConfig) -> None:
        self.fn = fn
        self.config = config
        self.q: dict[LocalState, np.ndarray] = {}
        self._pending: tuple[LocalState, int, float] | None = None

    @property
    def visited(self) -> int:
        return len(self.q)

    def values(self, state: LocalState) -> np.ndarray:
        row = self.q.get(state)
        return row if row is not None else np.zeros(2)

    def update(
        self, state: LocalState, action: int, reward: float, next_state: LocalState | None
    ) -> None:
        """Q(s, a) += alpha * (r + gamma * max Q(s') - Q(s, a)).

        A next_state of None marks a terminal transition.
        """
        target = reward
        if next_state is not None:
            target += self.config.gamma * float(np.max(self.values(next_state)))
        row = self.q.setdefault(state, np.zeros(2))
        row[action] += self.config.alpha * (target - row[action])

    def choose(
        self, state: LocalState, can_serve: bool, epsilon: float, rng: np.random.Generator
    ) -> int:
        if not can_serve:
            return REJECT
        if rng.random() < epsilon:
            return int(rng.integers(2))
        row = self.values(state)
        return SERVE if row[SERVE] >= row[REJECT] else REJECT

    def act(
        self,
        req: TaskRequest,
        busy: int,
        capacity: int,
        k: int,
        epsilon: float,
        rng: np.random.Generator,
    ) -> tuple[Action, LocalState, int]:
        """Choose for req without touching the table.

        Returns:
            The cluster-level action (this FN or k + 1), the local state and
            the local choice (SERVE or REJECT).
        """
        state: LocalState = (busy, req.u, req.c, req.h)
        choice = self.choose(state, capacity - busy >= req.c, epsilon, rng)
        return (self.fn if choice == SERVE else k + 1), state, choice

    def record(self, state: LocalState, choice: int, reward: float) -> None:
        """Close the pending transition with state as its successor and open a new one."""
        if self._pending is not None:
            self.update(*self._pending, next_state=state)
        self._pending = (state, choice, reward)

    def decide_and_learn(
        self,
        req: TaskRequest,
        busy: int,
        capacity: int,
        rewards: RewardSystem,
        k: int,
        epsilon: float,
        rng: np.random.Generator,
    ) -> tuple[Action, float]:
        """Act on req and record the transition it opens.

        Returns:
            The cluster-level action (this FN or k + 1) and its reward.
        """
        action, state, choice = self.act(req, busy, capacity, k, epsilon, rng)
        reward = compute_reward(rewards, action, req, forced_busy=capacity - busy < req.c, k=k)
        self.record(state, choice, reward)
        return action, reward

    def flush(self) -> None:
        """Close the pending transition as terminal."""
        if self._pending is not None:
            self.update(*self._pending, next_state=None)
            self._pending = None


def ql_nec_decide_and_learn(
    agent: NodeQLearner,
    req: TaskRequest,
    busy: int,
    capacity: int,
    rewards: RewardSystem,
    k: int,
    epsilon: float,
    rng: np.random.Generator,
) -> tuple[Action, NodeQLearner]:
    """Decide a request received by agent's own FN and learn from the last one."""
    action, _ = agent.decide_and_learn(req, busy, capacity, rewards, k, epsilon, rng)
    return action, agent


class QLNoControllerPolicy:
    """Uncoordinated FNs, each running its own tabular Q-learner.

    Must be driven on an isolated topology so no hand-over is ever feasible.
    """

    name = "ql"

    def __init__(
        self,
        topology: ClusterTopology,
        rewards: RewardSystem,
        config: TabularConfig,
        horizon: int,
        rng: np.random.Generator,
    ) -> None:
        self.topology = topology.isolated()
        self.rewards = rewards
        self.nodes = [NodeQLearner(fn, config) for fn in range(1, topology.k + 1)]
        self.epsilon = config.epsilon_schedule(horizon)
        self._rng = rng
        self._cached: tuple[int, LocalState, int] | None = None

    @property
    def current_epsilon(self) -> float:
        return self.epsilon.value

    def decide(self, ctx: DecisionContext) -> Action:
        """Pick the receiving FN's action; tables change only in observe()."""
        fn = ctx.request.primary_fn
        action, state, choice = self.nodes[fn - 1].act(
            ctx.request,
            busy=ctx.cluster.busy(fn),
            capacity=self.topology.capacity_of(fn),
            k=self.topology.k,
            epsilon=self.epsilon.value,
            rng=self._rng,
        )
        self._cached = (ctx.t, state, choice)
        return action

    def observe(
        self,
        ctx: DecisionContext,
        action: Action,
        reward: float,
        next_ctx: DecisionContext,
        terminal: bool,
    ) -> float | None:
        fn = ctx.request.primary_fn
        node = self.nodes[fn - 1]
        if self._cached is not None and self._cached[0] == ctx.t:
            _, state, choice = self._cached
        else:
            state = (ctx.cluster.busy(fn), ctx.request.u, ctx.request.c, ctx.request.h)
            choice = SERVE if action == fn else REJECT
        node.record(state, choice, reward)
        self.epsilon.advance()
        if terminal:
            for each in self.nodes:
                each.flush()
        return None
