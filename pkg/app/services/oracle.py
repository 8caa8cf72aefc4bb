"""
Value-iteration solver for tiny slicing MDPs.

Cluster occupancy is represented per FN by the histogram of busy blocks over
remaining holding times, which is all the dynamics depend on. Reachable
occupancies are enumerated from the empty cluster, and the Bellman optimality
operator is iterated to a fixed point over (occupancy, request) states.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from app.errors import ConfigurationError, ContractViolationError, OracleSizeError
from app.services.cluster import ClusterState, ClusterTopology
from app.services.environment import (
    U_MAX,
    EnvironmentProfile,
    LoadDistribution,
    PrimaryFnRule,
    TaskRequest,
    UtilityDistribution,
)
from app.services.mdp import Action, DecisionContext, RewardSystem, compute_reward

logger = logging.getLogger(__name__)

Occupancy = tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class TinyMdpSpec:
    """An enumerable slicing MDP.

    Attributes:
        topology: Cluster (small k and capacities).
        utility_values: The utility classes that occur, e.g. (3, 9).
        utility_probs: Their probabilities.
        load: Block and holding-time distributions.
        rewards: Reward system.
        gamma: Discount factor.
    """

    topology: ClusterTopology
    utility_values: tuple[int, ...]
    utility_probs: tuple[float, ...]
    load: LoadDistribution
    rewards: RewardSystem
    gamma: float = 0.9
    primary_rule: PrimaryFnRule = field(default_factory=PrimaryFnRule)
    max_states: int = 100_000
    tolerance: float = 1e-8
    max_iterations: int = 100_000

    def __post_init__(self) -> None:
        if len(self.utility_values) != len(self.utility_probs):
            raise ConfigurationError("utility_values and utility_probs differ in length")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError(f"Oracle needs 0 <= gamma < 1, got {self.gamma}")

    def profile(self, profile_id: str = "tiny") -> EnvironmentProfile:
        """Environment profile generating the same request distribution."""
        probs = [0.0] * U_MAX
        for u, p in zip(self.utility_values, self.utility_probs):
            probs[u - 1] += p
        return EnvironmentProfile(
            id=profile_id,
            utility=UtilityDistribution(tuple(probs)),
            load=self.load,
            primary_fn_rule=self.primary_rule,
        )

    def requests(self) -> tuple[list[TaskRequest], np.ndarray]:
        """Every possible request with its probability."""
        k = self.topology.k
        fn_probs = self.primary_rule.probabilities(k)
        reqs: list[TaskRequest] = []
        probs: list[float] = []
        for u, pu in zip(self.utility_values, self.utility_probs):
            for c, pc in zip(self.load.c_values, self.load.c_probs):
                for h, ph in zip(self.load.h_values, self.load.h_probs):
                    for fn, pf in enumerate(fn_probs, start=1):
                        reqs.append(TaskRequest(u=u, c=c, h=h, primary_fn=fn))
                        probs.append(pu * pc * ph * pf)
        return reqs, np.asarray(probs, dtype=np.float64)

    def size_estimate(self) -> int:
        """Upper bound on (occupancy, request) states."""
        h_max = self.load.h_max
        per_fn = [math.comb(n + h_max, h_max) for n in self.topology.capacities]
        n_requests = (
            len(self.utility_values)
            * len(self.load.c_values)
            * len(self.load.h_values)
            * self.topology.k
        )
        return math.prod(per_fn) * n_requests


def occupancy_of(cluster: ClusterState, h_max: int) -> Occupancy:
    return tuple(cluster.remaining_histogram(fn, h_max) for fn in range(1, cluster.k + 1))


def _feasible(occ: Occupancy, topo: ClusterTopology, req: TaskRequest) -> list[int]:
    candidates = (req.primary_fn, *topo.neighbors_of(req.primary_fn))
    return [fn for fn in candidates if topo.capacity_of(fn) - sum(occ[fn - 1]) >= req.c]


def _serve(occ: Occupancy, fn: int, req: TaskRequest) -> Occupancy:
    hist = list(occ[fn - 1])
    hist[req.h - 1] += req.c
    return tuple(tuple(hist) if i == fn - 1 else row for i, row in enumerate(occ))


def _tick(occ: Occupancy) -> Occupancy:
    return tuple((*row[1:], 0) for row in occ)


@dataclass
class OracleSolution:
    """Optimal values, Q-values and greedy policy over enumerated states."""

    spec: TinyMdpSpec
    occupancies: list[Occupancy]
    requests: list[TaskRequest]
    request_probs: np.ndarray
    rewards: np.ndarray
    successors: np.ndarray
    values: np.ndarray
    q_values: np.ndarray
    policy: np.ndarray
    deltas: list[float]
    _index: dict[Occupancy, int] = field(default_factory=dict, repr=False)
    _request_index: dict[tuple[int, int, int, int], int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self._index = {occ: i for i, occ in enumerate(self.occupancies)}
        self._request_index = {
            (r.u, r.c, r.h, r.primary_fn): j for j, r in enumerate(self.requests)
        }

    @property
    def iterations(self) -> int:
        return len(self.deltas)

    @property
    def state_count(self) -> int:
        return len(self.occupancies) * len(self.requests)

    def locate(self, cluster: ClusterState, req: TaskRequest) -> tuple[int, int]:
        occ = occupancy_of(cluster, self.spec.load.h_max)
        try:
            return self._index[occ], self._request_index[(req.u, req.c, req.h, req.primary_fn)]
        except KeyError as exc:
            raise ContractViolationError(f"State not in the enumerated MDP: {occ}, {req}") from exc

    def action_for(self, cluster: ClusterState, req: TaskRequest) -> Action:
        i, j = self.locate(cluster, req)
        return int(self.policy[i, j])

    def value_of(self, cluster: ClusterState, req: TaskRequest) -> float:
        i, j = self.locate(cluster, req)
        return float(self.values[i, j])

    def bellman_residual(self) -> float:
        """Largest gap between Q and the one-step optimality backup of Q."""
        return _backup_gap(
            self.q_values, self.rewards, self.successors, self.request_probs, self.spec.gamma
        )


def _backup(
    values: np.ndarray,
    rewards: np.ndarray,
    successors: np.ndarray,
    probs: np.ndarray,
    gamma: float,
) -> np.ndarray:
    expected = values @ probs
    future = np.where(successors >= 0, expected[np.maximum(successors, 0)], 0.0)
    return rewards + gamma * future


def _backup_gap(
    q: np.ndarray, rewards: np.ndarray, successors: np.ndarray, probs: np.ndarray, gamma: float
) -> float:
    backed = _backup(q.max(axis=2), rewards, successors, probs, gamma)
    feasible = successors >= 0
    return float(np.max(np.abs(q[feasible] - backed[feasible])))


def _enumerate(
    spec: TinyMdpSpec, requests: list[TaskRequest]
) -> tuple[list[Occupancy], np.ndarray, np.ndarray]:
    topo = spec.topology
    k = topo.k
    h_max = spec.load.h_max
    empty: Occupancy = tuple(tuple(0 for _ in range(h_max)) for _ in range(k))
    index: dict[Occupancy, int] = {empty: 0}
    occupancies = [empty]
    transitions: list[list[list[tuple[int, float]]]] = []
    queue = deque([empty])
    while queue:
        occ = queue.popleft()
        rows: list[list[tuple[int, float]]] = []
        for req in requests:
            feasible = _feasible(occ, topo, req)
            forced = not feasible
            row: list[tuple[int, float]] = []
            for action in range(1, k + 2):
                if action <= k and action not in feasible:
                    row.append((-1, -np.inf))
                    continue
                nxt = _tick(_serve(occ, action, req) if action <= k else occ)
                if nxt not in index:
                    index[nxt] = len(occupancies)
                    occupancies.append(nxt)
                    queue.append(nxt)
                reward = compute_reward(spec.rewards, action, req, forced, k)
                row.append((index[nxt], reward))
            rows.append(row)
        transitions.append(rows)
    successors = np.array([[[s for s, _ in row] for row in rows] for rows in transitions])
    rewards = np.array([[[r for _, r in row] for row in rows] for rows in transitions])
    return occupancies, successors, rewards


def value_iteration(spec: TinyMdpSpec) -> OracleSolution:
    """Iterate the Bellman optimality operator to a fixed point.

    Raises:
        OracleSizeError: If the state space upper bound exceeds spec.max_states.
        ContractViolationError: If the iteration does not converge.
    """
    estimate = spec.size_estimate()
    if estimate > spec.max_states:
        raise OracleSizeError(estimate, spec.max_states)
    requests, probs = spec.requests()
    occupancies, successors, rewards = _enumerate(spec, requests)
    logger.info(
        f"Oracle enumerated {len(occupancies)} occupancies x {len(requests)} requests "
        f"(estimate {estimate})"
    )
    values = np.zeros((len(occupancies), len(requests)))
    deltas: list[float] = []
    for _ in range(spec.max_iterations):
        q = _backup(values, rewards, successors, probs, spec.gamma)
        updated = q.max(axis=2)
        delta = float(np.max(np.abs(updated - values)))
        values = updated
        deltas.append(delta)
        if delta < spec.tolerance:
            break
    else:
        raise ContractViolationError(
            f"Value iteration did not converge in {spec.max_iterations} iterations "
            f"(last delta {deltas[-1]:.3e})"
        )
    q = _backup(values, rewards, successors, probs, spec.gamma)
    policy = np.argmax(q, axis=2) + 1
    logger.info(f"Oracle converged after {len(deltas)} iterations")
    return OracleSolution(
        spec=spec,
        occupancies=occupancies,
        requests=requests,
        request_probs=probs,
        rewards=rewards,
        successors=successors,
        values=values,
        q_values=q,
        policy=policy,
        deltas=deltas,
    )


class OraclePolicy:
    """Greedy oracle policy usable by the harness."""

    name = "oracle"

    def __init__(self, solution: OracleSolution) -> None:
        self.solution = solution

    def decide(self, ctx: DecisionContext) -> Action:
        return self.solution.action_for(ctx.cluster, ctx.request)

    def observe(
        self,
        ctx: DecisionContext,
        action: Action,
        reward: float,
        next_ctx: DecisionContext,
        terminal: bool,
    ) -> float | None:
        return None
