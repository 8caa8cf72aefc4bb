"""
MDP binding of environment and cluster.

Builds the 2k+4 state vector (b_1, l_1, ..., b_k, l_k, primary FN, u, c, h),
computes the immediate reward from the reward system and the task load, and
performs the one-step transition: decide, allocate, then tick.

Actions are integers 1..k+1: a <= k serves at FN a, a = k+1 refers the
request to the cloud.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np
import numpy.typing as npt

from app.errors import ConfigurationError, ContractViolationError
from app.services.cluster import (
    ClusterState,
    ClusterTopology,
    allocate,
    feasible_serve_set,
    tick,
)
from app.services.environment import U_MAX, LoadDistribution, TaskRequest

logger = logging.getLogger(__name__)

StateVector = npt.NDArray[np.float64]
Action = int


@dataclass(frozen=True)
class Normalization:
    """Static maxima used to scale state components into [0, 1]."""

    enabled: bool
    capacities: tuple[int, ...]
    c_max: int
    h_max: int
    u_max: int = U_MAX

    @classmethod
    def for_cluster(
        cls, topo: ClusterTopology, load: LoadDistribution, enabled: bool = True
    ) -> Normalization:
        return cls(enabled=enabled, capacities=topo.capacities, c_max=load.c_max, h_max=load.h_max)

    def scale(self) -> StateVector:
        """Per-component divisor for the encoded vector."""
        k = len(self.capacities)
        divisors = np.empty(2 * k + 4, dtype=np.float64)
        for i, n in enumerate(self.capacities):
            divisors[2 * i] = n
            divisors[2 * i + 1] = n * self.h_max
        divisors[2 * k :] = (k, self.u_max, self.c_max, self.h_max)
        return divisors


def state_width(k: int) -> int:
    return 2 * k + 4


def encode_state(
    cluster: ClusterState, req: TaskRequest, norm: Normalization | None = None
) -> StateVector:
    """Encode cluster occupancy and the pending request as a state vector."""
    k = cluster.k
    vec = np.empty(state_width(k), dtype=np.float64)
    vec[0 : 2 * k : 2] = cluster.busy_blocks()
    vec[1 : 2 * k : 2] = cluster.existing_loads()
    vec[2 * k :] = (req.primary_fn, req.u, req.c, req.h)
    if norm is not None and norm.enabled:
        vec /= norm.scale()
    return vec


@dataclass(frozen=True)
class RewardSystem:
    """Reward constants per (action class, utility class) and the load bonus.

    Attributes:
        r_sh, r_sl: Serving a high / low utility request.
        r_rh, r_rl: Rejecting a high / low utility request while serving was possible.
        r_bh, r_bl: Rejecting a high / low utility request because every candidate FN is busy.
        load_bonus_enabled: Add/subtract r_L = c_max * h_max + 1 - c * h.
        u_h: Utility threshold for high-utility requests.
    """

    r_sh: float
    r_sl: float
    r_rh: float
    r_rl: float
    r_bh: float
    r_bl: float
    load_bonus_enabled: bool = True
    u_h: int = 8
    c_max: int = 4
    h_max: int = 30

    def __post_init__(self) -> None:
        if not 1 <= self.u_h <= U_MAX:
            raise ConfigurationError(f"u_h must be in 1..{U_MAX}, got {self.u_h}")
        values = (self.r_sh, self.r_sl, self.r_rh, self.r_rl, self.r_bh, self.r_bl)
        if not all(math.isfinite(v) for v in values):
            raise ConfigurationError(f"Reward constants must be finite: {values}")

    def load_bonus(self, req: TaskRequest) -> float:
        if not self.load_bonus_enabled:
            return 0.0
        return float(self.c_max * self.h_max + 1 - req.load)


@dataclass(frozen=True)
class ScenarioWeights:
    """KPI weights for GoS and utilization in the performance score."""

    w_g: float
    w_u: float

    def __post_init__(self) -> None:
        if self.w_g < 0 or self.w_u < 0 or abs(self.w_g + self.w_u - 1.0) > 1e-9:
            raise ConfigurationError(
                f"Scenario weights must be nonnegative and sum to 1: {self.w_g}, {self.w_u}"
            )


@dataclass(frozen=True)
class Scenario:
    id: int
    rewards: RewardSystem
    weights: ScenarioWeights


REWARD_TABLE: dict[int, tuple[tuple[float, float, float, float, float, float], bool, float]] = {
    # (r_sh, r_rh, r_bh, r_sl, r_rl, r_bl), load bonus, w_g
    1: ((24, -12, -12, -3, 3, 12), True, 0.7),
    2: ((24, -12, -12, 0, 0, 12), True, 0.5),
    3: ((50, -50, -50, 50, -50, -25), False, 0.3),
}


def builtin_scenario(scenario_id: int, u_h: int = 8, c_max: int = 4, h_max: int = 30) -> Scenario:
    """Reward system R1..R3 with its KPI weights.

    Raises:
        ConfigurationError: If the scenario id is unknown.
    """
    try:
        (r_sh, r_rh, r_bh, r_sl, r_rl, r_bl), bonus, w_g = REWARD_TABLE[scenario_id]
    except KeyError as exc:
        raise ConfigurationError(
            f"Unknown scenario {scenario_id!r}; expected one of {sorted(REWARD_TABLE)}"
        ) from exc
    rewards = RewardSystem(
        r_sh=r_sh,
        r_sl=r_sl,
        r_rh=r_rh,
        r_rl=r_rl,
        r_bh=r_bh,
        r_bl=r_bl,
        load_bonus_enabled=bonus,
        u_h=u_h,
        c_max=c_max,
        h_max=h_max,
    )
    return Scenario(
        id=scenario_id,
        rewards=rewards,
        weights=ScenarioWeights(w_g=w_g, w_u=round(1.0 - w_g, 10)),
    )


def compute_reward(
    rs: RewardSystem, action: Action, req: TaskRequest, forced_busy: bool, k: int
) -> float:
    """Immediate reward: r_(a,u) + r_L when serving, r_(a,u) - r_L when rejecting.

    Raises:
        ContractViolationError: If forced_busy is set for a serve action.
    """
    high = req.is_high_utility(rs.u_h)
    r_load = rs.load_bonus(req)
    if action <= k:
        if forced_busy:
            raise ContractViolationError("A forced busy rejection cannot be a serve action")
        return (rs.r_sh if high else rs.r_sl) + r_load
    if forced_busy:
        base = rs.r_bh if high else rs.r_bl
    else:
        base = rs.r_rh if high else rs.r_rl
    return base - r_load


@dataclass(frozen=True)
class Transition:
    """One replay observation (s, a, r, s')."""

    state: StateVector
    action: Action
    reward: float
    next_state: StateVector
    terminal: bool = False

    def __post_init__(self) -> None:
        if not math.isfinite(self.reward):
            raise ContractViolationError(f"Transition reward must be finite, got {self.reward}")


@dataclass(frozen=True)
class StepOutcome:
    """Result of one step.

    Attributes:
        cluster: State after the tick, seen by the next request.
        occupied: State after the action but before the tick (used for KPIs).
        reward: Immediate reward.
        forced_busy: True when no candidate FN could serve the request.
    """

    cluster: ClusterState
    occupied: ClusterState
    reward: float
    forced_busy: bool


def step(
    cluster: ClusterState,
    req: TaskRequest,
    action: Action,
    rs: RewardSystem,
    topo: ClusterTopology,
) -> StepOutcome:
    """Apply a decision: allocate when serving, compute the reward, then tick.

    Raises:
        ContractViolationError: If a serve action targets an infeasible FN.
    """
    reject = topo.reject_action
    if not 1 <= action <= reject:
        raise ContractViolationError(f"Action {action} outside 1..{reject}")
    feasible = feasible_serve_set(cluster, topo, req)
    forced_busy = not feasible
    if action == reject:
        occupied = cluster
    elif action in feasible:
        occupied = allocate(cluster, topo, action, req)
    else:
        raise ContractViolationError(
            f"Serve action {action} is not feasible for request at FN {req.primary_fn}; "
            f"feasible set {feasible}"
        )
    reward = compute_reward(rs, action, req, forced_busy, topo.k)
    return StepOutcome(
        cluster=tick(occupied), occupied=occupied, reward=reward, forced_busy=forced_busy
    )


@dataclass(frozen=True)
class DecisionContext:
    """Everything a controller may look at when deciding one request."""

    t: int
    cluster: ClusterState
    request: TaskRequest
    feasible: tuple[int, ...]
    topology: ClusterTopology


@runtime_checkable
class Policy(Protocol):
    """A controller deciding per request and optionally learning from feedback."""

    name: str

    def decide(self, ctx: DecisionContext) -> Action: ...

    def observe(
        self,
        ctx: DecisionContext,
        action: Action,
        reward: float,
        next_ctx: DecisionContext,
        terminal: bool,
    ) -> float | None: ...
