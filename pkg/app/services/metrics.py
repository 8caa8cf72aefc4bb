"""
KPI accounting: grade of service, utilization, cloud avoidance, performance.

Counters are updated once per step after the action and before the tick.
A window sampler keeps one counter set per fixed-size window of steps to
produce learning curves.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from app.errors import ContractViolationError
from app.services.cluster import ClusterState, ClusterTopology, utilization_snapshot
from app.services.environment import TaskRequest
from app.services.mdp import Action, ScenarioWeights

logger = logging.getLogger(__name__)


@dataclass
class KpiCounters:
    """Received/served counts by utility class and the utilization sum.

    With strict set, recording the same time step twice raises.
    """

    u_h: int = 8
    strict: bool = False
    high_received: int = 0
    high_served: int = 0
    low_received: int = 0
    low_served: int = 0
    utilization_sum: float = 0.0
    steps: int = 0
    _last_t: int | None = field(default=None, repr=False)

    def record_step(
        self, req: TaskRequest, action: Action, occupied: ClusterState, topo: ClusterTopology
    ) -> KpiCounters:
        """Count one decided request; occupied is the cluster after the action.

        Raises:
            ContractViolationError: In strict mode, when req.t was already recorded.
        """
        if self.strict and self._last_t is not None and req.t <= self._last_t:
            raise ContractViolationError(f"Step t={req.t} recorded twice")
        self._last_t = req.t
        served = action <= topo.k
        if req.is_high_utility(self.u_h):
            self.high_received += 1
            self.high_served += served
        else:
            self.low_received += 1
            self.low_served += served
        self.utilization_sum += utilization_snapshot(occupied, topo)
        self.steps += 1
        return self

    @property
    def received(self) -> int:
        return self.high_received + self.low_received

    @property
    def served(self) -> int:
        return self.high_served + self.low_served


@dataclass(frozen=True)
class KpiReport:
    gos: float
    utilization: float
    cloud_avoidance: float
    performance: float


def record_step(
    counters: KpiCounters,
    req: TaskRequest,
    action: Action,
    cluster: ClusterState,
    topo: ClusterTopology,
) -> KpiCounters:
    return counters.record_step(req, action, cluster, topo)


def finalize(counters: KpiCounters, weights: ScenarioWeights) -> KpiReport:
    """Compute the KPIs.

    GoS is 1.0 when no high-utility request arrived, cloud avoidance is 1.0
    when nothing arrived, utilization is 0.0 over zero steps.
    """
    gos = counters.high_served / counters.high_received if counters.high_received else 1.0
    utilization = counters.utilization_sum / counters.steps if counters.steps else 0.0
    avoidance = counters.served / counters.received if counters.received else 1.0
    return KpiReport(
        gos=gos,
        utilization=utilization,
        cloud_avoidance=avoidance,
        performance=weights.w_g * gos + weights.w_u * utilization,
    )


@dataclass(frozen=True)
class WindowRow:
    """KPIs over one window of steps."""

    window: int
    start: int
    end: int
    profile: str
    gos: float
    utilization: float
    cloud_avoidance: float
    performance: float
    mean_reward: float
    epsilon: float
    loss_mean: float | None


class WindowSampler:
    """Accumulates KPIs, rewards and losses over disjoint windows of `size` steps."""

    def __init__(self, size: int, weights: ScenarioWeights, u_h: int = 8) -> None:
        if size < 1:
            raise ContractViolationError(f"Window size must be >= 1, got {size}")
        self.size = size
        self.weights = weights
        self.u_h = u_h
        self.rows: list[WindowRow] = []
        self._start = 0
        self._reset()

    def _reset(self) -> None:
        self._counters = KpiCounters(u_h=self.u_h)
        self._reward_sum = 0.0
        self._losses: list[float] = []

    def record(
        self,
        req: TaskRequest,
        action: Action,
        occupied: ClusterState,
        topo: ClusterTopology,
        reward: float,
        loss: float | None,
    ) -> None:
        self._counters.record_step(req, action, occupied, topo)
        self._reward_sum += reward
        if loss is not None:
            self._losses.append(loss)

    def maybe_close(self, t: int, epsilon: float, profile: str) -> WindowRow | None:
        """Close the window if step t was its last one."""
        if self._counters.steps < self.size:
            return None
        return self.close(t, epsilon, profile)

    def close(self, t: int, epsilon: float, profile: str) -> WindowRow | None:
        """Close the current window (possibly partial) ending at step t."""
        if self._counters.steps == 0:
            return None
        report = finalize(self._counters, self.weights)
        row = WindowRow(
            window=len(self.rows),
            start=self._start,
            end=t,
            profile=profile,
            gos=report.gos,
            utilization=report.utilization,
            cloud_avoidance=report.cloud_avoidance,
            performance=report.performance,
            mean_reward=self._reward_sum / self._counters.steps,
            epsilon=epsilon,
            loss_mean=math.fsum(self._losses) / len(self._losses) if self._losses else None,
        )
        self.rows.append(row)
        logger.debug(
            f"Window {row.window} [{row.start}, {row.end}] {profile}: "
            f"performance={row.performance:.4f} gos={row.gos:.4f} util={row.utilization:.4f}"
        )
        self._start = t + 1
        self._reset()
        return row
