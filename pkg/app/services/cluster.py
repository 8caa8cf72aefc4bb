"""
Edge-cluster state machine.

Tracks per-FN resource occupancy as a list of active allocations, each holding
some blocks for a remaining number of steps. States are immutable values:
allocate and tick return new states. FN indices are 1-based throughout.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

from app.errors import ConfigurationError, ContractViolationError
from app.services.environment import TaskRequest

logger = logging.getLogger(__name__)

# Outer ring of the hexagonal cluster around the central FN 5.
HEX_RING: tuple[int, ...] = (1, 2, 3, 4, 6, 7)
HEX_CENTER = 5


@dataclass(frozen=True)
class ClusterTopology:
    """Cluster size, capacities, neighbour lists and the EC's index.

    Attributes:
        k: Number of FNs.
        capacities: Block capacity N_i per FN, indexed by FN - 1.
        neighbors: Neighbour list per FN, indexed by FN - 1, in preference order.
        ec_index: FN acting as the edge controller.
    """

    k: int
    capacities: tuple[int, ...]
    neighbors: tuple[tuple[int, ...], ...]
    ec_index: int = 1

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ConfigurationError(f"Cluster size must be >= 1, got {self.k}")
        if len(self.capacities) != self.k or len(self.neighbors) != self.k:
            raise ConfigurationError(
                f"Expected {self.k} capacities and neighbour lists, got "
                f"{len(self.capacities)} and {len(self.neighbors)}"
            )
        if any(n < 1 for n in self.capacities):
            raise ConfigurationError(f"Capacities must be >= 1: {self.capacities}")
        if not 1 <= self.ec_index <= self.k:
            raise ConfigurationError(f"EC index {self.ec_index} outside 1..{self.k}")
        for fn, nbrs in enumerate(self.neighbors, start=1):
            for other in nbrs:
                if not 1 <= other <= self.k or other == fn:
                    raise ConfigurationError(f"FN {fn} has invalid neighbour {other}")
            if len(set(nbrs)) != len(nbrs):
                raise ConfigurationError(f"FN {fn} lists a neighbour twice: {nbrs}")

    @classmethod
    def uniform(
        cls,
        k: int,
        capacity: int,
        neighbors: Sequence[Sequence[int]] | None = None,
        ec_index: int = 1,
    ) -> ClusterTopology:
        """Equal capacities; fully connected unless neighbour lists are given."""
        if neighbors is None:
            neighbors = [[j for j in range(1, k + 1) if j != i] for i in range(1, k + 1)]
        return cls(
            k=k,
            capacities=tuple(capacity for _ in range(k)),
            neighbors=tuple(tuple(n) for n in neighbors),
            ec_index=ec_index,
        )

    @classmethod
    def hexagonal(cls, capacity: int = 7) -> ClusterTopology:
        """Seven FNs in a hexagon: FN 5 in the centre acts as EC.

        Each outer FN neighbours the centre and its two ring neighbours.
        """
        neighbors: list[tuple[int, ...]] = []
        for fn in range(1, 8):
            if fn == HEX_CENTER:
                neighbors.append(HEX_RING)
                continue
            pos = HEX_RING.index(fn)
            left = HEX_RING[(pos - 1) % len(HEX_RING)]
            right = HEX_RING[(pos + 1) % len(HEX_RING)]
            neighbors.append(tuple(sorted((left, right, HEX_CENTER))))
        return cls(
            k=7,
            capacities=tuple(capacity for _ in range(7)),
            neighbors=tuple(neighbors),
            ec_index=HEX_CENTER,
        )

    def isolated(self) -> ClusterTopology:
        """Same FNs with no neighbours: every FN works on its own."""
        return ClusterTopology(
            k=self.k,
            capacities=self.capacities,
            neighbors=tuple(() for _ in range(self.k)),
            ec_index=self.ec_index,
        )

    @property
    def reject_action(self) -> int:
        return self.k + 1

    @property
    def total_capacity(self) -> int:
        return sum(self.capacities)

    @property
    def min_capacity(self) -> int:
        return min(self.capacities)

    def capacity_of(self, fn: int) -> int:
        return self.capacities[fn - 1]

    def neighbors_of(self, fn: int) -> tuple[int, ...]:
        return self.neighbors[fn - 1]


@dataclass(frozen=True)
class Allocation:
    """Blocks held by one task and the steps left until they are released."""

    blocks: int
    remaining: int

    def __post_init__(self) -> None:
        if self.blocks < 1 or self.remaining < 1:
            raise ContractViolationError(
                f"Allocation needs blocks >= 1 and remaining >= 1, "
                f"got {self.blocks}, {self.remaining}"
            )

    @property
    def load(self) -> int:
        return self.blocks * self.remaining


@dataclass(frozen=True)
class ClusterState:
    """Active allocations per FN, kept sorted so equal occupancies compare equal."""

    allocations: tuple[tuple[Allocation, ...], ...]

    @classmethod
    def empty(cls, k: int) -> ClusterState:
        return cls(allocations=tuple(() for _ in range(k)))

    @property
    def k(self) -> int:
        return len(self.allocations)

    def busy(self, fn: int) -> int:
        """b_i: blocks in use at FN fn."""
        return sum(a.blocks for a in self.allocations[fn - 1])

    def load(self, fn: int) -> int:
        """l_i: remaining block-time (blocks x remaining steps) at FN fn."""
        return sum(a.load for a in self.allocations[fn - 1])

    def busy_blocks(self) -> tuple[int, ...]:
        return tuple(sum(a.blocks for a in fn_allocs) for fn_allocs in self.allocations)

    def existing_loads(self) -> tuple[int, ...]:
        return tuple(sum(a.load for a in fn_allocs) for fn_allocs in self.allocations)

    def free_blocks(self, topo: ClusterTopology, fn: int) -> int:
        return topo.capacity_of(fn) - self.busy(fn)

    def remaining_histogram(self, fn: int, h_max: int) -> tuple[int, ...]:
        """Blocks at FN fn bucketed by remaining steps 1..h_max."""
        hist = [0] * h_max
        for a in self.allocations[fn - 1]:
            hist[a.remaining - 1] += a.blocks
        return tuple(hist)


def feasible_serve_set(
    state: ClusterState,
    topo: ClusterTopology,
    req: TaskRequest,
    preference: str = "ordered",
) -> tuple[int, ...]:
    """FNs among the primary and its neighbours with at least c free blocks.

    The result is ordered: primary first, then neighbours in list order. With
    preference "most_free" candidates are ordered by free blocks (descending),
    ties by that same list order. An empty result forces a rejection.
    """
    candidates = (req.primary_fn, *topo.neighbors_of(req.primary_fn))
    feasible = [fn for fn in candidates if state.free_blocks(topo, fn) >= req.c]
    if preference == "most_free":
        feasible.sort(key=lambda fn: -state.free_blocks(topo, fn))
    elif preference != "ordered":
        raise ConfigurationError(f"Unknown serve preference {preference!r}")
    return tuple(feasible)


def allocate(
    state: ClusterState, topo: ClusterTopology, fn: int, req: TaskRequest
) -> ClusterState:
    """Start serving req at FN fn.

    Raises:
        ContractViolationError: If fn is not the primary or one of its
            neighbours, or lacks req.c free blocks.
    """
    if fn != req.primary_fn and fn not in topo.neighbors_of(req.primary_fn):
        raise ContractViolationError(
            f"FN {fn} is neither the primary FN {req.primary_fn} nor one of its neighbours"
        )
    free = state.free_blocks(topo, fn)
    if free < req.c:
        raise ContractViolationError(f"FN {fn} has {free} free blocks, request needs {req.c}")
    allocs = list(state.allocations)
    allocs[fn - 1] = tuple(
        sorted(
            (*allocs[fn - 1], Allocation(blocks=req.c, remaining=req.h)),
            key=lambda a: (a.remaining, a.blocks),
        )
    )
    return ClusterState(allocations=tuple(allocs))


def tick(state: ClusterState) -> ClusterState:
    """Advance one step: decrement remaining times and free finished allocations."""
    return ClusterState(
        allocations=tuple(
            tuple(
                Allocation(blocks=a.blocks, remaining=a.remaining - 1)
                for a in fn_allocs
                if a.remaining > 1
            )
            for fn_allocs in state.allocations
        )
    )


def utilization_snapshot(state: ClusterState, topo: ClusterTopology) -> float:
    """Fraction of all cluster blocks in use this step."""
    return sum(state.busy_blocks()) / topo.total_capacity
